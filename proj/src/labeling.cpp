#include "stylecal/labeling.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace stylecal {

namespace {
constexpr double kPi = 3.14159265358979323846;

double wrap_angle(double a) {
  while (a > kPi) a -= 2 * kPi;
  while (a <= -kPi) a += 2 * kPi;
  return a;
}
}  // namespace

ScoreKind score_kind_from_string(const std::string& s) {
  if (s == "speed") return ScoreKind::Speed;
  if (s == "displacement") return ScoreKind::Displacement;
  if (s == "destination") return ScoreKind::Destination;
  if (s == "direction") return ScoreKind::Direction;
  if (s == "curvature") return ScoreKind::Curvature;
  throw std::invalid_argument("unknown score kind: " + s);
}

std::string to_string(ScoreKind k) {
  switch (k) {
    case ScoreKind::Speed: return "speed";
    case ScoreKind::Displacement: return "displacement";
    case ScoreKind::Destination: return "destination";
    case ScoreKind::Direction: return "direction";
    case ScoreKind::Curvature: return "curvature";
  }
  throw std::logic_error("bad ScoreKind");
}

double score(const LabelingFunction& lf, const Trajectory& traj) {
  const auto& s = traj.states;
  const auto& a = traj.actions;
  switch (lf.kind) {
    case ScoreKind::Speed: {
      if (a.empty()) return 0.0;
      double sum = 0.0;
      for (const auto& v : a) sum += v.norm();
      return sum / static_cast<double>(a.size());
    }
    case ScoreKind::Displacement:
      return (s.back() - s.front()).norm();
    case ScoreKind::Destination:
      return (s.back() - lf.destination).norm();
    case ScoreKind::Direction: {
      Vec2 d = s.back() - s.front();
      return std::atan2(d.y(), d.x());
    }
    case ScoreKind::Curvature: {
      double path = 0.0;
      for (const auto& v : a) path += v.norm();
      if (path <= 0.0) return 0.0;
      double turn = 0.0;
      const Vec2* prev = nullptr;
      for (const auto& v : a) {
        if (v.norm() <= 1e-8) continue;
        if (prev) {
          double h0 = std::atan2(prev->y(), prev->x());
          double h1 = std::atan2(v.y(), v.x());
          turn += std::abs(wrap_angle(h1 - h0));
        }
        prev = &v;
      }
      return turn / path;
    }
  }
  throw std::logic_error("bad ScoreKind");
}

std::vector<double> fit_thresholds(std::vector<double> scores, int num_classes) {
  if (num_classes < 2) throw std::invalid_argument("fit_thresholds: need K >= 2");
  std::sort(scores.begin(), scores.end());
  int distinct = scores.empty() ? 0 : 1;
  for (std::size_t i = 1; i < scores.size(); ++i)
    if (scores[i] != scores[i - 1]) ++distinct;
  if (distinct < num_classes)
    throw std::invalid_argument("fit_thresholds: only " + std::to_string(distinct) +
                                " distinct scores for " + std::to_string(num_classes) +
                                " classes");
  std::vector<double> thresholds;
  long n = static_cast<long>(scores.size());
  for (int i = 1; i < num_classes; ++i) {
    long idx = i * n / num_classes;
    double t = scores[idx];
    // keep strictly increasing through duplicate runs
    while (!thresholds.empty() && t <= thresholds.back()) {
      ++idx;
      if (idx >= n)
        throw std::invalid_argument("fit_thresholds: cannot separate " +
                                    std::to_string(num_classes) + " classes");
      t = scores[idx];
    }
    thresholds.push_back(t);
  }
  return thresholds;
}

int apply(const LabelingFunction& lf, const Trajectory& traj, Rng* rng) {
  if (lf.thresholds.empty())
    throw std::logic_error("labeling function " + lf.name + " has no fitted thresholds");
  double v = score(lf, traj);
  if (lf.noise_std > 0.0) {
    if (!rng) throw std::invalid_argument("noisy labeling function requires an rng");
    v += lf.noise_std * rng->normal();
  }
  int cls = 0;
  for (double t : lf.thresholds)
    if (t <= v) ++cls;  // ties go to the higher class
  return cls;
}

int AnnotatedDataset::joint_index(const StyleLabel& y) const {
  if (y.size() != class_sizes.size())
    throw std::invalid_argument("label tuple length mismatch");
  int idx = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] < 0 || y[i] >= class_sizes[i])
      throw std::out_of_range("label class out of range");
    idx = idx * class_sizes[i] + y[i];
  }
  return idx;
}

StyleLabel AnnotatedDataset::joint_unindex(int idx) const {
  StyleLabel y(class_sizes.size());
  for (int i = static_cast<int>(class_sizes.size()) - 1; i >= 0; --i) {
    y[i] = idx % class_sizes[i];
    idx /= class_sizes[i];
  }
  return y;
}

StyleLabel AnnotatedDataset::sample_label(Rng& rng) const {
  double u = rng.uniform();
  double acc = 0.0;
  int last = num_joint() - 1;
  for (int i = 0; i < num_joint(); ++i) {
    acc += joint_marginal[i];
    if (u < acc) return joint_unindex(i);
  }
  return joint_unindex(last);
}

AnnotatedDataset annotate(const std::vector<LabelingFunction>& lfs,
                          const std::vector<Trajectory>& data, std::uint64_t seed) {
  if (lfs.empty()) throw std::invalid_argument("annotate: no labeling functions");
  AnnotatedDataset out;
  out.lfs = lfs;
  for (const auto& lf : lfs) out.class_sizes.push_back(lf.num_classes());
  int joint = 1;
  for (int k : out.class_sizes) joint *= k;
  std::vector<long> counts(joint, 0);
  out.labels.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    Rng rng = derive_rng(seed, "annotate", i);
    StyleLabel y;
    y.reserve(lfs.size());
    for (const auto& lf : lfs) y.push_back(apply(lf, data[i], &rng));
    out.labels.push_back(std::move(y));
  }
  out.joint_marginal.assign(joint, 0.0);
  for (const auto& y : out.labels) counts[out.joint_index(y)]++;
  for (int i = 0; i < joint; ++i)
    out.joint_marginal[i] = static_cast<double>(counts[i]) / data.size();
  return out;
}

double disagreement(const LabelingFunction& noisy, const LabelingFunction& truth,
                    const std::vector<Trajectory>& data, std::uint64_t seed) {
  if (noisy.kind != truth.kind || noisy.thresholds != truth.thresholds)
    throw std::invalid_argument(
        "disagreement: labeling functions must share score kind and thresholds");
  if (data.empty()) throw std::invalid_argument("disagreement: empty dataset");
  long diff = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    Rng rng = derive_rng(seed, "disagree", i);
    int a = apply(noisy, data[i], &rng);
    int b = apply(truth, data[i], nullptr);
    if (a != b) ++diff;
  }
  return static_cast<double>(diff) / data.size();
}

}  // namespace stylecal
