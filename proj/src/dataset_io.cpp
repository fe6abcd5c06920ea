#include "stylecal/dataset_io.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace stylecal {

using nlohmann::json;

void save_trajectories(const std::string& path, const std::vector<Trajectory>& data,
                       const DatasetMeta& meta) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  for (const auto& traj : data) {
    json rec;
    std::vector<double> st, ac;
    st.reserve(traj.states.size() * 2);
    for (const auto& s : traj.states) {
      st.push_back(s.x());
      st.push_back(s.y());
    }
    ac.reserve(traj.actions.size() * 2);
    for (const auto& a : traj.actions) {
      ac.push_back(a.x());
      ac.push_back(a.y());
    }
    rec["states"] = st;
    rec["actions"] = ac;
    out << rec.dump() << "\n";
  }
  if (!out) throw std::runtime_error("short write: " + path);

  json m;
  m["T"] = meta.T;
  m["state_dim"] = meta.state_dim;
  m["action_dim"] = meta.action_dim;
  m["seed"] = meta.seed;
  m["generator_version"] = meta.generator_version;
  m["count"] = static_cast<int>(data.size());
  std::ofstream mout(path + ".meta.json");
  if (!mout) throw std::runtime_error("cannot open for writing: " + path + ".meta.json");
  mout << m.dump(2) << "\n";
}

std::vector<Trajectory> load_trajectories(const std::string& path, DatasetMeta* meta) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset: " + path);
  std::vector<Trajectory> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json rec = json::parse(line);
    Trajectory traj;
    const auto& st = rec.at("states");
    const auto& ac = rec.at("actions");
    if (st.size() % 2 != 0 || ac.size() % 2 != 0 || st.size() != ac.size() + 2)
      throw std::runtime_error("malformed trajectory record in " + path);
    for (std::size_t i = 0; i + 1 < st.size(); i += 2)
      traj.states.emplace_back(st[i].get<double>(), st[i + 1].get<double>());
    for (std::size_t i = 0; i + 1 < ac.size(); i += 2)
      traj.actions.emplace_back(ac[i].get<double>(), ac[i + 1].get<double>());
    out.push_back(std::move(traj));
  }
  if (meta) {
    std::ifstream min(path + ".meta.json");
    if (min) {
      json m = json::parse(min);
      meta->T = m.value("T", 24);
      meta->state_dim = m.value("state_dim", 2);
      meta->action_dim = m.value("action_dim", 2);
      meta->seed = m.value("seed", std::uint64_t{0});
      meta->generator_version = m.value("generator_version", "1");
      meta->count = m.value("count", static_cast<int>(out.size()));
    }
  }
  return out;
}

void save_labels(const std::string& path, const std::vector<StyleLabel>& labels) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  for (const auto& y : labels) {
    for (std::size_t i = 0; i < y.size(); ++i) out << (i ? " " : "") << y[i];
    out << "\n";
  }
  if (!out) throw std::runtime_error("short write: " + path);
}

std::vector<StyleLabel> load_labels(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open labels: " + path);
  std::vector<StyleLabel> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    StyleLabel y;
    int c;
    while (ls >> c) y.push_back(c);
    out.push_back(std::move(y));
  }
  return out;
}

}  // namespace stylecal
