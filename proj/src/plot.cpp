#include "stylecal/plot.hpp"

#include <algorithm>
#include <sstream>

namespace stylecal {

namespace {

constexpr double kSize = 560.0;
constexpr double kPad = 30.0;

double sx(double x) { return kPad + x * (kSize - 2 * kPad); }
double sy(double y) { return kSize - kPad - y * (kSize - 2 * kPad); }  // y up

void open_svg(std::ostringstream& os) {
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kSize << "\" height=\""
     << kSize << "\" viewBox=\"0 0 " << kSize << " " << kSize << "\">\n";
  os << "<rect width=\"" << kSize << "\" height=\"" << kSize << "\" fill=\"white\"/>\n";
}

}  // namespace

std::string trajectory_svg(const std::vector<Trajectory>& trajs,
                           const std::vector<bool>& consistent,
                           const LabelingFunction* regions) {
  std::ostringstream os;
  os.precision(4);
  open_svg(os);
  // court bounds
  os << "<rect x=\"" << sx(0) << "\" y=\"" << sy(1) << "\" width=\"" << sx(1) - sx(0)
     << "\" height=\"" << sx(1) - sx(0)
     << "\" fill=\"none\" stroke=\"black\" stroke-width=\"2\"/>\n";
  if (regions && regions->kind == ScoreKind::Destination) {
    for (double r : regions->thresholds) {
      os << "<circle cx=\"" << sx(regions->destination.x()) << "\" cy=\""
         << sy(regions->destination.y()) << "\" r=\"" << r * (kSize - 2 * kPad)
         << "\" fill=\"none\" stroke=\"#3366cc\" stroke-width=\"1.5\" "
            "stroke-dasharray=\"6 4\"/>\n";
    }
  }
  for (std::size_t i = 0; i < trajs.size(); ++i) {
    const auto& t = trajs[i];
    if (t.states.empty()) continue;
    bool ok = i < consistent.size() ? consistent[i] : true;
    const char* color = ok ? "#2a9d4e" : "#d64545";
    os << "<polyline fill=\"none\" stroke=\"" << color
       << "\" stroke-width=\"1\" opacity=\"0.6\" points=\"";
    for (const auto& s : t.states) os << sx(s.x()) << ',' << sy(s.y()) << ' ';
    os << "\"/>\n";
    double x0 = sx(t.states.front().x()), y0 = sy(t.states.front().y());
    os << "<path d=\"M " << x0 << ' ' << y0 - 4 << " L " << x0 + 4 << ' ' << y0 << " L "
       << x0 << ' ' << y0 + 4 << " L " << x0 - 4 << ' ' << y0
       << " Z\" fill=\"#444\"/>\n";  // start diamond
    os << "<circle cx=\"" << sx(t.states.back().x()) << "\" cy=\""
       << sy(t.states.back().y()) << "\" r=\"3.5\" fill=\"" << color << "\"/>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::string noise_svg(const std::vector<NoisePoint>& points) {
  std::ostringstream os;
  os.precision(4);
  open_svg(os);
  double max_d = 0.05;
  for (const auto& p : points)
    max_d = std::max({max_d, p.disagreement, p.relative_decrease});
  max_d *= 1.15;
  auto px = [&](double d) { return kPad + d / max_d * (kSize - 2 * kPad); };
  auto py = [&](double v) { return kSize - kPad - v / max_d * (kSize - 2 * kPad); };
  // axes
  os << "<line x1=\"" << kPad << "\" y1=\"" << kSize - kPad << "\" x2=\"" << kSize - kPad
     << "\" y2=\"" << kSize - kPad << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << kPad << "\" y1=\"" << kSize - kPad << "\" x2=\"" << kPad
     << "\" y2=\"" << kPad << "\" stroke=\"black\"/>\n";
  // one-to-one reference: decrease equal to disagreement
  os << "<line x1=\"" << px(0) << "\" y1=\"" << py(0) << "\" x2=\"" << px(max_d)
     << "\" y2=\"" << py(max_d)
     << "\" stroke=\"#888\" stroke-dasharray=\"5 5\"/>\n";
  std::ostringstream line;
  line << "<polyline fill=\"none\" stroke=\"#3366cc\" stroke-width=\"2\" points=\"";
  for (const auto& p : points) {
    line << px(p.disagreement) << ',' << py(p.relative_decrease) << ' ';
    os << "<circle cx=\"" << px(p.disagreement) << "\" cy=\"" << py(p.relative_decrease)
       << "\" r=\"4\" fill=\"#3366cc\"/>\n";
  }
  line << "\"/>\n";
  os << line.str();
  os << "</svg>\n";
  return os.str();
}

}  // namespace stylecal
