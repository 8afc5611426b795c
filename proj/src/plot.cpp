#include "prunegraph/plot.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <sstream>

namespace prunegraph {

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

}  // namespace

std::string curve_svg(const std::vector<CurvePoint>& points, const std::string& metric_label) {
  constexpr double W = 640, H = 400, L = 70, R = 150, T = 30, B = 50;
  double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  if (!points.empty()) {
    xmin = xmax = points.front().level;
    ymin = ymax = points.front().metric;
    for (const auto& p : points) {
      xmin = std::min(xmin, p.level);
      xmax = std::max(xmax, p.level);
      ymin = std::min(ymin, p.metric);
      ymax = std::max(ymax, p.metric);
    }
  }
  if (xmax - xmin < 1e-12) xmax = xmin + 1;
  if (ymax - ymin < 1e-12) ymax = ymin + 1;
  auto sx = [&](double x) { return L + (x - xmin) / (xmax - xmin) * (W - L - R); };
  auto sy = [&](double y) { return H - B - (y - ymin) / (ymax - ymin) * (H - T - B); };

  std::map<std::string, std::vector<const CurvePoint*>> lines;
  for (const auto& p : points) lines[to_string(p.mode)].push_back(&p);

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double x = xmin + (xmax - xmin) * i / 4, y = ymin + (ymax - ymin) * i / 4;
    os << "<text x=\"" << num(sx(x)) << "\" y=\"" << H - B + 18 << "\" text-anchor=\"middle\">" << label(x) << "</text>\n";
    os << "<text x=\"" << L - 6 << "\" y=\"" << num(sy(y) + 4) << "\" text-anchor=\"end\">" << label(y) << "</text>\n";
  }
  os << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\">sparsity</text>\n";
  os << "<text x=\"16\" y=\"" << (T + H - B) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
     << (T + H - B) / 2 << ")\">" << metric_label << "</text>\n";
  const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};
  std::size_t k = 0;
  for (const auto& [mode, pts] : lines) {
    const char* color = colors[k % 4];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (const auto* p : pts) os << num(sx(p->level)) << ',' << num(sy(p->metric)) << ' ';
    os << "\"/>\n";
    for (const auto* p : pts)
      os << "<circle cx=\"" << num(sx(p->level)) << "\" cy=\"" << num(sy(p->metric)) << "\" r=\"3\" fill=\"" << color
         << "\"/>\n";
    const double ly = T + 20.0 * static_cast<double>(k);
    os << "<line x1=\"" << W - R + 10 << "\" y1=\"" << ly << "\" x2=\"" << W - R + 30 << "\" y2=\"" << ly
       << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << W - R + 36 << "\" y=\"" << ly + 4 << "\">" << mode << "</text>\n";
    ++k;
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace prunegraph
