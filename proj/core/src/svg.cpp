#include "bounce/svg.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace bounce {
namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

}  // namespace

PlotData plot_data_from_orbit(const BounceOrbit& orbit, const Domain& dom, int boundary_points,
                              int samples_per_arc) {
  PlotData data;
  data.box = dom.bounding_box();
  data.boundary = boundary_samples(dom, boundary_points);  // angle-ordered in 2D
  for (const auto& arc : orbit.arcs) {
    std::vector<Vec> pts;
    pts.reserve(samples_per_arc + 1);
    for (int j = 0; j <= samples_per_arc; ++j) {
      const double t = arc.t0 + (arc.t1 - arc.t0) * j / samples_per_arc;
      pts.push_back(arc.state_at(t).q);
    }
    data.arcs.push_back(std::move(pts));
  }
  for (const auto& ev : orbit.events) data.markers.push_back(ev.point);
  return data;
}

std::string render_svg(const PlotData& data) {
  if (data.box.dim() < 2) throw std::invalid_argument("render_svg: need at least 2 dimensions");
  // Project onto the first two coordinates; pad the frame by 5%.
  const double w = data.box.hi[0] - data.box.lo[0];
  const double h = data.box.hi[1] - data.box.lo[1];
  const double pad = 0.05 * std::max(w, h);
  const double x0 = data.box.lo[0] - pad, y0 = data.box.lo[1] - pad;
  const double W = w + 2 * pad, H = h + 2 * pad;
  const double size = 640.0;
  const double s = size / std::max(W, H);

  auto px = [&](const Vec& q) { return (q[0] - x0) * s; };
  auto py = [&](const Vec& q) { return (H - (q[1] - y0)) * s; };  // flip y

  std::string out;
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(W * s) + "\" height=\"" +
         fmt(H * s) + "\" viewBox=\"0 0 " + fmt(W * s) + " " + fmt(H * s) + "\">\n";
  out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  auto polyline = [&](const std::vector<Vec>& pts, const std::string& style, bool close) {
    if (pts.empty()) return;
    out += close ? "<polygon points=\"" : "<polyline points=\"";
    for (size_t i = 0; i < pts.size(); ++i) {
      if (i) out += " ";
      out += fmt(px(pts[i])) + "," + fmt(py(pts[i]));
    }
    out += "\" " + style + "/>\n";
  };

  polyline(data.boundary, "fill=\"none\" stroke=\"#222222\" stroke-width=\"2\"", true);
  for (const auto& arc : data.arcs)
    polyline(arc, "fill=\"none\" stroke=\"#0a58a8\" stroke-width=\"1.5\"", false);
  for (const auto& mk : data.markers)
    out += "<circle class=\"bounce\" cx=\"" + fmt(px(mk)) + "\" cy=\"" + fmt(py(mk)) +
           "\" r=\"" + fmt(0.008 * size) + "\" fill=\"#c22020\"/>\n";
  out += "</svg>\n";
  return out;
}

void emit_plot(const BounceOrbit& orbit, const Domain& dom, const std::string& path) {
  const std::string svg = render_svg(plot_data_from_orbit(orbit, dom));
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("emit_plot: cannot open " + path);
  f << svg;
  if (!f.good()) throw std::runtime_error("emit_plot: write failed for " + path);
}

}  // namespace bounce
