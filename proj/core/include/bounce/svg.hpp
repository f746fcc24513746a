#pragma once

#include <string>
#include <vector>

#include "bounce/geometry.hpp"
#include "bounce/orbit.hpp"
#include "bounce/types.hpp"

namespace bounce {

struct PlotData {
  std::vector<Vec> boundary;           // closed polyline along the wall
  std::vector<std::vector<Vec>> arcs;  // orbit arcs, sampled
  std::vector<Vec> markers;            // bounce points
  Box box;
};

PlotData plot_data_from_orbit(const BounceOrbit& orbit, const Domain& dom,
                              int boundary_points = 256, int samples_per_arc = 128);

// Deterministic bytes: fixed-precision coordinates, no timestamps.
std::string render_svg(const PlotData& data);

// Writes render_svg(plot_data_from_orbit(...)) to path.
void emit_plot(const BounceOrbit& orbit, const Domain& dom, const std::string& path);

}  // namespace bounce
