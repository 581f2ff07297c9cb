// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "cramfuse/geometry.hpp"

namespace cramfuse {

struct PlotSeries {
  std::string name;
  std::vector<double> xs;
  std::vector<double> ys;
};

/// Line chart with markers, axis ticks and a legend.
std::string line_plot_svg(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                          const std::vector<PlotSeries>& series);

/// Top-down view of ground truth (green) and detections (red, opacity by
/// score) over the given extent.
std::string bev_svg(const std::vector<Box3D>& gts, const std::vector<Box3D>& dets, double x_min, double x_max,
                    double y_min, double y_max);

}  // namespace cramfuse
