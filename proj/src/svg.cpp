// SPDX-License-Identifier: Apache-2.0
#include "cramfuse/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace cramfuse {
namespace {

constexpr double kW = 640, kH = 420, kLeft = 70, kRight = 160, kTop = 40, kBottom = 60;
const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string line_plot_svg(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                          const std::vector<PlotSeries>& series) {
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series) {
    for (double x : s.xs) x0 = std::min(x0, x), x1 = std::max(x1, x);
    for (double y : s.ys) y0 = std::min(y0, y), y1 = std::max(y1, y);
  }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 <= x0) x1 = x0 + 1;
  if (y1 <= y0) y1 = y0 + 1;
  const double pw = kW - kLeft - kRight, ph = kH - kTop - kBottom;
  const auto sx = [&](double x) { return kLeft + (x - x0) / (x1 - x0) * pw; };
  const auto sy = [&](double y) { return kTop + ph - (y - y0) / (y1 - y0) * ph; };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << kW / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << escape(title) << "</text>\n";
  o << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << pw << "\" height=\"" << ph
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = x0 + (x1 - x0) * i / 4.0, yv = y0 + (y1 - y0) * i / 4.0;
    o << "<text x=\"" << sx(xv) << "\" y=\"" << kTop + ph + 16 << "\" text-anchor=\"middle\">" << num(xv) << "</text>\n";
    o << "<text x=\"" << kLeft - 6 << "\" y=\"" << sy(yv) + 4 << "\" text-anchor=\"end\">" << num(yv) << "</text>\n";
    o << "<line x1=\"" << kLeft << "\" x2=\"" << kLeft + pw << "\" y1=\"" << sy(yv) << "\" y2=\"" << sy(yv)
      << "\" stroke=\"#ddd\"/>\n";
  }
  o << "<text x=\"" << kLeft + pw / 2 << "\" y=\"" << kH - 18 << "\" text-anchor=\"middle\">" << escape(xlabel)
    << "</text>\n";
  o << "<text transform=\"translate(18," << kTop + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
    << escape(ylabel) << "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* color = kColors[k % 6];
    o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < std::min(s.xs.size(), s.ys.size()); ++i) o << sx(s.xs[i]) << "," << sy(s.ys[i]) << " ";
    o << "\"/>\n";
    for (std::size_t i = 0; i < std::min(s.xs.size(), s.ys.size()); ++i) {
      o << "<circle cx=\"" << sx(s.xs[i]) << "\" cy=\"" << sy(s.ys[i]) << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    }
    const double ly = kTop + 14 + 18 * static_cast<double>(k);
    o << "<line x1=\"" << kW - kRight + 12 << "\" x2=\"" << kW - kRight + 32 << "\" y1=\"" << ly << "\" y2=\"" << ly
      << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    o << "<text x=\"" << kW - kRight + 38 << "\" y=\"" << ly + 4 << "\">" << escape(s.name) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

std::string bev_svg(const std::vector<Box3D>& gts, const std::vector<Box3D>& dets, double x_min, double x_max,
                    double y_min, double y_max) {
  const double scale = 8.0;
  const double w = (y_max - y_min) * scale, h = (x_max - x_min) * scale;
  // Forward (x) points up, left (y) points left.
  const auto px = [&](const Eigen::Vector2d& p) {
    return std::make_pair((y_max - p.y()) * scale, (x_max - p.x()) * scale);
  };
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"#111\"/>\n";
  const auto poly = [&](const Box3D& b, const std::string& style) {
    o << "<polygon points=\"";
    for (const auto& c : b.footprint()) {
      const auto [u, v] = px(c);
      o << u << "," << v << " ";
    }
    o << "\" " << style << "/>\n";
  };
  for (const auto& b : gts) poly(b, "fill=\"none\" stroke=\"#2ca02c\" stroke-width=\"2\"");
  for (const auto& b : dets) {
    poly(b, "fill=\"none\" stroke=\"#d62728\" stroke-width=\"1.5\" stroke-opacity=\"" +
                num(std::clamp(b.score, 0.15, 1.0)) + "\"");
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace cramfuse
