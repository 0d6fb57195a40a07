#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "dryfuse/experiments.hpp"
#include "dryfuse/image.hpp"

namespace dryfuse {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  Rgb color{0, 0, 0};
  bool lines = false;
  bool markers = true;
};

struct PlotSpec {
  int width = 640;
  int height = 480;
  // Axis ranges; computed from the data when lo == hi.
  double x_lo = 0.0, x_hi = 0.0;
  double y_lo = 0.0, y_hi = 0.0;
  bool diagonal = false;  // draw y = x
};

// Renders series on white with axes and numeric tick labels (legend as
// coloured swatches, top left, in series order).
RgbImage render_plot(const std::vector<Series>& series, const PlotSpec& spec);

Rgb palette_color(std::size_t index);

// Predicted vs true moisture content, one series per arm.
void write_scatter_plot(const std::filesystem::path& path, const std::vector<ArmResult>& arms);
// Error density curves, one per arm.
void write_density_plot(const std::filesystem::path& path, const std::vector<ErrorDensity>& densities);
// Average RMSE against ratio index (ratios in the given order).
void write_trend_plot(const std::filesystem::path& path, const std::vector<SweepRow>& rows);

}  // namespace dryfuse
