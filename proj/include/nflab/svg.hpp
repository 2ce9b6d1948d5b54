#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace nfl {

struct Series {
  std::string name;
  std::vector<double> xs;
  std::vector<double> ys;
};

struct PlotOptions {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;  // non-positive x values are dropped
  int width = 640;
  int height = 400;
};

// 8-stop ramp from low (dark purple) to high (yellow), linearly interpolated.
inline constexpr std::array<std::array<int, 3>, 8> kHeatRamp = {{
    {68, 1, 84},
    {70, 50, 126},
    {54, 92, 141},
    {39, 127, 142},
    {31, 161, 135},
    {74, 193, 109},
    {160, 218, 57},
    {253, 231, 37},
}};

/// Color for t in [0,1] (clamped) as "#rrggbb".
std::string ramp_color(double t);

/// One <polyline> per series. Output bytes depend only on the inputs.
std::string line_plot_svg(const std::vector<Series>& series, const PlotOptions& options);

struct Heatmap {
  int rows = 0;
  int cols = 0;
  std::vector<double> values;  // row-major, row 0 drawn at the bottom
  double x_min = 0.0, x_max = 1.0;
  double y_min = 0.0, y_max = 1.0;
};

/// Cells colored by min-max normalized value; non-finite cells are gray.
std::string heatmap_svg(const Heatmap& map, const PlotOptions& options);

void emit_svg_plot(const std::vector<Series>& series, const PlotOptions& options, const std::filesystem::path& path);
void emit_svg_plot(const Heatmap& map, const PlotOptions& options, const std::filesystem::path& path);

}  // namespace nfl
