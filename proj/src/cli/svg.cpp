#include "nflab/svg.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "nflab/error.hpp"
#include "nflab/io.hpp"

namespace nfl {

namespace {

constexpr int kLeft = 64;
constexpr int kRight = 24;
constexpr int kTop = 36;
constexpr int kBottom = 48;
constexpr std::array<const char*, 6> kLineColors = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"};

std::string escape(std::string_view text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string tick_label(double v) {
  if (v != 0.0 && (std::fabs(v) >= 1e5 || std::fabs(v) < 1e-3)) return fmt::format("{:.2g}", v);
  return fmt::format("{:.4g}", v);
}

struct Frame {
  double x0, x1, y0, y1;
  int width, height;

  double px(double x) const { return kLeft + (x - x0) / (x1 - x0) * (width - kLeft - kRight); }
  double py(double y) const { return height - kBottom - (y - y0) / (y1 - y0) * (height - kTop - kBottom); }
};

void widen(double& lo, double& hi) {
  if (lo == hi) {
    const double pad = lo == 0.0 ? 1.0 : 0.05 * std::fabs(lo);
    lo -= pad;
    hi += pad;
  }
}

std::string header(const PlotOptions& o) {
  std::string s = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" viewBox=\"0 0 {0} {1}\" "
      "font-family=\"sans-serif\" font-size=\"11\">\n"
      "<rect width=\"{0}\" height=\"{1}\" fill=\"white\"/>\n",
      o.width, o.height);
  if (!o.title.empty()) {
    s += fmt::format("<text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n", o.width / 2,
                     escape(o.title));
  }
  return s;
}

std::string axes(const Frame& f, const PlotOptions& o, bool log_x) {
  std::string s;
  const double left = kLeft, right = f.width - kRight, top = kTop, bottom = f.height - kBottom;
  s += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n", left, top,
                   right - left, bottom - top);
  for (int i = 0; i <= 4; ++i) {
    const double xv = f.x0 + (f.x1 - f.x0) * i / 4.0;
    const double x = f.px(xv);
    s += fmt::format("<line x1=\"{0:.2f}\" y1=\"{1}\" x2=\"{0:.2f}\" y2=\"{2}\" stroke=\"black\"/>\n", x, bottom,
                     bottom + 4);
    s += fmt::format("<text x=\"{:.2f}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", x, bottom + 16,
                     tick_label(log_x ? std::pow(10.0, xv) : xv));
    const double yv = f.y0 + (f.y1 - f.y0) * i / 4.0;
    const double y = f.py(yv);
    s += fmt::format("<line x1=\"{0}\" y1=\"{1:.2f}\" x2=\"{2}\" y2=\"{1:.2f}\" stroke=\"black\"/>\n", left - 4, y,
                     left);
    s += fmt::format("<text x=\"{}\" y=\"{:.2f}\" text-anchor=\"end\">{}</text>\n", left - 6, y + 4, tick_label(yv));
  }
  if (!o.x_label.empty()) {
    s += fmt::format("<text x=\"{:.2f}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", (left + right) / 2,
                     f.height - 10, escape(o.x_label));
  }
  if (!o.y_label.empty()) {
    s += fmt::format(
        "<text x=\"14\" y=\"{0:.2f}\" text-anchor=\"middle\" transform=\"rotate(-90 14 {0:.2f})\">{1}</text>\n",
        (top + bottom) / 2, escape(o.y_label));
  }
  return s;
}

}  // namespace

std::string ramp_color(double t) {
  if (!(t >= 0.0)) t = 0.0;
  if (t > 1.0) t = 1.0;
  const double pos = t * (kHeatRamp.size() - 1);
  const auto i = std::min<std::size_t>(static_cast<std::size_t>(pos), kHeatRamp.size() - 2);
  const double w = pos - static_cast<double>(i);
  int rgb[3];
  for (int c = 0; c < 3; ++c) {
    rgb[c] = static_cast<int>(std::lround(kHeatRamp[i][c] * (1.0 - w) + kHeatRamp[i + 1][c] * w));
  }
  return fmt::format("#{:02x}{:02x}{:02x}", rgb[0], rgb[1], rgb[2]);
}

std::string line_plot_svg(const std::vector<Series>& series, const PlotOptions& options) {
  if (series.empty()) fail(ErrorCode::kInvalidArgument, "plot needs at least one series");
  std::vector<std::vector<std::pair<double, double>>> pts(series.size());
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    if (s.xs.size() != s.ys.size()) fail(ErrorCode::kDimensionMismatch, "series x/y lengths differ");
    for (std::size_t i = 0; i < s.xs.size(); ++i) {
      double x = s.xs[i];
      const double y = s.ys[i];
      if (options.log_x) {
        if (!(x > 0.0)) continue;
        x = std::log10(x);
      }
      if (!std::isfinite(x) || !std::isfinite(y)) continue;
      pts[k].emplace_back(x, y);
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
  }
  if (!std::isfinite(x0)) fail(ErrorCode::kInvalidArgument, "plot has no finite points");
  widen(x0, x1);
  widen(y0, y1);
  const Frame f{x0, x1, y0, y1, options.width, options.height};

  std::string s = header(options) + axes(f, options, options.log_x);
  for (std::size_t k = 0; k < series.size(); ++k) {
    if (pts[k].empty()) continue;
    const char* color = kLineColors[k % kLineColors.size()];
    s += fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"", color);
    for (std::size_t i = 0; i < pts[k].size(); ++i) {
      if (i) s += ' ';
      s += fmt::format("{:.2f},{:.2f}", f.px(pts[k][i].first), f.py(pts[k][i].second));
    }
    s += "\"/>\n";
    if (!series[k].name.empty()) {
      const double ly = kTop + 14.0 + 14.0 * static_cast<double>(k);
      s += fmt::format("<text x=\"{}\" y=\"{:.2f}\" fill=\"{}\">{}</text>\n", kLeft + 8, ly, color,
                       escape(series[k].name));
    }
  }
  s += "</svg>\n";
  return s;
}

std::string heatmap_svg(const Heatmap& map, const PlotOptions& options) {
  if (map.rows < 1 || map.cols < 1) fail(ErrorCode::kInvalidArgument, "empty heatmap");
  if (map.values.size() != static_cast<std::size_t>(map.rows) * map.cols) {
    fail(ErrorCode::kDimensionMismatch, "heatmap value count");
  }
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (double v : map.values) {
    if (std::isfinite(v)) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  double x0 = map.x_min, x1 = map.x_max, y0 = map.y_min, y1 = map.y_max;
  widen(x0, x1);
  widen(y0, y1);
  const Frame f{x0, x1, y0, y1, options.width, options.height};
  std::string s = header(options);
  const double cw = static_cast<double>(options.width - kLeft - kRight) / map.cols;
  const double ch = static_cast<double>(options.height - kTop - kBottom) / map.rows;
  for (int r = 0; r < map.rows; ++r) {
    for (int c = 0; c < map.cols; ++c) {
      const double v = map.values[static_cast<std::size_t>(r) * map.cols + c];
      std::string color = "#808080";
      if (std::isfinite(v)) color = ramp_color(hi > lo ? (v - lo) / (hi - lo) : 0.5);
      s += fmt::format("<rect x=\"{:.2f}\" y=\"{:.2f}\" width=\"{:.2f}\" height=\"{:.2f}\" fill=\"{}\"/>\n",
                       kLeft + c * cw, options.height - kBottom - (r + 1) * ch, cw + 0.05, ch + 0.05, color);
    }
  }
  s += axes(f, options, false);
  if (std::isfinite(lo)) {
    s += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"end\">range {} .. {}</text>\n", options.width - kRight,
                     kTop - 6, tick_label(lo), tick_label(hi));
  }
  s += "</svg>\n";
  return s;
}

void emit_svg_plot(const std::vector<Series>& series, const PlotOptions& options, const std::filesystem::path& path) {
  write_file_atomic(path, line_plot_svg(series, options));
}

void emit_svg_plot(const Heatmap& map, const PlotOptions& options, const std::filesystem::path& path) {
  write_file_atomic(path, heatmap_svg(map, options));
}

}  // namespace nfl
