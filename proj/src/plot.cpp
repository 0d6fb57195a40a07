#include "dryfuse/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace dryfuse {

namespace {

// 3x5 glyphs, rows top to bottom, 3 bits per row (MSB left).
int glyph(char c, int row) {
  static const int digits[10][5] = {{7, 5, 5, 5, 7}, {2, 6, 2, 2, 7}, {7, 1, 7, 4, 7}, {7, 1, 7, 1, 7},
                                    {5, 5, 7, 1, 1}, {7, 4, 7, 1, 7}, {7, 4, 7, 5, 7}, {7, 1, 1, 1, 1},
                                    {7, 5, 7, 5, 7}, {7, 5, 7, 1, 7}};
  if (c >= '0' && c <= '9') return digits[c - '0'][row];
  if (c == '.') return row == 4 ? 2 : 0;
  if (c == '-') return row == 2 ? 7 : 0;
  if (c == ':') return row == 1 || row == 3 ? 2 : 0;
  return 0;
}

class Canvas {
 public:
  explicit Canvas(int w, int h) : img_(w, h, Rgb{255, 255, 255}) {}

  void pixel(int x, int y, Rgb c) {
    if (x >= 0 && y >= 0 && x < img_.width && y < img_.height) img_.set(x, y, c);
  }

  void line(int x0, int y0, int x1, int y1, Rgb c) {
    const int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
    const int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    while (true) {
      pixel(x0, y0, c);
      if (x0 == x1 && y0 == y1) break;
      const int e2 = 2 * err;
      if (e2 >= dy) { err += dy; x0 += sx; }
      if (e2 <= dx) { err += dx; y0 += sy; }
    }
  }

  void disc(int cx, int cy, int r, Rgb c) {
    for (int y = -r; y <= r; ++y) {
      for (int x = -r; x <= r; ++x) {
        if (x * x + y * y <= r * r) pixel(cx + x, cy + y, c);
      }
    }
  }

  void rect(int x0, int y0, int x1, int y1, Rgb c) {
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) pixel(x, y, c);
    }
  }

  // Text at scale 2; returns the width drawn.
  int text(int x, int y, const std::string& s, Rgb c) {
    int cx = x;
    for (char ch : s) {
      for (int row = 0; row < 5; ++row) {
        const int bits = glyph(ch, row);
        for (int col = 0; col < 3; ++col) {
          if (bits & (4 >> col)) rect(cx + 2 * col, y + 2 * row, cx + 2 * col + 1, y + 2 * row + 1, c);
        }
      }
      cx += 8;
    }
    return cx - x;
  }

  RgbImage& image() { return img_; }

 private:
  RgbImage img_;
};

std::string tick_label(double v, double step) {
  const int digits = std::max(0, static_cast<int>(std::ceil(-std::log10(step) - 1e-9)));
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

double nice_step(double span) {
  const double raw = span / 5.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    if (raw <= m * mag) return m * mag;
  }
  return 10.0 * mag;
}

void fit_range(const std::vector<Series>& series, bool use_x, double& lo, double& hi) {
  if (lo != hi) return;
  lo = std::numeric_limits<double>::infinity();
  hi = -lo;
  for (const auto& s : series) {
    for (double v : use_x ? s.x : s.y) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
  if (hi - lo < 1e-12) lo -= 0.5, hi += 0.5;
  const double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;
}

}  // namespace

Rgb palette_color(std::size_t index) {
  static const Rgb colors[] = {{31, 119, 180}, {255, 127, 14}, {44, 160, 44}, {214, 39, 40},
                               {148, 103, 189}, {140, 86, 75}, {227, 119, 194}, {127, 127, 127}};
  return colors[index % (sizeof colors / sizeof colors[0])];
}

RgbImage render_plot(const std::vector<Series>& series, const PlotSpec& spec) {
  Canvas cv(spec.width, spec.height);
  double xlo = spec.x_lo, xhi = spec.x_hi, ylo = spec.y_lo, yhi = spec.y_hi;
  fit_range(series, true, xlo, xhi);
  fit_range(series, false, ylo, yhi);
  if (spec.diagonal) {
    xlo = ylo = std::min(xlo, ylo);
    xhi = yhi = std::max(xhi, yhi);
  }
  const int left = 70, right = spec.width - 20, top = 20, bottom = spec.height - 40;
  auto px = [&](double x) { return left + static_cast<int>(std::lround((x - xlo) / (xhi - xlo) * (right - left))); };
  auto py = [&](double y) { return bottom - static_cast<int>(std::lround((y - ylo) / (yhi - ylo) * (bottom - top))); };
  const Rgb axis{40, 40, 40}, grid{225, 225, 225};

  const double xs = nice_step(xhi - xlo), ys = nice_step(yhi - ylo);
  for (double t = std::ceil(xlo / xs) * xs; t <= xhi + 1e-12; t += xs) {
    cv.line(px(t), top, px(t), bottom, grid);
    const std::string label = tick_label(t, xs);
    cv.text(px(t) - 4 * static_cast<int>(label.size()), bottom + 8, label, axis);
  }
  for (double t = std::ceil(ylo / ys) * ys; t <= yhi + 1e-12; t += ys) {
    cv.line(left, py(t), right, py(t), grid);
    const std::string label = tick_label(t, ys);
    cv.text(left - 8 - 8 * static_cast<int>(label.size()), py(t) - 5, label, axis);
  }
  cv.line(left, bottom, right, bottom, axis);
  cv.line(left, top, left, bottom, axis);
  if (spec.diagonal) cv.line(px(xlo), py(ylo), px(xhi), py(yhi), Rgb{150, 150, 150});

  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (s.lines && i > 0) cv.line(px(s.x[i - 1]), py(s.y[i - 1]), px(s.x[i]), py(s.y[i]), s.color);
      if (s.markers) cv.disc(px(s.x[i]), py(s.y[i]), 3, s.color);
    }
    cv.rect(left + 10, top + 10 + 14 * static_cast<int>(k), left + 30, top + 18 + 14 * static_cast<int>(k), s.color);
  }
  return std::move(cv.image());
}

void write_scatter_plot(const std::filesystem::path& path, const std::vector<ArmResult>& arms) {
  std::vector<Series> series;
  for (std::size_t k = 0; k < arms.size(); ++k) {
    Series s{arms[k].name, {}, {}, palette_color(k)};
    for (const auto& p : arms[k].predictions) {
      s.x.push_back(p.truth);
      s.y.push_back(p.prediction);
    }
    series.push_back(std::move(s));
  }
  PlotSpec spec;
  spec.diagonal = true;
  write_png(path, render_plot(series, spec));
}

void write_density_plot(const std::filesystem::path& path, const std::vector<ErrorDensity>& densities) {
  std::vector<Series> series;
  for (std::size_t k = 0; k < densities.size(); ++k) {
    Series s{densities[k].label, densities[k].bin_centers, densities[k].density, palette_color(k), true, false};
    series.push_back(std::move(s));
  }
  write_png(path, render_plot(series, PlotSpec{}));
}

void write_trend_plot(const std::filesystem::path& path, const std::vector<SweepRow>& rows) {
  Series s{"average_rmse", {}, {}, palette_color(0), true, true};
  for (std::size_t i = 0; i < rows.size(); ++i) {
    s.x.push_back(static_cast<double>(i + 1));
    s.y.push_back(rows[i].average_rmse);
  }
  write_png(path, render_plot({s}, PlotSpec{}));
}

}  // namespace dryfuse
