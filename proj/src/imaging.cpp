#include "dryfuse/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>

#include "dryfuse/domain.hpp"

namespace dryfuse {

// Planckian locus cubic-spline approximation (Kim et al., "Design of advanced
// color temperature control system for HDTV applications", 2002) and the
// XYZ -> linear sRGB (D65) matrix from IEC 61966-2-1.
std::array<double, 2> planckian_chromaticity(double cct) {
  if (!(cct >= 1667.0 && cct <= 25000.0)) throw DomainError("CCT outside [1667, 25000] K");
  const double t = cct;
  const double t2 = t * t;
  const double t3 = t2 * t;
  double x;
  if (t <= 4000.0) {
    x = -0.2661239e9 / t3 - 0.2343589e6 / t2 + 0.8776956e3 / t + 0.179910;
  } else {
    x = -3.0258469e9 / t3 + 2.1070379e6 / t2 + 0.2226347e3 / t + 0.240390;
  }
  const double x2 = x * x;
  const double x3 = x2 * x;
  double y;
  if (t <= 2222.0) {
    y = -1.1063814 * x3 - 1.34811020 * x2 + 2.18555832 * x - 0.20219683;
  } else if (t <= 4000.0) {
    y = -0.9549476 * x3 - 1.37418593 * x2 + 2.09137015 * x - 0.16748867;
  } else {
    y = 3.0817580 * x3 - 5.87338670 * x2 + 3.75112997 * x - 0.37001483;
  }
  return {x, y};
}

std::array<double, 3> white_point_rgb(double cct) {
  const auto [x, y] = planckian_chromaticity(cct);
  const double X = x / y;
  const double Y = 1.0;
  const double Z = (1.0 - x - y) / y;
  return {
      3.2404542 * X - 1.5371385 * Y - 0.4985314 * Z,
      -0.9692660 * X + 1.8760108 * Y + 0.0415560 * Z,
      0.0556434 * X - 0.2040259 * Y + 1.0572252 * Z,
  };
}

std::array<double, 3> illuminant_gains(double source_cct, double target_cct) {
  for (double cct : {source_cct, target_cct}) {
    if (!(cct >= 2000.0 && cct <= 12000.0)) throw DomainError("CCT outside [2000, 12000] K");
  }
  if (source_cct == target_cct) return {1.0, 1.0, 1.0};
  const auto src = white_point_rgb(source_cct);
  const auto dst = white_point_rgb(target_cct);
  std::array<double, 3> gains{};
  for (int c = 0; c < 3; ++c) gains[c] = dst[c] / src[c];
  const double g = gains[1];
  for (auto& v : gains) v /= g;
  return gains;
}

SliceImage calibrate_color(const SliceImage& raw, double source_cct, double target_cct) {
  if (raw.stage != Stage::raw) throw InvalidImage("calibrate_color expects a raw image");
  raw.check();
  const auto gains = illuminant_gains(source_cct, target_cct);
  SliceImage out = raw;
  out.stage = Stage::calibrated;
  if (gains == std::array<double, 3>{1.0, 1.0, 1.0}) return out;
  for (std::size_t i = 0; i < out.rgb.data.size(); ++i) {
    const double v = std::round(raw.rgb.data[i] * gains[i % 3]);
    out.rgb.data[i] = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
  }
  return out;
}

// ---------------------------------------------------------------------------

Rgb estimate_background(const RgbImage& image) {
  std::array<std::vector<std::uint8_t>, 3> border;
  auto take = [&](int x, int y) {
    for (int c = 0; c < 3; ++c) border[c].push_back(image.at(x, y, c));
  };
  for (int x = 0; x < image.width; ++x) {
    take(x, 0);
    take(x, image.height - 1);
  }
  for (int y = 1; y + 1 < image.height; ++y) {
    take(0, y);
    take(image.width - 1, y);
  }
  Rgb out{};
  for (int c = 0; c < 3; ++c) {
    auto& v = border[c];
    std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
    out[c] = v[v.size() / 2];
  }
  return out;
}

namespace {

Mask dilate(const Mask& in, int r) {
  Mask out(in.width, in.height);
  for (int y = 0; y < in.height; ++y) {
    for (int x = 0; x < in.width; ++x) {
      bool any = false;
      for (int dy = -r; dy <= r && !any; ++dy) {
        const int yy = y + dy;
        if (yy < 0 || yy >= in.height) continue;
        for (int dx = -r; dx <= r; ++dx) {
          const int xx = x + dx;
          if (xx >= 0 && xx < in.width && in.at(xx, yy)) {
            any = true;
            break;
          }
        }
      }
      out.at(x, y) = any ? 1 : 0;
    }
  }
  return out;
}

Mask erode(const Mask& in, int r) {
  Mask out(in.width, in.height);
  for (int y = 0; y < in.height; ++y) {
    for (int x = 0; x < in.width; ++x) {
      bool all = true;
      for (int dy = -r; dy <= r && all; ++dy) {
        // Out-of-image neighbours count as set so closing does not eat borders.
        const int yy = y + dy;
        if (yy < 0 || yy >= in.height) continue;
        for (int dx = -r; dx <= r; ++dx) {
          const int xx = x + dx;
          if (xx >= 0 && xx < in.width && !in.at(xx, yy)) {
            all = false;
            break;
          }
        }
      }
      out.at(x, y) = all ? 1 : 0;
    }
  }
  return out;
}

// 4-connected labelling of pixels equal to `value`; labels start at 1.
std::vector<int> label_components(const Mask& m, std::uint8_t value, int& count) {
  std::vector<int> labels(m.data.size(), 0);
  count = 0;
  std::deque<int> queue;
  for (int start = 0; start < static_cast<int>(m.data.size()); ++start) {
    if ((m.data[start] != 0) != (value != 0) || labels[start]) continue;
    labels[start] = ++count;
    queue.push_back(start);
    while (!queue.empty()) {
      const int p = queue.front();
      queue.pop_front();
      const int x = p % m.width;
      const int y = p / m.width;
      const int nbr[4][2] = {{x - 1, y}, {x + 1, y}, {x, y - 1}, {x, y + 1}};
      for (const auto& n : nbr) {
        if (n[0] < 0 || n[0] >= m.width || n[1] < 0 || n[1] >= m.height) continue;
        const int q = n[1] * m.width + n[0];
        if (labels[q] || (m.data[q] != 0) != (value != 0)) continue;
        labels[q] = count;
        queue.push_back(q);
      }
    }
  }
  return labels;
}

void fill_holes(Mask& m, std::size_t max_area, bool fill_all) {
  int count = 0;
  const auto labels = label_components(m, 0, count);
  std::vector<std::size_t> area(count + 1, 0);
  std::vector<bool> touches_border(count + 1, false);
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) {
      const int l = labels[static_cast<std::size_t>(y) * m.width + x];
      if (!l) continue;
      ++area[l];
      if (x == 0 || y == 0 || x == m.width - 1 || y == m.height - 1) touches_border[l] = true;
    }
  }
  for (std::size_t i = 0; i < m.data.size(); ++i) {
    const int l = labels[i];
    if (l && !touches_border[l] && (fill_all || area[l] <= max_area)) m.data[i] = 1;
  }
}

}  // namespace

std::vector<Mask> ThresholdSegmenter::segment(const RgbImage& image) const {
  const Rgb bg = params_.background ? *params_.background : estimate_background(image);
  Mask fg(image.width, image.height);
  const double t2 = params_.threshold * params_.threshold;
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      double d2 = 0.0;
      for (int c = 0; c < 3; ++c) {
        const double d = static_cast<double>(image.at(x, y, c)) - bg[c];
        d2 += d * d;
      }
      fg.at(x, y) = d2 > t2 ? 1 : 0;
    }
  }
  if (params_.closing_radius > 0) {
    fg = erode(dilate(fg, params_.closing_radius), params_.closing_radius);
  }

  int count = 0;
  const auto labels = label_components(fg, 1, count);
  std::vector<std::size_t> area(count + 1, 0);
  for (int l : labels) ++area[l];

  std::vector<Mask> masks;
  for (int l = 1; l <= count; ++l) {
    if (area[l] < params_.min_area) continue;
    Mask m(image.width, image.height);
    for (std::size_t i = 0; i < labels.size(); ++i) m.data[i] = labels[i] == l ? 1 : 0;
    fill_holes(m, params_.max_speckle_area, params_.fill_core_hole);
    masks.push_back(std::move(m));
  }
  return masks;
}

std::vector<SliceImage> segment_slices(const SliceImage& calibrated, const Segmenter& segmenter,
                                       int expected_count) {
  if (calibrated.stage != Stage::calibrated) {
    throw InvalidImage("segment_slices expects a calibrated image");
  }
  calibrated.check();
  auto masks = segmenter.segment(calibrated.rgb);
  if (masks.empty()) throw SegmentationEmpty("no slice found in image " + calibrated.sample_id);
  if (static_cast<int>(masks.size()) > expected_count) {
    throw SegmentationAmbiguous("found " + std::to_string(masks.size()) + " slices, expected " +
                                std::to_string(expected_count) + " in image " +
                                calibrated.sample_id);
  }
  std::vector<std::pair<double, std::size_t>> order;
  for (std::size_t i = 0; i < masks.size(); ++i) {
    double sx = 0.0;
    std::size_t n = 0;
    for (int y = 0; y < masks[i].height; ++y) {
      for (int x = 0; x < masks[i].width; ++x) {
        if (masks[i].at(x, y)) {
          sx += x;
          ++n;
        }
      }
    }
    order.emplace_back(sx / static_cast<double>(std::max<std::size_t>(n, 1)), i);
  }
  std::sort(order.begin(), order.end());

  std::vector<SliceImage> out;
  for (const auto& [cx, i] : order) {
    SliceImage s;
    s.stage = Stage::masked;
    s.rgb = calibrated.rgb;
    s.mask = std::move(masks[i]);
    s.sample_id = calibrated.sample_id;
    s.check();
    out.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

struct BoundingBox {
  int x0, y0, x1, y1;  // inclusive
};

BoundingBox mask_bbox(const Mask& m) {
  BoundingBox b{m.width, m.height, -1, -1};
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) {
      if (!m.at(x, y)) continue;
      b.x0 = std::min(b.x0, x);
      b.y0 = std::min(b.y0, y);
      b.x1 = std::max(b.x1, x);
      b.y1 = std::max(b.y1, y);
    }
  }
  return b;
}

}  // namespace

SliceImage to_model_tensor(const SliceImage& masked) {
  if (masked.stage != Stage::masked) throw InvalidImage("to_model_tensor expects a masked image");
  masked.check();
  const Mask& mask = *masked.mask;
  const RgbImage& img = masked.rgb;
  const Rgb bg = estimate_background(img);
  const BoundingBox b = mask_bbox(mask);
  const int side = std::max(b.x1 - b.x0 + 1, b.y1 - b.y0 + 1);
  // Square crop centred on the bounding box; out-of-image pixels are padding.
  const int ox = b.x0 - (side - (b.x1 - b.x0 + 1)) / 2;
  const int oy = b.y0 - (side - (b.y1 - b.y0 + 1)) / 2;

  auto pixel = [&](int x, int y, int c) -> double {
    const int ix = ox + x;
    const int iy = oy + y;
    if (ix < 0 || iy < 0 || ix >= img.width || iy >= img.height) return bg[c];
    return img.at(ix, iy, c);
  };
  auto inside = [&](int x, int y) -> double {
    const int ix = ox + x;
    const int iy = oy + y;
    if (ix < 0 || iy < 0 || ix >= img.width || iy >= img.height) return 0.0;
    return mask.at(ix, iy) ? 1.0 : 0.0;
  };

  constexpr int n = kTensorSize;
  SliceImage out;
  out.stage = Stage::tensor;
  out.sample_id = masked.sample_id;
  out.tensor.assign(static_cast<std::size_t>(3) * n * n, 0.0);
  const double scale = static_cast<double>(side) / n;
  for (int y = 0; y < n; ++y) {
    const double sy = std::clamp((y + 0.5) * scale - 0.5, 0.0, static_cast<double>(side - 1));
    const int y0 = static_cast<int>(std::floor(sy));
    const int y1 = std::min(y0 + 1, side - 1);
    const double fy = sy - y0;
    for (int x = 0; x < n; ++x) {
      const double sx = std::clamp((x + 0.5) * scale - 0.5, 0.0, static_cast<double>(side - 1));
      const int x0 = static_cast<int>(std::floor(sx));
      const int x1 = std::min(x0 + 1, side - 1);
      const double fx = sx - x0;
      auto lerp2 = [&](auto&& f) {
        return (1 - fy) * ((1 - fx) * f(x0, y0) + fx * f(x1, y0)) +
               fy * ((1 - fx) * f(x0, y1) + fx * f(x1, y1));
      };
      if (lerp2(inside) < 0.5) continue;
      for (int c = 0; c < 3; ++c) {
        const double v = lerp2([&](int px, int py) { return pixel(px, py, c); });
        out.tensor[(static_cast<std::size_t>(c) * n + y) * n + x] = std::clamp(v / 255.0, 0.0, 1.0);
      }
    }
  }
  return out;
}

SimpleImageFeatures extract_simple_features(const SliceImage& masked) {
  if (masked.stage != Stage::masked) {
    throw InvalidImage("extract_simple_features expects a masked image");
  }
  masked.check();
  const Mask& mask = *masked.mask;
  std::array<double, 3> sum{};
  std::size_t n = 0;
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      if (!mask.at(x, y)) continue;
      for (int c = 0; c < 3; ++c) sum[c] += masked.rgb.at(x, y, c);
      ++n;
    }
  }
  const double dn = static_cast<double>(n);
  return {sum[0] / dn, sum[1] / dn, sum[2] / dn, dn};
}

}  // namespace dryfuse
