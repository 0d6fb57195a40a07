#pragma once

#include <array>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dryfuse/image.hpp"

namespace dryfuse {

// ---------------------------------------------------------------------------
// Colour calibration

// CIE 1931 (x, y) chromaticity of a Planckian radiator at `cct` kelvin.
// Valid for [1667, 25000] K.
std::array<double, 2> planckian_chromaticity(double cct);

// Linear sRGB white point (Y = 1) of the Planckian radiator at `cct`.
std::array<double, 3> white_point_rgb(double cct);

// von Kries channel gains mapping the source white point onto the target
// white point, normalised so the green gain is exactly 1.
std::array<double, 3> illuminant_gains(double source_cct, double target_cct);

struct CalibrationParams {
  double source_cct = 5000.0;
  double target_cct = 6500.0;
};

// raw -> calibrated. Throws DomainError for CCTs outside [2000, 12000] K.
SliceImage calibrate_color(const SliceImage& raw, double source_cct = 5000.0,
                           double target_cct = 6500.0);

// ---------------------------------------------------------------------------
// Segmentation

class SegmentationEmpty : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SegmentationAmbiguous : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Produces disjoint per-object masks for one image. Implementations may
// return zero masks; ordering is not required.
class Segmenter {
 public:
  virtual ~Segmenter() = default;
  virtual std::string name() const = 0;
  virtual std::vector<Mask> segment(const RgbImage& image) const = 0;
};

struct ThresholdSegmenterParams {
  // Euclidean RGB distance from the background colour above which a pixel is
  // foreground.
  double threshold = 40.0;
  int closing_radius = 1;
  std::size_t min_area = 400;
  // Enclosed background regions up to this size are filled (sensor speckle).
  std::size_t max_speckle_area = 64;
  // Also fill the coring hole, giving solid disks instead of annuli.
  bool fill_core_hole = false;
  // Background colour; estimated from the image border when unset.
  std::optional<Rgb> background;
};

// Background distance threshold -> closing -> connected components -> area
// filter -> hole filling.
class ThresholdSegmenter final : public Segmenter {
 public:
  ThresholdSegmenter() = default;
  explicit ThresholdSegmenter(ThresholdSegmenterParams params) : params_(params) {}

  std::string name() const override { return "threshold"; }
  std::vector<Mask> segment(const RgbImage& image) const override;
  const ThresholdSegmenterParams& params() const { return params_; }

 private:
  ThresholdSegmenterParams params_;
};

// Median of the one-pixel border, per channel.
Rgb estimate_background(const RgbImage& image);

// calibrated -> one masked image per slice, ordered left to right by centroid.
// Throws SegmentationEmpty when nothing survives the segmenter and
// SegmentationAmbiguous when more than `expected_count` slices are found.
std::vector<SliceImage> segment_slices(const SliceImage& calibrated, const Segmenter& segmenter,
                                       int expected_count = 1);

// ---------------------------------------------------------------------------
// Model inputs

// masked -> 224x224x3 tensor in [0, 1]; crop to the mask bounding box, pad to a
// square with the background colour, bilinear resize, zero non-mask pixels.
SliceImage to_model_tensor(const SliceImage& masked);

struct SimpleImageFeatures {
  double mean_r = 0.0;
  double mean_g = 0.0;
  double mean_b = 0.0;
  double area = 0.0;  // mask pixel count

  double luminance() const { return 0.299 * mean_r + 0.587 * mean_g + 0.114 * mean_b; }
};

SimpleImageFeatures extract_simple_features(const SliceImage& masked);

}  // namespace dryfuse
