#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace dryfuse {

using Rgb = std::array<std::uint8_t, 3>;

// Interleaved 8-bit RGB raster, row-major.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  RgbImage() = default;
  RgbImage(int w, int h, Rgb fill = {0, 0, 0});

  std::uint8_t& at(int x, int y, int c) { return data[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  std::uint8_t at(int x, int y, int c) const { return data[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  void set(int x, int y, Rgb v) {
    for (int c = 0; c < 3; ++c) at(x, y, c) = v[c];
  }
  Rgb get(int x, int y) const { return {at(x, y, 0), at(x, y, 1), at(x, y, 2)}; }
  bool operator==(const RgbImage&) const = default;
};

struct Mask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  Mask() = default;
  Mask(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h, 0) {}

  std::uint8_t& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
  std::size_t count() const;
  bool operator==(const Mask&) const = default;
};

double mask_iou(const Mask& a, const Mask& b);

enum class Stage { raw, calibrated, masked, tensor };

const char* to_string(Stage stage);

inline constexpr int kTensorSize = 224;

class InvalidImage : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// An image at a known pipeline stage. raw/calibrated/masked carry `rgb`;
// the tensor stage carries `tensor` in channel-major order (3 x 224 x 224)
// with values in [0, 1].
struct SliceImage {
  Stage stage = Stage::raw;
  RgbImage rgb;
  std::vector<double> tensor;
  std::optional<Mask> mask;
  std::string sample_id;

  // Throws InvalidImage when the stage invariants do not hold.
  void check() const;
};

RgbImage read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const RgbImage& image);

}  // namespace dryfuse
