#include "dryfuse/image.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>

namespace dryfuse {

RgbImage::RgbImage(int w, int h, Rgb fill) : width(w), height(h) {
  if (w <= 0 || h <= 0) throw InvalidImage("image dimensions must be positive");
  data.resize(static_cast<std::size_t>(w) * h * 3);
  for (std::size_t i = 0; i < data.size(); i += 3) {
    data[i] = fill[0];
    data[i + 1] = fill[1];
    data[i + 2] = fill[2];
  }
}

std::size_t Mask::count() const {
  std::size_t n = 0;
  for (auto v : data) n += v ? 1 : 0;
  return n;
}

double mask_iou(const Mask& a, const Mask& b) {
  if (a.width != b.width || a.height != b.height) throw InvalidImage("mask shapes differ");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    inter += (a.data[i] && b.data[i]) ? 1 : 0;
    uni += (a.data[i] || b.data[i]) ? 1 : 0;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

const char* to_string(Stage stage) {
  switch (stage) {
    case Stage::raw: return "raw";
    case Stage::calibrated: return "calibrated";
    case Stage::masked: return "masked";
    case Stage::tensor: return "tensor";
  }
  return "unknown";
}

void SliceImage::check() const {
  if (stage == Stage::tensor) {
    if (tensor.size() != static_cast<std::size_t>(3) * kTensorSize * kTensorSize) {
      throw InvalidImage("tensor stage requires shape 224x224x3");
    }
    for (double v : tensor) {
      if (!(v >= 0.0 && v <= 1.0)) throw InvalidImage("tensor values must lie in [0, 1]");
    }
    return;
  }
  if (rgb.width <= 0 || rgb.height <= 0 ||
      rgb.data.size() != static_cast<std::size_t>(rgb.width) * rgb.height * 3) {
    throw InvalidImage("malformed RGB raster");
  }
  if (stage == Stage::masked) {
    if (!mask) throw InvalidImage("masked stage requires a mask");
    if (mask->width != rgb.width || mask->height != rgb.height) {
      throw InvalidImage("mask shape differs from image shape");
    }
    const double total = static_cast<double>(rgb.width) * rgb.height;
    if (static_cast<double>(mask->count()) < 0.001 * total) {
      throw InvalidImage("mask covers less than 0.1% of pixels");
    }
  }
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

RgbImage read_png(const std::filesystem::path& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw std::runtime_error("cannot open image " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("libpng initialisation failed");
  }
  RgbImage image;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("cannot decode PNG " + path.string());
  }
  png_init_io(png, file.get());
  png_read_info(png, info);
  const int width = static_cast<int>(png_get_image_width(png, info));
  const int height = static_cast<int>(png_get_image_height(png, info));
  const int color_type = png_get_color_type(png, info);
  if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA) {
    png_set_gray_to_rgb(png);
  }
  if (png_get_bit_depth(png, info) < 8) png_set_packing(png);
  if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  image = RgbImage(width, height);
  rows.resize(height);
  for (int y = 0; y < height; ++y) rows[y] = image.data.data() + static_cast<std::size_t>(y) * width * 3;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return image;
}

void write_png(const std::filesystem::path& path, const RgbImage& image) {
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw std::runtime_error("cannot write image " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("libpng initialisation failed");
  }
  std::vector<png_bytep> rows(image.height);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("cannot encode PNG " + path.string());
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, image.width, image.height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_set_compression_level(png, 6);
  png_write_info(png, info);
  for (int y = 0; y < image.height; ++y) {
    rows[y] = const_cast<png_bytep>(image.data.data() + static_cast<std::size_t>(y) * image.width * 3);
  }
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace dryfuse
