#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "pseg/rle.hpp"

namespace pseg::imaging {

/// Raw 8-bit grayscale raster as stored on disk.
struct Gray8 {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // row-major
};

/// Grayscale image with pixels in [0,1], row-major.
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<float> pixels;

  GrayImage() = default;
  GrayImage(int w, int h, float fill = 0.0f);
  GrayImage(int w, int h, std::vector<float> px);
  float at(int row, int col) const { return pixels[static_cast<std::size_t>(row) * width + col]; }
  float& at(int row, int col) { return pixels[static_cast<std::size_t>(row) * width + col]; }
};

/// Per-pixel foreground probability in (0,1) as produced by the model head.
struct ProbabilityMap {
  int width = 0;
  int height = 0;
  std::vector<float> values;
  float at(int row, int col) const { return values[static_cast<std::size_t>(row) * width + col]; }
};

struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // r,g,b interleaved, row-major
};

class ImageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// PNG is the single raster container used for files and the HTTP API.

/// Decodes any PNG to 8-bit gray. Throws ImageError with the decoder's reason.
Gray8 decode_png(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_png(const Gray8& img);
std::vector<std::uint8_t> encode_png(const RgbImage& img);
Gray8 decode_png_file(const std::string& path);

/// True when the bytes fail to parse as an image, the dimensions are zero,
/// or the pixel payload is short.
bool detect_corrupt(std::span<const std::uint8_t> bytes);

GrayImage normalize01(const Gray8& raw);
/// Rounds [0,1] pixels to 8-bit levels.
Gray8 to_gray8(const GrayImage& img);
Gray8 to_gray8(const ProbabilityMap& p);
Gray8 to_gray8(const BinaryMask& m);  // 0 / 255
BinaryMask mask_from_gray8(const Gray8& img);  // nonzero -> 1

/// Corner-aligned bilinear interpolation.
GrayImage resize_bilinear(const GrayImage& img, int out_w, int out_h);
BinaryMask resize_nearest(const BinaryMask& mask, int out_w, int out_h);

/// Fraction of pixels at or below each 8-bit level.
std::vector<double> cumulative_histogram(const GrayImage& img);
/// Global histogram equalization: level v maps to
/// (cdf(v) - cdf_min) / (1 - cdf_min). Single-level images are returned as-is.
GrayImage equalize_hist(const GrayImage& img);

struct CropWindow {
  int x0 = 0;
  int y0 = 0;
  int width = 0;
  int height = 0;
};

/// Square-fraction crop window: side fraction uniform in [min_frac, 1],
/// offset uniform over the valid positions.
CropWindow sample_crop_window(std::mt19937_64& rng, int width, int height, float min_frac);
GrayImage crop(const GrayImage& img, const CropWindow& w);
BinaryMask crop(const BinaryMask& mask, const CropWindow& w);

/// Crops image and mask with one sampled window and resizes both back to
/// their original dims (bilinear / nearest).
std::pair<GrayImage, BinaryMask> random_crop_resize(const GrayImage& img, const BinaryMask& mask,
                                                    std::mt19937_64& rng, float min_frac);

inline constexpr float kDefaultTheta = 0.5f;
inline constexpr int kDefaultMinArea = 32;
inline constexpr float kDefaultOverlayAlpha = 0.4f;

/// pixel = 1 iff p >= theta.
BinaryMask binarize(const ProbabilityMap& p, float theta);
/// Zeroes 4-connected components with fewer than min_area pixels.
BinaryMask remove_small_components(const BinaryMask& mask, int min_area);

/// Background keeps the gray level; masked pixels blend toward red:
/// (1-alpha)*gray + alpha*(255,0,0).
RgbImage overlay(const GrayImage& img, const BinaryMask& mask, float alpha = kDefaultOverlayAlpha);

}  // namespace pseg::imaging
