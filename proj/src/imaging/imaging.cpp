#include <algorithm>
#include <array>
#include <cmath>
#include <deque>

#include "pseg/imaging.hpp"

namespace pseg::imaging {

GrayImage::GrayImage(int w, int h, float fill)
    : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}

GrayImage::GrayImage(int w, int h, std::vector<float> px)
    : width(w), height(h), pixels(std::move(px)) {
  if (pixels.size() != static_cast<std::size_t>(w) * h)
    throw ImageError("gray image buffer does not match " + std::to_string(w) + "x" +
                     std::to_string(h));
}

namespace {

std::uint8_t to_level(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

}  // namespace

GrayImage normalize01(const Gray8& raw) {
  GrayImage out(raw.width, raw.height);
  for (std::size_t i = 0; i < raw.pixels.size(); ++i)
    out.pixels[i] = static_cast<float>(raw.pixels[i]) / 255.0f;
  return out;
}

Gray8 to_gray8(const GrayImage& img) {
  Gray8 out{img.width, img.height, std::vector<std::uint8_t>(img.pixels.size())};
  std::transform(img.pixels.begin(), img.pixels.end(), out.pixels.begin(), to_level);
  return out;
}

Gray8 to_gray8(const ProbabilityMap& p) {
  Gray8 out{p.width, p.height, std::vector<std::uint8_t>(p.values.size())};
  std::transform(p.values.begin(), p.values.end(), out.pixels.begin(), to_level);
  return out;
}

Gray8 to_gray8(const BinaryMask& m) {
  Gray8 out{m.width(), m.height(), std::vector<std::uint8_t>(m.size())};
  std::transform(m.pixels().begin(), m.pixels().end(), out.pixels.begin(),
                 [](std::uint8_t v) { return static_cast<std::uint8_t>(v ? 255 : 0); });
  return out;
}

BinaryMask mask_from_gray8(const Gray8& img) {
  std::vector<std::uint8_t> px(img.pixels.size());
  std::transform(img.pixels.begin(), img.pixels.end(), px.begin(),
                 [](std::uint8_t v) { return static_cast<std::uint8_t>(v ? 1 : 0); });
  return BinaryMask(img.width, img.height, std::move(px));
}

GrayImage resize_bilinear(const GrayImage& img, int out_w, int out_h) {
  if (out_w <= 0 || out_h <= 0) throw ImageError("resize: output dims must be positive");
  GrayImage out(out_w, out_h);
  const double sx = out_w > 1 ? static_cast<double>(img.width - 1) / (out_w - 1) : 0.0;
  const double sy = out_h > 1 ? static_cast<double>(img.height - 1) / (out_h - 1) : 0.0;
  for (int y = 0; y < out_h; ++y) {
    const double fy = y * sy;
    const int y0 = std::min(static_cast<int>(fy), img.height - 1);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double ty = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      const double fx = x * sx;
      const int x0 = std::min(static_cast<int>(fx), img.width - 1);
      const int x1 = std::min(x0 + 1, img.width - 1);
      const double tx = fx - x0;
      const double top = img.at(y0, x0) * (1 - tx) + img.at(y0, x1) * tx;
      const double bot = img.at(y1, x0) * (1 - tx) + img.at(y1, x1) * tx;
      out.at(y, x) = std::clamp(static_cast<float>(top * (1 - ty) + bot * ty), 0.0f, 1.0f);
    }
  }
  return out;
}

BinaryMask resize_nearest(const BinaryMask& mask, int out_w, int out_h) {
  if (out_w <= 0 || out_h <= 0) throw ImageError("resize: output dims must be positive");
  BinaryMask out(out_w, out_h);
  for (int y = 0; y < out_h; ++y) {
    const int sy = static_cast<int>(static_cast<std::int64_t>(y) * mask.height() / out_h);
    for (int x = 0; x < out_w; ++x) {
      const int sx = static_cast<int>(static_cast<std::int64_t>(x) * mask.width() / out_w);
      out.set(y, x, mask.at(sy, sx));
    }
  }
  return out;
}

std::vector<double> cumulative_histogram(const GrayImage& img) {
  std::array<std::int64_t, 256> hist{};
  for (float v : img.pixels) ++hist[to_level(v)];
  std::vector<double> cdf(256);
  std::int64_t running = 0;
  const double n = static_cast<double>(std::max<std::size_t>(img.pixels.size(), 1));
  for (int v = 0; v < 256; ++v) {
    running += hist[v];
    cdf[v] = static_cast<double>(running) / n;
  }
  return cdf;
}

GrayImage equalize_hist(const GrayImage& img) {
  if (img.pixels.empty()) return img;
  const auto cdf = cumulative_histogram(img);
  const double cdf_min = *std::find_if(cdf.begin(), cdf.end(), [](double c) { return c > 0.0; });
  if (cdf_min >= 1.0) return img;
  std::array<float, 256> lut{};
  for (int v = 0; v < 256; ++v)
    lut[v] = static_cast<float>(std::max(0.0, (cdf[v] - cdf_min) / (1.0 - cdf_min)));
  GrayImage out(img.width, img.height);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) out.pixels[i] = lut[to_level(img.pixels[i])];
  return out;
}

CropWindow sample_crop_window(std::mt19937_64& rng, int width, int height, float min_frac) {
  if (!(min_frac > 0.0f && min_frac <= 1.0f))
    throw std::invalid_argument("random crop: min_frac must lie in (0, 1]");
  std::uniform_real_distribution<float> frac_dist(min_frac, 1.0f);
  const float frac = min_frac >= 1.0f ? 1.0f : frac_dist(rng);
  CropWindow w;
  w.width = std::clamp(static_cast<int>(std::lround(frac * width)), 1, width);
  w.height = std::clamp(static_cast<int>(std::lround(frac * height)), 1, height);
  w.x0 = std::uniform_int_distribution<int>(0, width - w.width)(rng);
  w.y0 = std::uniform_int_distribution<int>(0, height - w.height)(rng);
  return w;
}

GrayImage crop(const GrayImage& img, const CropWindow& w) {
  GrayImage out(w.width, w.height);
  for (int y = 0; y < w.height; ++y)
    for (int x = 0; x < w.width; ++x) out.at(y, x) = img.at(w.y0 + y, w.x0 + x);
  return out;
}

BinaryMask crop(const BinaryMask& mask, const CropWindow& w) {
  BinaryMask out(w.width, w.height);
  for (int y = 0; y < w.height; ++y)
    for (int x = 0; x < w.width; ++x) out.set(y, x, mask.at(w.y0 + y, w.x0 + x));
  return out;
}

std::pair<GrayImage, BinaryMask> random_crop_resize(const GrayImage& img, const BinaryMask& mask,
                                                    std::mt19937_64& rng, float min_frac) {
  if (img.width != mask.width() || img.height != mask.height())
    throw ImageError("random crop: image and mask dims differ");
  const auto w = sample_crop_window(rng, img.width, img.height, min_frac);
  return {resize_bilinear(crop(img, w), img.width, img.height),
          resize_nearest(crop(mask, w), mask.width(), mask.height())};
}

BinaryMask binarize(const ProbabilityMap& p, float theta) {
  if (!(theta > 0.0f && theta < 1.0f))
    throw std::invalid_argument("binarize: theta must lie in (0,1)");
  std::vector<std::uint8_t> px(p.values.size());
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = p.values[i] >= theta ? 1 : 0;
  return BinaryMask(p.width, p.height, std::move(px));
}

BinaryMask remove_small_components(const BinaryMask& mask, int min_area) {
  if (min_area < 0) throw std::invalid_argument("min_area must be >= 0");
  if (min_area <= 1) return mask;
  const int w = mask.width(), h = mask.height();
  auto px = mask.pixels();
  std::vector<char> seen(px.size(), 0);
  std::vector<std::size_t> component;
  std::deque<std::size_t> queue;
  for (std::size_t start = 0; start < px.size(); ++start) {
    if (!px[start] || seen[start]) continue;
    component.clear();
    queue.push_back(start);
    seen[start] = 1;
    while (!queue.empty()) {
      const auto i = queue.front();
      queue.pop_front();
      component.push_back(i);
      const int r = static_cast<int>(i / w), c = static_cast<int>(i % w);
      const std::array<std::pair<int, int>, 4> nbrs{{{r - 1, c}, {r + 1, c}, {r, c - 1}, {r, c + 1}}};
      for (auto [nr, nc] : nbrs) {
        if (nr < 0 || nr >= h || nc < 0 || nc >= w) continue;
        const auto j = static_cast<std::size_t>(nr) * w + nc;
        if (px[j] && !seen[j]) {
          seen[j] = 1;
          queue.push_back(j);
        }
      }
    }
    if (component.size() < static_cast<std::size_t>(min_area))
      for (auto i : component) px[i] = 0;
  }
  return BinaryMask(w, h, std::move(px));
}

RgbImage overlay(const GrayImage& img, const BinaryMask& mask, float alpha) {
  if (img.width != mask.width() || img.height != mask.height())
    throw ImageError("overlay: image " + std::to_string(img.width) + "x" +
                     std::to_string(img.height) + " and mask " + std::to_string(mask.width()) +
                     "x" + std::to_string(mask.height()) + " differ");
  if (!(alpha >= 0.0f && alpha <= 1.0f))
    throw std::invalid_argument("overlay: alpha must lie in [0,1]");
  RgbImage out{img.width, img.height, std::vector<std::uint8_t>(img.pixels.size() * 3)};
  for (int r = 0; r < img.height; ++r)
    for (int c = 0; c < img.width; ++c) {
      const double g = std::clamp(img.at(r, c), 0.0f, 1.0f) * 255.0;
      auto* o = &out.pixels[(static_cast<std::size_t>(r) * img.width + c) * 3];
      if (mask.at(r, c)) {
        o[0] = static_cast<std::uint8_t>(std::lround((1.0 - alpha) * g + alpha * 255.0));
        o[1] = o[2] = static_cast<std::uint8_t>(std::lround((1.0 - alpha) * g));
      } else {
        o[0] = o[1] = o[2] = static_cast<std::uint8_t>(std::lround(g));
      }
    }
  return out;
}

}  // namespace pseg::imaging
