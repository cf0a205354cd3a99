#include <png.h>

#include <cstring>

#include "pseg/imaging.hpp"
#include "pseg/io.hpp"

namespace pseg::imaging {

namespace {

// png_image owns decoder state until finish/free.
struct PngImage {
  png_image img;
  PngImage() {
    std::memset(&img, 0, sizeof img);
    img.version = PNG_IMAGE_VERSION;
  }
  ~PngImage() { png_image_free(&img); }
  PngImage(const PngImage&) = delete;
  PngImage& operator=(const PngImage&) = delete;
};

std::vector<std::uint8_t> write_png(int width, int height, png_uint_32 format,
                                    const std::uint8_t* pixels) {
  if (width <= 0 || height <= 0) throw ImageError("cannot encode an empty image");
  PngImage p;
  p.img.width = static_cast<png_uint_32>(width);
  p.img.height = static_cast<png_uint_32>(height);
  p.img.format = format;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&p.img, nullptr, &size, 0, pixels, 0, nullptr))
    throw ImageError(std::string("png encode failed: ") + p.img.message);
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&p.img, out.data(), &size, 0, pixels, 0, nullptr))
    throw ImageError(std::string("png encode failed: ") + p.img.message);
  out.resize(size);
  return out;
}

}  // namespace

Gray8 decode_png(std::span<const std::uint8_t> bytes) {
  if (bytes.empty()) throw ImageError("empty image data");
  PngImage p;
  if (!png_image_begin_read_from_memory(&p.img, bytes.data(), bytes.size()))
    throw ImageError(std::string("not a readable PNG: ") + p.img.message);
  if (p.img.width == 0 || p.img.height == 0) throw ImageError("image has zero dimensions");
  p.img.format = PNG_FORMAT_GRAY;
  Gray8 out;
  out.width = static_cast<int>(p.img.width);
  out.height = static_cast<int>(p.img.height);
  out.pixels.resize(PNG_IMAGE_SIZE(p.img));
  if (!png_image_finish_read(&p.img, nullptr, out.pixels.data(), 0, nullptr))
    throw ImageError(std::string("corrupt PNG payload: ") + p.img.message);
  if (out.pixels.size() != static_cast<std::size_t>(out.width) * out.height)
    throw ImageError("decoded pixel buffer length mismatch");
  return out;
}

std::vector<std::uint8_t> encode_png(const Gray8& img) {
  if (img.pixels.size() != static_cast<std::size_t>(img.width) * img.height)
    throw ImageError("gray image buffer does not match its dimensions");
  return write_png(img.width, img.height, PNG_FORMAT_GRAY, img.pixels.data());
}

std::vector<std::uint8_t> encode_png(const RgbImage& img) {
  if (img.pixels.size() != static_cast<std::size_t>(img.width) * img.height * 3)
    throw ImageError("rgb image buffer does not match its dimensions");
  return write_png(img.width, img.height, PNG_FORMAT_RGB, img.pixels.data());
}

Gray8 decode_png_file(const std::string& path) {
  const auto bytes = io::read_file(path);
  try {
    return decode_png(bytes);
  } catch (const ImageError& e) {
    throw ImageError(path + ": " + e.what());
  }
}

bool detect_corrupt(std::span<const std::uint8_t> bytes) {
  try {
    decode_png(bytes);
    return false;
  } catch (const ImageError&) {
    return true;
  }
}

}  // namespace pseg::imaging
