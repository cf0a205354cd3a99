#include "pseg/rle.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <numeric>

namespace pseg {

BinaryMask::BinaryMask(int width, int height)
    : BinaryMask(width, height,
                 std::vector<std::uint8_t>(static_cast<std::size_t>(std::max(width, 0)) *
                                           static_cast<std::size_t>(std::max(height, 0)))) {}

BinaryMask::BinaryMask(int width, int height, std::vector<std::uint8_t> pixels)
    : width_(width), height_(height), pixels_(std::move(pixels)) {
  if (width <= 0 || height <= 0)
    throw std::invalid_argument("mask dimensions must be positive, got " +
                                std::to_string(width) + "x" + std::to_string(height));
  if (pixels_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height))
    throw std::invalid_argument("mask pixel count does not match " + std::to_string(width) +
                                "x" + std::to_string(height));
  if (std::any_of(pixels_.begin(), pixels_.end(), [](std::uint8_t v) { return v > 1; }))
    throw std::invalid_argument("mask values must be 0 or 1");
}

std::int64_t BinaryMask::count() const {
  return std::accumulate(pixels_.begin(), pixels_.end(), std::int64_t{0});
}

namespace rle {

RleError::RleError(Kind kind, std::size_t token, const std::string& msg)
    : std::invalid_argument(msg), kind_(kind), token_(token) {}

namespace {

std::vector<std::string_view> tokenize(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    const std::size_t start = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i > start) out.push_back(text.substr(start, i - start));
  }
  return out;
}

std::string at_token(std::size_t pos, std::string_view tok) {
  return " (token " + std::to_string(pos) + ": '" + std::string(tok) + "')";
}

}  // namespace

std::vector<Run> parse(std::string_view text, int width, int height) {
  using Kind = RleError::Kind;
  const auto tokens = tokenize(text);
  if (tokens.empty()) throw RleError(Kind::empty_input, 0, "rle: empty string");
  if (tokens.size() == 1 && tokens[0] == kEmpty) return {};
  if (tokens.size() % 2 != 0)
    throw RleError(Kind::odd_count, tokens.size(),
                   "rle: odd number of tokens (" + std::to_string(tokens.size()) + ")");

  const std::int64_t total = static_cast<std::int64_t>(width) * height;
  std::vector<std::int64_t> nums(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto tok = tokens[i];
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), nums[i]);
    if (ec != std::errc() || ptr != tok.data() + tok.size())
      throw RleError(Kind::non_integer, i + 1, "rle: not an integer" + at_token(i + 1, tok));
    if (nums[i] <= 0)
      throw RleError(Kind::non_positive, i + 1,
                     "rle: starts and lengths must be positive" + at_token(i + 1, tok));
  }

  std::vector<Run> runs;
  runs.reserve(nums.size() / 2);
  std::int64_t prev_end = 0;  // last covered index, 1-based
  for (std::size_t i = 0; i < nums.size(); i += 2) {
    const Run r{nums[i], nums[i + 1]};
    if (r.start > total || r.length > total - r.start + 1)
      throw RleError(Kind::out_of_bounds, i + 1,
                     "rle: run " + std::to_string(r.start) + "+" + std::to_string(r.length) +
                         " exceeds " + std::to_string(total) + " pixels" +
                         at_token(i + 1, tokens[i]));
    if (r.start <= prev_end)
      throw RleError(Kind::overlap, i + 1,
                     "rle: run starting at " + std::to_string(r.start) +
                         " overlaps or precedes the previous run" + at_token(i + 1, tokens[i]));
    prev_end = r.start + r.length - 1;
    runs.push_back(r);
  }
  return runs;
}

BinaryMask decode(std::string_view text, int width, int height) {
  BinaryMask mask(width, height);
  for (const auto& r : parse(text, width, height))
    for (std::int64_t p = r.start - 1; p < r.start - 1 + r.length; ++p)
      mask.set(static_cast<int>(p % height), static_cast<int>(p / height), true);
  return mask;
}

std::string encode(const BinaryMask& mask) {
  std::string out;
  const int w = mask.width(), h = mask.height();
  std::int64_t run_start = 0, run_len = 0;
  auto flush = [&] {
    if (run_len == 0) return;
    if (!out.empty()) out += ' ';
    out += std::to_string(run_start);
    out += ' ';
    out += std::to_string(run_len);
    run_len = 0;
  };
  std::int64_t p = 1;
  for (int col = 0; col < w; ++col)
    for (int row = 0; row < h; ++row, ++p) {
      if (mask.at(row, col)) {
        if (run_len == 0) run_start = p;
        ++run_len;
      } else {
        flush();
      }
    }
  flush();
  return out.empty() ? std::string(kEmpty) : out;
}

std::string canonicalize(std::string_view text, int width, int height) {
  return encode(decode(text, width, height));
}

}  // namespace rle
}  // namespace pseg
