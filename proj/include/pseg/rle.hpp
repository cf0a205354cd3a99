#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace pseg {

/// H x W mask over {0,1}, stored row-major and addressed (row, col).
class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(int width, int height);
  /// Values must be 0 or 1; throws std::invalid_argument otherwise.
  BinaryMask(int width, int height, std::vector<std::uint8_t> pixels);

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return pixels_.size(); }

  std::uint8_t at(int row, int col) const { return pixels_[index(row, col)]; }
  void set(int row, int col, bool on) { pixels_[index(row, col)] = on ? 1 : 0; }
  const std::vector<std::uint8_t>& pixels() const { return pixels_; }

  std::int64_t count() const;
  bool empty() const { return count() == 0; }

  bool operator==(const BinaryMask&) const = default;

 private:
  std::size_t index(int row, int col) const {
    return static_cast<std::size_t>(row) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(col);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> pixels_;
};

namespace rle {

// Text format: "-1" for an empty mask, otherwise space-separated
// "start length" pairs. Starts are 1-based linear indices in column-major
// order: p -> col = (p-1) / height, row = (p-1) % height.
inline constexpr std::string_view kEmpty = "-1";

struct Run {
  std::int64_t start;   // 1-based
  std::int64_t length;  // >= 1
  bool operator==(const Run&) const = default;
};

class RleError : public std::invalid_argument {
 public:
  enum class Kind { empty_input, non_integer, non_positive, odd_count, out_of_bounds, overlap };
  RleError(Kind kind, std::size_t token, const std::string& msg);
  Kind kind() const { return kind_; }
  /// 1-based index of the offending token (0 when not token-specific).
  std::size_t token() const { return token_; }

 private:
  Kind kind_;
  std::size_t token_;
};

/// Parses and validates runs for a width x height mask. Accepts any
/// whitespace between tokens.
std::vector<Run> parse(std::string_view text, int width, int height);

BinaryMask decode(std::string_view text, int width, int height);

/// Canonical form: maximal runs in increasing order, single spaces, "-1"
/// when empty.
std::string encode(const BinaryMask& mask);

std::string canonicalize(std::string_view text, int width, int height);

}  // namespace rle
}  // namespace pseg
