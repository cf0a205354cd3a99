#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pseg::base64 {

/// Standard alphabet with '=' padding.
std::string encode(std::span<const std::uint8_t> bytes);
/// Throws std::invalid_argument on characters outside the alphabet or bad padding.
std::vector<std::uint8_t> decode(std::string_view text);

}  // namespace pseg::base64
