#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lail::detail {

std::string base64_encode(std::span<const unsigned char> bytes);
/// Throws DataError on characters outside the standard alphabet or bad padding.
std::vector<unsigned char> base64_decode(std::string_view text);

/// Little-endian IEEE-754 packing of doubles.
std::string encode_doubles(std::span<const double> values);
std::vector<double> decode_doubles(std::string_view base64);

}  // namespace lail::detail
