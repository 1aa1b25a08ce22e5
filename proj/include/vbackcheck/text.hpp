#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace vbackcheck {

/// Splits on '.', '!' or '?' followed by whitespace or end of input.
/// Decimals ("2.5") never split, and "e.g.", "i.e.", "etc." and a few
/// honorifics are not treated as terminators. Units are trimmed and non-empty.
std::vector<std::string> split_sentences(std::string_view response);

std::string_view trim(std::string_view s);

/// Number of whitespace-separated tokens.
std::size_t word_count(std::string_view s);

}  // namespace vbackcheck
