#pragma once

#include <string>
#include <string_view>

namespace vbackcheck {

std::string base64_encode(std::string_view bytes);
/// Throws FormatError on characters outside the standard alphabet.
std::string base64_decode(std::string_view text);

}  // namespace vbackcheck
