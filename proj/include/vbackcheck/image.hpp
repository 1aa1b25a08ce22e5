#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "vbackcheck/mask.hpp"

namespace vbackcheck {

/// 8-bit raster with 1 (gray) or 3 (RGB) interleaved channels.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::uint8_t> pixels;

  bool operator==(const Image&) const = default;
};

/// Decodes binary netpbm (P5 grayscale, P6 RGB, maxval 255).
/// Throws FormatError on anything else.
Image decode_pnm(std::string_view bytes);
std::string encode_pnm(const Image& image);

Image load_image(const std::filesystem::path& path);
std::string read_file(const std::filesystem::path& path);

/// Foreground keeps mask pixels and zeroes the rest; background is the
/// complement. Every pixel is kept in exactly one of the two.
struct FgBgImages {
  Image fg;
  Image bg;
};

/// Throws ShapeError when the mask does not match the image.
FgBgImages split_foreground(const Image& image, const BinaryMask& mask);

}  // namespace vbackcheck
