#include "vbackcheck/image.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include "vbackcheck/errors.hpp"

namespace vbackcheck {

namespace {

// Reads one whitespace-delimited header integer, skipping '#' comments.
int read_header_int(std::string_view bytes, std::size_t& pos) {
  while (pos < bytes.size()) {
    const char c = bytes[pos];
    if (c == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else if (std::isspace(static_cast<unsigned char>(c))) {
      ++pos;
    } else {
      break;
    }
  }
  long value = 0;
  std::size_t digits = 0;
  while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
    value = value * 10 + (bytes[pos] - '0');
    if (value > (1 << 20)) throw FormatError("pnm header value too large");
    ++pos;
    ++digits;
  }
  if (digits == 0) throw FormatError("malformed pnm header");
  return static_cast<int>(value);
}

}  // namespace

Image decode_pnm(std::string_view bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    throw FormatError("not a binary PGM/PPM image");
  }
  Image img;
  img.channels = bytes[1] == '5' ? 1 : 3;
  std::size_t pos = 2;
  img.width = read_header_int(bytes, pos);
  img.height = read_header_int(bytes, pos);
  const int maxval = read_header_int(bytes, pos);
  if (img.width < 1 || img.height < 1) throw FormatError("pnm dimensions must be positive");
  if (maxval != 255) throw FormatError("only maxval 255 is supported");
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    throw FormatError("malformed pnm header");
  }
  ++pos;
  const std::size_t n = static_cast<std::size_t>(img.width) * img.height * img.channels;
  if (bytes.size() - pos < n) throw FormatError("truncated pnm pixel data");
  img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                    bytes.begin() + static_cast<std::ptrdiff_t>(pos + n));
  return img;
}

std::string encode_pnm(const Image& image) {
  std::string out = (image.channels == 1 ? "P5\n" : "P6\n") + std::to_string(image.width) + " " +
                    std::to_string(image.height) + "\n255\n";
  out.append(image.pixels.begin(), image.pixels.end());
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Image load_image(const std::filesystem::path& path) { return decode_pnm(read_file(path)); }

FgBgImages split_foreground(const Image& image, const BinaryMask& mask) {
  if (mask.height() != image.height || mask.width() != image.width) {
    throw ShapeError("mask does not match image dimensions");
  }
  FgBgImages out{image, image};
  const auto bits = mask.bits();
  const auto ch = static_cast<std::size_t>(image.channels);
  for (std::size_t p = 0; p < bits.size(); ++p) {
    auto& zeroed = bits[p] ? out.bg.pixels : out.fg.pixels;
    for (std::size_t c = 0; c < ch; ++c) zeroed[p * ch + c] = 0;
  }
  return out;
}

}  // namespace vbackcheck
