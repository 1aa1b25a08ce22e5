#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "json.hpp"

namespace vbackcheck {

/// Row-major boolean grid. Dimensions are fixed at construction.
class BinaryMask {
 public:
  /// All-zero mask. Throws ShapeError unless both dimensions are >= 1.
  BinaryMask(int height, int width);
  /// Throws ShapeError when `bits.size() != height * width`.
  BinaryMask(int height, int width, std::vector<std::uint8_t> bits);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  std::size_t size() const noexcept { return bits_.size(); }

  bool at(int row, int col) const { return bits_[index(row, col)] != 0; }
  void set(int row, int col, bool value = true) { bits_[index(row, col)] = value ? 1 : 0; }

  /// Each entry is 0 or 1.
  std::span<const std::uint8_t> bits() const noexcept { return bits_; }
  std::size_t count() const noexcept;

  bool same_shape(const BinaryMask& other) const noexcept {
    return height_ == other.height_ && width_ == other.width_;
  }

  bool operator==(const BinaryMask&) const = default;

 private:
  std::size_t index(int row, int col) const {
    return static_cast<std::size_t>(row) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(col);
  }

  int height_;
  int width_;
  std::vector<std::uint8_t> bits_;
};

/// Uncompressed row-major run-length encoding. `counts[0]` is always the
/// length of the leading zero run (possibly 0); runs then alternate.
struct RleMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint64_t> counts;

  /// Throws FormatError on a count-sum mismatch or a non-leading empty run.
  void validate() const;

  bool operator==(const RleMask&) const = default;
};

RleMask rle_encode(const BinaryMask& mask);
BinaryMask rle_decode(const RleMask& rle);

/// `{"size":[H,W],"counts":[...]}`
nlohmann::ordered_json rle_to_json(const RleMask& rle);
/// Parses and validates; throws FormatError.
RleMask rle_from_json(const nlohmann::json& j);

struct Overlap {
  std::uint64_t intersection = 0;
  std::uint64_t union_size = 0;
};

/// Throws ShapeError on dimension mismatch.
Overlap mask_overlap(const BinaryMask& a, const BinaryMask& b);

/// |a ∩ b| / |a ∪ b|, with two empty masks scoring 1.0.
double mask_iou(const BinaryMask& a, const BinaryMask& b);

struct BBox {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;

  /// Throws FormatError unless w > 0 and h > 0.
  void validate() const;
  /// Throws FormatError when the box leaves a height x width image.
  void validate_within(int height, int width) const;

  bool operator==(const BBox&) const = default;
};

}  // namespace vbackcheck
