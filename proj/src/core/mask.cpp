#include "vbackcheck/mask.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "vbackcheck/errors.hpp"

namespace vbackcheck {

namespace {

void check_dims(int height, int width) {
  if (height < 1 || width < 1) {
    throw ShapeError("mask dimensions must be >= 1, got " + std::to_string(height) + "x" +
                     std::to_string(width));
  }
}

std::uint64_t area(int height, int width) {
  return static_cast<std::uint64_t>(height) * static_cast<std::uint64_t>(width);
}

}  // namespace

BinaryMask::BinaryMask(int height, int width) : height_(height), width_(width) {
  check_dims(height, width);
  bits_.assign(area(height, width), 0);
}

BinaryMask::BinaryMask(int height, int width, std::vector<std::uint8_t> bits)
    : height_(height), width_(width), bits_(std::move(bits)) {
  check_dims(height, width);
  if (bits_.size() != area(height, width)) {
    throw ShapeError("mask has " + std::to_string(bits_.size()) + " bits, expected " +
                     std::to_string(area(height, width)));
  }
  for (auto& b : bits_) b = b ? 1 : 0;
}

std::size_t BinaryMask::count() const noexcept {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

void RleMask::validate() const {
  if (height < 1 || width < 1) throw FormatError("rle size must be >= 1 in both dimensions");
  if (counts.empty()) throw FormatError("rle counts must not be empty");
  for (std::size_t i = 1; i < counts.size(); ++i) {
    if (counts[i] == 0) {
      throw FormatError("rle run " + std::to_string(i) + " is empty; only the leading run may be 0");
    }
  }
  const std::uint64_t total = std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
  if (total != area(height, width)) {
    throw FormatError("rle counts sum to " + std::to_string(total) + ", expected " +
                      std::to_string(area(height, width)));
  }
}

RleMask rle_encode(const BinaryMask& mask) {
  RleMask rle{mask.height(), mask.width(), {}};
  std::uint8_t current = 0;
  std::uint64_t run = 0;
  for (std::uint8_t b : mask.bits()) {
    if (b != current) {
      rle.counts.push_back(run);
      current = b;
      run = 0;
    }
    ++run;
  }
  rle.counts.push_back(run);
  return rle;
}

BinaryMask rle_decode(const RleMask& rle) {
  rle.validate();
  std::vector<std::uint8_t> bits;
  bits.reserve(area(rle.height, rle.width));
  std::uint8_t value = 0;
  for (std::uint64_t c : rle.counts) {
    bits.insert(bits.end(), c, value);
    value ^= 1;
  }
  return BinaryMask(rle.height, rle.width, std::move(bits));
}

nlohmann::ordered_json rle_to_json(const RleMask& rle) {
  nlohmann::ordered_json j;
  j["size"] = {rle.height, rle.width};
  j["counts"] = rle.counts;
  return j;
}

RleMask rle_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw FormatError("rle must be an object");
  const auto size = j.find("size");
  const auto counts = j.find("counts");
  if (size == j.end() || !size->is_array() || size->size() != 2 ||
      !(*size)[0].is_number_integer() || !(*size)[1].is_number_integer()) {
    throw FormatError("rle \"size\" must be [height, width]");
  }
  if (counts == j.end() || !counts->is_array()) throw FormatError("rle \"counts\" must be an array");

  RleMask rle;
  const auto h = (*size)[0].get<std::int64_t>();
  const auto w = (*size)[1].get<std::int64_t>();
  if (h < 1 || w < 1 || h > (1 << 20) || w > (1 << 20)) throw FormatError("rle size out of range");
  rle.height = static_cast<int>(h);
  rle.width = static_cast<int>(w);
  rle.counts.reserve(counts->size());
  for (const auto& c : *counts) {
    if (!c.is_number_integer() || c.get<std::int64_t>() < 0) {
      throw FormatError("rle counts must be non-negative integers");
    }
    rle.counts.push_back(c.get<std::uint64_t>());
  }
  rle.validate();
  return rle;
}

Overlap mask_overlap(const BinaryMask& a, const BinaryMask& b) {
  if (!a.same_shape(b)) {
    throw ShapeError("mask shapes differ: " + std::to_string(a.height()) + "x" +
                     std::to_string(a.width()) + " vs " + std::to_string(b.height()) + "x" +
                     std::to_string(b.width()));
  }
  Overlap o;
  const auto pa = a.bits();
  const auto pb = b.bits();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    o.intersection += pa[i] & pb[i];
    o.union_size += pa[i] | pb[i];
  }
  return o;
}

double mask_iou(const BinaryMask& a, const BinaryMask& b) {
  const Overlap o = mask_overlap(a, b);
  if (o.union_size == 0) return 1.0;
  return static_cast<double>(o.intersection) / static_cast<double>(o.union_size);
}

void BBox::validate() const {
  if (w <= 0 || h <= 0) throw FormatError("bbox extents must be positive");
}

void BBox::validate_within(int height, int width) const {
  validate();
  if (x < 0 || y < 0 || static_cast<std::int64_t>(x) + w > width ||
      static_cast<std::int64_t>(y) + h > height) {
    throw FormatError("bbox [" + std::to_string(x) + "," + std::to_string(y) + "," +
                      std::to_string(w) + "," + std::to_string(h) + "] exceeds " +
                      std::to_string(height) + "x" + std::to_string(width) + " image");
  }
}

}  // namespace vbackcheck
