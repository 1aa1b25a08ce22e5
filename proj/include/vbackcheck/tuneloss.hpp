#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "vbackcheck/mask.hpp"

namespace vbackcheck::tuneloss {

enum class SpecialMark : std::uint8_t { None, Seg, Rej };

/// Target tokens with per-position special-token flags.
struct TokenSequence {
  std::vector<int> tokens;
  std::vector<SpecialMark> marks;
  /// Positions that receive supervision (the response span). Empty means
  /// every position is supervised.
  std::vector<std::uint8_t> supervised;

  std::size_t size() const noexcept { return tokens.size(); }
  bool has_seg() const;
  bool is_supervised(std::size_t i) const { return supervised.empty() || supervised[i] != 0; }
  /// Throws ShapeError on length mismatches.
  void validate() const;
};

/// Dense row-major matrix of finite reals.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), values_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }
  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  std::span<const double> row(std::size_t r) const { return {values_.data() + r * cols_, cols_}; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

/// Next-token logits: one row per target position, one column per vocab id.
using LogitsMatrix = Matrix;
/// Pre-sigmoid per-pixel mask scores; rows = height, cols = width.
using MaskLogits = Matrix;

struct LossConfig {
  /// Cross-entropy weight at [SEG]/[REJ] positions; must exceed 1.
  double lambda = 2.0;
  double dice_epsilon = 1.0;
  double grounding_weight = 1.0;

  /// Throws ConfigError. `allow_unit_lambda` admits lambda == 1, the
  /// unweighted reduction used as a reference.
  void validate(bool allow_unit_lambda = false) const;
};

struct LossResult {
  double loss = 0.0;
  Matrix grad;
};

/// -sum_i alpha_i log softmax(logits_i)[t_i] over supervised positions,
/// alpha_i = lambda at special positions and 1 elsewhere. lambda == 1 is
/// accepted here so the unweighted loss stays available.
LossResult weighted_ce(const LogitsMatrix& logits, const TokenSequence& target,
                       const LossConfig& cfg);

/// Mean per-pixel binary cross-entropy on logits, in the stable
/// max(x,0) - x*y + log1p(exp(-|x|)) form.
LossResult bce_loss(const MaskLogits& pred, const BinaryMask& target);

/// 1 - (2 sum(p*y) + eps) / (sum(p) + sum(y) + eps), p = sigmoid(x).
LossResult dice_loss(const MaskLogits& pred, const BinaryMask& target, const LossConfig& cfg);

struct TotalLoss {
  double loss = 0.0;
  double language = 0.0;
  double bce = 0.0;
  double dice = 0.0;
  Matrix logits_grad;
  std::optional<Matrix> mask_grad;
};

/// language + grounding_weight * (bce + dice) for SEG samples; language
/// alone otherwise. Masks must be given iff the target has a SEG mark.
TotalLoss total_loss(const LogitsMatrix& logits, const TokenSequence& target,
                     const MaskLogits* pred_mask, const BinaryMask* target_mask,
                     const LossConfig& cfg);

double sigmoid(double x);
double softplus(double x);

}  // namespace vbackcheck::tuneloss
