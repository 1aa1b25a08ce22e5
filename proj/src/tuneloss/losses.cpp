#include <algorithm>
#include <cmath>
#include <string>

#include "vbackcheck/errors.hpp"
#include "vbackcheck/tuneloss.hpp"

namespace vbackcheck::tuneloss {

namespace {

void require_finite(std::span<const double> values, const char* what) {
  for (double v : values) {
    if (!std::isfinite(v)) throw ContractError(std::string(what) + " contains a non-finite value");
  }
}

void require_same_shape(const MaskLogits& pred, const BinaryMask& target) {
  if (pred.rows() != static_cast<std::size_t>(target.height()) ||
      pred.cols() != static_cast<std::size_t>(target.width())) {
    throw ShapeError("mask logits " + std::to_string(pred.rows()) + "x" + std::to_string(pred.cols()) +
                     " vs target " + std::to_string(target.height()) + "x" +
                     std::to_string(target.width()));
  }
  require_finite(pred.values(), "mask logits");
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (values_.size() != rows * cols) throw ShapeError("matrix value count does not match shape");
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

bool TokenSequence::has_seg() const {
  return std::find(marks.begin(), marks.end(), SpecialMark::Seg) != marks.end();
}

void TokenSequence::validate() const {
  if (marks.size() != tokens.size()) throw ShapeError("special marks length differs from tokens");
  if (!supervised.empty() && supervised.size() != tokens.size()) {
    throw ShapeError("supervised span length differs from tokens");
  }
}

void LossConfig::validate(bool allow_unit_lambda) const {
  if (!std::isfinite(lambda) || lambda < 1.0 || (lambda == 1.0 && !allow_unit_lambda)) {
    throw ConfigError("lambda must be > 1");
  }
  if (!(dice_epsilon > 0.0) || !std::isfinite(dice_epsilon)) {
    throw ConfigError("dice_epsilon must be > 0");
  }
  if (!(grounding_weight >= 0.0) || !std::isfinite(grounding_weight)) {
    throw ConfigError("grounding_weight must be >= 0");
  }
}

LossResult weighted_ce(const LogitsMatrix& logits, const TokenSequence& target,
                       const LossConfig& cfg) {
  cfg.validate(true);
  target.validate();
  if (logits.rows() != target.size()) {
    throw ShapeError("logits have " + std::to_string(logits.rows()) + " rows for " +
                     std::to_string(target.size()) + " target tokens");
  }
  if (logits.rows() < 1 || logits.cols() < 2) throw ShapeError("logits need >= 1 row and >= 2 columns");
  require_finite(logits.values(), "logits");

  LossResult out{0.0, Matrix(logits.rows(), logits.cols())};
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const int t = target.tokens[i];
    if (t < 0 || static_cast<std::size_t>(t) >= logits.cols()) {
      throw IndexError("target id " + std::to_string(t) + " at position " + std::to_string(i) +
                       " outside vocabulary of " + std::to_string(logits.cols()));
    }
    if (!target.is_supervised(i)) continue;

    const double alpha = target.marks[i] == SpecialMark::None ? 1.0 : cfg.lambda;
    const auto row = logits.row(i);
    const double peak = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double v : row) z += std::exp(v - peak);
    const double lse = peak + std::log(z);
    out.loss += alpha * (lse - row[static_cast<std::size_t>(t)]);
    for (std::size_t c = 0; c < logits.cols(); ++c) {
      out.grad(i, c) = alpha * std::exp(row[c] - lse);
    }
    out.grad(i, static_cast<std::size_t>(t)) -= alpha;
  }
  return out;
}

LossResult bce_loss(const MaskLogits& pred, const BinaryMask& target) {
  require_same_shape(pred, target);
  const auto x = pred.values();
  const auto y = target.bits();
  const double n = static_cast<double>(x.size());

  LossResult out{0.0, Matrix(pred.rows(), pred.cols())};
  auto g = out.grad.values();
  for (std::size_t k = 0; k < x.size(); ++k) {
    out.loss += softplus(x[k]) - x[k] * y[k];
    g[k] = (sigmoid(x[k]) - y[k]) / n;
  }
  out.loss /= n;
  return out;
}

LossResult dice_loss(const MaskLogits& pred, const BinaryMask& target, const LossConfig& cfg) {
  cfg.validate(true);
  require_same_shape(pred, target);
  const auto x = pred.values();
  const auto y = target.bits();

  std::vector<double> p(x.size());
  double sum_py = 0.0;
  double sum_p = 0.0;
  double sum_y = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    p[k] = sigmoid(x[k]);
    sum_py += p[k] * y[k];
    sum_p += p[k];
    sum_y += y[k];
  }
  const double num = 2.0 * sum_py + cfg.dice_epsilon;
  const double den = sum_p + sum_y + cfg.dice_epsilon;

  LossResult out{1.0 - num / den, Matrix(pred.rows(), pred.cols())};
  auto g = out.grad.values();
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double dloss_dp = -(2.0 * y[k] * den - num) / (den * den);
    g[k] = dloss_dp * p[k] * (1.0 - p[k]);
  }
  return out;
}

TotalLoss total_loss(const LogitsMatrix& logits, const TokenSequence& target,
                     const MaskLogits* pred_mask, const BinaryMask* target_mask,
                     const LossConfig& cfg) {
  if ((pred_mask == nullptr) != (target_mask == nullptr)) {
    throw ContractError("predicted and target masks must be given together");
  }
  const bool has_masks = pred_mask != nullptr;
  if (has_masks != target.has_seg()) {
    throw ContractError(has_masks ? "masks given for a sequence without a [SEG] mark"
                                  : "[SEG] sequence needs predicted and target masks");
  }

  auto language = weighted_ce(logits, target, cfg);
  TotalLoss out;
  out.language = language.loss;
  out.loss = language.loss;
  out.logits_grad = std::move(language.grad);
  if (!has_masks) return out;

  const auto bce = bce_loss(*pred_mask, *target_mask);
  const auto dice = dice_loss(*pred_mask, *target_mask, cfg);
  out.bce = bce.loss;
  out.dice = dice.loss;
  out.loss += cfg.grounding_weight * (bce.loss + dice.loss);

  Matrix grad(pred_mask->rows(), pred_mask->cols());
  auto g = grad.values();
  const auto gb = bce.grad.values();
  const auto gd = dice.grad.values();
  for (std::size_t k = 0; k < g.size(); ++k) g[k] = cfg.grounding_weight * (gb[k] + gd[k]);
  out.mask_grad = std::move(grad);
  return out;
}

}  // namespace vbackcheck::tuneloss
