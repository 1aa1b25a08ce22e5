#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "vbackcheck/tuneloss.hpp"

namespace vbackcheck::tuneloss {

/// Central-difference derivative of `f` at every entry of `x`.
Matrix finite_difference(const std::function<double(const Matrix&)>& f, const Matrix& x,
                         double step);

/// |a - n| <= rel_tol * max(|a|, |n|, 1e-6) for every entry, where a is the
/// analytic and n the numeric derivative. Returns the worst observed ratio.
struct GradCompare {
  bool pass = true;
  double worst_rel_error = 0.0;
};
GradCompare compare_gradients(const Matrix& analytic, const Matrix& numeric, double rel_tol);

struct GradCheckRow {
  std::string loss;
  int instances = 0;
  int failures = 0;
  double worst_rel_error = 0.0;
  double seconds = 0.0;
  bool pass() const { return failures == 0; }
};

struct GradCheckOptions {
  int instances = 100;
  double step = 1e-4;
  double rel_tol = 1e-4;
  std::uint64_t seed = 20240611;
};

/// Randomized analytic-vs-numeric checks for weighted_ce, bce_loss,
/// dice_loss and total_loss (masks up to 8x8, sequences up to 16, vocab up
/// to 32).
std::vector<GradCheckRow> run_gradient_suite(const GradCheckOptions& opts = {});

}  // namespace vbackcheck::tuneloss
