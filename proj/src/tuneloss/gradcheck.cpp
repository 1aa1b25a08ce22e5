#include "vbackcheck/gradcheck.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>

namespace vbackcheck::tuneloss {

Matrix finite_difference(const std::function<double(const Matrix&)>& f, const Matrix& x,
                         double step) {
  Matrix probe = x;
  Matrix grad(x.rows(), x.cols());
  auto pv = probe.values();
  auto gv = grad.values();
  for (std::size_t k = 0; k < pv.size(); ++k) {
    const double orig = pv[k];
    pv[k] = orig + step;
    const double up = f(probe);
    pv[k] = orig - step;
    const double down = f(probe);
    pv[k] = orig;
    gv[k] = (up - down) / (2.0 * step);
  }
  return grad;
}

GradCompare compare_gradients(const Matrix& analytic, const Matrix& numeric, double rel_tol) {
  GradCompare out;
  const auto a = analytic.values();
  const auto n = numeric.values();
  if (a.size() != n.size()) return {false, INFINITY};
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double scale = std::max({std::abs(a[k]), std::abs(n[k]), 1e-6});
    const double rel = std::abs(a[k] - n[k]) / scale;
    out.worst_rel_error = std::max(out.worst_rel_error, rel);
    if (rel > rel_tol) out.pass = false;
  }
  return out;
}

namespace {

using Rng = std::mt19937_64;

Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double sd) {
  std::normal_distribution<double> dist(0.0, sd);
  Matrix m(rows, cols);
  for (double& v : m.values()) v = dist(rng);
  return m;
}

BinaryMask random_mask(Rng& rng, int h, int w) {
  std::bernoulli_distribution bit(0.4);
  std::vector<std::uint8_t> bits(static_cast<std::size_t>(h * w));
  for (auto& b : bits) b = bit(rng) ? 1 : 0;
  return BinaryMask(h, w, std::move(bits));
}

TokenSequence random_sequence(Rng& rng, std::size_t len, int vocab, bool force_seg) {
  std::uniform_int_distribution<int> tok(0, vocab - 1);
  std::uniform_int_distribution<int> mark(0, 7);
  std::bernoulli_distribution has_prompt(0.5);
  TokenSequence seq;
  for (std::size_t i = 0; i < len; ++i) {
    seq.tokens.push_back(tok(rng));
    const int m = mark(rng);
    seq.marks.push_back(m == 0 ? SpecialMark::Seg : m == 1 ? SpecialMark::Rej : SpecialMark::None);
  }
  if (force_seg) {
    std::replace(seq.marks.begin(), seq.marks.end(), SpecialMark::Seg, SpecialMark::Rej);
    seq.marks.back() = SpecialMark::Seg;
  } else {
    std::replace(seq.marks.begin(), seq.marks.end(), SpecialMark::Seg, SpecialMark::Rej);
  }
  if (has_prompt(rng) && len > 1) {
    const std::size_t prompt = std::uniform_int_distribution<std::size_t>(1, len - 1)(rng);
    seq.supervised.assign(len, 1);
    for (std::size_t i = 0; i < prompt; ++i) seq.supervised[i] = 0;
  }
  return seq;
}

template <typename Instance>
GradCheckRow run_case(const char* name, const GradCheckOptions& opts, Instance&& one) {
  GradCheckRow row{name};
  const auto start = std::chrono::steady_clock::now();
  for (int i = 0; i < opts.instances; ++i) {
    const GradCompare c = one();
    ++row.instances;
    if (!c.pass) ++row.failures;
    row.worst_rel_error = std::max(row.worst_rel_error, c.worst_rel_error);
  }
  row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return row;
}

}  // namespace

std::vector<GradCheckRow> run_gradient_suite(const GradCheckOptions& opts) {
  Rng rng(opts.seed);
  std::uniform_int_distribution<int> len_dist(1, 16);
  std::uniform_int_distribution<int> vocab_dist(2, 32);
  std::uniform_int_distribution<int> side(1, 8);
  std::uniform_real_distribution<double> lambda_dist(1.5, 4.0);
  std::uniform_real_distribution<double> eps_dist(0.25, 2.0);
  std::vector<GradCheckRow> rows;

  rows.push_back(run_case("weighted_ce", opts, [&] {
    const auto len = static_cast<std::size_t>(len_dist(rng));
    const int vocab = vocab_dist(rng);
    const auto seq = random_sequence(rng, len, vocab, false);
    const LossConfig cfg{lambda_dist(rng), 1.0, 1.0};
    const Matrix logits = random_matrix(rng, len, static_cast<std::size_t>(vocab), 2.0);
    const auto analytic = weighted_ce(logits, seq, cfg).grad;
    const auto numeric = finite_difference(
        [&](const Matrix& m) { return weighted_ce(m, seq, cfg).loss; }, logits, opts.step);
    return compare_gradients(analytic, numeric, opts.rel_tol);
  }));

  rows.push_back(run_case("bce_loss", opts, [&] {
    const int h = side(rng);
    const int w = side(rng);
    const auto target = random_mask(rng, h, w);
    const Matrix x = random_matrix(rng, static_cast<std::size_t>(h), static_cast<std::size_t>(w), 2.0);
    const auto analytic = bce_loss(x, target).grad;
    const auto numeric =
        finite_difference([&](const Matrix& m) { return bce_loss(m, target).loss; }, x, opts.step);
    return compare_gradients(analytic, numeric, opts.rel_tol);
  }));

  rows.push_back(run_case("dice_loss", opts, [&] {
    const int h = side(rng);
    const int w = side(rng);
    const auto target = random_mask(rng, h, w);
    const LossConfig cfg{2.0, eps_dist(rng), 1.0};
    const Matrix x = random_matrix(rng, static_cast<std::size_t>(h), static_cast<std::size_t>(w), 2.0);
    const auto analytic = dice_loss(x, target, cfg).grad;
    const auto numeric = finite_difference(
        [&](const Matrix& m) { return dice_loss(m, target, cfg).loss; }, x, opts.step);
    return compare_gradients(analytic, numeric, opts.rel_tol);
  }));

  rows.push_back(run_case("total_loss", opts, [&] {
    const bool seg = std::bernoulli_distribution(0.5)(rng);
    const auto len = static_cast<std::size_t>(len_dist(rng));
    const int vocab = vocab_dist(rng);
    const auto seq = random_sequence(rng, len, vocab, seg);
    const LossConfig cfg{lambda_dist(rng), eps_dist(rng), std::uniform_real_distribution<double>(0.0, 2.0)(rng)};
    const Matrix logits = random_matrix(rng, len, static_cast<std::size_t>(vocab), 2.0);
    const int h = side(rng);
    const int w = side(rng);
    const auto target = random_mask(rng, h, w);
    const Matrix x = random_matrix(rng, static_cast<std::size_t>(h), static_cast<std::size_t>(w), 2.0);
    const MaskLogits* pm = seg ? &x : nullptr;
    const BinaryMask* tm = seg ? &target : nullptr;

    const auto analytic = total_loss(logits, seq, pm, tm, cfg);
    const auto num_logits = finite_difference(
        [&](const Matrix& m) { return total_loss(m, seq, pm, tm, cfg).loss; }, logits, opts.step);
    GradCompare c = compare_gradients(analytic.logits_grad, num_logits, opts.rel_tol);
    if (seg) {
      const auto num_mask = finite_difference(
          [&](const Matrix& m) { return total_loss(logits, seq, &m, tm, cfg).loss; }, x, opts.step);
      const GradCompare cm = compare_gradients(*analytic.mask_grad, num_mask, opts.rel_tol);
      c.pass = c.pass && cm.pass;
      c.worst_rel_error = std::max(c.worst_rel_error, cm.worst_rel_error);
    }
    return c;
  }));

  return rows;
}

}  // namespace vbackcheck::tuneloss
