#include "mnm/loss.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "mnm/errors.hpp"

namespace mnm::train {

namespace {

void check_trajectory(const Matrix& m, const Matrix& gt, const MaskBits& valid, const char* what) {
  if (m.cols() != 2 || !m.same_shape(gt) || valid.size() != gt.rows()) {
    throw DimensionError(std::string(what) + ": trajectory " + m.shape_string() + ", ground truth " +
                         gt.shape_string() + ", mask of " + std::to_string(valid.size()));
  }
}

/// Valid steps minus the excluded one: the steps the loss is computed over.
MaskBits counted_steps(const MaskBits& valid, std::optional<std::size_t> exclusion_index) {
  MaskBits counted = valid;
  if (exclusion_index && *exclusion_index < counted.size()) counted.set(*exclusion_index, false);
  return counted;
}

}  // namespace

double mean_displacement(const Matrix& trajectory, const Matrix& gt, const MaskBits& valid) {
  check_trajectory(trajectory, gt, valid, "mean_displacement");
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t t = 0; t < gt.rows(); ++t) {
    if (!valid[t]) continue;
    sum += std::hypot(trajectory(t, 0) - gt(t, 0), trajectory(t, 1) - gt(t, 1));
    ++n;
  }
  if (n == 0) throw EmptySetError("mean_displacement: no valid steps");
  return sum / static_cast<double>(n);
}

std::size_t select_winner(std::span<const Matrix> means, const Matrix& gt, const MaskBits& valid) {
  if (means.empty()) throw EmptySetError("select_winner: no modes");
  if (!valid.any()) throw EmptySetError("select_winner: no valid steps");
  std::size_t best = 0;
  double best_dist = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < means.size(); ++k) {
    const double d = mean_displacement(means[k], gt, valid);
    if (d < best_dist) {
      best_dist = d;
      best = k;
    }
  }
  return best;
}

std::size_t select_winner(const golfer::Prediction& pred, const Matrix& gt, const MaskBits& valid) {
  return select_winner(pred.means, gt, valid);
}

NllGrad gmm_nll_grad(const Matrix& means, const Matrix& log_sigmas, const Matrix& gt,
                     const MaskBits& valid, std::optional<std::size_t> exclusion_index) {
  check_trajectory(means, gt, valid, "gmm_nll");
  require_same_shape(means, log_sigmas, "gmm_nll");
  std::size_t counted = 0;
  for (std::size_t t = 0; t < gt.rows(); ++t)
    if (valid[t] && t != exclusion_index) ++counted;
  if (counted == 0) throw EmptySetError("gmm_nll: no counted steps after exclusion");

  const double inv_n = 1.0 / static_cast<double>(counted);
  NllGrad out{0.0, Matrix(gt.rows(), 2), Matrix(gt.rows(), 2)};
  for (std::size_t t = 0; t < gt.rows(); ++t) {
    if (!valid[t] || t == exclusion_index) continue;
    double step = kLogTwoPi;
    for (std::size_t c = 0; c < 2; ++c) {
      const double inv_sigma = std::exp(-log_sigmas(t, c));
      const double z = (gt(t, c) - means(t, c)) * inv_sigma;
      step += 0.5 * z * z + log_sigmas(t, c);
      out.d_means(t, c) = -z * inv_sigma * inv_n;
      out.d_log_sigmas(t, c) = (1.0 - z * z) * inv_n;
    }
    out.value += step;
  }
  out.value *= inv_n;
  return out;
}

double gmm_nll(const Matrix& means, const Matrix& log_sigmas, const Matrix& gt, const MaskBits& valid,
               std::optional<std::size_t> exclusion_index) {
  return gmm_nll_grad(means, log_sigmas, gt, valid, exclusion_index).value;
}

namespace {

double log_sum_exp(std::span<const double> logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (double v : logits) s += std::exp(v - m);
  return m + std::log(s);
}

void check_winner(std::span<const double> logits, std::size_t winner) {
  if (logits.empty()) throw EmptySetError("classification_loss: no logits");
  if (winner >= logits.size()) {
    throw DimensionError("classification_loss: winner " + std::to_string(winner) + " of " +
                         std::to_string(logits.size()) + " modes");
  }
}

}  // namespace

double classification_loss(std::span<const double> logits, std::size_t winner) {
  check_winner(logits, winner);
  return log_sum_exp(logits) - logits[winner];
}

std::vector<double> classification_loss_grad(std::span<const double> logits, std::size_t winner) {
  check_winner(logits, winner);
  const double lse = log_sum_exp(logits);
  std::vector<double> g(logits.size());
  for (std::size_t k = 0; k < logits.size(); ++k) g[k] = std::exp(logits[k] - lse);
  g[winner] -= 1.0;
  return g;
}

LossBreakdown total_loss(const golfer::Prediction& pred, const Matrix& gt, const MaskBits& valid,
                         std::optional<std::size_t> exclusion_index, double lambda) {
  LossBreakdown b;
  b.winner_index = select_winner(pred, gt, counted_steps(valid, exclusion_index));
  b.regression_nll =
      gmm_nll(pred.means[b.winner_index], pred.log_sigmas[b.winner_index], gt, valid, exclusion_index);
  b.classification_ce = classification_loss(pred.logits, b.winner_index);
  b.total = b.regression_nll + lambda * b.classification_ce;
  return b;
}

LossVars total_loss(Tape& t, const golfer::ForwardVars& vars, const Matrix& gt, const MaskBits& valid,
                    std::optional<std::size_t> exclusion_index, double lambda) {
  std::vector<Matrix> means;
  for (Var m : vars.means) means.push_back(t.value(m));
  LossBreakdown b;
  b.winner_index = select_winner(means, gt, counted_steps(valid, exclusion_index));
  const std::size_t w = b.winner_index;

  auto nll = gmm_nll_grad(means[w], t.value(vars.log_sigmas[w]), gt, valid, exclusion_index);
  const Matrix& logits = t.value(vars.logits);
  b.regression_nll = nll.value;
  b.classification_ce = classification_loss(logits.values(), w);
  b.total = b.regression_nll + lambda * b.classification_ce;

  auto ce_grad = classification_loss_grad(logits.values(), w);
  Matrix d_logits(1, ce_grad.size());
  for (std::size_t k = 0; k < ce_grad.size(); ++k) d_logits[k] = lambda * ce_grad[k];

  struct Saved {
    Var mean;
    Var log_sigma;
    Var logits;
    Matrix d_mean;
    Matrix d_log_sigma;
    Matrix d_logits;
  };
  auto saved = std::make_shared<const Saved>(Saved{vars.means[w], vars.log_sigmas[w], vars.logits,
                                                   std::move(nll.d_means), std::move(nll.d_log_sigmas),
                                                   std::move(d_logits)});
  const Var inputs[] = {vars.means[w], vars.log_sigmas[w], vars.logits};
  Var total = t.record(Matrix(1, 1, b.total), inputs, [saved](Tape& tp, const Matrix& g) {
    auto scaled = [&g](Matrix m) {
      for (double& v : m.values()) v *= g[0];
      return m;
    };
    tp.accumulate(saved->mean, scaled(saved->d_mean));
    tp.accumulate(saved->log_sigma, scaled(saved->d_log_sigma));
    tp.accumulate(saved->logits, scaled(saved->d_logits));
  });
  return {total, b};
}

}  // namespace mnm::train
