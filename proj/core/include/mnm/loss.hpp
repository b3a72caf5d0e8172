#pragma once

// Winner-take-all mixture objective: the mode whose mean trajectory is
// closest to the ground truth receives a diagonal-Gaussian NLL, and a
// cross-entropy term trains the mode logits to pick that winner.

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "mnm/autodiff.hpp"
#include "mnm/golfer.hpp"

namespace mnm::train {

/// log(2π)
inline constexpr double kLogTwoPi = 1.8378770664093454836;

/// Mean L2 distance over valid steps (the average displacement error).
double mean_displacement(const Matrix& trajectory, const Matrix& gt, const MaskBits& valid);

/// Lowest-index argmin of mean_displacement over the modes.
std::size_t select_winner(std::span<const Matrix> means, const Matrix& gt, const MaskBits& valid);
std::size_t select_winner(const golfer::Prediction& pred, const Matrix& gt, const MaskBits& valid);

struct NllGrad {
  double value = 0.0;
  Matrix d_means;       // T×2
  Matrix d_log_sigmas;  // T×2
};

/// Mean over counted steps (valid and not excluded) of the 2-D diagonal
/// Gaussian negative log density.
double gmm_nll(const Matrix& means, const Matrix& log_sigmas, const Matrix& gt, const MaskBits& valid,
               std::optional<std::size_t> exclusion_index);
NllGrad gmm_nll_grad(const Matrix& means, const Matrix& log_sigmas, const Matrix& gt,
                     const MaskBits& valid, std::optional<std::size_t> exclusion_index);

/// −log softmax(logits)[winner].
double classification_loss(std::span<const double> logits, std::size_t winner);
/// d/dlogits of classification_loss: softmax − onehot(winner).
std::vector<double> classification_loss_grad(std::span<const double> logits, std::size_t winner);

struct LossBreakdown {
  double regression_nll = 0.0;
  double classification_ce = 0.0;
  double total = 0.0;
  std::size_t winner_index = 0;
};

/// nll(winner) + lambda·ce(winner). The winner is selected over the counted
/// steps, so the excluded step has no influence on either term.
LossBreakdown total_loss(const golfer::Prediction& pred, const Matrix& gt, const MaskBits& valid,
                         std::optional<std::size_t> exclusion_index, double lambda);

struct LossVars {
  Var total;  // 1×1
  LossBreakdown breakdown;
};

/// Differentiable total loss on a tape. Winner selection carries no gradient.
LossVars total_loss(Tape& t, const golfer::ForwardVars& vars, const Matrix& gt, const MaskBits& valid,
                    std::optional<std::size_t> exclusion_index, double lambda);

}  // namespace mnm::train
