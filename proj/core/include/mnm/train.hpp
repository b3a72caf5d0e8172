#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mnm/golfer.hpp"
#include "mnm/loss.hpp"
#include "mnm/optimizer.hpp"
#include "mnm/scene.hpp"

namespace mnm::train {

struct TrainConfig {
  std::size_t epochs = 20;
  double lr = 1e-3;
  double lambda = 1.0;
  double mask_ratio = 0.85;
  std::uint64_t seed = 0;
};

struct TraceRecord {
  std::size_t epoch = 0;
  std::size_t step = 0;  // global step, 0-based
  double regression_nll = 0.0;
  double classification_ce = 0.0;
  double total = 0.0;
};

/// {"epoch":..,"step":..,"regression_nll":..,"classification_ce":..,"total":..}
std::string to_json(const TraceRecord& r);

struct TrainResult {
  golfer::ModelParams params;
  std::vector<TraceRecord> trace;
  std::vector<double> epoch_mean_total;
};

using StepCallback = std::function<void(const TraceRecord&)>;

/// One sample: goal masking, forward, loss, backward, optimizer step.
LossBreakdown train_step(golfer::ModelParams& params, std::span<const ParamRef> refs,
                         OptimizerState& opt, const scene::Scene& s,
                         const scene::GoalConditioning& goal, double lambda);

/// Sample-wise training from a freshly initialized model. Sample order per
/// epoch and goal masking draws both derive from config.seed.
TrainResult train(std::span<const scene::Scene> dataset, const golfer::GolferConfig& model,
                  const TrainConfig& config, const StepCallback& on_step = {});

/// Continues training `params` in place.
TrainResult train(std::span<const scene::Scene> dataset, golfer::ModelParams params,
                  const TrainConfig& config, const StepCallback& on_step = {});

}  // namespace mnm::train
