#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mnm/golfer.hpp"
#include "mnm/matrix.hpp"

namespace mnm::train {

struct ParamRef {
  std::string name;
  Parameter* param = nullptr;
};

std::vector<ParamRef> collect_parameters(golfer::ModelParams& params);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Bias-corrected adaptive-moment state; moments are created on first use.
struct OptimizerState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
};

/// One update from the accumulated grads, which are reset to zero afterwards.
/// A non-finite gradient raises TrainingError naming the parameter before any
/// value is modified.
void optimizer_step(std::span<const ParamRef> params, OptimizerState& state);

}  // namespace mnm::train
