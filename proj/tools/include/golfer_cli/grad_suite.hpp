#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mnm/golfer.hpp"

namespace golfer_cli {

inline constexpr double kGradTolerance = 1e-4;

struct GradSuiteEntry {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  bool passed = false;
};

/// Model configuration used by the gradient suite: d=16, two heads, three
/// modes, horizon 4.
mnm::golfer::GolferConfig tiny_golfer_config();

/// Finite-difference checks of every differentiable primitive, each MnM block
/// variant and the full forward + total loss composite.
std::vector<GradSuiteEntry> run_grad_suite(std::uint64_t seed);

}  // namespace golfer_cli
