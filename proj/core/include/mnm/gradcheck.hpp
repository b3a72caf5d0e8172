#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mnm/autodiff.hpp"

namespace mnm {

inline constexpr double kGradCheckStep = 1e-5;

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  std::size_t worst_tensor = 0;
  std::size_t worst_index = 0;
};

/// Builds the differentiable composite on a fresh tape. Parameters must be
/// bound through Tape::param so perturbations are seen.
using TapeFunction = std::function<Var(Tape&)>;

/// Compares reverse-mode gradients of <r, f> (r drawn from seed) against
/// central differences for every coordinate of every parameter. Error per
/// coordinate is |analytic − numeric| / max(1, |numeric|). Parameter values
/// are restored afterwards; their grad fields are left untouched.
GradCheckReport gradient_check(const TapeFunction& f, std::span<Parameter* const> params,
                               std::uint64_t seed, double step = kGradCheckStep);

/// Variant over plain input matrices; f receives one leaf per input.
using InputFunction = std::function<Var(Tape&, std::span<const Var>)>;
GradCheckReport gradient_check(const InputFunction& f, std::vector<Matrix> inputs,
                               std::uint64_t seed, double step = kGradCheckStep);

}  // namespace mnm
