#include "mnm/optimizer.hpp"

#include <cmath>

#include "mnm/errors.hpp"

namespace mnm::train {

std::vector<ParamRef> collect_parameters(golfer::ModelParams& params) {
  std::vector<ParamRef> refs;
  params.for_each([&refs](const std::string& name, Parameter& p) { refs.push_back({name, &p}); });
  return refs;
}

void optimizer_step(std::span<const ParamRef> params, OptimizerState& state) {
  if (state.first_moment.empty()) {
    for (const ParamRef& r : params) {
      state.first_moment.emplace_back(r.param->value.rows(), r.param->value.cols());
      state.second_moment.emplace_back(r.param->value.rows(), r.param->value.cols());
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw DimensionError("optimizer_step: state tracks " + std::to_string(state.first_moment.size()) +
                         " parameters, given " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i].param;
    if (p.grad.empty()) p.zero_grad();
    if (!state.first_moment[i].same_shape(p.value) || !p.grad.same_shape(p.value)) {
      throw DimensionError("optimizer_step: shape mismatch for " + params[i].name);
    }
    if (!p.grad.all_finite()) throw TrainingError("non-finite gradient in parameter " + params[i].name);
  }

  ++state.step;
  const AdamConfig& c = state.config;
  const double step = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(c.beta1, step);
  const double correction2 = 1.0 - std::pow(c.beta2, step);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i].param;
    Matrix& m = state.first_moment[i];
    Matrix& v = state.second_moment[i];
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      const double g = p.grad[j];
      m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g;
      v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g * g;
      const double m_hat = m[j] / correction1;
      const double v_hat = v[j] / correction2;
      p.value[j] -= c.lr * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
    p.grad.fill(0.0);
  }
}

}  // namespace mnm::train
