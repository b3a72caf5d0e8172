#include "mnm/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "mnm/errors.hpp"
#include "mnm/random.hpp"

namespace mnm {

namespace {

double projected(const Matrix& out, const Matrix& r) {
  if (!out.all_finite()) throw NumericError("gradient_check: non-finite function value");
  double acc = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) acc += out[i] * r[i];
  return acc;
}

double evaluate(const TapeFunction& f, const Matrix& r) {
  Tape t(false);
  Var out = f(t);
  return projected(t.value(out), r);
}

}  // namespace

GradCheckReport gradient_check(const TapeFunction& f, std::span<Parameter* const> params,
                               std::uint64_t seed, double step) {
  Rng rng(seed);
  Tape tape;
  Var out = f(tape);
  const Matrix& out_value = tape.value(out);
  if (!out_value.all_finite()) throw NumericError("gradient_check: non-finite function value");
  Matrix r = uniform_matrix(out_value.rows(), out_value.cols(), 1.0, rng);
  tape.backward(out, r);

  GradCheckReport report;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    const Matrix* analytic = tape.param_grad(p);
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double orig = p.value[i];
      p.value[i] = orig + step;
      const double plus = evaluate(f, r);
      p.value[i] = orig - step;
      const double minus = evaluate(f, r);
      p.value[i] = orig;
      const double numeric = (plus - minus) / (2.0 * step);
      const double a = analytic != nullptr ? (*analytic)[i] : 0.0;
      if (!std::isfinite(a)) throw NumericError("gradient_check: non-finite analytic gradient");
      const double err = std::abs(a - numeric) / std::max(1.0, std::abs(numeric));
      ++report.coordinates;
      if (err > report.max_rel_error) {
        report.max_rel_error = err;
        report.worst_tensor = k;
        report.worst_index = i;
      }
    }
  }
  return report;
}

GradCheckReport gradient_check(const InputFunction& f, std::vector<Matrix> inputs,
                               std::uint64_t seed, double step) {
  std::vector<Parameter> storage;
  storage.reserve(inputs.size());
  for (Matrix& m : inputs) storage.emplace_back(std::move(m));
  std::vector<Parameter*> params;
  for (Parameter& p : storage) params.push_back(&p);
  TapeFunction bound = [&](Tape& t) {
    std::vector<Var> vars;
    vars.reserve(storage.size());
    for (const Parameter& p : storage) vars.push_back(t.param(p));
    return f(t, vars);
  };
  return gradient_check(bound, params, seed, step);
}

}  // namespace mnm
