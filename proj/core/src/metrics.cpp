#include "mnm/metrics.hpp"

#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "mnm/errors.hpp"

namespace mnm::ensemble {

namespace {

void check(std::span<const Matrix> modes, const Matrix& gt, const MaskBits& valid) {
  if (modes.empty()) throw EmptySetError("metrics: no modes");
  if (gt.cols() != 2 || valid.size() != gt.rows()) {
    throw DimensionError("metrics: ground truth " + gt.shape_string() + " with mask of " +
                         std::to_string(valid.size()));
  }
  for (const Matrix& m : modes) require_same_shape(m, gt, "metrics");
  if (!valid.any()) throw EmptySetError("metrics: no valid steps");
}

}  // namespace

double min_ade(std::span<const Matrix> modes, const Matrix& gt, const MaskBits& valid) {
  check(modes, gt, valid);
  double best = std::numeric_limits<double>::infinity();
  const auto n = static_cast<double>(valid.count());
  for (const Matrix& m : modes) {
    double sum = 0.0;
    for (std::size_t t = 0; t < gt.rows(); ++t)
      if (valid[t]) sum += std::hypot(m(t, 0) - gt(t, 0), m(t, 1) - gt(t, 1));
    best = std::min(best, sum / n);
  }
  return best;
}

double min_fde(std::span<const Matrix> modes, const Matrix& gt, const MaskBits& valid) {
  check(modes, gt, valid);
  std::size_t last = gt.rows();
  while (!valid[last - 1]) --last;
  const std::size_t t = last - 1;
  double best = std::numeric_limits<double>::infinity();
  for (const Matrix& m : modes) best = std::min(best, std::hypot(m(t, 0) - gt(t, 0), m(t, 1) - gt(t, 1)));
  return best;
}

double miss_rate(std::span<const EvalSample> samples, double threshold_m) {
  if (!(threshold_m > 0.0)) throw ConfigError("miss_rate: threshold must be positive");
  if (samples.empty()) throw EmptySetError("miss_rate: empty dataset");
  std::size_t misses = 0;
  for (const auto& s : samples)
    if (min_fde(s.modes, s.gt, s.valid) > threshold_m) ++misses;
  return static_cast<double>(misses) / static_cast<double>(samples.size());
}

MetricsReport evaluate(std::span<const EvalSample> samples, std::size_t k, double threshold_m) {
  if (samples.empty()) throw EmptySetError("evaluate: empty dataset");
  MetricsReport r;
  r.num_samples = samples.size();
  r.k = k;
  r.threshold_m = threshold_m;
  for (const auto& s : samples) {
    r.min_ade += min_ade(s.modes, s.gt, s.valid);
    r.min_fde += min_fde(s.modes, s.gt, s.valid);
  }
  r.min_ade /= static_cast<double>(samples.size());
  r.min_fde /= static_cast<double>(samples.size());
  r.miss_rate = miss_rate(samples, threshold_m);
  return r;
}

std::string to_json(const MetricsReport& r) {
  return fmt::format(
      "{{\"num_samples\":{},\"minADE\":{:.17g},\"minFDE\":{:.17g},\"miss_rate\":{:.17g},\"k\":{},"
      "\"threshold_m\":{:.17g}}}",
      r.num_samples, r.min_ade, r.min_fde, r.miss_rate, r.k, r.threshold_m);
}

}  // namespace mnm::ensemble
