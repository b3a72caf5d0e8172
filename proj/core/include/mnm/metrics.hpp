#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "mnm/matrix.hpp"

namespace mnm::ensemble {

inline constexpr double kDefaultMissThreshold = 2.0;  // metres

/// Minimum over modes of the mean L2 displacement across valid steps.
double min_ade(std::span<const Matrix> modes, const Matrix& gt, const MaskBits& valid);
/// Minimum over modes of the L2 displacement at the last valid step.
double min_fde(std::span<const Matrix> modes, const Matrix& gt, const MaskBits& valid);

struct EvalSample {
  std::vector<Matrix> modes;  // K × (T×2)
  Matrix gt;                  // T×2
  MaskBits valid;
};

/// Fraction of samples whose min_fde exceeds threshold_m.
double miss_rate(std::span<const EvalSample> samples, double threshold_m = kDefaultMissThreshold);

struct MetricsReport {
  std::size_t num_samples = 0;
  double min_ade = 0.0;
  double min_fde = 0.0;
  double miss_rate = 0.0;
  std::size_t k = 0;
  double threshold_m = kDefaultMissThreshold;
};

/// Dataset means of min_ade/min_fde plus the miss rate.
MetricsReport evaluate(std::span<const EvalSample> samples, std::size_t k,
                       double threshold_m = kDefaultMissThreshold);

/// {"num_samples":..,"minADE":..,"minFDE":..,"miss_rate":..,"k":..,"threshold_m":..}
std::string to_json(const MetricsReport& report);

}  // namespace mnm::ensemble
