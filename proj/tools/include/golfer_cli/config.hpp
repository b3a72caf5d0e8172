#pragma once

// Flat run configuration: one `section.key = value` per line, '#' starts a
// comment. Every key has a default; unknown keys are rejected.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "mnm/golfer.hpp"
#include "mnm/kmeans.hpp"
#include "mnm/metrics.hpp"
#include "mnm/scene.hpp"
#include "mnm/train.hpp"

namespace golfer_cli {

struct EnsembleSection {
  std::size_t k = 6;
  std::uint64_t seed = 0;
  std::size_t max_iters = 300;
  double tol = 1e-10;

  friend bool operator==(const EnsembleSection&, const EnsembleSection&) = default;
};

struct MetricsSection {
  double threshold_m = mnm::ensemble::kDefaultMissThreshold;

  friend bool operator==(const MetricsSection&, const MetricsSection&) = default;
};

struct RunConfig {
  mnm::scene::GeneratorConfig data;
  mnm::golfer::GolferConfig model;  // model.horizon mirrors data.horizon
  mnm::train::TrainConfig train;
  EnsembleSection ensemble;
  MetricsSection metrics;
};

bool operator==(const RunConfig& a, const RunConfig& b);

/// Parses config text; errors are mnm::ConfigError naming the key path.
RunConfig parse_config_text(std::string_view text);
RunConfig parse_config(const std::filesystem::path& path);

/// Range checks; throws mnm::ConfigError naming the offending key.
void validate(const RunConfig& config);

/// Every key with its effective value; parse_config_text() of the result
/// reproduces `config`.
std::string to_config_text(const RunConfig& config);

mnm::ensemble::KMeansOptions kmeans_options(const RunConfig& config);

}  // namespace golfer_cli
