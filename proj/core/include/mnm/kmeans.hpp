#pragma once

// Weighted Lloyd clustering of trajectories for model ensembling. Points are
// trajectories flattened to 2T-vectors; distances are plain Euclidean and the
// weights enter only the centroid means and the output probabilities.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "mnm/golfer.hpp"
#include "mnm/matrix.hpp"
#include "mnm/random.hpp"

namespace mnm::ensemble {

struct WeightedTrajectorySet {
  std::vector<Matrix> trajectories;  // N × (T×2)
  std::vector<double> weights;       // N, non-negative
};

struct EnsembleOutput {
  std::vector<Matrix> centroids;  // k × (T×2)
  std::vector<double> probs;      // k, sums to 1

  friend bool operator==(const EnsembleOutput&, const EnsembleOutput&) = default;
};

struct KMeansOptions {
  std::size_t max_iters = 300;
  double tol = 1e-10;
};

struct KMeansResult {
  EnsembleOutput output;
  std::vector<std::size_t> assignment;  // cluster of each input trajectory
  std::size_t iterations = 0;
};

/// Weighted k-means++ seeding followed by Lloyd iterations until centroid
/// movement drops below tol or max_iters is reached. Assignment ties go to
/// the lowest cluster index; a cluster left empty is re-seeded at the point
/// with the largest weighted squared distance to its centroid. Clusters are
/// returned by decreasing probability (ties by centroid coordinates).
KMeansResult weighted_kmeans_detailed(const WeightedTrajectorySet& set, std::size_t k, Rng& rng,
                                      const KMeansOptions& options = {});
EnsembleOutput weighted_kmeans(const WeightedTrajectorySet& set, std::size_t k, Rng& rng,
                               const KMeansOptions& options = {});

/// Pools all modes of all predictions, weighted by their probabilities, and
/// clusters them with a stream seeded from `seed`.
EnsembleOutput ensemble_predict(std::span<const golfer::Prediction> predictions, std::size_t k,
                                std::uint64_t seed, const KMeansOptions& options = {});

/// Squared Euclidean distance between two equally shaped trajectories.
double squared_distance(const Matrix& a, const Matrix& b);

}  // namespace mnm::ensemble
