#include "mnm/kmeans.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "mnm/errors.hpp"

namespace mnm::ensemble {

double squared_distance(const Matrix& a, const Matrix& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

namespace {

void validate(const WeightedTrajectorySet& set, std::size_t k) {
  const std::size_t n = set.trajectories.size();
  if (k == 0) throw ConfigError("weighted_kmeans: k must be positive");
  if (n < k) {
    throw ConfigError("weighted_kmeans: " + std::to_string(n) + " trajectories for k=" +
                      std::to_string(k));
  }
  if (set.weights.size() != n) {
    throw DimensionError("weighted_kmeans: " + std::to_string(n) + " trajectories with " +
                         std::to_string(set.weights.size()) + " weights");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!set.trajectories[i].same_shape(set.trajectories[0])) {
      throw DimensionError("weighted_kmeans: trajectory " + std::to_string(i) + " has shape " +
                           set.trajectories[i].shape_string());
    }
    if (!(set.weights[i] >= 0.0) || !std::isfinite(set.weights[i])) {
      throw DegenerateInputError("weighted_kmeans: weights must be finite and non-negative");
    }
    total += set.weights[i];
  }
  if (!(total > 0.0)) throw DegenerateInputError("weighted_kmeans: all weights are zero");
}

/// Index drawn with probability proportional to `mass`; -1 when mass is all zero.
std::ptrdiff_t sample_proportional(std::span<const double> mass, Rng& rng) {
  const double total = std::accumulate(mass.begin(), mass.end(), 0.0);
  if (!(total > 0.0)) return -1;
  const double u = rng.uniform() * total;
  double cumulative = 0.0;
  std::ptrdiff_t last_positive = -1;
  for (std::size_t i = 0; i < mass.size(); ++i) {
    if (mass[i] <= 0.0) continue;
    cumulative += mass[i];
    last_positive = static_cast<std::ptrdiff_t>(i);
    if (u < cumulative) return last_positive;
  }
  return last_positive;
}

std::vector<Matrix> seed_centroids(const WeightedTrajectorySet& set, std::size_t k, Rng& rng) {
  const auto& pts = set.trajectories;
  const std::size_t n = pts.size();
  std::vector<bool> chosen(n, false);
  std::vector<Matrix> centroids;
  centroids.reserve(k);

  auto choose = [&](std::ptrdiff_t idx) {
    if (idx < 0) {
      // Degenerate mass: first point not yet used as a centre.
      idx = static_cast<std::ptrdiff_t>(std::find(chosen.begin(), chosen.end(), false) - chosen.begin());
    }
    chosen[static_cast<std::size_t>(idx)] = true;
    centroids.push_back(pts[static_cast<std::size_t>(idx)]);
  };

  choose(sample_proportional(set.weights, rng));
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  std::vector<double> mass(n);
  while (centroids.size() < k) {
    for (std::size_t i = 0; i < n; ++i) {
      nearest[i] = std::min(nearest[i], squared_distance(pts[i], centroids.back()));
      mass[i] = set.weights[i] * nearest[i];
    }
    choose(sample_proportional(mass, rng));
  }
  return centroids;
}

std::size_t nearest_centroid(const Matrix& p, const std::vector<Matrix>& centroids) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < centroids.size(); ++j) {
    const double d = squared_distance(p, centroids[j]);
    if (d < best_d) {
      best_d = d;
      best = j;
    }
  }
  return best;
}

}  // namespace

KMeansResult weighted_kmeans_detailed(const WeightedTrajectorySet& set, std::size_t k, Rng& rng,
                                      const KMeansOptions& options) {
  validate(set, k);
  const auto& pts = set.trajectories;
  const std::size_t n = pts.size();
  const std::size_t rows = pts[0].rows();
  const std::size_t cols = pts[0].cols();

  std::vector<Matrix> centroids = seed_centroids(set, k, rng);
  std::vector<std::size_t> assignment(n, 0);
  std::size_t iter = 0;
  while (iter < options.max_iters) {
    ++iter;
    for (std::size_t i = 0; i < n; ++i) assignment[i] = nearest_centroid(pts[i], centroids);

    std::vector<Matrix> updated(k, Matrix(rows, cols));
    std::vector<double> weight(k, 0.0);
    std::vector<std::size_t> members(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t j = assignment[i];
      weight[j] += set.weights[i];
      ++members[j];
    }
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t j = assignment[i];
      // Zero-weight clusters fall back to the plain mean of their members.
      const double w = weight[j] > 0.0 ? set.weights[i] : 1.0;
      Matrix& c = updated[j];
      for (std::size_t e = 0; e < c.size(); ++e) c[e] += w * pts[i][e];
    }
    for (std::size_t j = 0; j < k; ++j) {
      if (members[j] == 0) continue;
      const double denom = weight[j] > 0.0 ? weight[j] : static_cast<double>(members[j]);
      for (double& v : updated[j].values()) v /= denom;
    }
    for (std::size_t j = 0; j < k; ++j) {
      if (members[j] != 0) continue;
      std::ptrdiff_t far = -1;
      double far_d = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (members[assignment[i]] < 2) continue;
        const double d = set.weights[i] * squared_distance(pts[i], updated[assignment[i]]);
        if (d > far_d) {
          far_d = d;
          far = static_cast<std::ptrdiff_t>(i);
        }
      }
      updated[j] = far >= 0 ? pts[static_cast<std::size_t>(far)] : centroids[j];
      if (far >= 0) {
        --members[assignment[static_cast<std::size_t>(far)]];
        ++members[j];
      }
    }

    double movement = 0.0;
    for (std::size_t j = 0; j < k; ++j)
      movement = std::max(movement, std::sqrt(squared_distance(updated[j], centroids[j])));
    centroids = std::move(updated);
    if (movement < options.tol) break;
  }

  // Probabilities from the final assignment against the final centroids.
  for (std::size_t i = 0; i < n; ++i) assignment[i] = nearest_centroid(pts[i], centroids);
  const double total = std::accumulate(set.weights.begin(), set.weights.end(), 0.0);
  std::vector<double> probs(k, 0.0);
  for (std::size_t i = 0; i < n; ++i) probs[assignment[i]] += set.weights[i];
  for (double& p : probs) p /= total;

  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (probs[a] != probs[b]) return probs[a] > probs[b];
    const auto va = centroids[a].values();
    const auto vb = centroids[b].values();
    return std::lexicographical_compare(va.begin(), va.end(), vb.begin(), vb.end());
  });
  std::vector<std::size_t> relabel(k);
  KMeansResult result;
  for (std::size_t r = 0; r < k; ++r) {
    relabel[order[r]] = r;
    result.output.centroids.push_back(centroids[order[r]]);
    result.output.probs.push_back(probs[order[r]]);
  }
  result.assignment.resize(n);
  for (std::size_t i = 0; i < n; ++i) result.assignment[i] = relabel[assignment[i]];
  result.iterations = iter;
  return result;
}

EnsembleOutput weighted_kmeans(const WeightedTrajectorySet& set, std::size_t k, Rng& rng,
                               const KMeansOptions& options) {
  return weighted_kmeans_detailed(set, k, rng, options).output;
}

EnsembleOutput ensemble_predict(std::span<const golfer::Prediction> predictions, std::size_t k,
                                std::uint64_t seed, const KMeansOptions& options) {
  if (predictions.empty()) throw EmptySetError("ensemble_predict: no predictions");
  WeightedTrajectorySet set;
  for (const auto& p : predictions) {
    for (std::size_t m = 0; m < p.modes(); ++m) {
      set.trajectories.push_back(p.means[m]);
      set.weights.push_back(p.probs[m]);
    }
  }
  if (set.trajectories.size() < k) {
    throw ConfigError("ensemble: k=" + std::to_string(k) + " exceeds the " +
                      std::to_string(set.trajectories.size()) + " pooled modes");
  }
  Rng rng(seed);
  return weighted_kmeans(set, k, rng, options);
}

}  // namespace mnm::ensemble
