#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "mnm/matrix.hpp"
#include "mnm/random.hpp"

namespace mnm::scene {

enum class ElementKind { Road = 0, Agent = 1, Ego = 2, Goal = 3 };
inline constexpr std::size_t kElementKinds = 4;

std::string_view to_string(ElementKind kind);
ElementKind element_kind_from_string(std::string_view name);

inline constexpr std::size_t kTokenDim = 8;
inline constexpr std::size_t kContextDim = 8;

// Token layouts (kTokenDim columns, unused columns zero):
//   Road         x, y, tangent_x, tangent_y, point_index / (P-1)
//   Agent / Ego  x, y, dx, dy (displacement from the previous valid step, m),
//                step_index / (history_steps-1)
//   Goal         x, y, visible, step_index / T
// Context: one-hot kind in columns 0..3; roads add straight/curved flags in
// columns 4 and 5.

/// A polyline or agent history: point tokens, shared context, token validity.
struct SceneElement {
  ElementKind kind = ElementKind::Road;
  Matrix tokens;   // P×d_in
  MaskBits mask;   // P
  Matrix context;  // 1×d_ctx

  std::size_t points() const { return tokens.rows(); }
  bool has_valid_token() const { return mask.any(); }
};

/// Ego-centric scene: the ego's last valid history point is the origin and its
/// heading is +x.
struct Scene {
  SceneElement ego;
  std::vector<SceneElement> agents;
  std::vector<SceneElement> roads;
  Matrix future;  // T×2 ground-truth ego positions
  MaskBits future_mask;

  std::size_t horizon() const { return future.rows(); }
};

/// Checks the element/scene invariants; throws DimensionError or EmptySetError.
void validate(const SceneElement& element);
void validate(const Scene& scene);

enum class Placement { AgentsSet, RoadsSet };

/// Partially revealed target trajectory fed back as an extra scene element.
struct GoalConditioning {
  Matrix masked_future;  // T×2, masked steps zeroed
  MaskBits step_mask;    // true = visible; at most one bit set
  Placement placement = Placement::AgentsSet;
  std::optional<std::size_t> exclusion_index;
};

/// Each step is revealed independently with probability 1 − mask_ratio; when
/// more than one survives a single survivor is kept uniformly at random.
/// Placement is a fair coin. The number of draws is independent of
/// mask_ratio, so runs that differ only in ratio stay aligned.
GoalConditioning apply_goal_masking(const Matrix& future, Rng& rng, double mask_ratio);

/// Deterministic conditioning revealing exactly `visible_step` (or nothing).
GoalConditioning make_goal_conditioning(const Matrix& future,
                                        std::optional<std::size_t> visible_step,
                                        Placement placement);

SceneElement encode_goal_element(const GoalConditioning& gc, std::size_t d_in = kTokenDim,
                                 std::size_t d_ctx = kContextDim);

/// Context tag vector of a kind (no learned parameters).
Matrix kind_context(ElementKind kind, std::size_t d_ctx = kContextDim);

struct GeneratorConfig {
  std::uint64_t seed = 1;
  std::size_t num_scenes = 256;
  std::size_t min_roads = 3;
  std::size_t max_roads = 6;
  std::size_t min_agents = 1;
  std::size_t max_agents = 4;
  std::size_t points_per_polyline = 20;
  std::size_t history_steps = 10;
  std::size_t horizon = 16;
  double dt = 0.5;           // s
  double min_speed = 2.0;    // m/s
  double max_speed = 15.0;   // m/s
  double noise = 0.2;        // m, jitter radius is clamped to 2·noise
  double max_curvature = 0.03;  // 1/m
  double curved_fraction = 0.5;
};

void validate(const GeneratorConfig& cfg);

Scene generate_synthetic_scene(const GeneratorConfig& cfg, Rng& rng);

/// cfg.num_scenes scenes; scene i uses its own stream derive_seed(cfg.seed, i).
std::vector<Scene> generate_dataset(const GeneratorConfig& cfg);

/// Ego positions from the history tokens (valid steps only, oldest first).
Matrix ego_history_positions(const Scene& scene);

/// Straight-line extrapolation from the last two valid ego history points.
Matrix constant_velocity_baseline(const Scene& scene);

}  // namespace mnm::scene
