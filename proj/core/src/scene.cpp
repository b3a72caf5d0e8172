#include "mnm/scene.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "mnm/errors.hpp"

namespace mnm::scene {

std::string_view to_string(ElementKind kind) {
  switch (kind) {
    case ElementKind::Road: return "road";
    case ElementKind::Agent: return "agent";
    case ElementKind::Ego: return "ego";
    case ElementKind::Goal: return "goal";
  }
  return "road";
}

ElementKind element_kind_from_string(std::string_view name) {
  if (name == "road") return ElementKind::Road;
  if (name == "agent") return ElementKind::Agent;
  if (name == "ego") return ElementKind::Ego;
  if (name == "goal") return ElementKind::Goal;
  throw ParseError("unknown element kind '" + std::string(name) + "'");
}

void validate(const SceneElement& e) {
  if (e.mask.size() != e.tokens.rows()) {
    throw DimensionError("scene element: " + e.tokens.shape_string() + " tokens with mask of " +
                         std::to_string(e.mask.size()));
  }
  if (e.context.rows() != 1) {
    throw DimensionError("scene element: context must be a row, got " + e.context.shape_string());
  }
  if (!e.mask.any()) throw EmptySetError("scene element has no valid token");
  for (std::size_t r = 0; r < e.tokens.rows(); ++r) {
    if (e.mask[r] && !(std::isfinite(e.tokens(r, 0)) && std::isfinite(e.tokens(r, 1)))) {
      throw NumericError("scene element: non-finite position at point " + std::to_string(r));
    }
  }
}

void validate(const Scene& s) {
  validate(s.ego);
  for (const auto& a : s.agents) validate(a);
  for (const auto& r : s.roads) validate(r);
  if (s.future.cols() != 2 || s.future_mask.size() != s.future.rows()) {
    throw DimensionError("scene: future " + s.future.shape_string() + " with mask of " +
                         std::to_string(s.future_mask.size()));
  }
}

GoalConditioning apply_goal_masking(const Matrix& future, Rng& rng, double mask_ratio) {
  if (!(mask_ratio >= 0.0 && mask_ratio <= 1.0)) {
    throw ConfigError("apply_goal_masking: mask_ratio must lie in [0, 1]");
  }
  const std::size_t steps = future.rows();
  std::vector<std::size_t> unmasked;
  for (std::size_t t = 0; t < steps; ++t) {
    if (rng.uniform() < 1.0 - mask_ratio) unmasked.push_back(t);
  }
  // Both draws are always taken so the stream position does not depend on
  // how many steps survived.
  const double survivor_draw = rng.uniform();
  const bool to_agents = rng.uniform() < 0.5;

  std::optional<std::size_t> visible;
  if (!unmasked.empty()) {
    const auto pick = std::min(unmasked.size() - 1,
                               static_cast<std::size_t>(survivor_draw * static_cast<double>(unmasked.size())));
    visible = unmasked[pick];
  }
  return make_goal_conditioning(future, visible,
                                to_agents ? Placement::AgentsSet : Placement::RoadsSet);
}

GoalConditioning make_goal_conditioning(const Matrix& future,
                                        std::optional<std::size_t> visible_step,
                                        Placement placement) {
  GoalConditioning gc;
  gc.masked_future = Matrix(future.rows(), future.cols());
  gc.step_mask = MaskBits(future.rows(), false);
  gc.placement = placement;
  if (visible_step) {
    const std::size_t t = *visible_step;
    if (t >= future.rows()) {
      throw DimensionError("goal conditioning: step " + std::to_string(t) + " beyond horizon " +
                           std::to_string(future.rows()));
    }
    for (std::size_t c = 0; c < future.cols(); ++c) gc.masked_future(t, c) = future(t, c);
    gc.step_mask.set(t, true);
    gc.exclusion_index = t;
  }
  return gc;
}

Matrix kind_context(ElementKind kind, std::size_t d_ctx) {
  if (d_ctx < kElementKinds) throw ConfigError("context width must be at least 4");
  Matrix ctx(1, d_ctx);
  ctx[static_cast<std::size_t>(kind)] = 1.0;
  return ctx;
}

SceneElement encode_goal_element(const GoalConditioning& gc, std::size_t d_in, std::size_t d_ctx) {
  if (d_in < 4) throw ConfigError("goal tokens need d_in >= 4");
  const std::size_t steps = gc.masked_future.rows();
  SceneElement e;
  e.kind = ElementKind::Goal;
  e.tokens = Matrix(steps, d_in);
  e.mask = MaskBits::all_valid(steps);
  e.context = kind_context(ElementKind::Goal, d_ctx);
  for (std::size_t t = 0; t < steps; ++t) {
    const bool visible = gc.step_mask[t];
    e.tokens(t, 0) = visible ? gc.masked_future(t, 0) : 0.0;
    e.tokens(t, 1) = visible ? gc.masked_future(t, 1) : 0.0;
    e.tokens(t, 2) = visible ? 1.0 : 0.0;
    e.tokens(t, 3) = static_cast<double>(t) / static_cast<double>(steps);
  }
  return e;
}

void validate(const GeneratorConfig& c) {
  auto fail = [](const std::string& m) { throw ConfigError("generator: " + m); };
  if (c.min_roads < 1 || c.min_roads > c.max_roads) fail("road count range is empty");
  if (c.min_agents > c.max_agents) fail("agent count range is empty");
  if (c.points_per_polyline < 2) fail("points_per_polyline must be >= 2");
  if (c.history_steps < 2) fail("history_steps must be >= 2");
  if (c.horizon < 1) fail("horizon must be >= 1");
  if (!(c.dt > 0.0)) fail("dt must be positive");
  if (!(c.min_speed >= 0.0 && c.min_speed <= c.max_speed)) fail("speed range is empty");
  if (!(c.noise >= 0.0)) fail("noise must be non-negative");
  if (!(c.max_curvature >= 0.0)) fail("max_curvature must be non-negative");
  if (!(c.curved_fraction >= 0.0 && c.curved_fraction <= 1.0)) fail("curved_fraction outside [0, 1]");
}

namespace {

/// Constant-curvature centerline parameterized by arc length.
struct Arc {
  double x0 = 0.0;
  double y0 = 0.0;
  double heading = 0.0;
  double curvature = 0.0;

  std::pair<double, double> at(double s) const {
    if (std::abs(curvature) < 1e-12) {
      return {x0 + s * std::cos(heading), y0 + s * std::sin(heading)};
    }
    const double th = heading + curvature * s;
    return {x0 + (std::sin(th) - std::sin(heading)) / curvature,
            y0 - (std::cos(th) - std::cos(heading)) / curvature};
  }
  double heading_at(double s) const { return heading + curvature * s; }
};

struct Polyline {
  Arc arc;
  double s_begin = 0.0;
  double s_end = 0.0;
};

std::pair<double, double> jitter(double noise, Rng& rng) {
  if (noise == 0.0) return {0.0, 0.0};
  double jx = noise * rng.normal();
  double jy = noise * rng.normal();
  const double norm = std::hypot(jx, jy);
  const double bound = 2.0 * noise;
  if (norm > bound) {
    jx *= bound / norm;
    jy *= bound / norm;
  }
  return {jx, jy};
}

double draw_curvature(const GeneratorConfig& cfg, Rng& rng) {
  const bool curved = rng.uniform() < cfg.curved_fraction;
  const double k = rng.uniform(-cfg.max_curvature, cfg.max_curvature);
  return curved ? k : 0.0;
}

SceneElement road_element(const Polyline& line, const GeneratorConfig& cfg, Rng& rng) {
  const std::size_t n = cfg.points_per_polyline;
  SceneElement e;
  e.kind = ElementKind::Road;
  e.tokens = Matrix(n, kTokenDim);
  e.mask = MaskBits::all_valid(n);
  e.context = kind_context(ElementKind::Road);
  e.context[4] = line.arc.curvature == 0.0 ? 1.0 : 0.0;
  e.context[5] = line.arc.curvature == 0.0 ? 0.0 : 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double u = static_cast<double>(i) / static_cast<double>(n - 1);
    const double s = line.s_begin + u * (line.s_end - line.s_begin);
    const auto [x, y] = line.arc.at(s);
    double th = line.arc.heading_at(s);
    if (line.s_end < line.s_begin) th += std::numbers::pi;
    e.tokens(i, 0) = x;
    e.tokens(i, 1) = y;
    e.tokens(i, 2) = std::cos(th);
    e.tokens(i, 3) = std::sin(th);
    e.tokens(i, 4) = u;
  }
  // Occasionally truncated polylines exercise the token mask.
  const bool truncated = rng.uniform() < 0.2;
  const auto cut = static_cast<std::size_t>(rng.uniform_int(1, static_cast<std::int64_t>(n / 2)));
  if (truncated && n > 2) {
    for (std::size_t i = n - std::min(cut, n - 2); i < n; ++i) {
      e.mask.set(i, false);
      for (std::size_t c = 0; c < kTokenDim; ++c) e.tokens(i, c) = 0.0;
    }
  }
  return e;
}

/// History positions along `arc` ending at arc length s_now, oldest first.
Matrix history_positions(const Arc& arc, double s_now, double speed, double direction,
                         const GeneratorConfig& cfg, Rng& rng) {
  const std::size_t h = cfg.history_steps;
  Matrix pos(h, 2);
  for (std::size_t i = 0; i < h; ++i) {
    const double back = static_cast<double>(h - 1 - i) * speed * cfg.dt;
    const auto [x, y] = arc.at(s_now - direction * back);
    const auto [jx, jy] = jitter(cfg.noise, rng);
    pos(i, 0) = x + jx;
    pos(i, 1) = y + jy;
  }
  return pos;
}

SceneElement history_element(ElementKind kind, const Matrix& pos, const MaskBits& mask) {
  const std::size_t h = pos.rows();
  SceneElement e;
  e.kind = kind;
  e.tokens = Matrix(h, kTokenDim);
  e.mask = mask;
  e.context = kind_context(kind);
  std::optional<std::size_t> prev;
  for (std::size_t i = 0; i < h; ++i) {
    if (!mask[i]) continue;
    e.tokens(i, 0) = pos(i, 0);
    e.tokens(i, 1) = pos(i, 1);
    if (prev) {
      e.tokens(i, 2) = pos(i, 0) - pos(*prev, 0);
      e.tokens(i, 3) = pos(i, 1) - pos(*prev, 1);
    }
    e.tokens(i, 4) = static_cast<double>(i) / static_cast<double>(h - 1);
    prev = i;
  }
  return e;
}

void translate(SceneElement& e, double ox, double oy) {
  for (std::size_t i = 0; i < e.tokens.rows(); ++i) {
    if (!e.mask[i]) continue;
    e.tokens(i, 0) -= ox;
    e.tokens(i, 1) -= oy;
  }
}

}  // namespace

Scene generate_synthetic_scene(const GeneratorConfig& cfg, Rng& rng) {
  validate(cfg);
  const double dt = cfg.dt;
  const auto hist = static_cast<double>(cfg.history_steps);
  const auto horizon = static_cast<double>(cfg.horizon);

  // Ego lane passes through the world origin heading +x.
  const double ego_speed = rng.uniform(cfg.min_speed, cfg.max_speed);
  Polyline ego_lane{Arc{0.0, 0.0, 0.0, draw_curvature(cfg, rng)}, 0.0, 0.0};
  ego_lane.s_begin = -(ego_speed * dt * hist + 10.0);
  ego_lane.s_end = ego_speed * dt * horizon + 20.0;

  std::vector<Polyline> lanes{ego_lane};
  const auto num_roads = static_cast<std::size_t>(
      rng.uniform_int(static_cast<std::int64_t>(cfg.min_roads), static_cast<std::int64_t>(cfg.max_roads)));
  const double extent = cfg.max_speed * dt * (hist + horizon);
  for (std::size_t r = 1; r < num_roads; ++r) {
    Polyline line;
    if (rng.uniform() < 0.5) {
      // Neighbouring lane concentric with the ego lane.
      const double offsets[] = {-7.0, -3.5, 3.5, 7.0};
      const double off = offsets[rng.uniform_int(4)];
      const double k = ego_lane.arc.curvature;
      line.arc = Arc{0.0, off, 0.0, k / (1.0 - k * off)};
      line.s_begin = ego_lane.s_begin;
      line.s_end = ego_lane.s_end;
    } else {
      line.arc = Arc{rng.uniform(-extent / 2, extent / 2), rng.uniform(-extent / 2, extent / 2),
                     rng.uniform(-std::numbers::pi, std::numbers::pi), draw_curvature(cfg, rng)};
      line.s_begin = -extent / 2;
      line.s_end = extent / 2;
    }
    if (rng.uniform() < 0.25) std::swap(line.s_begin, line.s_end);
    lanes.push_back(line);
  }

  Scene scene;
  for (const Polyline& line : lanes) scene.roads.push_back(road_element(line, cfg, rng));

  // Ego history and ground-truth future.
  const Matrix ego_hist = history_positions(ego_lane.arc, 0.0, ego_speed, 1.0, cfg, rng);
  scene.future = Matrix(cfg.horizon, 2);
  scene.future_mask = MaskBits::all_valid(cfg.horizon);
  for (std::size_t k = 0; k < cfg.horizon; ++k) {
    const auto [x, y] = ego_lane.arc.at(static_cast<double>(k + 1) * ego_speed * dt);
    const auto [jx, jy] = jitter(cfg.noise, rng);
    scene.future(k, 0) = x + jx;
    scene.future(k, 1) = y + jy;
  }
  scene.ego = history_element(ElementKind::Ego, ego_hist, MaskBits::all_valid(cfg.history_steps));

  const auto num_agents = static_cast<std::size_t>(
      rng.uniform_int(static_cast<std::int64_t>(cfg.min_agents), static_cast<std::int64_t>(cfg.max_agents)));
  for (std::size_t a = 0; a < num_agents; ++a) {
    const Polyline& line = lanes[rng.uniform_int(lanes.size())];
    const double direction = line.s_end >= line.s_begin ? 1.0 : -1.0;
    const double s_now = rng.uniform(std::min(line.s_begin, line.s_end), std::max(line.s_begin, line.s_end));
    const double speed = rng.uniform(cfg.min_speed, cfg.max_speed);
    const Matrix pos = history_positions(line.arc, s_now, speed, direction, cfg, rng);
    MaskBits mask = MaskBits::all_valid(cfg.history_steps);
    const bool late_start = rng.uniform() < 0.3;
    const auto missing = static_cast<std::size_t>(
        rng.uniform_int(1, static_cast<std::int64_t>(cfg.history_steps) - 1));
    if (late_start) {
      for (std::size_t i = 0; i < missing; ++i) mask.set(i, false);
    }
    scene.agents.push_back(history_element(ElementKind::Agent, pos, mask));
  }

  // Re-center on the ego's last observed position.
  const double ox = ego_hist(cfg.history_steps - 1, 0);
  const double oy = ego_hist(cfg.history_steps - 1, 1);
  translate(scene.ego, ox, oy);
  for (auto& e : scene.agents) translate(e, ox, oy);
  for (auto& e : scene.roads) translate(e, ox, oy);
  for (std::size_t k = 0; k < cfg.horizon; ++k) {
    scene.future(k, 0) -= ox;
    scene.future(k, 1) -= oy;
  }
  return scene;
}

std::vector<Scene> generate_dataset(const GeneratorConfig& cfg) {
  validate(cfg);
  std::vector<Scene> scenes;
  scenes.reserve(cfg.num_scenes);
  for (std::size_t i = 0; i < cfg.num_scenes; ++i) {
    Rng rng(derive_seed(cfg.seed, i));
    scenes.push_back(generate_synthetic_scene(cfg, rng));
  }
  return scenes;
}

Matrix ego_history_positions(const Scene& scene) {
  const SceneElement& ego = scene.ego;
  Matrix pos(ego.mask.count(), 2);
  std::size_t k = 0;
  for (std::size_t i = 0; i < ego.tokens.rows(); ++i) {
    if (!ego.mask[i]) continue;
    pos(k, 0) = ego.tokens(i, 0);
    pos(k, 1) = ego.tokens(i, 1);
    ++k;
  }
  return pos;
}

Matrix constant_velocity_baseline(const Scene& scene) {
  const Matrix hist = ego_history_positions(scene);
  if (hist.rows() == 0) throw EmptySetError("constant velocity baseline: empty ego history");
  const std::size_t last = hist.rows() - 1;
  double vx = 0.0;
  double vy = 0.0;
  if (hist.rows() >= 2) {
    vx = hist(last, 0) - hist(last - 1, 0);
    vy = hist(last, 1) - hist(last - 1, 1);
  }
  Matrix out(scene.horizon(), 2);
  for (std::size_t k = 0; k < out.rows(); ++k) {
    const auto steps = static_cast<double>(k + 1);
    out(k, 0) = hist(last, 0) + steps * vx;
    out(k, 1) = hist(last, 1) + steps * vy;
  }
  return out;
}

}  // namespace mnm::scene
