#include "mnm/golfer.hpp"

#include <cmath>

#include "mnm/errors.hpp"

namespace mnm::golfer {

using scene::ElementKind;
using scene::Placement;
using scene::Scene;
using scene::SceneElement;

void validate(const GolferConfig& c) {
  auto fail = [](const std::string& m) { throw ConfigError("model: " + m); };
  if (c.d == 0 || c.heads == 0) fail("d and heads must be positive");
  if (c.d % c.heads != 0) {
    fail("d=" + std::to_string(c.d) + " is not divisible by heads=" + std::to_string(c.heads));
  }
  if (c.modes < 1) fail("modes (K) must be >= 1");
  if (c.horizon < 1) fail("horizon (T) must be >= 1");
  if (c.d_in < 4) fail("d_in must be >= 4");
  if (c.d_ctx < scene::kElementKinds) fail("d_ctx must be >= 4");
  if (!(c.position_scale > 0.0)) fail("position_scale must be positive");
}

block::BlockConfig fe_block_config(const GolferConfig& c) {
  block::BlockConfig b;
  b.d = c.d;
  b.heads = c.heads;
  b.d_ff = c.ff_width();
  b.mix = block::MixKind::MaxPool;
  b.match = block::MatchKind::Concat;
  b.activation = c.activation;
  b.with_query = true;
  return b;
}

block::BlockConfig interaction_block_config(const GolferConfig& c) {
  block::BlockConfig b = fe_block_config(c);
  b.match = block::MatchKind::Product;
  b.product_projection = c.interaction_projection;
  return b;
}

namespace {

Linear init_linear(std::size_t in, std::size_t out, Rng& rng) {
  return {Parameter(uniform_matrix(in, out, 1.0 / std::sqrt(static_cast<double>(in)), rng)),
          Parameter(Matrix(1, out))};
}

Var apply(Tape& t, Var x, const Linear& lin) {
  return add_row(t, matmul(t, x, t.param(lin.weight)), t.param(lin.bias));
}

Var mlp(Tape& t, Var x, const Linear& hidden, const Linear& out, Activation act) {
  return apply(t, activation(t, apply(t, x, hidden), act), out);
}

const ElementProjection& projection_for(const ModelParams& p, ElementKind kind) {
  return p.projections.at(static_cast<std::size_t>(kind));
}

/// Latents of one element set, with the null latent standing in when no
/// element carries a valid token.
Var element_set(Tape& t, const std::vector<const SceneElement*>& elements, const Parameter& null_latent,
                const ModelParams& params, MaskBits& mask) {
  std::vector<Var> rows;
  mask = MaskBits();
  for (const SceneElement* e : elements) {
    if (e->has_valid_token()) {
      rows.push_back(encode_element(t, *e, params));
      mask.push_back(true);
    } else {
      rows.push_back(t.constant(Matrix(1, params.config.d)));
      mask.push_back(false);
    }
  }
  if (!mask.any()) {
    rows.assign(1, t.param(null_latent));
    mask = MaskBits::all_valid(1);
  }
  return stack_rows(t, rows);
}

}  // namespace

ModelParams init_model(const GolferConfig& c) {
  validate(c);
  Rng rng(c.seed);
  ModelParams p;
  p.config = c;
  for (std::size_t k = 0; k < scene::kElementKinds; ++k) {
    ElementProjection proj;
    proj.tokens = init_linear(c.d_in, c.d, rng);
    proj.context = init_linear(c.d_ctx, c.d, rng);
    p.projections.push_back(std::move(proj));
  }
  const auto fe_cfg = fe_block_config(c);
  const auto int_cfg = interaction_block_config(c);
  for (std::size_t i = 0; i < c.fe_depth; ++i) p.fe_blocks.push_back(block::init_block(fe_cfg, rng));
  for (std::size_t i = 0; i < c.interact_depth; ++i) {
    p.road_interaction.push_back(block::init_block(int_cfg, rng));
  }
  for (std::size_t i = 0; i < c.interact_depth; ++i) {
    p.agent_interaction.push_back(block::init_block(int_cfg, rng));
  }
  const double null_bound = 1.0 / std::sqrt(static_cast<double>(c.d));
  p.null_road = Parameter(uniform_matrix(1, c.d, null_bound, rng));
  p.null_agent = Parameter(uniform_matrix(1, c.d, null_bound, rng));
  p.fusion_hidden = init_linear(3 * c.d, c.fusion_width(), rng);
  p.fusion_out = init_linear(c.fusion_width(), c.d, rng);
  for (std::size_t k = 0; k < c.modes; ++k) {
    p.branch_hidden.push_back(init_linear(c.d, c.decoder_width(), rng));
    p.branch_out.push_back(init_linear(c.decoder_width(), 4 * c.horizon, rng));
  }
  p.class_hidden = init_linear(c.d, c.decoder_width(), rng);
  p.class_out = init_linear(c.decoder_width(), c.modes, rng);
  return p;
}

std::size_t parameter_count(const ModelParams& params) {
  std::size_t n = 0;
  params.for_each([&n](const std::string&, const Parameter& p) { n += p.value.size(); });
  return n;
}

std::size_t parameter_count(const GolferConfig& config) { return parameter_count(init_model(config)); }

block::QueryOutput fe_block(Tape& t, Var tokens, Var context, const MaskBits& mask,
                            const block::BlockParams& p) {
  if (p.config.mix != block::MixKind::MaxPool || p.config.match != block::MatchKind::Concat) {
    throw ConfigError("fe_block: expects MaxPool mix with Concat match");
  }
  return block::mnm_query(t, tokens, context, mask, p);
}

Matrix feature_scale(ElementKind kind, const GolferConfig& c) {
  Matrix s(1, c.d_in, 1.0);
  const double inv = 1.0 / c.position_scale;
  s[0] = inv;
  s[1] = inv;
  if (kind == ElementKind::Agent || kind == ElementKind::Ego) {
    s[2] = inv;
    s[3] = inv;
  }
  return s;
}

Var encode_element(Tape& t, const SceneElement& e, const ModelParams& params) {
  const GolferConfig& c = params.config;
  if (!e.mask.any()) throw EmptySetError("encode_element: element has no valid token");
  if (e.tokens.cols() != c.d_in || e.context.cols() != c.d_ctx) {
    throw DimensionError("encode_element: tokens " + e.tokens.shape_string() + " / context " +
                         e.context.shape_string() + " for d_in=" + std::to_string(c.d_in) +
                         ", d_ctx=" + std::to_string(c.d_ctx));
  }
  const Matrix scale = feature_scale(e.kind, c);
  Matrix scaled = e.tokens;
  for (std::size_t r = 0; r < scaled.rows(); ++r)
    for (std::size_t col = 0; col < scaled.cols(); ++col) scaled(r, col) *= scale[col];

  const ElementProjection& proj = projection_for(params, e.kind);
  Var x = apply(t, t.constant(std::move(scaled)), proj.tokens);
  Var ctx = apply(t, t.constant(e.context), proj.context);
  for (const auto& blk : params.fe_blocks) {
    auto out = fe_block(t, x, ctx, e.mask, blk);
    x = out.tokens;
    ctx = out.context;
  }
  return maximum(t, masked_max_pool(t, x, e.mask), ctx);
}

Var interact(Tape& t, Var ego_latent, Var latents, const MaskBits& mask,
             const std::vector<block::BlockParams>& blocks) {
  if (!mask.any()) throw EmptySetError("interact: no valid latent");
  Var x = latents;
  Var c = ego_latent;
  for (const auto& blk : blocks) {
    auto out = block::mnm_query(t, x, c, mask, blk);
    x = out.tokens;
    c = out.context;
  }
  return c;
}

Var encode_scene(Tape& t, const Scene& s, const SceneElement* goal, Placement placement,
                 const ModelParams& params) {
  Var f_e = encode_element(t, s.ego, params);

  std::vector<const SceneElement*> roads;
  std::vector<const SceneElement*> agents;
  for (const auto& r : s.roads) roads.push_back(&r);
  for (const auto& a : s.agents) agents.push_back(&a);
  if (goal != nullptr) (placement == Placement::RoadsSet ? roads : agents).push_back(goal);

  MaskBits road_mask;
  MaskBits agent_mask;
  Var road_latents = element_set(t, roads, params.null_road, params, road_mask);
  Var agent_latents = element_set(t, agents, params.null_agent, params, agent_mask);
  Var f_r = interact(t, f_e, road_latents, road_mask, params.road_interaction);
  Var f_a = interact(t, f_e, agent_latents, agent_mask, params.agent_interaction);

  const Var parts[] = {f_e, f_r, f_a};
  return mlp(t, concat_cols(t, parts), params.fusion_hidden, params.fusion_out,
             params.config.activation);
}

ForwardVars decode(Tape& t, Var f_enc, const ModelParams& params) {
  const GolferConfig& c = params.config;
  ForwardVars out;
  const double log_scale = std::log(c.position_scale);
  for (std::size_t k = 0; k < c.modes; ++k) {
    Var raw = mlp(t, f_enc, params.branch_hidden[k], params.branch_out[k], c.activation);
    Var steps = reshape(t, raw, c.horizon, 4);
    out.means.push_back(scale(t, slice_cols(t, steps, 0, 2), c.position_scale));
    // Sigmas leave the decoder in position units too: log σ_m = raw + log(scale).
    Var log_sigma = add(t, slice_cols(t, steps, 2, 2), t.constant(Matrix(c.horizon, 2, log_scale)));
    out.log_sigmas.push_back(clamp(t, log_sigma, kLogSigmaMin, kLogSigmaMax));
  }
  out.logits = mlp(t, f_enc, params.class_hidden, params.class_out, c.activation);
  return out;
}

ForwardVars forward(Tape& t, const Scene& s, const scene::GoalConditioning* goal,
                    const ModelParams& params) {
  if (goal == nullptr) return decode(t, encode_scene(t, s, nullptr, Placement::AgentsSet, params), params);
  const SceneElement element =
      scene::encode_goal_element(*goal, params.config.d_in, params.config.d_ctx);
  return decode(t, encode_scene(t, s, &element, goal->placement, params), params);
}

Prediction to_prediction(const Tape& t, const ForwardVars& vars) {
  Prediction p;
  for (Var m : vars.means) p.means.push_back(t.value(m));
  for (Var s : vars.log_sigmas) p.log_sigmas.push_back(t.value(s));
  const Matrix& logits = t.value(vars.logits);
  p.logits.assign(logits.values().begin(), logits.values().end());
  p.probs = masked_softmax(p.logits, MaskBits::all_valid(p.logits.size()));
  return p;
}

Matrix encode_element(const SceneElement& e, const ModelParams& params) {
  Tape t(false);
  return t.value(encode_element(t, e, params));
}

Matrix encode_scene(const Scene& s, const SceneElement* goal, Placement placement,
                    const ModelParams& params) {
  Tape t(false);
  return t.value(encode_scene(t, s, goal, placement, params));
}

Prediction decode(const Matrix& f_enc, const ModelParams& params) {
  Tape t(false);
  return to_prediction(t, decode(t, t.constant(f_enc), params));
}

Prediction forward(const Scene& s, const scene::GoalConditioning* goal, const ModelParams& params) {
  Tape t(false);
  return to_prediction(t, forward(t, s, goal, params));
}

}  // namespace mnm::golfer
