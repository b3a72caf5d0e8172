#include "golfer_cli/grad_suite.hpp"

#include <functional>

#include "mnm/autodiff.hpp"
#include "mnm/block.hpp"
#include "mnm/gradcheck.hpp"
#include "mnm/loss.hpp"
#include "mnm/optimizer.hpp"
#include "mnm/random.hpp"
#include "mnm/scene.hpp"

namespace golfer_cli {

using namespace mnm;

namespace {

Matrix random_matrix(Rng& rng, std::size_t r, std::size_t c) { return uniform_matrix(r, c, 1.0, rng); }

MaskBits partial_mask(std::size_t n) {
  MaskBits m(n, true);
  if (n > 2) m.set(n - 1, false);
  return m;
}

GradSuiteEntry record(std::string name, const GradCheckReport& r) {
  return {std::move(name), r.max_rel_error, r.coordinates, r.max_rel_error < kGradTolerance};
}

struct Primitive {
  std::string name;
  std::vector<std::pair<std::size_t, std::size_t>> shapes;
  InputFunction f;
};

std::vector<Primitive> primitives() {
  const Matrix c34 = [] {
    Rng rng(11);
    return uniform_matrix(3, 4, 1.0, rng);
  }();
  std::vector<Primitive> p;
  p.push_back({"matmul", {{3, 4}, {4, 2}}, [](Tape& t, auto in) { return matmul(t, in[0], in[1]); }});
  p.push_back({"add", {{3, 4}, {3, 4}}, [](Tape& t, auto in) { return add(t, in[0], in[1]); }});
  p.push_back({"add_row", {{3, 4}, {1, 4}}, [](Tape& t, auto in) { return add_row(t, in[0], in[1]); }});
  p.push_back({"mul_row", {{3, 4}, {1, 4}}, [](Tape& t, auto in) { return mul_row(t, in[0], in[1]); }});
  p.push_back({"scale", {{3, 4}}, [](Tape& t, auto in) { return scale(t, in[0], -1.7); }});
  p.push_back({"mul_const", {{3, 4}}, [c34](Tape& t, auto in) { return mul_const(t, in[0], c34); }});
  p.push_back({"transpose", {{3, 4}}, [](Tape& t, auto in) { return transpose(t, in[0]); }});
  p.push_back({"layer_norm", {{4, 6}, {1, 6}, {1, 6}},
               [](Tape& t, auto in) { return layer_norm(t, in[0], in[1], in[2]); }});
  p.push_back({"gelu", {{3, 5}}, [](Tape& t, auto in) { return activation(t, in[0], Activation::GELU); }});
  p.push_back({"relu", {{3, 5}}, [](Tape& t, auto in) { return activation(t, in[0], Activation::ReLU); }});
  p.push_back({"masked_softmax_rows", {{4, 4}}, [](Tape& t, auto in) {
                 return masked_softmax_rows(t, in[0], partial_mask(4), partial_mask(4));
               }});
  p.push_back({"masked_max_pool", {{5, 3}},
               [](Tape& t, auto in) { return masked_max_pool(t, in[0], partial_mask(5)); }});
  p.push_back({"maximum", {{3, 4}, {3, 4}}, [](Tape& t, auto in) { return maximum(t, in[0], in[1]); }});
  p.push_back({"concat_cols", {{3, 2}, {3, 3}}, [](Tape& t, auto in) { return concat_cols(t, in); }});
  p.push_back({"slice_cols", {{3, 5}}, [](Tape& t, auto in) { return slice_cols(t, in[0], 1, 3); }});
  p.push_back({"stack_rows", {{1, 3}, {1, 3}}, [](Tape& t, auto in) { return stack_rows(t, in); }});
  p.push_back({"repeat_rows", {{1, 3}}, [](Tape& t, auto in) { return repeat_rows(t, in[0], 4); }});
  p.push_back({"reshape", {{1, 8}}, [](Tape& t, auto in) { return reshape(t, in[0], 4, 2); }});
  p.push_back({"clamp", {{3, 4}}, [](Tape& t, auto in) { return clamp(t, scale(t, in[0], 3.0), -2.0, 2.0); }});
  p.push_back({"dot_const", {{3, 4}}, [c34](Tape& t, auto in) { return dot_const(t, in[0], c34); }});
  return p;
}

std::vector<Parameter*> block_parameters(block::BlockParams& p) {
  std::vector<Parameter*> out;
  p.for_each([&out](const std::string&, Parameter& param) { out.push_back(&param); });
  return out;
}

struct BlockCase {
  std::string name;
  block::MixKind mix;
  block::MatchKind match;
  bool query;
  block::ProductProjection projection = block::ProductProjection::Identity;
  bool learned_qk = false;
};

std::vector<BlockCase> block_cases() {
  using block::MatchKind;
  using block::MixKind;
  return {
      {"block.attention_matmul", MixKind::Attention, MatchKind::AttentionMatmul, false},
      {"block.attention_matmul_learned_qk", MixKind::Attention, MatchKind::AttentionMatmul, false,
       block::ProductProjection::Identity, true},
      {"block.maxpool_concat", MixKind::MaxPool, MatchKind::Concat, false},
      {"block.maxpool_product", MixKind::MaxPool, MatchKind::Product, false},
      {"block.maxpool_product_learned", MixKind::MaxPool, MatchKind::Product, false,
       block::ProductProjection::Learned},
      {"block.query_maxpool_concat", MixKind::MaxPool, MatchKind::Concat, true},
      {"block.query_maxpool_product", MixKind::MaxPool, MatchKind::Product, true},
  };
}

GradSuiteEntry check_block(const BlockCase& bc, std::uint64_t seed) {
  block::BlockConfig cfg;
  cfg.d = 16;
  cfg.heads = 2;
  cfg.mix = bc.mix;
  cfg.match = bc.match;
  cfg.with_query = bc.query;
  cfg.product_projection = bc.projection;
  cfg.learned_qk = bc.learned_qk;
  Rng rng(derive_seed(seed, 100));
  block::BlockParams params = block::init_block(cfg, rng);
  // Non-trivial norm affine terms so their gradients are exercised.
  params.for_each([&rng](const std::string&, Parameter& p) {
    for (double& v : p.value.values()) v += rng.uniform(-0.1, 0.1);
  });
  Parameter x(uniform_matrix(5, cfg.d, 1.0, rng));
  Parameter c(uniform_matrix(1, cfg.d, 1.0, rng));
  const MaskBits mask = partial_mask(5);
  std::vector<Parameter*> all = block_parameters(params);
  all.push_back(&x);
  if (bc.query) all.push_back(&c);
  TapeFunction f = [&](Tape& t) {
    if (!bc.query) return block::mnm_basic(t, t.param(x), mask, params);
    auto out = block::mnm_query(t, t.param(x), t.param(c), mask, params);
    return concat_cols(t, std::vector<Var>{reshape(t, out.tokens, 1, 5 * cfg.d), out.context});
  };
  return record(bc.name, gradient_check(f, all, seed));
}

scene::Scene tiny_scene(std::uint64_t seed, std::size_t horizon) {
  scene::GeneratorConfig g;
  g.seed = seed;
  g.min_roads = 2;
  g.max_roads = 2;
  g.min_agents = 1;
  g.max_agents = 2;
  g.points_per_polyline = 5;
  g.history_steps = 4;
  g.horizon = horizon;
  Rng rng(derive_seed(seed, 200));
  return scene::generate_synthetic_scene(g, rng);
}

}  // namespace

golfer::GolferConfig tiny_golfer_config() {
  golfer::GolferConfig cfg;
  cfg.d = 16;
  cfg.heads = 2;
  cfg.interact_depth = 1;
  cfg.modes = 3;
  cfg.horizon = 4;
  return cfg;
}

std::vector<GradSuiteEntry> run_grad_suite(std::uint64_t seed) {
  std::vector<GradSuiteEntry> out;
  std::uint64_t case_index = 0;
  for (const Primitive& p : primitives()) {
    Rng rng(derive_seed(seed, case_index++));
    std::vector<Matrix> inputs;
    for (auto [r, c] : p.shapes) inputs.push_back(random_matrix(rng, r, c));
    out.push_back(record(p.name, gradient_check(p.f, std::move(inputs), seed)));
  }
  for (const BlockCase& bc : block_cases()) out.push_back(check_block(bc, seed));

  // Full model: forward + total loss with a revealed goal step.
  golfer::GolferConfig cfg = tiny_golfer_config();
  cfg.seed = seed;
  golfer::ModelParams params = golfer::init_model(cfg);
  const scene::Scene s = tiny_scene(seed, cfg.horizon);
  const scene::GoalConditioning goal =
      scene::make_goal_conditioning(s.future, std::size_t{1}, scene::Placement::AgentsSet);
  std::vector<Parameter*> all;
  for (const train::ParamRef& r : train::collect_parameters(params)) all.push_back(r.param);
  TapeFunction f = [&](Tape& t) {
    const golfer::ForwardVars vars = golfer::forward(t, s, &goal, params);
    return train::total_loss(t, vars, s.future, s.future_mask, goal.exclusion_index, 1.0).total;
  };
  out.push_back(record("golfer.forward_total_loss", gradient_check(f, all, seed)));
  return out;
}

}  // namespace golfer_cli
