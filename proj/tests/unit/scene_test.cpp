#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "mnm/errors.hpp"
#include "mnm/random.hpp"
#include "mnm/scene.hpp"
#include "mnm/scene_io.hpp"

using namespace mnm;
using namespace mnm::scene;

namespace {

Matrix line_future(std::size_t steps) {
  Matrix f(steps, 2);
  for (std::size_t t = 0; t < steps; ++t) {
    f(t, 0) = 1.5 * static_cast<double>(t + 1);
    f(t, 1) = -0.25 * static_cast<double>(t);
  }
  return f;
}

void expect_same_element(const SceneElement& a, const SceneElement& b) {
  EXPECT_EQ(a.kind, b.kind);
  EXPECT_EQ(a.tokens, b.tokens);
  EXPECT_EQ(a.mask, b.mask);
  EXPECT_EQ(a.context, b.context);
}

void expect_same_scene(const Scene& a, const Scene& b) {
  expect_same_element(a.ego, b.ego);
  ASSERT_EQ(a.agents.size(), b.agents.size());
  ASSERT_EQ(a.roads.size(), b.roads.size());
  for (std::size_t i = 0; i < a.agents.size(); ++i) expect_same_element(a.agents[i], b.agents[i]);
  for (std::size_t i = 0; i < a.roads.size(); ++i) expect_same_element(a.roads[i], b.roads[i]);
  EXPECT_EQ(a.future, b.future);
  EXPECT_EQ(a.future_mask, b.future_mask);
}

}  // namespace

TEST(GoalMasking, FullRatioMasksEverything) {
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    const GoalConditioning gc = apply_goal_masking(line_future(16), rng, 1.0);
    EXPECT_EQ(gc.step_mask.count(), 0u);
    EXPECT_FALSE(gc.exclusion_index.has_value());
    for (double v : gc.masked_future.values()) EXPECT_EQ(v, 0.0);
  }
}

TEST(GoalMasking, AtMostOneStepSurvives) {
  const Matrix future = line_future(16);
  for (std::uint64_t seed = 0; seed < 500; ++seed) {
    Rng rng(seed);
    const GoalConditioning gc = apply_goal_masking(future, rng, 0.85);
    ASSERT_LE(gc.step_mask.count(), 1u);
    if (gc.exclusion_index) {
      const std::size_t t = *gc.exclusion_index;
      EXPECT_TRUE(gc.step_mask[t]);
      EXPECT_EQ(gc.masked_future(t, 0), future(t, 0));
      EXPECT_EQ(gc.masked_future(t, 1), future(t, 1));
    }
  }
}

TEST(GoalMasking, FullyMaskedFrequencyMatchesClosedForm) {
  const Matrix future = line_future(16);
  Rng rng(2024);
  int fully_masked = 0;
  int agents = 0;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    const GoalConditioning gc = apply_goal_masking(future, rng, 0.85);
    fully_masked += gc.step_mask.count() == 0 ? 1 : 0;
    agents += gc.placement == Placement::AgentsSet ? 1 : 0;
  }
  EXPECT_NEAR(static_cast<double>(fully_masked) / draws, std::pow(0.85, 16), 0.01);
  EXPECT_NEAR(static_cast<double>(agents) / draws, 0.5, 0.02);
}

TEST(GoalMasking, ZeroRatioRevealsUniformStep) {
  Rng rng(3);
  std::vector<int> counts(4, 0);
  for (int i = 0; i < 4000; ++i) ++counts[*apply_goal_masking(line_future(4), rng, 0.0).exclusion_index];
  for (int c : counts) EXPECT_NEAR(c / 4000.0, 0.25, 0.03);
}

TEST(GoalMasking, ConsumesFixedNumberOfDraws) {
  Rng a(9), b(9);
  apply_goal_masking(line_future(16), a, 0.85);
  apply_goal_masking(line_future(16), b, 1.0);
  EXPECT_EQ(a.uniform(), b.uniform());
}

TEST(GoalElement, FullyMaskedHasNoPositions) {
  const GoalConditioning gc = make_goal_conditioning(line_future(5), std::nullopt, Placement::AgentsSet);
  const SceneElement e = encode_goal_element(gc);
  EXPECT_EQ(e.kind, ElementKind::Goal);
  for (std::size_t t = 0; t < 5; ++t) {
    EXPECT_EQ(e.tokens(t, 0), 0.0);
    EXPECT_EQ(e.tokens(t, 1), 0.0);
    EXPECT_EQ(e.tokens(t, 2), 0.0);
  }
}

TEST(GoalElement, VisibleStepCarriesPositionAndTime) {
  Matrix future(4, 2);
  future(2, 0) = 3.0;
  future(2, 1) = 4.0;
  const SceneElement e = encode_goal_element(make_goal_conditioning(future, 2, Placement::RoadsSet));
  EXPECT_EQ(e.tokens(2, 0), 3.0);
  EXPECT_EQ(e.tokens(2, 1), 4.0);
  EXPECT_EQ(e.tokens(2, 2), 1.0);
  EXPECT_EQ(e.tokens(2, 3), 0.5);
  for (std::size_t t : {0u, 1u, 3u}) {
    EXPECT_EQ(e.tokens(t, 2), 0.0);
    EXPECT_EQ(e.tokens(t, 3), static_cast<double>(t) / 4.0);
  }
}

TEST(GoalElement, VisibleStepsRoundTrip) {
  Rng rng(4);
  const Matrix future = uniform_matrix(16, 2, 30.0, rng);
  for (int i = 0; i < 200; ++i) {
    const GoalConditioning gc = apply_goal_masking(future, rng, 0.5);
    const SceneElement e = encode_goal_element(gc);
    for (std::size_t t = 0; t < 16; ++t) {
      if (e.tokens(t, 2) != 1.0) continue;
      EXPECT_EQ(e.tokens(t, 0), gc.masked_future(t, 0));
      EXPECT_EQ(e.tokens(t, 1), gc.masked_future(t, 1));
    }
  }
}

TEST(Generator, SameSeedSameScene) {
  const GeneratorConfig cfg;
  Rng a(77), b(77);
  expect_same_scene(generate_synthetic_scene(cfg, a), generate_synthetic_scene(cfg, b));
}

TEST(Generator, ScenesSatisfyInvariants) {
  GeneratorConfig cfg;
  cfg.num_scenes = 100;
  for (const Scene& s : generate_dataset(cfg)) {
    EXPECT_NO_THROW(validate(s));
    EXPECT_GE(s.roads.size(), cfg.min_roads);
    EXPECT_LE(s.roads.size(), cfg.max_roads);
    EXPECT_GE(s.agents.size(), cfg.min_agents);
    EXPECT_LE(s.agents.size(), cfg.max_agents);
    EXPECT_EQ(s.horizon(), cfg.horizon);
    // Ego-centric frame: the last history point is the origin.
    const Matrix hist = ego_history_positions(s);
    EXPECT_EQ(hist(hist.rows() - 1, 0), 0.0);
    EXPECT_EQ(hist(hist.rows() - 1, 1), 0.0);
  }
}

TEST(Generator, FutureStepsAreBounded) {
  GeneratorConfig cfg;
  cfg.num_scenes = 100;
  const double bound = cfg.max_speed * cfg.dt + 4.0 * cfg.noise;
  for (const Scene& s : generate_dataset(cfg)) {
    double px = 0.0, py = 0.0;
    for (std::size_t t = 0; t < s.horizon(); ++t) {
      EXPECT_LE(std::hypot(s.future(t, 0) - px, s.future(t, 1) - py), bound + 1e-12);
      px = s.future(t, 0);
      py = s.future(t, 1);
    }
  }
}

TEST(Generator, NoiselessStraightMotionIsConstantVelocity) {
  GeneratorConfig cfg;
  cfg.noise = 0.0;
  cfg.max_curvature = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const Scene s = generate_synthetic_scene(cfg, rng);
    const Matrix hist = ego_history_positions(s);
    const std::size_t last = hist.rows() - 1;
    const double vx = hist(last, 0) - hist(last - 1, 0);
    const double vy = hist(last, 1) - hist(last - 1, 1);
    EXPECT_GT(vx, 0.0);
    EXPECT_NEAR(vy, 0.0, 1e-12);
    const Matrix cv = constant_velocity_baseline(s);
    for (std::size_t t = 0; t < s.horizon(); ++t) {
      const double k = static_cast<double>(t + 1);
      EXPECT_NEAR(s.future(t, 0), k * vx, 1e-9);
      EXPECT_NEAR(s.future(t, 1), k * vy, 1e-9);
      EXPECT_NEAR(cv(t, 0), s.future(t, 0), 1e-9);
    }
  }
}

TEST(Generator, RejectsEmptyRanges) {
  GeneratorConfig cfg;
  cfg.min_roads = 5;
  cfg.max_roads = 2;
  EXPECT_THROW(generate_dataset(cfg), ConfigError);
}

TEST(DatasetIo, RoundTripIsExact) {
  GeneratorConfig cfg;
  cfg.num_scenes = 100;
  const auto scenes = generate_dataset(cfg);
  std::stringstream buf;
  write_dataset(scenes, buf);
  const auto back = read_dataset(buf);
  ASSERT_EQ(back.size(), scenes.size());
  for (std::size_t i = 0; i < scenes.size(); ++i) expect_same_scene(back[i], scenes[i]);
}

TEST(DatasetIo, EmptyInputIsEmptyDataset) {
  std::stringstream empty;
  EXPECT_TRUE(read_dataset(empty).empty());
}

TEST(DatasetIo, TruncatedLineNamesTheLine) {
  GeneratorConfig cfg;
  cfg.num_scenes = 3;
  std::stringstream buf;
  write_dataset(generate_dataset(cfg), buf);
  std::string text = buf.str();
  text.resize(text.size() - 40);
  std::stringstream in(text);
  try {
    read_dataset(in);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 4"), std::string::npos) << e.what();
  }
}

TEST(DatasetIo, UnknownVersionIsFormatError) {
  GeneratorConfig cfg;
  cfg.num_scenes = 1;
  Rng rng(1);
  std::string line = serialize_scene(generate_synthetic_scene(cfg, rng));
  line.replace(line.find("\"version\":1"), 11, "\"version\":9");
  EXPECT_THROW(parse_scene(line, 1), FormatError);
}

TEST(SceneValidation, MaskLengthMismatchThrows) {
  GeneratorConfig cfg;
  Rng rng(5);
  Scene s = generate_synthetic_scene(cfg, rng);
  s.roads[0].mask.push_back(true);
  EXPECT_THROW(validate(s), DimensionError);
}
