#include <gtest/gtest.h>

#include <numeric>

#include "mnm/block.hpp"
#include "mnm/errors.hpp"
#include "mnm/gradcheck.hpp"
#include "mnm/ops.hpp"
#include "oracles.hpp"

using namespace mnm;
using namespace mnm::block;

namespace {

BlockConfig make_config(MixKind mix, MatchKind match, std::size_t d, std::size_t heads, bool query = false) {
  BlockConfig c;
  c.d = d;
  c.heads = heads;
  c.mix = mix;
  c.match = match;
  c.with_query = query;
  return c;
}

/// Seeded parameters with perturbed norm affines.
BlockParams random_block(const BlockConfig& c, std::uint64_t seed) {
  Rng rng(seed);
  BlockParams p = init_block(c, rng);
  for (NormParams* n : {&p.mix_norm, &p.ffn_norm, &p.query_norm}) {
    for (double& v : n->gamma.value.values()) v += rng.uniform(-0.3, 0.3);
    for (double& v : n->beta.value.values()) v += rng.uniform(-0.3, 0.3);
  }
  return p;
}

MaskBits random_mask(Rng& rng, std::size_t n) {
  MaskBits m(n, true);
  for (std::size_t i = 1; i < n; ++i)
    if (rng.bernoulli(0.3)) m.set(i, false);
  return m;
}

Matrix mix_value(const BlockParams& p, const Matrix& x, const MaskBits& m) {
  Tape t(false);
  return t.value(mix(t, p, 0, t.constant(x), m));
}

Matrix match_value(const BlockParams& p, const Matrix& c, const Matrix& x) {
  Tape t(false);
  return t.value(match(t, p, 0, t.constant(c), t.constant(x)));
}

const std::pair<MixKind, MatchKind> kAllKinds[] = {
    {MixKind::Attention, MatchKind::AttentionMatmul},
    {MixKind::MaxPool, MatchKind::Concat},
    {MixKind::MaxPool, MatchKind::Product},
};

}  // namespace

TEST(BlockConfig, RejectsInvalidCombinations) {
  Rng rng(1);
  EXPECT_THROW(init_block(make_config(MixKind::MaxPool, MatchKind::Concat, 6, 4), rng), ConfigError);
  EXPECT_THROW(init_block(make_config(MixKind::Attention, MatchKind::AttentionMatmul, 8, 2, true), rng),
               ConfigError);
  EXPECT_THROW(init_block(make_config(MixKind::MaxPool, MatchKind::AttentionMatmul, 8, 1), rng), ConfigError);
}

TEST(Mix, MaxPoolIsMaskedColumnMax) {
  const BlockParams p = random_block(make_config(MixKind::MaxPool, MatchKind::Concat, 2, 1), 1);
  EXPECT_EQ(mix_value(p, Matrix{{1, 5}, {3, 2}, {7, 0}}, MaskBits{1, 0, 1}), (Matrix{{7, 5}}));
}

TEST(Mix, AttentionOverEqualRowsIsUniform) {
  const BlockParams p = random_block(make_config(MixKind::Attention, MatchKind::AttentionMatmul, 3, 1), 1);
  const Matrix a = mix_value(p, Matrix{{1, 2, 3}, {1, 2, 3}, {1, 2, 3}, {1, 2, 3}}, MaskBits::all_valid(4));
  for (double v : a.values()) EXPECT_NEAR(v, 0.25, 1e-15);
}

TEST(Mix, AttentionMatchesSoftmaxOracle) {
  const BlockParams p = random_block(make_config(MixKind::Attention, MatchKind::AttentionMatmul, 4, 1), 1);
  Rng rng(2);
  const Matrix x = uniform_matrix(4, 4, 1.5, rng);
  const auto xd = oracle::to_dense(x);
  oracle::Dense expected;
  for (std::size_t i = 0; i < 4; ++i) {
    oracle::Vec z(4);
    for (std::size_t j = 0; j < 4; ++j) z[j] = std::inner_product(xd[i].begin(), xd[i].end(), xd[j].begin(), 0.0) / 2.0;
    expected.push_back(oracle::softmax(z, std::vector<bool>(4, true)));
  }
  EXPECT_LT(oracle::max_abs_diff(mix_value(p, x, MaskBits::all_valid(4)), expected), 1e-12);
}

TEST(Mix, AttentionMasksKeysAndZeroesInvalidQueries) {
  const BlockParams p = random_block(make_config(MixKind::Attention, MatchKind::AttentionMatmul, 3, 1), 1);
  Rng rng(3);
  const Matrix a = mix_value(p, uniform_matrix(4, 3, 1.0, rng), MaskBits{1, 0, 1, 1});
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(a(i, 1), 0.0);
    if (i == 1) {
      for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(a(i, j), 0.0);
    }
  }
}

TEST(Mix, AllInvalidThrows) {
  const BlockParams p = random_block(make_config(MixKind::MaxPool, MatchKind::Concat, 2, 1), 1);
  EXPECT_THROW(mix_value(p, Matrix{{1, 2}}, MaskBits{0}), EmptySetError);
}

TEST(Match, ConcatWithDiscardingProjectionIsIdentity) {
  BlockParams p = random_block(make_config(MixKind::MaxPool, MatchKind::Concat, 3, 1), 1);
  Matrix w(6, 3);
  for (std::size_t i = 0; i < 3; ++i) w(i, i) = 1.0;
  p.match_proj[0].value = w;
  const Matrix x{{1, 2, 3}, {-4, 5, 0.5}};
  EXPECT_EQ(match_value(p, Matrix{{9, 9, 9}}, x), x);
}

TEST(Match, ProductWithOnesIsIdentity) {
  BlockConfig c = make_config(MixKind::MaxPool, MatchKind::Product, 3, 1);
  c.product_projection = ProductProjection::Learned;
  BlockParams p = random_block(c, 1);
  p.match_proj[0].value = Matrix::identity(3);
  const Matrix x{{1, 2, 3}, {-4, 5, 0.5}};
  EXPECT_EQ(match_value(p, Matrix(1, 3, 1.0), x), x);
  const BlockParams plain = random_block(make_config(MixKind::MaxPool, MatchKind::Product, 3, 1), 1);
  EXPECT_EQ(match_value(plain, Matrix(1, 3, 1.0), x), x);
}

TEST(Match, AttentionMatmulWithIdentityIsIdentity) {
  const BlockParams p = random_block(make_config(MixKind::Attention, MatchKind::AttentionMatmul, 3, 1), 1);
  const Matrix x{{1, 2, 3}, {-4, 5, 0.5}};
  EXPECT_EQ(match_value(p, Matrix::identity(2), x), x);
}

TEST(Match, ShapeMismatchThrows) {
  const BlockParams p = random_block(make_config(MixKind::MaxPool, MatchKind::Concat, 3, 1), 1);
  EXPECT_THROW(match_value(p, Matrix(1, 2), Matrix(2, 3)), DimensionError);
}

TEST(MnmBasic, ZeroWeightsGiveIdentity) {
  for (auto [mix_kind, match_kind] : kAllKinds) {
    if (match_kind == MatchKind::AttentionMatmul) continue;  // no W_m to zero
    BlockConfig c = make_config(mix_kind, match_kind, 6, 2);
    if (match_kind == MatchKind::Product) c.product_projection = ProductProjection::Learned;
    BlockParams p = random_block(c, 4);
    for (Parameter& w : p.match_proj) w.value.fill(0.0);
    p.w2.value.fill(0.0);
    Rng rng(5);
    const Matrix x = uniform_matrix(4, 6, 1.0, rng);
    EXPECT_EQ(mnm_basic(x, MaskBits{1, 1, 0, 1}, p), x);
  }
}

TEST(MnmBasic, SingleTokenMaxPoolConcatMatchesHandChain) {
  const BlockParams p = random_block(make_config(MixKind::MaxPool, MatchKind::Concat, 5, 1), 6);
  Rng rng(7);
  const Matrix x = uniform_matrix(1, 5, 1.0, rng);
  const auto xr = oracle::row0(x);
  const oracle::Norm n1 = oracle::norm_of(p.mix_norm);
  const oracle::Vec pooled = oracle::layer_norm(xr, n1.gamma, n1.beta, 1e-5);
  const oracle::Vec matched = oracle::vm(oracle::hcat(std::vector<oracle::Vec>{xr, pooled}),
                                         oracle::to_dense(p.match_proj[0].value));
  const oracle::Vec s = oracle::plus(matched, xr);
  const oracle::Norm n2 = oracle::norm_of(p.ffn_norm);
  oracle::Vec h = oracle::vm(oracle::layer_norm(s, n2.gamma, n2.beta, 1e-5), oracle::to_dense(p.w1.value));
  for (double& v : h) v = oracle::gelu(v);
  const oracle::Vec expected = oracle::plus(oracle::vm(h, oracle::to_dense(p.w2.value)), s);
  EXPECT_LT(oracle::max_abs_diff(oracle::row0(mnm_basic(x, MaskBits{1}, p)), expected), 1e-12);
}

TEST(MnmBasic, AttentionInstanceIsTransformerLayer) {
  for (std::size_t heads : {1u, 2u}) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const BlockParams p = random_block(make_config(MixKind::Attention, MatchKind::AttentionMatmul, 8, heads), seed);
      Rng rng(100 + seed);
      const Matrix x = uniform_matrix(6, 8, 2.0, rng);
      const MaskBits m = random_mask(rng, 6);
      const auto expected = oracle::transformer_layer(
          oracle::to_dense(x), oracle::bits(m), oracle::norm_of(p.mix_norm), oracle::norm_of(p.ffn_norm),
          oracle::to_dense(p.w1.value), oracle::to_dense(p.w2.value), heads, Activation::GELU, 1e-5);
      const Matrix got = mnm_basic(x, m, p);
      for (std::size_t r = 0; r < 6; ++r) {
        if (!m[r]) continue;
        for (std::size_t c = 0; c < 8; ++c) EXPECT_NEAR(got(r, c), expected[r][c], 1e-10);
      }
    }
  }
}

TEST(MnmBasic, PooledBlocksMatchPerHeadOracle) {
  for (auto match_kind : {MatchKind::Concat, MatchKind::Product}) {
    for (std::size_t heads : {1u, 2u, 4u}) {
      BlockConfig c = make_config(MixKind::MaxPool, match_kind, 8, heads);
      if (match_kind == MatchKind::Product) c.product_projection = ProductProjection::Learned;
      const BlockParams p = random_block(c, heads);
      Rng rng(heads * 7);
      const Matrix x = uniform_matrix(5, 8, 1.0, rng);
      const MaskBits m = random_mask(rng, 5);
      const auto expected = oracle::pooled_basic_block(oracle::to_dense(x), oracle::bits(m), p);
      EXPECT_LT(oracle::max_abs_diff(mnm_basic(x, m, p), expected), 1e-12);
    }
  }
}

TEST(MnmBasic, TwoHeadPoolEqualsFullWidthPool) {
  Rng rng(8);
  const Matrix normed = uniform_matrix(5, 6, 1.0, rng);
  const MaskBits m{1, 0, 1, 1, 1};
  const BlockParams p2 = random_block(make_config(MixKind::MaxPool, MatchKind::Concat, 6, 2), 1);
  Tape t(false);
  const Var leaf = t.constant(normed);
  std::vector<Var> parts;
  for (std::size_t h = 0; h < 2; ++h) parts.push_back(mix(t, p2, h, slice_cols(t, leaf, 3 * h, 3), m));
  EXPECT_EQ(t.value(concat_cols(t, parts)), masked_max_pool(normed, m).value);
}

TEST(MnmBasic, PermutationEquivariance) {
  for (auto [mix_kind, match_kind] : kAllKinds) {
    const BlockParams p = random_block(make_config(mix_kind, match_kind, 6, 2), 9);
    Rng rng(10);
    const Matrix x = uniform_matrix(5, 6, 1.0, rng);
    const MaskBits m{1, 1, 0, 1, 1};
    const std::size_t perm[] = {3, 0, 4, 2, 1};
    Matrix px(5, 6);
    MaskBits pm(5, true);
    for (std::size_t i = 0; i < 5; ++i) {
      for (std::size_t c = 0; c < 6; ++c) px(i, c) = x(perm[i], c);
      pm.set(i, m[perm[i]]);
    }
    const Matrix y = mnm_basic(x, m, p);
    const Matrix py = mnm_basic(px, pm, p);
    for (std::size_t i = 0; i < 5; ++i) {
      if (!pm[i]) continue;
      for (std::size_t c = 0; c < 6; ++c) EXPECT_NEAR(py(i, c), y(perm[i], c), 1e-12);
    }
  }
}

TEST(MnmBasic, InvalidRowsDoNotAffectValidOutputs) {
  for (auto [mix_kind, match_kind] : kAllKinds) {
    const BlockParams p = random_block(make_config(mix_kind, match_kind, 4, 2), 11);
    Rng rng(12);
    Matrix x = uniform_matrix(5, 4, 1.0, rng);
    const MaskBits m{1, 0, 1, 0, 1};
    const Matrix before = mnm_basic(x, m, p);
    for (std::size_t c = 0; c < 4; ++c) {
      x(1, c) = rng.uniform(-100, 100);
      x(3, c) = rng.uniform(-100, 100);
    }
    const Matrix after = mnm_basic(x, m, p);
    for (std::size_t r : {0u, 2u, 4u})
      for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(after(r, c), before(r, c));
  }
}

TEST(MnmQuery, ZeroWeightsPassTokensAndPoolContext) {
  BlockParams p = random_block(make_config(MixKind::MaxPool, MatchKind::Concat, 4, 1, true), 13);
  p.match_proj[0].value.fill(0.0);
  p.w2.value.fill(0.0);
  p.w4.value.fill(0.0);
  Rng rng(14);
  const Matrix x = uniform_matrix(3, 4, 1.0, rng);
  const MaskBits m{1, 0, 1};
  const auto [tokens, context] = mnm_query(x, uniform_matrix(1, 4, 1.0, rng), m, p);
  EXPECT_EQ(tokens, x);
  EXPECT_EQ(context, masked_max_pool(layer_norm(x, p.mix_norm.gamma.value, p.mix_norm.beta.value), m).value);
}

TEST(MnmQuery, ProductWithOnesDoublesTokensBeforeFeedForward) {
  BlockParams p = random_block(make_config(MixKind::MaxPool, MatchKind::Product, 4, 1, true), 15);
  p.w2.value.fill(0.0);
  Rng rng(16);
  const Matrix x = uniform_matrix(3, 4, 1.0, rng);
  const auto [tokens, context] = mnm_query(x, Matrix(1, 4, 1.0), MaskBits::all_valid(3), p);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(tokens[i], 2.0 * x[i]);
}

TEST(MnmQuery, MatchesStepByStepOracle) {
  for (auto match_kind : {MatchKind::Concat, MatchKind::Product}) {
    for (std::size_t heads : {1u, 2u}) {
      const BlockParams p = random_block(make_config(MixKind::MaxPool, match_kind, 8, heads, true), 17 + heads);
      Rng rng(18 + heads);
      const Matrix x = uniform_matrix(6, 8, 1.0, rng);
      const Matrix c = uniform_matrix(1, 8, 1.0, rng);
      const MaskBits m = random_mask(rng, 6);
      const auto expected = oracle::pooled_query_block(oracle::to_dense(x), oracle::row0(c), oracle::bits(m), p);
      const auto [tokens, context] = mnm_query(x, c, m, p);
      EXPECT_LT(oracle::max_abs_diff(tokens, expected.tokens), 1e-12);
      EXPECT_LT(oracle::max_abs_diff(oracle::row0(context), expected.context), 1e-12);
    }
  }
}

TEST(MnmQuery, RequiresQueryWeights) {
  const BlockParams p = random_block(make_config(MixKind::MaxPool, MatchKind::Concat, 4, 1), 1);
  EXPECT_THROW(mnm_query(Matrix(2, 4), Matrix(1, 4), MaskBits::all_valid(2), p), ConfigError);
}

TEST(MnmBlocks, GradientCheck) {
  for (bool query : {false, true}) {
    for (auto [mix_kind, match_kind] : kAllKinds) {
      if (query && mix_kind == MixKind::Attention) continue;
      for (std::size_t heads : {1u, 2u}) {
        BlockConfig c = make_config(mix_kind, match_kind, 4, heads, query);
        c.d_ff = 8;
        BlockParams p = random_block(c, 21);
        Rng rng(22);
        Parameter x(uniform_matrix(4, 4, 1.0, rng));
        Parameter ctx(uniform_matrix(1, 4, 1.0, rng));
        const MaskBits m{1, 1, 0, 1};
        std::vector<Parameter*> params{&x, &ctx};
        p.for_each([&params](const std::string&, Parameter& q) { params.push_back(&q); });
        const auto report = gradient_check(
            [&](Tape& t) {
              if (!query) return mnm_basic(t, t.param(x), m, p);
              auto out = mnm_query(t, t.param(x), t.param(ctx), m, p);
              return concat_cols(t, std::vector<Var>{reshape(t, out.tokens, 1, 16), out.context});
            },
            params, 23);
        EXPECT_LT(report.max_rel_error, 1e-4) << "query=" << query << " heads=" << heads;
      }
    }
  }
}
