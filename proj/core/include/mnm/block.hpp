#pragma once

// Mix-and-Match blocks. A block normalizes its tokens, "mixes" information
// across the valid tokens (masked max pooling or self-attention) and "matches"
// the mixed result back onto every token (concatenation, element-wise product
// or attention-matrix multiply), followed by a residual feed-forward layer.
//
// Two variants exist. The basic block maps X -> X'. The query block carries a
// context vector C alongside the tokens and maps (X, C) -> (X', C'); Match runs
// first with the incoming C and Mix then produces the new C, which passes
// through its own residual feed-forward layer.
//
// With heads > 1 the d channels are split into contiguous groups after the
// shared norm; Mix and Match run per group and the group outputs are
// concatenated before the residual add. Feed-forward layers stay full width.

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "mnm/autodiff.hpp"
#include "mnm/matrix.hpp"
#include "mnm/random.hpp"

namespace mnm::block {

enum class MixKind { Attention, MaxPool };
enum class MatchKind { AttentionMatmul, Concat, Product };

/// Whether the Product match is followed by a learned d_h×d_h projection.
enum class ProductProjection { Identity, Learned };

struct BlockConfig {
  std::size_t d = 64;
  std::size_t heads = 1;
  std::size_t d_ff = 0;  // 0 selects 4·d
  MixKind mix = MixKind::MaxPool;
  MatchKind match = MatchKind::Concat;
  Activation activation = Activation::GELU;
  bool with_query = false;
  /// Attention only: learn per-head Q/K projections (initialized to identity).
  bool learned_qk = false;
  ProductProjection product_projection = ProductProjection::Identity;
  double norm_epsilon = kLayerNormEpsilon;

  std::size_t head_dim() const { return d / heads; }
  std::size_t ff_width() const { return d_ff == 0 ? 4 * d : d_ff; }
};

/// Throws ConfigError for inconsistent settings (d % heads, query variant with
/// an n×n mix, mismatched mix/match pairs).
void validate(const BlockConfig& config);

struct NormParams {
  Parameter gamma;
  Parameter beta;
};

struct BlockParams {
  BlockConfig config;
  NormParams mix_norm;    // Norm feeding Mix
  NormParams ffn_norm;    // Norm feeding W1
  NormParams query_norm;  // Norm feeding W3 (query variant)
  std::vector<Parameter> match_proj;  // per head: 2dh×dh (Concat) or dh×dh (Product)
  std::vector<Parameter> query_proj;  // per head dh×dh (learned attention Q)
  std::vector<Parameter> key_proj;    // per head dh×dh (learned attention K)
  Parameter w1, w2;                   // d×d_ff, d_ff×d
  Parameter w3, w4;                   // query variant: d×d_ff, d_ff×d

  /// Visits every parameter in declaration order as f(name, param).
  template <class F>
  void for_each(F&& f) { visit(*this, f); }
  template <class F>
  void for_each(F&& f) const { visit(*this, f); }

 private:
  template <class Self, class F>
  static void visit(Self& self, F& f) {
    f("mix_norm.gamma", self.mix_norm.gamma);
    f("mix_norm.beta", self.mix_norm.beta);
    for (std::size_t h = 0; h < self.query_proj.size(); ++h)
      f("query_proj." + std::to_string(h), self.query_proj[h]);
    for (std::size_t h = 0; h < self.key_proj.size(); ++h)
      f("key_proj." + std::to_string(h), self.key_proj[h]);
    for (std::size_t h = 0; h < self.match_proj.size(); ++h)
      f("match_proj." + std::to_string(h), self.match_proj[h]);
    f("ffn_norm.gamma", self.ffn_norm.gamma);
    f("ffn_norm.beta", self.ffn_norm.beta);
    f("w1", self.w1);
    f("w2", self.w2);
    if (self.config.with_query) {
      f("query_norm.gamma", self.query_norm.gamma);
      f("query_norm.beta", self.query_norm.beta);
      f("w3", self.w3);
      f("w4", self.w4);
    }
  }
};

/// Weights ~ U(±1/√fan_in), gammas 1, betas 0, Q/K identity.
BlockParams init_block(const BlockConfig& config, Rng& rng);

/// Mix for one head: a 1×dh pooled vector (MaxPool) or an n×n attention
/// matrix whose invalid key columns are zero and invalid query rows all-zero.
Var mix(Tape& t, const BlockParams& p, std::size_t head, Var normed, const MaskBits& mask);

/// Match for one head; returns n×dh.
Var match(Tape& t, const BlockParams& p, std::size_t head, Var mixed, Var tokens);

/// X ← Match(Mix(Norm(X)), X) + X, then the residual feed-forward layer.
Var mnm_basic(Tape& t, Var x, const MaskBits& mask, const BlockParams& p);

struct QueryOutput {
  Var tokens;
  Var context;
};
QueryOutput mnm_query(Tape& t, Var x, Var c, const MaskBits& mask, const BlockParams& p);

// Evaluation-only conveniences.
Matrix mnm_basic(const Matrix& x, const MaskBits& mask, const BlockParams& p);
std::pair<Matrix, Matrix> mnm_query(const Matrix& x, const Matrix& c, const MaskBits& mask,
                                    const BlockParams& p);

}  // namespace mnm::block
