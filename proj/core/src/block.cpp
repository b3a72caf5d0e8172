#include "mnm/block.hpp"

#include <cmath>

#include "mnm/errors.hpp"

namespace mnm::block {

void validate(const BlockConfig& c) {
  if (c.d == 0 || c.heads == 0) throw ConfigError("block: d and heads must be positive");
  if (c.d % c.heads != 0) {
    throw ConfigError("block: d=" + std::to_string(c.d) + " is not divisible by heads=" +
                      std::to_string(c.heads));
  }
  const bool attention_mix = c.mix == MixKind::Attention;
  const bool attention_match = c.match == MatchKind::AttentionMatmul;
  if (attention_mix != attention_match) {
    throw ConfigError("block: Attention mix pairs only with AttentionMatmul match");
  }
  if (c.with_query && attention_mix) {
    throw ConfigError("block: the query variant needs a vector-valued mix (MaxPool)");
  }
}

namespace {

NormParams init_norm(std::size_t d) {
  return {Parameter(Matrix(1, d, 1.0)), Parameter(Matrix(1, d, 0.0))};
}

Parameter init_weight(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  return Parameter(uniform_matrix(fan_in, fan_out, 1.0 / std::sqrt(static_cast<double>(fan_in)), rng));
}

Var norm(Tape& t, Var x, const NormParams& n, double eps) {
  return layer_norm(t, x, t.param(n.gamma), t.param(n.beta), eps);
}

Var feed_forward(Tape& t, Var x, const NormParams& n, const Parameter& w_in,
                 const Parameter& w_out, const BlockConfig& c) {
  Var h = activation(t, matmul(t, norm(t, x, n, c.norm_epsilon), t.param(w_in)), c.activation);
  return add(t, matmul(t, h, t.param(w_out)), x);
}

Var head_slice(Tape& t, Var x, const BlockConfig& c, std::size_t head) {
  if (c.heads == 1) return x;
  return slice_cols(t, x, head * c.head_dim(), c.head_dim());
}

Var join_heads(Tape& t, const std::vector<Var>& parts) {
  return parts.size() == 1 ? parts.front() : concat_cols(t, parts);
}

}  // namespace

BlockParams init_block(const BlockConfig& config, Rng& rng) {
  validate(config);
  const std::size_t d = config.d;
  const std::size_t dh = config.head_dim();
  const std::size_t ff = config.ff_width();
  BlockParams p;
  p.config = config;
  p.mix_norm = init_norm(d);
  p.ffn_norm = init_norm(d);
  if (config.mix == MixKind::Attention && config.learned_qk) {
    for (std::size_t h = 0; h < config.heads; ++h) {
      p.query_proj.emplace_back(Matrix::identity(dh));
      p.key_proj.emplace_back(Matrix::identity(dh));
    }
  }
  for (std::size_t h = 0; h < config.heads; ++h) {
    if (config.match == MatchKind::Concat) {
      p.match_proj.push_back(init_weight(2 * dh, dh, rng));
    } else if (config.match == MatchKind::Product &&
               config.product_projection == ProductProjection::Learned) {
      p.match_proj.push_back(init_weight(dh, dh, rng));
    }
  }
  p.w1 = init_weight(d, ff, rng);
  p.w2 = init_weight(ff, d, rng);
  if (config.with_query) {
    p.query_norm = init_norm(d);
    p.w3 = init_weight(d, ff, rng);
    p.w4 = init_weight(ff, d, rng);
  }
  return p;
}

Var mix(Tape& t, const BlockParams& p, std::size_t head, Var normed, const MaskBits& mask) {
  const BlockConfig& c = p.config;
  if (mask.size() != t.value(normed).rows()) {
    throw DimensionError("mix: " + t.value(normed).shape_string() + " tokens with mask of " +
                         std::to_string(mask.size()));
  }
  if (!mask.any()) throw EmptySetError("mix: no valid tokens");
  if (c.mix == MixKind::MaxPool) return masked_max_pool(t, normed, mask);

  Var q = normed;
  Var k = normed;
  if (!p.query_proj.empty()) {
    q = matmul(t, normed, t.param(p.query_proj[head]));
    k = matmul(t, normed, t.param(p.key_proj[head]));
  }
  Var scores = scale(t, matmul(t, q, transpose(t, k)),
                     1.0 / std::sqrt(static_cast<double>(c.head_dim())));
  return masked_softmax_rows(t, scores, mask, mask);
}

Var match(Tape& t, const BlockParams& p, std::size_t head, Var mixed, Var tokens) {
  const BlockConfig& c = p.config;
  const Matrix& xv = t.value(tokens);
  const Matrix& cv = t.value(mixed);
  switch (c.match) {
    case MatchKind::AttentionMatmul:
      if (cv.rows() != xv.rows() || cv.cols() != xv.rows()) {
        throw DimensionError("match: attention matrix " + cv.shape_string() + " for tokens " +
                             xv.shape_string());
      }
      return matmul(t, mixed, tokens);
    case MatchKind::Concat: {
      if (cv.rows() != 1 || cv.cols() != xv.cols()) {
        throw DimensionError("match: context " + cv.shape_string() + " for tokens " +
                             xv.shape_string());
      }
      const Var parts[] = {tokens, repeat_rows(t, mixed, xv.rows())};
      return matmul(t, concat_cols(t, parts), t.param(p.match_proj[head]));
    }
    case MatchKind::Product: {
      if (cv.rows() != 1 || cv.cols() != xv.cols()) {
        throw DimensionError("match: context " + cv.shape_string() + " for tokens " +
                             xv.shape_string());
      }
      Var prod = mul_row(t, tokens, mixed);
      if (p.match_proj.empty()) return prod;
      return matmul(t, prod, t.param(p.match_proj[head]));
    }
  }
  throw ConfigError("match: unknown kind");
}

Var mnm_basic(Tape& t, Var x, const MaskBits& mask, const BlockParams& p) {
  const BlockConfig& c = p.config;
  Var normed = norm(t, x, p.mix_norm, c.norm_epsilon);
  std::vector<Var> heads;
  heads.reserve(c.heads);
  for (std::size_t h = 0; h < c.heads; ++h) {
    Var mixed = mix(t, p, h, head_slice(t, normed, c, h), mask);
    heads.push_back(match(t, p, h, mixed, head_slice(t, x, c, h)));
  }
  Var s = add(t, join_heads(t, heads), x);
  return feed_forward(t, s, p.ffn_norm, p.w1, p.w2, c);
}

QueryOutput mnm_query(Tape& t, Var x, Var c, const MaskBits& mask, const BlockParams& p) {
  const BlockConfig& cfg = p.config;
  if (!cfg.with_query) throw ConfigError("mnm_query: block was built without query weights");
  std::vector<Var> heads;
  heads.reserve(cfg.heads);
  for (std::size_t h = 0; h < cfg.heads; ++h)
    heads.push_back(match(t, p, h, head_slice(t, c, cfg, h), head_slice(t, x, cfg, h)));
  Var s = add(t, join_heads(t, heads), x);

  Var normed = norm(t, s, p.mix_norm, cfg.norm_epsilon);
  std::vector<Var> mixed;
  mixed.reserve(cfg.heads);
  for (std::size_t h = 0; h < cfg.heads; ++h)
    mixed.push_back(mix(t, p, h, head_slice(t, normed, cfg, h), mask));
  Var new_c = join_heads(t, mixed);

  return {feed_forward(t, s, p.ffn_norm, p.w1, p.w2, cfg),
          feed_forward(t, new_c, p.query_norm, p.w3, p.w4, cfg)};
}

Matrix mnm_basic(const Matrix& x, const MaskBits& mask, const BlockParams& p) {
  Tape t(false);
  return t.value(mnm_basic(t, t.constant(x), mask, p));
}

std::pair<Matrix, Matrix> mnm_query(const Matrix& x, const Matrix& c, const MaskBits& mask,
                                    const BlockParams& p) {
  Tape t(false);
  auto out = mnm_query(t, t.constant(x), t.constant(c), mask, p);
  return {t.value(out.tokens), t.value(out.context)};
}

}  // namespace mnm::block
