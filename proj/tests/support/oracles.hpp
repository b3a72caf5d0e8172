#pragma once

// Dense reference implementations for tests. Everything here is written with
// plain loops over std::vector and shares no code with the library's ops; the
// library types are only read for their stored values.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "mnm/block.hpp"
#include "mnm/golfer.hpp"
#include "mnm/matrix.hpp"
#include "mnm/scene.hpp"

namespace oracle {

using Dense = std::vector<std::vector<double>>;
using Vec = std::vector<double>;

inline Dense to_dense(const mnm::Matrix& m) {
  Dense out(m.rows(), Vec(m.cols()));
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) out[r][c] = m(r, c);
  return out;
}

inline mnm::Matrix to_matrix(const Dense& d) {
  mnm::Matrix m(d.size(), d.empty() ? 0 : d[0].size());
  for (std::size_t r = 0; r < d.size(); ++r)
    for (std::size_t c = 0; c < d[r].size(); ++c) m(r, c) = d[r][c];
  return m;
}

inline Vec row0(const mnm::Matrix& m) { return to_dense(m).at(0); }

inline std::vector<bool> bits(const mnm::MaskBits& m) {
  std::vector<bool> out;
  for (std::size_t i = 0; i < m.size(); ++i) out.push_back(m[i]);
  return out;
}

inline Dense mm(const Dense& a, const Dense& b) {
  Dense out(a.size(), Vec(b.empty() ? 0 : b[0].size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < out[i].size(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < b.size(); ++k) s += a[i][k] * b[k][j];
      out[i][j] = s;
    }
  return out;
}

inline Vec vm(const Vec& v, const Dense& b) { return mm(Dense{v}, b)[0]; }

inline Dense plus(Dense a, const Dense& b) {
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) a[i][j] += b[i][j];
  return a;
}

inline Vec plus(Vec a, const Vec& b) {
  for (std::size_t j = 0; j < a.size(); ++j) a[j] += b[j];
  return a;
}

inline Vec layer_norm(const Vec& x, const Vec& gamma, const Vec& beta, double eps) {
  const double n = static_cast<double>(x.size());
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= n;
  Vec out(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) out[j] = gamma[j] * (x[j] - mean) / std::sqrt(var + eps) + beta[j];
  return out;
}

inline Dense layer_norm(const Dense& x, const Vec& gamma, const Vec& beta, double eps) {
  Dense out;
  for (const Vec& r : x) out.push_back(layer_norm(r, gamma, beta, eps));
  return out;
}

/// x·Φ(x) with Φ from the complementary error function.
inline double gelu(double x) { return x * 0.5 * std::erfc(-x / std::sqrt(2.0)); }
inline double relu(double x) { return x > 0.0 ? x : 0.0; }

inline double act(double x, mnm::Activation a) { return a == mnm::Activation::GELU ? gelu(x) : relu(x); }

inline Dense act(Dense x, mnm::Activation a) {
  for (Vec& r : x)
    for (double& v : r) v = act(v, a);
  return x;
}

inline Vec softmax(const Vec& z, const std::vector<bool>& valid) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < z.size(); ++i)
    if (valid[i]) mx = std::max(mx, z[i]);
  Vec out(z.size(), 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i)
    if (valid[i]) total += out[i] = std::exp(z[i] - mx);
  for (double& v : out) v /= total;
  return out;
}

inline Vec max_pool(const Dense& x, const std::vector<bool>& valid) {
  Vec out(x[0].size(), -std::numeric_limits<double>::infinity());
  for (std::size_t r = 0; r < x.size(); ++r)
    if (valid[r])
      for (std::size_t c = 0; c < out.size(); ++c) out[c] = std::max(out[c], x[r][c]);
  return out;
}

inline Dense cols(const Dense& x, std::size_t begin, std::size_t count) {
  Dense out;
  for (const Vec& r : x) out.emplace_back(r.begin() + begin, r.begin() + begin + count);
  return out;
}

inline Vec cols(const Vec& x, std::size_t begin, std::size_t count) {
  return Vec(x.begin() + begin, x.begin() + begin + count);
}

/// Column-wise concatenation of equally tall blocks.
inline Dense hcat(const std::vector<Dense>& parts) {
  Dense out(parts[0].size());
  for (const Dense& p : parts)
    for (std::size_t r = 0; r < p.size(); ++r) out[r].insert(out[r].end(), p[r].begin(), p[r].end());
  return out;
}

inline Vec hcat(const std::vector<Vec>& parts) {
  Vec out;
  for (const Vec& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

struct Norm {
  Vec gamma, beta;
};

inline Norm norm_of(const mnm::block::NormParams& n) { return {row0(n.gamma.value), row0(n.beta.value)}; }

/// σ(Norm(s) W_in) W_out + s, row by row.
inline Dense ffn(const Dense& s, const Norm& n, const Dense& w_in, const Dense& w_out, mnm::Activation a,
                 double eps) {
  return plus(mm(act(mm(layer_norm(s, n.gamma, n.beta, eps), w_in), a), w_out), s);
}

/// Pre-norm self-attention layer in the textbook arrangement:
///   H = LN1(x); A_h = softmax(H_h H_hᵀ / √d_h) over valid keys (zero rows for
///   invalid queries); S = [A_h x_h]_h + x; out = FFN(LN2(S)) + S.
/// No value or output projection, so values are the residual stream itself.
inline Dense transformer_layer(const Dense& x, const std::vector<bool>& valid, const Norm& ln1, const Norm& ln2,
                               const Dense& w1, const Dense& w2, std::size_t heads, mnm::Activation a,
                               double eps) {
  const std::size_t n = x.size();
  const std::size_t dh = x[0].size() / heads;
  const Dense h = layer_norm(x, ln1.gamma, ln1.beta, eps);
  std::vector<Dense> outs;
  for (std::size_t hd = 0; hd < heads; ++hd) {
    const Dense q = cols(h, hd * dh, dh);
    const Dense v = cols(x, hd * dh, dh);
    Dense attn(n, Vec(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
      if (!valid[i]) continue;
      Vec z(n, 0.0);
      for (std::size_t j = 0; j < n; ++j) {
        double dot = 0.0;
        for (std::size_t c = 0; c < dh; ++c) dot += q[i][c] * q[j][c];
        z[j] = dot / std::sqrt(static_cast<double>(dh));
      }
      attn[i] = softmax(z, valid);
    }
    outs.push_back(mm(attn, v));
  }
  const Dense s = plus(hcat(outs), x);
  return ffn(s, ln2, w1, w2, a, eps);
}

/// Match for one head with a pooled context vector.
inline Dense match_vector(const mnm::block::BlockParams& p, std::size_t head, const Vec& c, const Dense& x) {
  using mnm::block::MatchKind;
  Dense out;
  if (p.config.match == MatchKind::Concat) {
    Dense joined;
    for (const Vec& r : x) joined.push_back(hcat(std::vector<Vec>{r, c}));
    return mm(joined, to_dense(p.match_proj[head].value));
  }
  for (const Vec& r : x) {
    Vec prod(r.size());
    for (std::size_t j = 0; j < r.size(); ++j) prod[j] = r[j] * c[j];
    out.push_back(prod);
  }
  if (!p.match_proj.empty()) out = mm(out, to_dense(p.match_proj[head].value));
  return out;
}

/// Basic MnM block with MaxPool mix (Concat or Product match), per head.
inline Dense pooled_basic_block(const Dense& x, const std::vector<bool>& valid, const mnm::block::BlockParams& p) {
  const auto& c = p.config;
  const std::size_t dh = c.d / c.heads;
  const Dense h = layer_norm(x, norm_of(p.mix_norm).gamma, norm_of(p.mix_norm).beta, c.norm_epsilon);
  std::vector<Dense> outs;
  for (std::size_t hd = 0; hd < c.heads; ++hd) {
    const Vec pooled = max_pool(cols(h, hd * dh, dh), valid);
    outs.push_back(match_vector(p, hd, pooled, cols(x, hd * dh, dh)));
  }
  const Dense s = plus(hcat(outs), x);
  return ffn(s, norm_of(p.ffn_norm), to_dense(p.w1.value), to_dense(p.w2.value), c.activation, c.norm_epsilon);
}

struct QueryResult {
  Dense tokens;
  Vec context;
};

/// Query MnM block with MaxPool mix, step by step per the block equations.
inline QueryResult pooled_query_block(const Dense& x, const Vec& ctx, const std::vector<bool>& valid,
                                      const mnm::block::BlockParams& p) {
  const auto& c = p.config;
  const std::size_t dh = c.d / c.heads;
  std::vector<Dense> matched;
  for (std::size_t hd = 0; hd < c.heads; ++hd) {
    matched.push_back(match_vector(p, hd, cols(ctx, hd * dh, dh), cols(x, hd * dh, dh)));
  }
  const Dense s = plus(hcat(matched), x);
  const Norm mn = norm_of(p.mix_norm);
  const Dense h = layer_norm(s, mn.gamma, mn.beta, c.norm_epsilon);
  std::vector<Vec> pooled;
  for (std::size_t hd = 0; hd < c.heads; ++hd) pooled.push_back(max_pool(cols(h, hd * dh, dh), valid));
  const Vec new_c = hcat(pooled);
  QueryResult out;
  out.tokens = ffn(s, norm_of(p.ffn_norm), to_dense(p.w1.value), to_dense(p.w2.value), c.activation, c.norm_epsilon);
  out.context = ffn(Dense{new_c}, norm_of(p.query_norm), to_dense(p.w3.value), to_dense(p.w4.value), c.activation,
                    c.norm_epsilon)[0];
  return out;
}

inline Vec linear(const Vec& x, const mnm::golfer::Linear& l) {
  return plus(vm(x, to_dense(l.weight.value)), row0(l.bias.value));
}

inline Vec mlp(const Vec& x, const mnm::golfer::Linear& h, const mnm::golfer::Linear& o, mnm::Activation a) {
  Vec hidden = linear(x, h);
  for (double& v : hidden) v = act(v, a);
  return linear(hidden, o);
}

/// Element latent: scaled token/context projections, FE blocks, then the
/// element-wise maximum of the pooled tokens and the final context.
inline Vec element_latent(const mnm::scene::SceneElement& e, const mnm::golfer::ModelParams& p) {
  using mnm::scene::ElementKind;
  const auto& cfg = p.config;
  const auto& proj = p.projections[static_cast<std::size_t>(e.kind)];
  const bool moving = e.kind == ElementKind::Agent || e.kind == ElementKind::Ego;
  Dense x;
  for (Vec r : to_dense(e.tokens)) {
    r[0] /= cfg.position_scale;
    r[1] /= cfg.position_scale;
    if (moving) {
      r[2] /= cfg.position_scale;
      r[3] /= cfg.position_scale;
    }
    x.push_back(linear(r, proj.tokens));
  }
  Vec ctx = linear(row0(e.context), proj.context);
  const std::vector<bool> valid = bits(e.mask);
  for (const auto& blk : p.fe_blocks) {
    QueryResult q = pooled_query_block(x, ctx, valid, blk);
    x = q.tokens;
    ctx = q.context;
  }
  Vec pooled = max_pool(x, valid);
  for (std::size_t j = 0; j < pooled.size(); ++j) pooled[j] = std::max(pooled[j], ctx[j]);
  return pooled;
}

inline Vec interact(const Vec& ego, const Dense& latents, const std::vector<bool>& valid,
                    const std::vector<mnm::block::BlockParams>& blocks) {
  Dense x = latents;
  Vec c = ego;
  for (const auto& blk : blocks) {
    QueryResult q = pooled_query_block(x, c, valid, blk);
    x = q.tokens;
    c = q.context;
  }
  return c;
}

inline Vec interact_set(const Vec& ego, const std::vector<const mnm::scene::SceneElement*>& set,
                        const mnm::Parameter& null_latent, const std::vector<mnm::block::BlockParams>& blocks,
                        const mnm::golfer::ModelParams& p) {
  Dense latents;
  std::vector<bool> valid;
  for (const auto* e : set) {
    if (e->mask.any()) {
      latents.push_back(element_latent(*e, p));
      valid.push_back(true);
    }
  }
  if (latents.empty()) {
    latents.push_back(row0(null_latent.value));
    valid.push_back(true);
  }
  return interact(ego, latents, valid, blocks);
}

inline Vec scene_encoding(const mnm::scene::Scene& s, const mnm::scene::SceneElement* goal,
                          mnm::scene::Placement placement, const mnm::golfer::ModelParams& p) {
  const Vec f_e = element_latent(s.ego, p);
  std::vector<const mnm::scene::SceneElement*> roads, agents;
  for (const auto& r : s.roads) roads.push_back(&r);
  for (const auto& a : s.agents) agents.push_back(&a);
  if (goal) (placement == mnm::scene::Placement::RoadsSet ? roads : agents).push_back(goal);
  const Vec f_r = interact_set(f_e, roads, p.null_road, p.road_interaction, p);
  const Vec f_a = interact_set(f_e, agents, p.null_agent, p.agent_interaction, p);
  return mlp(hcat(std::vector<Vec>{f_e, f_r, f_a}), p.fusion_hidden, p.fusion_out, p.config.activation);
}

struct DecodeResult {
  std::vector<Dense> means, log_sigmas;
  Vec logits, probs;
};

inline DecodeResult decode(const Vec& f_enc, const mnm::golfer::ModelParams& p) {
  const auto& cfg = p.config;
  DecodeResult out;
  for (std::size_t k = 0; k < cfg.modes; ++k) {
    const Vec raw = mlp(f_enc, p.branch_hidden[k], p.branch_out[k], cfg.activation);
    Dense mean(cfg.horizon, Vec(2)), ls(cfg.horizon, Vec(2));
    for (std::size_t t = 0; t < cfg.horizon; ++t) {
      for (std::size_t j = 0; j < 2; ++j) {
        mean[t][j] = raw[4 * t + j] * cfg.position_scale;
        ls[t][j] = std::clamp(raw[4 * t + 2 + j] + std::log(cfg.position_scale), -5.0, 5.0);
      }
    }
    out.means.push_back(mean);
    out.log_sigmas.push_back(ls);
  }
  out.logits = mlp(f_enc, p.class_hidden, p.class_out, cfg.activation);
  out.probs = softmax(out.logits, std::vector<bool>(out.logits.size(), true));
  return out;
}

inline double max_abs_diff(const Dense& a, const Dense& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) m = std::max(m, std::abs(a[i][j] - b[i][j]));
  return m;
}

inline double max_abs_diff(const Vec& a, const Vec& b) { return max_abs_diff(Dense{a}, Dense{b}); }

inline double max_abs_diff(const mnm::Matrix& a, const Dense& b) { return max_abs_diff(to_dense(a), b); }

/// Mean L2 over valid steps of one trajectory.
inline double mean_l2(const mnm::Matrix& a, const mnm::Matrix& gt, const mnm::MaskBits& valid) {
  double s = 0.0;
  int n = 0;
  for (std::size_t t = 0; t < gt.rows(); ++t) {
    if (!valid[t]) continue;
    s += std::hypot(a(t, 0) - gt(t, 0), a(t, 1) - gt(t, 1));
    ++n;
  }
  return s / n;
}

/// Log density of a diagonal Gaussian, evaluated as the log of the density.
inline double log_normal(double x, double mu, double log_sigma) {
  const double sigma = std::exp(log_sigma);
  const double z = (x - mu) / sigma;
  const double pi = std::acos(-1.0);
  return std::log(std::exp(-0.5 * z * z) / (sigma * std::sqrt(2.0 * pi)));
}

struct LloydCheck {
  double assignment_gap = 0.0;  // max over points of d(assigned) − d(nearest)
  double centroid_error = 0.0;  // max |centroid − weighted member mean|
  double prob_error = 0.0;      // max |prob − normalized member weight|
  double prob_sum_error = 0.0;
};

/// Checks both Lloyd fixed-point conditions for flattened points. A cluster
/// whose members all have zero weight is compared with their plain mean.
inline LloydCheck lloyd_check(const Dense& points, const Vec& weights, const Dense& centroids, const Vec& probs,
                              const std::vector<std::size_t>& assignment) {
  LloydCheck out;
  auto dist = [](const Vec& a, const Vec& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
  };
  const std::size_t k = centroids.size();
  const std::size_t dim = points.at(0).size();
  double total = 0.0;
  for (double w : weights) total += w;
  for (std::size_t i = 0; i < points.size(); ++i) {
    double nearest = dist(points[i], centroids[0]);
    for (std::size_t j = 1; j < k; ++j) nearest = std::min(nearest, dist(points[i], centroids[j]));
    out.assignment_gap = std::max(out.assignment_gap, dist(points[i], centroids.at(assignment[i])) - nearest);
  }
  double prob_sum = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    Vec sum(dim, 0.0), plain(dim, 0.0);
    double w = 0.0;
    int members = 0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (assignment[i] != j) continue;
      ++members;
      w += weights[i];
      for (std::size_t c = 0; c < dim; ++c) {
        sum[c] += weights[i] * points[i][c];
        plain[c] += points[i][c];
      }
    }
    if (members == 0) {
      out.centroid_error = std::numeric_limits<double>::infinity();
      continue;
    }
    for (std::size_t c = 0; c < dim; ++c) {
      const double mean = w > 0.0 ? sum[c] / w : plain[c] / members;
      out.centroid_error = std::max(out.centroid_error, std::abs(centroids[j][c] - mean));
    }
    out.prob_error = std::max(out.prob_error, std::abs(probs[j] - w / total));
    prob_sum += probs[j];
  }
  out.prob_sum_error = std::abs(prob_sum - 1.0);
  return out;
}

/// Row-major flattening of a T×2 trajectory.
inline Vec flatten(const mnm::Matrix& m) {
  Vec v;
  for (const auto& row : to_dense(m)) v.insert(v.end(), row.begin(), row.end());
  return v;
}

}  // namespace oracle
