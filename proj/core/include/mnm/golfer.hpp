#pragma once

// Hierarchical scene encoder and multi-modal trajectory decoder.
//
//   points ──FE blocks──▶ per-element latent (max of pooled tokens and context)
//   ego latent f_E ──interaction blocks over road latents──▶ f_R
//   ego latent f_E ──interaction blocks over agent latents─▶ f_A
//   f_enc = MLP(concat[f_E, f_R, f_A])
//   K regression branches (T×4 each) + one classification branch (K logits)
//
// FE blocks are query-variant MnM blocks with MaxPool mix and Concat match;
// interaction blocks use MaxPool mix and element-wise Product match with the
// ego latent as the query.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "mnm/autodiff.hpp"
#include "mnm/block.hpp"
#include "mnm/scene.hpp"

namespace mnm::golfer {

inline constexpr double kLogSigmaMin = -5.0;
inline constexpr double kLogSigmaMax = 5.0;

struct GolferConfig {
  std::size_t d = 64;
  std::size_t heads = 4;
  std::size_t fe_depth = 2;
  std::size_t interact_depth = 1;
  std::size_t modes = 6;     // K
  std::size_t horizon = 16;  // T
  std::size_t d_ff = 0;            // 0 selects 4·d
  std::size_t decoder_hidden = 0;  // 0 selects 2·d
  std::size_t fusion_hidden = 0;   // 0 selects 2·d
  std::size_t d_in = scene::kTokenDim;
  std::size_t d_ctx = scene::kContextDim;
  Activation activation = Activation::GELU;
  block::ProductProjection interaction_projection = block::ProductProjection::Identity;
  /// Metres per unit: positions are divided by it on input and decoder means
  /// are multiplied by it on output.
  double position_scale = 10.0;
  std::uint64_t seed = 7;

  std::size_t ff_width() const { return d_ff == 0 ? 4 * d : d_ff; }
  std::size_t decoder_width() const { return decoder_hidden == 0 ? 2 * d : decoder_hidden; }
  std::size_t fusion_width() const { return fusion_hidden == 0 ? 2 * d : fusion_hidden; }

  friend bool operator==(const GolferConfig&, const GolferConfig&) = default;
};

void validate(const GolferConfig& config);

struct Linear {
  Parameter weight;  // in×out
  Parameter bias;    // 1×out
};

struct ElementProjection {
  Linear tokens;
  Linear context;
};

struct ModelParams {
  GolferConfig config;
  std::vector<ElementProjection> projections;  // indexed by scene::ElementKind
  std::vector<block::BlockParams> fe_blocks;
  std::vector<block::BlockParams> road_interaction;
  std::vector<block::BlockParams> agent_interaction;
  Parameter null_road;   // stands in for an empty road set
  Parameter null_agent;  // stands in for an empty agent set
  Linear fusion_hidden;
  Linear fusion_out;
  std::vector<Linear> branch_hidden;  // K regression branches
  std::vector<Linear> branch_out;
  Linear class_hidden;
  Linear class_out;

  /// Visits every parameter in declaration order as f(name, param).
  template <class F>
  void for_each(F&& f) { visit(*this, f); }
  template <class F>
  void for_each(F&& f) const { visit(*this, f); }

 private:
  template <class Self, class F>
  static void visit(Self& self, F& f) {
    auto linear = [&f](const std::string& name, auto& lin) {
      f(name + ".weight", lin.weight);
      f(name + ".bias", lin.bias);
    };
    auto blocks = [&f](const std::string& name, auto& list) {
      for (std::size_t i = 0; i < list.size(); ++i) {
        const std::string prefix = name + "." + std::to_string(i) + ".";
        list[i].for_each([&](const auto& sub, auto& p) { f(prefix + sub, p); });
      }
    };
    for (std::size_t k = 0; k < self.projections.size(); ++k) {
      const std::string kind(scene::to_string(static_cast<scene::ElementKind>(k)));
      linear("proj." + kind + ".tokens", self.projections[k].tokens);
      linear("proj." + kind + ".context", self.projections[k].context);
    }
    blocks("fe", self.fe_blocks);
    blocks("interact.road", self.road_interaction);
    blocks("interact.agent", self.agent_interaction);
    f(std::string("null_road"), self.null_road);
    f(std::string("null_agent"), self.null_agent);
    linear("fusion.hidden", self.fusion_hidden);
    linear("fusion.out", self.fusion_out);
    for (std::size_t k = 0; k < self.branch_hidden.size(); ++k) {
      linear("decoder.branch." + std::to_string(k) + ".hidden", self.branch_hidden[k]);
      linear("decoder.branch." + std::to_string(k) + ".out", self.branch_out[k]);
    }
    linear("decoder.class.hidden", self.class_hidden);
    linear("decoder.class.out", self.class_out);
  }
};

/// Seeded initialization: weights ~ U(±1/√fan_in), biases 0, norm gammas 1.
ModelParams init_model(const GolferConfig& config);

std::size_t parameter_count(const ModelParams& params);
std::size_t parameter_count(const GolferConfig& config);

block::BlockConfig fe_block_config(const GolferConfig& config);
block::BlockConfig interaction_block_config(const GolferConfig& config);

/// K modes of per-step diagonal Gaussians plus mode probabilities.
struct Prediction {
  std::vector<Matrix> means;       // K × (T×2), metres
  std::vector<Matrix> log_sigmas;  // K × (T×2), clamped to [−5, 5]
  std::vector<double> logits;
  std::vector<double> probs;

  std::size_t modes() const { return means.size(); }
  friend bool operator==(const Prediction&, const Prediction&) = default;
};

struct ForwardVars {
  std::vector<Var> means;
  std::vector<Var> log_sigmas;
  Var logits;
};

/// Query-variant MnM with MaxPool mix and Concat match.
block::QueryOutput fe_block(Tape& t, Var tokens, Var context, const MaskBits& mask,
                            const block::BlockParams& p);

/// Scales position columns by 1/position_scale (metric displacement columns too).
Matrix feature_scale(scene::ElementKind kind, const GolferConfig& config);

/// Latent vector (1×d) of one element.
Var encode_element(Tape& t, const scene::SceneElement& e, const ModelParams& params);

/// Stacked interaction blocks; returns the final query (context) vector.
Var interact(Tape& t, Var ego_latent, Var latents, const MaskBits& mask,
             const std::vector<block::BlockParams>& blocks);

/// f_enc. `goal` (optional) joins the agent or road set per `placement`.
Var encode_scene(Tape& t, const scene::Scene& s, const scene::SceneElement* goal,
                 scene::Placement placement, const ModelParams& params);

ForwardVars decode(Tape& t, Var f_enc, const ModelParams& params);

/// Goal element encoding, scene encoding and decoding. `goal` may be null.
ForwardVars forward(Tape& t, const scene::Scene& s, const scene::GoalConditioning* goal,
                    const ModelParams& params);

Prediction to_prediction(const Tape& t, const ForwardVars& vars);

// Evaluation-only conveniences.
Matrix encode_element(const scene::SceneElement& e, const ModelParams& params);
Matrix encode_scene(const scene::Scene& s, const scene::SceneElement* goal,
                    scene::Placement placement, const ModelParams& params);
Prediction decode(const Matrix& f_enc, const ModelParams& params);
Prediction forward(const scene::Scene& s, const scene::GoalConditioning* goal,
                   const ModelParams& params);

}  // namespace mnm::golfer
