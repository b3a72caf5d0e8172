#include "mnm/train.hpp"

#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "mnm/errors.hpp"
#include "mnm/random.hpp"

namespace mnm::train {

std::string to_json(const TraceRecord& r) {
  return fmt::format(
      "{{\"epoch\":{},\"step\":{},\"regression_nll\":{:.17g},\"classification_ce\":{:.17g},"
      "\"total\":{:.17g}}}",
      r.epoch, r.step, r.regression_nll, r.classification_ce, r.total);
}

LossBreakdown train_step(golfer::ModelParams& params, std::span<const ParamRef> refs,
                         OptimizerState& opt, const scene::Scene& s,
                         const scene::GoalConditioning& goal, double lambda) {
  Tape tape;
  auto vars = golfer::forward(tape, s, &goal, params);
  auto loss = total_loss(tape, vars, s.future, s.future_mask, goal.exclusion_index, lambda);
  if (!std::isfinite(loss.breakdown.total)) return loss.breakdown;
  tape.backward(loss.total);
  for (const ParamRef& r : refs) tape.flush_param_grad(*r.param);
  optimizer_step(refs, opt);
  return loss.breakdown;
}

TrainResult train(std::span<const scene::Scene> dataset, const golfer::GolferConfig& model,
                  const TrainConfig& config, const StepCallback& on_step) {
  return train(dataset, golfer::init_model(model), config, on_step);
}

TrainResult train(std::span<const scene::Scene> dataset, golfer::ModelParams params,
                  const TrainConfig& config, const StepCallback& on_step) {
  if (dataset.empty()) throw EmptySetError("train: empty dataset");
  for (const auto& s : dataset) {
    if (s.horizon() != params.config.horizon) {
      throw DimensionError("train: scene horizon " + std::to_string(s.horizon()) +
                            " differs from model horizon " + std::to_string(params.config.horizon));
    }
  }
  TrainResult result;
  OptimizerState opt;
  opt.config.lr = config.lr;
  const auto refs = collect_parameters(params);
  for (const ParamRef& r : refs) r.param->zero_grad();

  std::vector<std::size_t> order(dataset.size());
  std::size_t global_step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng(derive_seed(config.seed, 2 * epoch));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[shuffle_rng.uniform_int(i)]);
    }
    Rng mask_rng(derive_seed(config.seed, 2 * epoch + 1));

    double epoch_total = 0.0;
    for (std::size_t sample : order) {
      const scene::Scene& s = dataset[sample];
      const auto goal = scene::apply_goal_masking(s.future, mask_rng, config.mask_ratio);
      const LossBreakdown b = train_step(params, refs, opt, s, goal, config.lambda);
      if (!std::isfinite(b.total)) {
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", sample " +
                            std::to_string(sample));
      }
      TraceRecord rec{epoch, global_step++, b.regression_nll, b.classification_ce, b.total};
      epoch_total += b.total;
      result.trace.push_back(rec);
      if (on_step) on_step(rec);
    }
    result.epoch_mean_total.push_back(epoch_total / static_cast<double>(dataset.size()));
  }
  result.params = std::move(params);
  return result;
}

}  // namespace mnm::train
