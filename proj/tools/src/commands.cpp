#include "golfer_cli/commands.hpp"

#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "golfer_cli/grad_suite.hpp"
#include "mnm/errors.hpp"
#include "mnm/kmeans.hpp"
#include "mnm/metrics.hpp"
#include "mnm/model_io.hpp"
#include "mnm/scene_io.hpp"
#include "mnm/train.hpp"

namespace golfer_cli {

namespace fs = std::filesystem;
using namespace mnm;

namespace {

const fs::path& require(const std::optional<fs::path>& p, const char* flag, const std::string& command) {
  if (!p) throw ConfigError(command + " requires " + flag);
  return *p;
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path.string() + " for writing");
  return f;
}

std::vector<scene::Scene> load_data(const CommandOptions& options, const std::string& command) {
  const fs::path& path = require(options.data, "--data", command);
  if (!fs::exists(path)) throw Error("data file not found: " + path.string());
  return scene::read_dataset(path);
}

golfer::ModelParams load_model(const fs::path& path) {
  if (!fs::exists(path)) throw Error("model file not found: " + path.string());
  return golfer::load_params(path);
}

void check_horizon(const golfer::ModelParams& params, std::span<const scene::Scene> data,
                   const fs::path& model_path) {
  for (const scene::Scene& s : data) {
    if (s.future.rows() != params.config.horizon) {
      throw FormatError(fmt::format("{}: model horizon {} does not match data horizon {}",
                                    model_path.string(), params.config.horizon, s.future.rows()));
    }
  }
}

golfer::Prediction predict_scene(const scene::Scene& s, const golfer::ModelParams& params,
                                 bool reveal_final) {
  std::optional<std::size_t> visible;
  if (reveal_final) {
    for (std::size_t t = 0; t < s.future_mask.size(); ++t)
      if (s.future_mask[t]) visible = t;
  }
  const scene::GoalConditioning goal =
      scene::make_goal_conditioning(s.future, visible, scene::Placement::AgentsSet);
  return golfer::forward(s, &goal, params);
}

ensemble::EvalSample sample_for(const scene::Scene& s, std::vector<Matrix> modes) {
  return {std::move(modes), s.future, s.future_mask};
}

std::string baseline_json(const ensemble::MetricsReport& r) {
  std::string body = ensemble::to_json(r);
  return "{\"baseline\":\"constant_velocity\"," + body.substr(1);
}

void write_report(const std::string& text, const CommandOptions& options, std::ostream& out) {
  out << text;
  if (options.out) {
    std::ofstream f = open_output(*options.out);
    f << text;
  }
}

}  // namespace

RunConfig effective_config(const std::string& command, const CommandOptions& options) {
  RunConfig config = options.config ? parse_config(*options.config) : parse_config_text("");
  if (options.seed) {
    const std::uint64_t s = *options.seed;
    if (command == "generate-data") {
      config.data.seed = s;
    } else if (command == "train") {
      config.train.seed = s;
      config.model.seed = s;
    } else if (command == "ensemble") {
      config.ensemble.seed = s;
    } else if (command == "gradcheck") {
      config.model.seed = s;
    }
  }
  return config;
}

fs::path trace_path(const fs::path& model_path) {
  fs::path p = model_path;
  p += ".trace.jsonl";
  return p;
}

std::string prediction_record(std::size_t scene_id, std::size_t mode, double prob, const Matrix& points) {
  std::string s = fmt::format("{{\"scene_id\":{},\"mode\":{},\"prob\":{:.9g},\"points\":[", scene_id, mode, prob);
  for (std::size_t t = 0; t < points.rows(); ++t) {
    if (t) s += ',';
    s += fmt::format("[{:.9g},{:.9g}]", points(t, 0), points(t, 1));
  }
  s += "]}\n";
  return s;
}

int run_generate_data(const RunConfig& config, const CommandOptions& options, std::ostream& out) {
  const fs::path& path = require(options.out, "--out", "generate-data");
  const std::vector<scene::Scene> scenes = scene::generate_dataset(config.data);
  scene::write_dataset(scenes, path);
  out << fmt::format("wrote {} scenes to {}\n", scenes.size(), path.string());
  return kExitOk;
}

int run_train(const RunConfig& config, const CommandOptions& options, std::ostream& out, std::ostream& err) {
  const fs::path& model_path = require(options.out, "--out", "train");
  const std::vector<scene::Scene> data = load_data(options, "train");
  if (data.empty()) throw Error("training data is empty");
  for (const scene::Scene& s : data) {
    if (s.future.rows() != config.model.horizon) {
      throw FormatError(fmt::format("data horizon {} does not match model.horizon {}", s.future.rows(),
                                    config.model.horizon));
    }
  }
  std::ofstream trace = open_output(trace_path(model_path));
  const train::TrainResult result = train::train(
      data, config.model, config.train, [&trace](const train::TraceRecord& r) { trace << train::to_json(r) << '\n'; });
  for (std::size_t e = 0; e < result.epoch_mean_total.size(); ++e) {
    err << fmt::format("epoch {} mean_total {:.6g}\n", e, result.epoch_mean_total[e]);
  }
  golfer::save_params(result.params, model_path);
  out << fmt::format("wrote model ({} parameters) to {}\n", golfer::parameter_count(result.params),
                     model_path.string());
  return kExitOk;
}

int run_evaluate(const RunConfig& config, const CommandOptions& options, std::ostream& out) {
  if (options.models.size() != 1) throw ConfigError("evaluate requires exactly one --model");
  const std::vector<scene::Scene> data = load_data(options, "evaluate");
  const golfer::ModelParams params = load_model(options.models.front());
  check_horizon(params, data, options.models.front());

  std::vector<ensemble::EvalSample> model_samples;
  std::vector<ensemble::EvalSample> baseline_samples;
  for (const scene::Scene& s : data) {
    model_samples.push_back(sample_for(s, predict_scene(s, params, options.reveal_final).means));
    baseline_samples.push_back(sample_for(s, {scene::constant_velocity_baseline(s)}));
  }
  const double threshold = config.metrics.threshold_m;
  const auto model_report = ensemble::evaluate(model_samples, params.config.modes, threshold);
  const auto baseline_report = ensemble::evaluate(baseline_samples, 1, threshold);
  write_report(ensemble::to_json(model_report) + "\n" + baseline_json(baseline_report) + "\n", options, out);
  return kExitOk;
}

int run_predict(const RunConfig&, const CommandOptions& options, std::ostream& out) {
  if (options.models.size() != 1) throw ConfigError("predict requires exactly one --model");
  const fs::path& path = require(options.out, "--out", "predict");
  const std::vector<scene::Scene> data = load_data(options, "predict");
  const golfer::ModelParams params = load_model(options.models.front());
  check_horizon(params, data, options.models.front());
  std::ofstream f = open_output(path);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const golfer::Prediction p = predict_scene(data[i], params, options.reveal_final);
    for (std::size_t k = 0; k < p.means.size(); ++k) f << prediction_record(i, k, p.probs[k], p.means[k]);
  }
  out << fmt::format("wrote predictions for {} scenes to {}\n", data.size(), path.string());
  return kExitOk;
}

int run_ensemble(const RunConfig& config, const CommandOptions& options, std::ostream& out) {
  if (options.models.empty()) throw ConfigError("ensemble requires at least one --model");
  const fs::path& path = require(options.out, "--out", "ensemble");
  std::vector<golfer::ModelParams> models;
  std::size_t total_modes = 0;
  for (const fs::path& m : options.models) {
    models.push_back(load_model(m));
    total_modes += models.back().config.modes;
  }
  const std::size_t k = config.ensemble.k;
  if (k > total_modes) {
    throw ConfigError(fmt::format("ensemble.k: value {} exceeds the {} modes available", k, total_modes));
  }
  const std::vector<scene::Scene> data = load_data(options, "ensemble");
  for (std::size_t m = 0; m < models.size(); ++m) check_horizon(models[m], data, options.models[m]);

  std::ofstream f = open_output(path);
  std::vector<ensemble::EvalSample> samples;
  for (std::size_t i = 0; i < data.size(); ++i) {
    std::vector<golfer::Prediction> preds;
    for (const golfer::ModelParams& m : models) preds.push_back(predict_scene(data[i], m, options.reveal_final));
    const ensemble::EnsembleOutput e =
        ensemble::ensemble_predict(preds, k, derive_seed(config.ensemble.seed, i), kmeans_options(config));
    for (std::size_t c = 0; c < e.centroids.size(); ++c) {
      f << prediction_record(i, c, e.probs[c], e.centroids[c]);
    }
    samples.push_back(sample_for(data[i], e.centroids));
  }
  out << ensemble::to_json(ensemble::evaluate(samples, k, config.metrics.threshold_m)) << '\n';
  return kExitOk;
}

int run_gradcheck(const RunConfig& config, const CommandOptions&, std::ostream& out) {
  bool ok = true;
  for (const GradSuiteEntry& e : run_grad_suite(config.model.seed)) {
    out << fmt::format("{:<36} max_rel_error {:.3e} over {} coordinates {}\n", e.name, e.max_rel_error,
                       e.coordinates, e.passed ? "PASS" : "FAIL");
    ok = ok && e.passed;
  }
  out << (ok ? "gradcheck passed\n" : "gradcheck FAILED\n");
  return ok ? kExitOk : kExitRuntime;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Mix-and-Match motion forecasting toolkit", "golfer"};
  app.require_subcommand(1);
  CommandOptions options;
  std::string config_path, data_path, out_path;
  std::vector<std::string> model_paths;
  std::uint64_t seed = 0;

  struct Spec {
    const char* name;
    const char* help;
  };
  const Spec specs[] = {
      {"generate-data", "Generate a synthetic scene dataset"},
      {"train", "Train a model and write it with its loss trace"},
      {"evaluate", "Print metrics for a model and the constant-velocity baseline"},
      {"predict", "Write per-scene predicted trajectories"},
      {"ensemble", "Cluster the modes of several models into k trajectories"},
      {"gradcheck", "Run the finite-difference gradient suite"},
  };
  std::vector<CLI::App*> subs;
  for (const Spec& s : specs) {
    CLI::App* sub = app.add_subcommand(s.name, s.help);
    sub->add_option("--config", config_path, "Config file (key = value)");
    sub->add_option("--data", data_path, "Dataset file");
    sub->add_option("--model", model_paths, "Model file (repeatable for ensemble)");
    sub->add_option("--out", out_path, "Output path");
    sub->add_option("--seed", seed, "Seed override");
    if (std::string(s.name) == "evaluate" || std::string(s.name) == "predict" ||
        std::string(s.name) == "ensemble") {
      sub->add_flag("--reveal-final", options.reveal_final, "Condition on the final ground-truth step");
    }
    subs.push_back(sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  CLI::App* sub = nullptr;
  for (CLI::App* s : subs) {
    if (s->parsed()) sub = s;
  }
  const std::string command = sub->get_name();
  if (sub->count("--config")) options.config = config_path;
  if (sub->count("--data")) options.data = data_path;
  if (sub->count("--out")) options.out = out_path;
  if (sub->count("--seed")) options.seed = seed;
  for (const std::string& m : model_paths) options.models.emplace_back(m);

  try {
    const RunConfig config = effective_config(command, options);
    err << "# effective config\n" << to_config_text(config);
    if (command == "generate-data") return run_generate_data(config, options, out);
    if (command == "train") return run_train(config, options, out, err);
    if (command == "evaluate") return run_evaluate(config, options, out);
    if (command == "predict") return run_predict(config, options, out);
    if (command == "ensemble") return run_ensemble(config, options, out);
    return run_gradcheck(config, options, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace golfer_cli
