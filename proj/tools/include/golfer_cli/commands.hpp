#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "golfer_cli/config.hpp"
#include "mnm/golfer.hpp"

namespace golfer_cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

struct CommandOptions {
  std::optional<std::filesystem::path> config;
  std::optional<std::filesystem::path> data;
  std::vector<std::filesystem::path> models;
  std::optional<std::filesystem::path> out;
  std::optional<std::uint64_t> seed;
  bool reveal_final = false;  // evaluate: condition on the final ground-truth step
};

/// Config from --config (or defaults) with --seed applied for `command`.
RunConfig effective_config(const std::string& command, const CommandOptions& options);

/// Path of the loss trace written next to a trained model.
std::filesystem::path trace_path(const std::filesystem::path& model_path);

/// One predict/ensemble output line.
std::string prediction_record(std::size_t scene_id, std::size_t mode, double prob,
                              const mnm::Matrix& points);

int run_generate_data(const RunConfig& config, const CommandOptions& options, std::ostream& out);
int run_train(const RunConfig& config, const CommandOptions& options, std::ostream& out,
              std::ostream& err);
int run_evaluate(const RunConfig& config, const CommandOptions& options, std::ostream& out);
int run_predict(const RunConfig& config, const CommandOptions& options, std::ostream& out);
int run_ensemble(const RunConfig& config, const CommandOptions& options, std::ostream& out);
int run_gradcheck(const RunConfig& config, const CommandOptions& options, std::ostream& out);

/// Full command line handling; returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace golfer_cli
