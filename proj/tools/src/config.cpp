#include "golfer_cli/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

#include <fmt/format.h>

#include "mnm/errors.hpp"

namespace golfer_cli {

using mnm::ConfigError;

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_integer(std::string_view key, std::string_view v) {
  T out{};
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError(std::string(key) + ": expected a non-negative integer, got '" + std::string(v) + "'");
  }
  return out;
}

double parse_real(std::string_view key, std::string_view v) {
  // std::from_chars for doubles is unavailable in older libstdc++.
  std::string s(v);
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) {
    throw ConfigError(std::string(key) + ": expected a real number, got '" + s + "'");
  }
  return out;
}

struct Field {
  std::string key;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <class Section, class T>
Field size_field(std::string key, Section RunConfig::*section, T Section::*member) {
  return {key,
          [key, section, member](RunConfig& c, std::string_view v) {
            (c.*section).*member = parse_integer<T>(key, v);
          },
          [section, member](const RunConfig& c) { return std::to_string((c.*section).*member); }};
}

template <class Section>
Field real_field(std::string key, Section RunConfig::*section, double Section::*member) {
  return {key,
          [key, section, member](RunConfig& c, std::string_view v) {
            (c.*section).*member = parse_real(key, v);
          },
          [section, member](const RunConfig& c) { return fmt::format("{:.17g}", (c.*section).*member); }};
}

const std::vector<Field>& fields() {
  using mnm::scene::GeneratorConfig;
  using mnm::golfer::GolferConfig;
  using mnm::train::TrainConfig;
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back(size_field("data.seed", &RunConfig::data, &GeneratorConfig::seed));
    f.push_back(size_field("data.num_scenes", &RunConfig::data, &GeneratorConfig::num_scenes));
    f.push_back(size_field("data.min_roads", &RunConfig::data, &GeneratorConfig::min_roads));
    f.push_back(size_field("data.max_roads", &RunConfig::data, &GeneratorConfig::max_roads));
    f.push_back(size_field("data.min_agents", &RunConfig::data, &GeneratorConfig::min_agents));
    f.push_back(size_field("data.max_agents", &RunConfig::data, &GeneratorConfig::max_agents));
    f.push_back(size_field("data.points_per_polyline", &RunConfig::data, &GeneratorConfig::points_per_polyline));
    f.push_back(size_field("data.history_steps", &RunConfig::data, &GeneratorConfig::history_steps));
    f.push_back(size_field("data.horizon", &RunConfig::data, &GeneratorConfig::horizon));
    f.push_back(real_field("data.dt", &RunConfig::data, &GeneratorConfig::dt));
    f.push_back(real_field("data.min_speed", &RunConfig::data, &GeneratorConfig::min_speed));
    f.push_back(real_field("data.max_speed", &RunConfig::data, &GeneratorConfig::max_speed));
    f.push_back(real_field("data.noise", &RunConfig::data, &GeneratorConfig::noise));
    f.push_back(real_field("data.max_curvature", &RunConfig::data, &GeneratorConfig::max_curvature));
    f.push_back(real_field("data.curved_fraction", &RunConfig::data, &GeneratorConfig::curved_fraction));

    f.push_back(size_field("model.d", &RunConfig::model, &GolferConfig::d));
    f.push_back(size_field("model.heads", &RunConfig::model, &GolferConfig::heads));
    f.push_back(size_field("model.fe_depth", &RunConfig::model, &GolferConfig::fe_depth));
    f.push_back(size_field("model.interact_depth", &RunConfig::model, &GolferConfig::interact_depth));
    f.push_back(size_field("model.modes", &RunConfig::model, &GolferConfig::modes));
    f.push_back(size_field("model.d_ff", &RunConfig::model, &GolferConfig::d_ff));
    f.push_back(size_field("model.decoder_hidden", &RunConfig::model, &GolferConfig::decoder_hidden));
    f.push_back(size_field("model.fusion_hidden", &RunConfig::model, &GolferConfig::fusion_hidden));
    f.push_back(real_field("model.position_scale", &RunConfig::model, &GolferConfig::position_scale));
    f.push_back(size_field("model.seed", &RunConfig::model, &GolferConfig::seed));
    f.push_back({"model.activation",
                 [](RunConfig& c, std::string_view v) {
                   if (v == "gelu") c.model.activation = mnm::Activation::GELU;
                   else if (v == "relu") c.model.activation = mnm::Activation::ReLU;
                   else throw ConfigError("model.activation: expected gelu or relu, got '" + std::string(v) + "'");
                 },
                 [](const RunConfig& c) {
                   return std::string(c.model.activation == mnm::Activation::GELU ? "gelu" : "relu");
                 }});
    f.push_back({"model.interaction_projection",
                 [](RunConfig& c, std::string_view v) {
                   using mnm::block::ProductProjection;
                   if (v == "identity") c.model.interaction_projection = ProductProjection::Identity;
                   else if (v == "learned") c.model.interaction_projection = ProductProjection::Learned;
                   else throw ConfigError("model.interaction_projection: expected identity or learned, got '" +
                                          std::string(v) + "'");
                 },
                 [](const RunConfig& c) {
                   return std::string(c.model.interaction_projection == mnm::block::ProductProjection::Identity
                                          ? "identity"
                                          : "learned");
                 }});

    f.push_back(size_field("train.epochs", &RunConfig::train, &TrainConfig::epochs));
    f.push_back(real_field("train.lr", &RunConfig::train, &TrainConfig::lr));
    f.push_back(real_field("train.lambda", &RunConfig::train, &TrainConfig::lambda));
    f.push_back(real_field("train.mask_ratio", &RunConfig::train, &TrainConfig::mask_ratio));
    f.push_back(size_field("train.seed", &RunConfig::train, &TrainConfig::seed));

    f.push_back(size_field("ensemble.k", &RunConfig::ensemble, &EnsembleSection::k));
    f.push_back(size_field("ensemble.seed", &RunConfig::ensemble, &EnsembleSection::seed));
    f.push_back(size_field("ensemble.max_iters", &RunConfig::ensemble, &EnsembleSection::max_iters));
    f.push_back(real_field("ensemble.tol", &RunConfig::ensemble, &EnsembleSection::tol));

    f.push_back(real_field("metrics.threshold_m", &RunConfig::metrics, &MetricsSection::threshold_m));
    return f;
  }();
  return table;
}

void check(bool ok, const std::string& key, const std::string& what) {
  if (!ok) throw ConfigError(key + ": " + what);
}

std::string value_text(double v) { return fmt::format("{:.17g}", v); }

}  // namespace

bool operator==(const RunConfig& a, const RunConfig& b) {
  return to_config_text(a) == to_config_text(b);
}

RunConfig parse_config_text(std::string_view text) {
  RunConfig config;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto end = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) {
      if (end == text.size()) break;
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string_view key = trim(line.substr(0, eq));
    const std::string_view value = trim(line.substr(eq + 1));
    const auto& table = fields();
    auto it = std::find_if(table.begin(), table.end(), [&](const Field& f) { return f.key == key; });
    if (it == table.end()) throw ConfigError(std::string(key) + ": unknown key");
    it->set(config, value);
    if (end == text.size()) break;
  }
  config.model.horizon = config.data.horizon;
  validate(config);
  return config;
}

RunConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

void validate(const RunConfig& c) {
  const auto& d = c.data;
  check(d.num_scenes >= 1, "data.num_scenes", "must be >= 1");
  check(d.min_roads >= 1, "data.min_roads", "must be >= 1");
  check(d.max_roads >= d.min_roads, "data.max_roads", "must be >= data.min_roads");
  check(d.max_agents >= d.min_agents, "data.max_agents", "must be >= data.min_agents");
  check(d.points_per_polyline >= 2, "data.points_per_polyline", "must be >= 2");
  check(d.history_steps >= 2, "data.history_steps", "must be >= 2");
  check(d.horizon >= 1, "data.horizon", "must be >= 1");
  check(d.dt > 0.0, "data.dt", "value " + value_text(d.dt) + " must be positive");
  check(d.min_speed >= 0.0, "data.min_speed", "must be non-negative");
  check(d.max_speed >= d.min_speed, "data.max_speed", "must be >= data.min_speed");
  check(d.noise >= 0.0, "data.noise", "must be non-negative");
  check(d.max_curvature >= 0.0, "data.max_curvature", "must be non-negative");
  check(d.curved_fraction >= 0.0 && d.curved_fraction <= 1.0, "data.curved_fraction",
        "value " + value_text(d.curved_fraction) + " outside [0, 1]");

  const auto& m = c.model;
  check(m.d >= 1, "model.d", "must be >= 1");
  check(m.heads >= 1, "model.heads", "must be >= 1");
  check(m.d % m.heads == 0, "model.heads", "must divide model.d");
  check(m.modes >= 1, "model.modes", "must be >= 1");
  check(m.position_scale > 0.0, "model.position_scale", "must be positive");
  check(m.horizon == d.horizon, "model.horizon", "must equal data.horizon");

  const auto& t = c.train;
  check(t.epochs >= 1, "train.epochs", "must be >= 1");
  check(t.lr > 0.0, "train.lr", "value " + value_text(t.lr) + " must be positive");
  check(t.lambda >= 0.0, "train.lambda", "value " + value_text(t.lambda) + " must be non-negative");
  check(t.mask_ratio >= 0.0 && t.mask_ratio <= 1.0, "train.mask_ratio",
        "value " + value_text(t.mask_ratio) + " outside [0, 1]");

  check(c.ensemble.k >= 1, "ensemble.k", "must be >= 1");
  check(c.ensemble.max_iters >= 1, "ensemble.max_iters", "must be >= 1");
  check(c.ensemble.tol >= 0.0, "ensemble.tol", "must be non-negative");
  check(c.metrics.threshold_m > 0.0, "metrics.threshold_m",
        "value " + value_text(c.metrics.threshold_m) + " must be positive");
}

std::string to_config_text(const RunConfig& config) {
  std::string out;
  for (const Field& f : fields()) {
    out += f.key;
    out += " = ";
    out += f.get(config);
    out += '\n';
  }
  return out;
}

mnm::ensemble::KMeansOptions kmeans_options(const RunConfig& config) {
  return {config.ensemble.max_iters, config.ensemble.tol};
}

}  // namespace golfer_cli
