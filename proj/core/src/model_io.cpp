#include "mnm/model_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <string>

#include "mnm/errors.hpp"

namespace mnm::golfer {

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  std::array<char, 4> b;
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b.data(), b.size());
}

void put_u64(std::ostream& out, std::uint64_t v) {
  std::array<char, 8> b;
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b.data(), b.size());
}

void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

std::uint64_t get_bytes(std::istream& in, int n) {
  std::array<unsigned char, 8> b{};
  in.read(reinterpret_cast<char*>(b.data()), n);
  if (!in) throw FormatError("model file: unexpected end of file");
  std::uint64_t v = 0;
  for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

std::uint32_t get_u32(std::istream& in) { return static_cast<std::uint32_t>(get_bytes(in, 4)); }
std::uint64_t get_u64(std::istream& in) { return get_bytes(in, 8); }
double get_f64(std::istream& in) { return std::bit_cast<double>(get_u64(in)); }

void put_config(std::ostream& out, const GolferConfig& c) {
  for (std::uint64_t v : {c.d, c.heads, c.fe_depth, c.interact_depth, c.modes, c.horizon, c.d_ff,
                          c.decoder_hidden, c.fusion_hidden, c.d_in, c.d_ctx})
    put_u64(out, v);
  put_u32(out, static_cast<std::uint32_t>(c.activation));
  put_u32(out, static_cast<std::uint32_t>(c.interaction_projection));
  put_f64(out, c.position_scale);
  put_u64(out, c.seed);
}

GolferConfig get_config(std::istream& in) {
  GolferConfig c;
  for (std::size_t* field : {&c.d, &c.heads, &c.fe_depth, &c.interact_depth, &c.modes, &c.horizon,
                             &c.d_ff, &c.decoder_hidden, &c.fusion_hidden, &c.d_in, &c.d_ctx})
    *field = static_cast<std::size_t>(get_u64(in));
  const std::uint32_t act = get_u32(in);
  if (act > static_cast<std::uint32_t>(Activation::GELU)) throw FormatError("model file: unknown activation");
  c.activation = static_cast<Activation>(act);
  const std::uint32_t proj = get_u32(in);
  if (proj > static_cast<std::uint32_t>(block::ProductProjection::Learned)) {
    throw FormatError("model file: unknown interaction projection");
  }
  c.interaction_projection = static_cast<block::ProductProjection>(proj);
  c.position_scale = get_f64(in);
  c.seed = get_u64(in);
  return c;
}

void check_matches(const GolferConfig& expected, const GolferConfig& found) {
  auto check = [](const char* name, auto e, auto f) {
    if (e != f) {
      throw FormatError("model file: " + std::string(name) + " mismatch, expected " +
                        std::to_string(e) + ", found " + std::to_string(f));
    }
  };
  check("d", expected.d, found.d);
  check("heads", expected.heads, found.heads);
  check("fe_depth", expected.fe_depth, found.fe_depth);
  check("interact_depth", expected.interact_depth, found.interact_depth);
  check("modes", expected.modes, found.modes);
  check("horizon", expected.horizon, found.horizon);
  check("d_ff", expected.ff_width(), found.ff_width());
  check("decoder_hidden", expected.decoder_width(), found.decoder_width());
  check("fusion_hidden", expected.fusion_width(), found.fusion_width());
  check("d_in", expected.d_in, found.d_in);
  check("d_ctx", expected.d_ctx, found.d_ctx);
  check("activation", static_cast<int>(expected.activation), static_cast<int>(found.activation));
  check("interaction_projection", static_cast<int>(expected.interaction_projection),
        static_cast<int>(found.interaction_projection));
  check("position_scale", expected.position_scale, found.position_scale);
}

}  // namespace

void save_params(const ModelParams& params, std::ostream& out) {
  out.write(kModelMagic, sizeof(kModelMagic));
  put_u32(out, kModelVersion);
  put_config(out, params.config);
  std::uint32_t count = 0;
  params.for_each([&count](const std::string&, const Parameter&) { ++count; });
  put_u32(out, count);
  params.for_each([&out](const std::string&, const Parameter& p) {
    put_u32(out, static_cast<std::uint32_t>(p.value.rows()));
    put_u32(out, static_cast<std::uint32_t>(p.value.cols()));
    for (double v : p.value.values()) put_f64(out, v);
  });
}

void save_params(const ModelParams& params, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  save_params(params, out);
  if (!out) throw Error("failed writing " + path.string());
}

ModelParams load_params(std::istream& in) {
  char magic[4] = {};
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kModelMagic, 4) != 0) throw FormatError("model file: bad magic");
  const std::uint32_t version = get_u32(in);
  if (version != kModelVersion) {
    throw FormatError("model file: version " + std::to_string(version) + ", expected " +
                      std::to_string(kModelVersion));
  }
  const GolferConfig config = get_config(in);
  try {
    validate(config);
  } catch (const ConfigError& e) {
    throw FormatError(std::string("model file: invalid embedded config: ") + e.what());
  }
  ModelParams params = init_model(config);
  std::uint32_t expected_count = 0;
  params.for_each([&](const std::string&, const Parameter&) { ++expected_count; });
  const std::uint32_t count = get_u32(in);
  if (count != expected_count) {
    throw FormatError("model file: " + std::to_string(count) + " tensors, expected " +
                      std::to_string(expected_count));
  }
  params.for_each([&in](const std::string& name, Parameter& p) {
    const std::uint32_t rows = get_u32(in);
    const std::uint32_t cols = get_u32(in);
    if (rows != p.value.rows() || cols != p.value.cols()) {
      throw FormatError("model file: tensor " + name + " has shape " + std::to_string(rows) + "x" +
                        std::to_string(cols) + ", expected " + p.value.shape_string());
    }
    for (double& v : p.value.values()) v = get_f64(in);
    p.zero_grad();
  });
  return params;
}

ModelParams load_params(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return load_params(in);
}

ModelParams load_params(const std::filesystem::path& path, const GolferConfig& expected, bool force) {
  ModelParams params = load_params(path);
  if (!force) check_matches(expected, params.config);
  return params;
}

}  // namespace mnm::golfer
