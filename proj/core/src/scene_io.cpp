#include "mnm/scene_io.hpp"

#include <fmt/format.h>

#include <fstream>
#include <iterator>
#include <json.hpp>

#include "mnm/errors.hpp"

namespace mnm::scene {

namespace {

using Json = nlohmann::json;

void append_real(std::string& out, double v) { fmt::format_to(std::back_inserter(out), "{:.17g}", v); }

void append_matrix(std::string& out, const Matrix& m) {
  out += '[';
  for (std::size_t r = 0; r < m.rows(); ++r) {
    if (r) out += ',';
    out += '[';
    for (std::size_t c = 0; c < m.cols(); ++c) {
      if (c) out += ',';
      append_real(out, m(r, c));
    }
    out += ']';
  }
  out += ']';
}

void append_row(std::string& out, const Matrix& m) {
  out += '[';
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (i) out += ',';
    append_real(out, m[i]);
  }
  out += ']';
}

void append_mask(std::string& out, const MaskBits& m) {
  out += '[';
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (i) out += ',';
    out += m[i] ? '1' : '0';
  }
  out += ']';
}

void append_element(std::string& out, const SceneElement& e) {
  out += "{\"kind\":\"";
  out += to_string(e.kind);
  out += "\",\"tokens\":";
  append_matrix(out, e.tokens);
  out += ",\"mask\":";
  append_mask(out, e.mask);
  out += ",\"context\":";
  append_row(out, e.context);
  out += '}';
}

Matrix parse_matrix(const Json& j, std::size_t expected_cols) {
  if (!j.is_array()) throw ParseError("expected an array of rows");
  std::size_t cols = expected_cols;
  if (cols == 0 && !j.empty()) cols = j.front().size();
  Matrix m(j.size(), cols);
  for (std::size_t r = 0; r < j.size(); ++r) {
    const Json& row = j[r];
    if (!row.is_array() || row.size() != cols) throw ParseError("ragged matrix row " + std::to_string(r));
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = row[c].get<double>();
  }
  return m;
}

Matrix parse_row(const Json& j) {
  if (!j.is_array()) throw ParseError("expected an array");
  Matrix m(1, j.size());
  for (std::size_t i = 0; i < j.size(); ++i) m[i] = j[i].get<double>();
  return m;
}

MaskBits parse_mask(const Json& j) {
  if (!j.is_array()) throw ParseError("expected a mask array");
  MaskBits m(j.size(), false);
  for (std::size_t i = 0; i < j.size(); ++i) {
    const int b = j[i].get<int>();
    if (b != 0 && b != 1) throw ParseError("mask bits must be 0 or 1");
    m.set(i, b == 1);
  }
  return m;
}

SceneElement parse_element(const Json& j) {
  SceneElement e;
  e.kind = element_kind_from_string(j.at("kind").get<std::string>());
  e.tokens = parse_matrix(j.at("tokens"), 0);
  e.mask = parse_mask(j.at("mask"));
  e.context = parse_row(j.at("context"));
  if (e.mask.size() != e.tokens.rows()) throw ParseError("element mask length differs from token count");
  return e;
}

}  // namespace

std::string serialize_scene(const Scene& s) {
  std::string out;
  out.reserve(4096);
  out += "{\"version\":";
  out += std::to_string(kDatasetVersion);
  out += ",\"ego\":";
  append_element(out, s.ego);
  out += ",\"agents\":[";
  for (std::size_t i = 0; i < s.agents.size(); ++i) {
    if (i) out += ',';
    append_element(out, s.agents[i]);
  }
  out += "],\"roads\":[";
  for (std::size_t i = 0; i < s.roads.size(); ++i) {
    if (i) out += ',';
    append_element(out, s.roads[i]);
  }
  out += "],\"future\":";
  append_matrix(out, s.future);
  out += ",\"future_mask\":";
  append_mask(out, s.future_mask);
  out += '}';
  return out;
}

Scene parse_scene(std::string_view line, std::size_t line_number) {
  const std::string where = "line " + std::to_string(line_number) + ": ";
  Json j;
  try {
    j = Json::parse(line);
  } catch (const Json::exception& e) {
    throw ParseError(where + "malformed record (" + e.what() + ")");
  }
  try {
    if (!j.is_object()) throw ParseError("record is not an object");
    const int version = j.at("version").get<int>();
    if (version != kDatasetVersion) {
      throw FormatError(where + "scene version " + std::to_string(version) + ", expected " +
                        std::to_string(kDatasetVersion));
    }
    Scene s;
    s.ego = parse_element(j.at("ego"));
    for (const Json& a : j.at("agents")) s.agents.push_back(parse_element(a));
    for (const Json& r : j.at("roads")) s.roads.push_back(parse_element(r));
    s.future = parse_matrix(j.at("future"), 2);
    s.future_mask = parse_mask(j.at("future_mask"));
    if (s.future_mask.size() != s.future.rows()) throw ParseError("future_mask length differs from future");
    return s;
  } catch (const FormatError&) {
    throw;
  } catch (const ParseError& e) {
    throw ParseError(where + e.what());
  } catch (const Json::exception& e) {
    throw ParseError(where + "malformed record (" + e.what() + ")");
  }
}

void write_dataset(std::span<const Scene> scenes, std::ostream& out) {
  out << "{\"format\":\"" << kDatasetFormat << "\",\"version\":" << kDatasetVersion << "}\n";
  for (const Scene& s : scenes) out << serialize_scene(s) << '\n';
}

void write_dataset(std::span<const Scene> scenes, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  write_dataset(scenes, out);
  if (!out) throw Error("failed writing " + path.string());
}

std::vector<Scene> read_dataset(std::istream& in) {
  std::vector<Scene> scenes;
  std::string line;
  std::size_t line_number = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty()) continue;
    if (!header_seen) {
      Json h;
      try {
        h = Json::parse(line);
      } catch (const Json::exception& e) {
        throw ParseError("line " + std::to_string(line_number) + ": malformed header (" + e.what() + ")");
      }
      if (!h.is_object() || h.value("format", std::string{}) != kDatasetFormat) {
        throw FormatError("line " + std::to_string(line_number) + ": not an mnm-scenes dataset");
      }
      if (h.value("version", -1) != kDatasetVersion) {
        throw FormatError("line " + std::to_string(line_number) + ": dataset version " +
                          std::to_string(h.value("version", -1)) + ", expected " +
                          std::to_string(kDatasetVersion));
      }
      header_seen = true;
      continue;
    }
    scenes.push_back(parse_scene(line, line_number));
  }
  return scenes;
}

std::vector<Scene> read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return read_dataset(in);
}

}  // namespace mnm::scene
