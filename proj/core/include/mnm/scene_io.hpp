#pragma once

// Line-delimited scene datasets. The first line is the header record
// {"format":"mnm-scenes","version":1}; every following line holds one scene
// {version, ego, agents[], roads[], future[], future_mask[]} with reals
// printed to 17 significant digits so a read/write cycle is lossless.

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mnm/scene.hpp"

namespace mnm::scene {

inline constexpr std::string_view kDatasetFormat = "mnm-scenes";
inline constexpr int kDatasetVersion = 1;

std::string serialize_scene(const Scene& scene);
/// `line_number` is only used in error messages.
Scene parse_scene(std::string_view line, std::size_t line_number);

void write_dataset(std::span<const Scene> scenes, std::ostream& out);
void write_dataset(std::span<const Scene> scenes, const std::filesystem::path& path);

/// An empty stream is an empty dataset. Malformed lines raise ParseError
/// naming the line; a foreign header or version raises FormatError.
std::vector<Scene> read_dataset(std::istream& in);
std::vector<Scene> read_dataset(const std::filesystem::path& path);

}  // namespace mnm::scene
