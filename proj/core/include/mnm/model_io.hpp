#pragma once

// Binary model file:
//   "MNMG" | u32 version | config | u32 tensor count |
//   per tensor (declaration order): u32 rows | u32 cols | rows·cols f64
// All integers and reals little-endian.

#include <cstdint>
#include <filesystem>
#include <iosfwd>

#include "mnm/golfer.hpp"

namespace mnm::golfer {

inline constexpr char kModelMagic[4] = {'M', 'N', 'M', 'G'};
inline constexpr std::uint32_t kModelVersion = 1;

void save_params(const ModelParams& params, std::ostream& out);
void save_params(const ModelParams& params, const std::filesystem::path& path);

/// Uses the configuration embedded in the file.
ModelParams load_params(std::istream& in);
ModelParams load_params(const std::filesystem::path& path);

/// Rejects a file whose embedded configuration differs from `expected`
/// (FormatError naming the field, expected and found) unless `force` is set,
/// in which case the file's own configuration is used.
ModelParams load_params(const std::filesystem::path& path, const GolferConfig& expected,
                        bool force = false);

}  // namespace mnm::golfer
