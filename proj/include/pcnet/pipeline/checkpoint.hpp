#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "pcnet/core/config.hpp"
#include "pcnet/nn/parameters.hpp"

namespace pcnet::pipeline {

// Binary layout: 8-byte magic "PCNETCKP", u32 format version, u64 header
// length, JSON header, then raw little-endian doubles. The header lists
// every tensor (name, shape, frozen flag, payload offset) and the optimizer
// moment buffers.
struct Checkpoint {
  std::string kind;  // "estimator" or "model"
  RunConfig config;
  int epoch = 0;
  std::string rng_state;  // textual std::mt19937_64 state
  nn::ParameterStore params;
  std::int64_t optimizer_steps = 0;
  std::map<std::string, std::vector<double>> adam_m, adam_v;
  std::map<std::string, double> metrics;  // informational
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Writes through a temporary file and renames it into place.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);

// Throws DataError on a missing file, bad magic, unknown version or a
// truncated payload. ConfigError if the stored config does not parse.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace pcnet::pipeline
