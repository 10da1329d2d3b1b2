#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "panet/nn.hpp"
#include "panet/tensor.hpp"

namespace panet::harness {

inline constexpr char kCheckpointMagic[] = "PANK1\n";
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

/// Layout (little-endian): magic, u32 version, u32 config length, config text,
/// u32 tensor count, then per tensor: u32 name length, name, u32 rank,
/// u64 dims[rank], f64 values[numel].
struct Checkpoint {
  std::string config_text;
  std::vector<NamedTensor> tensors;
};

void save_checkpoint(const std::string& path, const std::string& config_text, const ParameterRegistry& registry);
Checkpoint load_checkpoint(const std::string& path);
/// Copies values into same-named registry entries. Missing names or shape
/// mismatches throw ConfigError.
void restore_parameters(const Checkpoint& ckpt, ParameterRegistry& registry);

}  // namespace panet::harness
