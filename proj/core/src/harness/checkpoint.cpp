#include "panet/harness/checkpoint.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <map>

namespace panet::harness {

namespace {

template <typename T>
void put(std::ofstream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof value);
}

template <typename T>
T get(std::ifstream& in, const std::string& path) {
  T value{};
  if (!in.read(reinterpret_cast<char*>(&value), sizeof value)) {
    throw ConfigError("checkpoint: truncated file " + path);
  }
  return value;
}

std::string get_string(std::ifstream& in, std::size_t length, const std::string& path) {
  if (length > (1u << 26)) throw ConfigError("checkpoint: implausible string length in " + path);
  std::string s(length, '\0');
  if (length > 0 && !in.read(s.data(), static_cast<std::streamsize>(length))) {
    throw ConfigError("checkpoint: truncated file " + path);
  }
  return s;
}

}  // namespace

void save_checkpoint(const std::string& path, const std::string& config_text, const ParameterRegistry& registry) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("checkpoint: cannot write " + path);
  out.write(kCheckpointMagic, sizeof kCheckpointMagic - 1);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(config_text.size()));
  out.write(config_text.data(), static_cast<std::streamsize>(config_text.size()));
  const auto& params = registry.parameters();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p.value.rank()));
    for (std::size_t d : p.value.shape()) put<std::uint64_t>(out, d);
    const auto v = p.value.data();
    out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
  }
  if (!out) throw ConfigError("checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("checkpoint: cannot open " + path);
  char magic[sizeof kCheckpointMagic - 1];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) {
    throw ConfigError("checkpoint: bad magic in " + path);
  }
  const auto version = get<std::uint32_t>(in, path);
  if (version != kCheckpointVersion) {
    throw ConfigError("checkpoint: unsupported version " + std::to_string(version));
  }
  Checkpoint ckpt;
  ckpt.config_text = get_string(in, get<std::uint32_t>(in, path), path);
  const auto count = get<std::uint32_t>(in, path);
  for (std::uint32_t t = 0; t < count; ++t) {
    NamedTensor nt;
    nt.name = get_string(in, get<std::uint32_t>(in, path), path);
    const auto rank = get<std::uint32_t>(in, path);
    if (rank > 8) throw ConfigError("checkpoint: implausible rank for " + nt.name);
    for (std::uint32_t d = 0; d < rank; ++d) nt.shape.push_back(static_cast<std::size_t>(get<std::uint64_t>(in, path)));
    nt.values.resize(numel(nt.shape));
    if (!in.read(reinterpret_cast<char*>(nt.values.data()),
                 static_cast<std::streamsize>(nt.values.size() * sizeof(double)))) {
      throw ConfigError("checkpoint: truncated tensor " + nt.name);
    }
    ckpt.tensors.push_back(std::move(nt));
  }
  return ckpt;
}

void restore_parameters(const Checkpoint& ckpt, ParameterRegistry& registry) {
  std::map<std::string, const NamedTensor*> by_name;
  for (const auto& t : ckpt.tensors) by_name[t.name] = &t;
  for (auto& p : registry.parameters()) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) throw ConfigError("checkpoint: missing tensor " + p.name);
    if (it->second->shape != p.value.shape()) {
      throw ConfigError("checkpoint: shape mismatch for " + p.name + ": " + shape_str(it->second->shape) + " vs " +
                        shape_str(p.value.shape()));
    }
    auto dst = p.value.mutable_data();
    std::copy(it->second->values.begin(), it->second->values.end(), dst.begin());
  }
}

}  // namespace panet::harness
