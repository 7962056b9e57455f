#pragma once

#include "dptr/autodiff.hpp"
#include "dptr/common.hpp"

#include <cstdint>
#include <map>
#include <string>

namespace dptr {

// Checkpoint file: one line of JSON (stage, seed, config, metrics and the
// tensor directory with shapes), then every tensor's float32 values,
// little-endian, row-major, in directory order.
struct Checkpoint {
  std::string stage;  // "dualenc" | "decoder" | "full"
  std::uint64_t seed = 0;
  std::string config_json;
  std::map<std::string, double> metrics;
  ParamStore<float> params;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Copies tensors from `src` into `dst` by name, optionally rewriting a name
// prefix. Throws when a destination tensor is missing or shaped differently.
void load_params_by_name(const ParamStore<float>& src, ParamStore<float>& dst,
                         const std::string& src_prefix = "", const std::string& dst_prefix = "");

// FNV-1a over the serialized tensor payload; used for freeze checks.
std::uint64_t params_fingerprint(const ParamStore<float>& params);

}  // namespace dptr
