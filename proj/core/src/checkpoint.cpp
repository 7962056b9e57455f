#include "dptr/checkpoint.hpp"

#include "dptr/io.hpp"

#include <nlohmann/json.hpp>

#include <cstring>

namespace dptr {

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  nlohmann::json j;
  j["kind"] = "dptr-checkpoint";
  j["version"] = 1;
  j["stage"] = ckpt.stage;
  j["seed"] = ckpt.seed;
  j["config"] = ckpt.config_json.empty() ? nlohmann::json::object()
                                         : nlohmann::json::parse(ckpt.config_json);
  j["metrics"] = ckpt.metrics;
  nlohmann::json tensors = nlohmann::json::array();
  for (int i = 0; i < ckpt.params.size(); ++i) {
    tensors.push_back({{"name", ckpt.params.names[static_cast<size_t>(i)]},
                       {"rows", ckpt.params[i].rows()},
                       {"cols", ckpt.params[i].cols()}});
  }
  j["tensors"] = std::move(tensors);

  std::string bytes = j.dump();
  bytes.push_back('\n');
  for (int i = 0; i < ckpt.params.size(); ++i) {
    const MatF& m = ckpt.params[i];
    bytes.append(reinterpret_cast<const char*>(m.data()),
                 static_cast<size_t>(m.size()) * sizeof(float));
  }
  atomic_write(path, bytes);
}

Checkpoint load_checkpoint(const std::string& path) {
  const std::string bytes = read_file(path);
  const size_t nl = bytes.find('\n');
  require(nl != std::string::npos, "missing checkpoint header");
  const nlohmann::json j = nlohmann::json::parse(bytes.substr(0, nl));
  require(j.value("kind", std::string()) == "dptr-checkpoint", "not a checkpoint file");

  Checkpoint ckpt;
  ckpt.stage = j.at("stage").get<std::string>();
  ckpt.seed = j.at("seed").get<std::uint64_t>();
  ckpt.config_json = j.at("config").dump();
  if (j.contains("metrics"))
    ckpt.metrics = j.at("metrics").get<std::map<std::string, double>>();

  size_t offset = nl + 1;
  for (const auto& t : j.at("tensors")) {
    const std::string name = t.at("name").get<std::string>();
    const Eigen::Index rows = t.at("rows").get<Eigen::Index>();
    const Eigen::Index cols = t.at("cols").get<Eigen::Index>();
    MatF m(rows, cols);
    const size_t n_bytes = static_cast<size_t>(m.size()) * sizeof(float);
    require(offset + n_bytes <= bytes.size(), "truncated checkpoint payload");
    std::memcpy(m.data(), bytes.data() + offset, n_bytes);
    offset += n_bytes;
    ckpt.params.add(name, std::move(m));
  }
  require(offset == bytes.size(), "checkpoint payload size mismatch");
  return ckpt;
}

void load_params_by_name(const ParamStore<float>& src, ParamStore<float>& dst,
                         const std::string& src_prefix, const std::string& dst_prefix) {
  for (int i = 0; i < src.size(); ++i) {
    const std::string& name = src.names[static_cast<size_t>(i)];
    if (name.rfind(src_prefix, 0) != 0) continue;
    const std::string target = dst_prefix + name.substr(src_prefix.size());
    const int j = dst.find(target);
    require(j >= 0, "missing tensor: " + target);
    require(dst[j].rows() == src[i].rows() && dst[j].cols() == src[i].cols(),
            "tensor shape mismatch: " + target);
    dst[j] = src[i];
  }
}

std::uint64_t params_fingerprint(const ParamStore<float>& params) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix_bytes = [&h](const char* p, size_t n) {
    for (size_t i = 0; i < n; ++i) {
      h ^= static_cast<unsigned char>(p[i]);
      h *= 1099511628211ull;
    }
  };
  for (int i = 0; i < params.size(); ++i) {
    const std::string& name = params.names[static_cast<size_t>(i)];
    mix_bytes(name.data(), name.size());
    mix_bytes(reinterpret_cast<const char*>(params[i].data()),
              static_cast<size_t>(params[i].size()) * sizeof(float));
  }
  return h;
}

}  // namespace dptr
