#include "dptr/config.hpp"

#include "dptr/common.hpp"
#include "dptr/io.hpp"

#include <nlohmann/json.hpp>

#include <cstdio>

namespace dptr {

std::string to_string(LossVariant v) {
  switch (v) {
    case LossVariant::parseq: return "parseq";
    case LossVariant::nrtr: return "nrtr";
    case LossVariant::cloze: return "cloze";
  }
  fail("unknown variant");
}

std::string to_string(MergeMode m) {
  switch (m) {
    case MergeMode::fmu: return "fmu";
    case MergeMode::cut: return "cut";
    case MergeMode::pool: return "pool";
    case MergeMode::none: return "none";
  }
  fail("unknown merge mode");
}

LossVariant variant_from_string(const std::string& s) {
  if (s == "parseq") return LossVariant::parseq;
  if (s == "nrtr") return LossVariant::nrtr;
  if (s == "cloze") return LossVariant::cloze;
  fail("unknown variant: " + s);
}

MergeMode merge_from_string(const std::string& s) {
  if (s == "fmu") return MergeMode::fmu;
  if (s == "cut") return MergeMode::cut;
  if (s == "pool") return MergeMode::pool;
  if (s == "none") return MergeMode::none;
  fail("unknown merge mode: " + s);
}

std::string TrainConfig::to_json() const {
  nlohmann::json j;
  j["lambda"] = lambda;
  j["l_u"] = l_u;
  j["k_masks"] = k_masks;
  j["variant"] = to_string(variant);
  j["merge"] = to_string(merge);
  j["lr"] = lr;
  j["batch"] = batch;
  j["epochs"] = epochs;
  j["seed"] = seed;
  j["freeze_decoder"] = freeze_decoder;
  j["max_len"] = max_len;
  j["l_budget"] = l_budget;
  j["canvas_h"] = canvas_h;
  j["canvas_w"] = canvas_w;
  j["patch_h"] = patch_h;
  j["patch_w"] = patch_w;
  j["strength"] = strength;
  j["threads"] = threads;
  j["dims"] = {
      {"feat_dim", dims.feat_dim},     {"heads", dims.heads},
      {"text_layers", dims.text_layers}, {"image_layers", dims.image_layers},
      {"enc_layers", dims.enc_layers}, {"dec_layers", dims.dec_layers},
      {"ffn_mult", dims.ffn_mult},
  };
  return j.dump();
}

TrainConfig TrainConfig::from_json(const std::string& json_text) {
  const nlohmann::json j = nlohmann::json::parse(json_text);
  TrainConfig c;
  auto get = [&j](const char* key, auto& out) {
    if (j.contains(key)) out = j.at(key).template get<std::remove_reference_t<decltype(out)>>();
  };
  get("lambda", c.lambda);
  get("l_u", c.l_u);
  get("k_masks", c.k_masks);
  if (j.contains("variant")) c.variant = variant_from_string(j.at("variant").get<std::string>());
  if (j.contains("merge")) c.merge = merge_from_string(j.at("merge").get<std::string>());
  get("lr", c.lr);
  get("batch", c.batch);
  get("epochs", c.epochs);
  get("seed", c.seed);
  get("freeze_decoder", c.freeze_decoder);
  get("max_len", c.max_len);
  get("l_budget", c.l_budget);
  get("canvas_h", c.canvas_h);
  get("canvas_w", c.canvas_w);
  get("patch_h", c.patch_h);
  get("patch_w", c.patch_w);
  get("strength", c.strength);
  get("threads", c.threads);
  if (j.contains("dims")) {
    const auto& d = j.at("dims");
    auto getd = [&d](const char* key, int& out) {
      if (d.contains(key)) out = d.at(key).get<int>();
    };
    getd("feat_dim", c.dims.feat_dim);
    getd("heads", c.dims.heads);
    getd("text_layers", c.dims.text_layers);
    getd("image_layers", c.dims.image_layers);
    getd("enc_layers", c.dims.enc_layers);
    getd("dec_layers", c.dims.dec_layers);
    getd("ffn_mult", c.dims.ffn_mult);
  }
  require(c.lambda >= 0.0, "lambda must be >= 0");
  require(c.epochs >= 1, "epochs must be >= 1");
  require(c.batch >= 1, "batch must be >= 1");
  return c;
}

TrainConfig TrainConfig::from_json_file(const std::string& path) {
  return from_json(read_file(path));
}

std::string TrainConfig::hash() const {
  const std::string s = to_json();
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

TrainConfig TrainConfig::reference() {
  TrainConfig c;
  c.lambda = 0.1;
  c.max_len = 25;
  c.l_u = 26;
  c.l_budget = 77;
  c.lr = 7e-4;
  c.canvas_h = 32;
  c.canvas_w = 128;
  c.patch_h = 4;
  c.patch_w = 8;
  c.dims.feat_dim = 512;
  c.dims.heads = 8;
  return c;
}

}  // namespace dptr
