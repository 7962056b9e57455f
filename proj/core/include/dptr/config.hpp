#pragma once

#include <cstdint>
#include <string>

namespace dptr {

struct ModelDims {
  int feat_dim = 64;
  int heads = 4;
  int text_layers = 2;   // dual-encoder text tower
  int image_layers = 3;  // dual-encoder image tower
  int enc_layers = 3;    // recognizer vision encoder
  int dec_layers = 2;
  int ffn_mult = 4;
};

enum class LossVariant { parseq, nrtr, cloze };
enum class MergeMode { fmu, cut, pool, none };

std::string to_string(LossVariant v);
std::string to_string(MergeMode m);
LossVariant variant_from_string(const std::string& s);
MergeMode merge_from_string(const std::string& s);

struct TrainConfig {
  double lambda = 0.1;  // perturbation ratio
  int l_u = 13;         // merged token count (max_len + 1)
  int k_masks = 3;      // permutation masks per step
  LossVariant variant = LossVariant::parseq;
  MergeMode merge = MergeMode::fmu;
  double lr = 1e-3;
  int batch = 32;
  int epochs = 20;
  std::uint64_t seed = 0;
  bool freeze_decoder = false;
  int max_len = 12;
  int l_budget = 24;  // prompt content tokens; prompt length is l_budget+1
  int canvas_h = 32;
  int canvas_w = 64;
  int patch_h = 4;
  int patch_w = 8;
  double strength = 0.5;  // cluttered-domain corruption
  int threads = 0;        // 0 = hardware default
  ModelDims dims;

  int l_t() const { return l_budget + 1; }
  int n_patches() const { return (canvas_h / patch_h) * (canvas_w / patch_w); }

  std::string to_json() const;
  static TrainConfig from_json(const std::string& json_text);
  static TrainConfig from_json_file(const std::string& path);

  // FNV-1a over the canonical JSON form.
  std::string hash() const;

  // Full-scale settings kept for reference: 32x128 canvas, patch 4x8,
  // max_len 25, 77+[EOS] prompt tokens, feature dim 512, L_u 26, lr 7e-4.
  static TrainConfig reference();
};

}  // namespace dptr
