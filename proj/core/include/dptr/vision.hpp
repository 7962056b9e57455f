#pragma once

#include "dptr/autodiff.hpp"
#include "dptr/common.hpp"
#include "dptr/config.hpp"
#include "dptr/dualenc.hpp"  // patchify
#include "dptr/embedding.hpp"
#include "dptr/nn.hpp"
#include "dptr/render.hpp"

#include <string>
#include <utility>
#include <vector>

namespace dptr {

struct VisionConfig {
  int d = 64;
  int heads = 4;
  int layers = 3;
  int ffn_mult = 4;
  int patch_h = 4;
  int patch_w = 8;
  int canvas_h = 32;
  int canvas_w = 64;
  int l_u = 13;

  int n_patches() const { return (canvas_h / patch_h) * (canvas_w / patch_w); }

  static VisionConfig from_train_config(const TrainConfig& tc) {
    VisionConfig c;
    c.d = tc.dims.feat_dim;
    c.heads = tc.dims.heads;
    c.layers = tc.dims.enc_layers;
    c.ffn_mult = tc.dims.ffn_mult;
    c.patch_h = tc.patch_h;
    c.patch_w = tc.patch_w;
    c.canvas_h = tc.canvas_h;
    c.canvas_w = tc.canvas_w;
    c.l_u = tc.l_u;
    return c;
  }
};

// ViT-style recognizer encoder: one token per patch, no [CLS].
template <typename S>
struct VisionNet {
  VisionConfig cfg;
  LinearIdx<S> patch_proj;
  int pos_emb = -1;
  std::vector<EncoderBlock<S>> blocks;
  LayerNormIdx<S> ln_f;

  void init(ParamStore<S>& ps, const std::string& prefix, const VisionConfig& c, Rng& rng) {
    cfg = c;
    patch_proj.init(ps, prefix + ".patch", c.patch_h * c.patch_w, c.d, rng);
    pos_emb = ps.add(prefix + ".pos_emb", randn<S>(c.n_patches(), c.d, static_cast<S>(0.02), rng));
    blocks.resize(static_cast<size_t>(c.layers));
    for (int l = 0; l < c.layers; ++l)
      blocks[static_cast<size_t>(l)].init(ps, prefix + ".block" + std::to_string(l), c.d, c.heads,
                                          c.ffn_mult, rng);
    ln_f.init(ps, prefix + ".ln_f", c.d);
  }

  typename Tape<S>::Ref forward(Tape<S>& t, const MatF& pixels, bool frozen) const {
    auto patches = t.input(patchify<S>(pixels, cfg.patch_h, cfg.patch_w));
    auto x = t.add(patch_proj.apply(t, patches, frozen), leaf(t, pos_emb, frozen));
    for (const auto& b : blocks) x = b.apply(t, x, frozen);
    return ln_f.apply(t, x, frozen);
  }
};

// Feature merge unit: a learnable query bank cross-attends over the image
// tokens, followed by a residual feed-forward.
template <typename S>
struct FmuNet {
  int query = -1;
  LayerNormIdx<S> ln_q, ln_f;
  LinearIdx<S> q, k, v, o, f1, f2;
  int heads = 4;

  void init(ParamStore<S>& ps, const std::string& prefix, int l_u, int d, int n_heads,
            int ffn_mult, Rng& rng) {
    heads = n_heads;
    query = ps.add(prefix + ".query", randn<S>(l_u, d, static_cast<S>(0.02), rng));
    ln_q.init(ps, prefix + ".ln_q", d);
    q.init(ps, prefix + ".q", d, d, rng);
    k.init(ps, prefix + ".k", d, d, rng);
    v.init(ps, prefix + ".v", d, d, rng);
    o.init(ps, prefix + ".o", d, d, rng);
    ln_f.init(ps, prefix + ".ln_f", d);
    f1.init(ps, prefix + ".f1", d, d * ffn_mult, rng);
    f2.init(ps, prefix + ".f2", d * ffn_mult, d, rng);
  }

  // Returns (merged ref, attention node ref).
  std::pair<typename Tape<S>::Ref, typename Tape<S>::Ref> forward(
      Tape<S>& t, typename Tape<S>::Ref image_tokens, bool frozen) const {
    auto qs = leaf(t, query, frozen);
    auto qn = ln_q.apply(t, qs, frozen);
    auto attn = t.attention(q.apply(t, qn, frozen), k.apply(t, image_tokens, frozen),
                            v.apply(t, image_tokens, frozen), heads, BoolMat{});
    auto x = t.add(qs, o.apply(t, attn, frozen));
    auto fn = ln_f.apply(t, x, frozen);
    x = t.add(x, f2.apply(t, t.gelu(f1.apply(t, fn, frozen)), frozen));
    return {x, attn};
  }
};

// Float bundle for standalone use (tests, attention export).
struct VisionModel {
  VisionConfig cfg;
  ParamStore<float> store;
  VisionNet<float> net;
  FmuNet<float> fmu;
  std::uint64_t seed = 0;

  static VisionModel init(const VisionConfig& cfg, std::uint64_t seed);
};

// F_i = Enc(X): n_patches x D, no [CLS].
EmbeddingMatrix encode_image(const VisionModel& model, const TextImage& img);

// F_u plus the head-averaged attention weights (l_u x l_i, rows sum to 1).
std::pair<EmbeddingMatrix, MatF> fmu_merge(const VisionModel& model, const EmbeddingMatrix& f_i);

// cut: first l_u rows verbatim. pool: adaptive average pooling over rows.
EmbeddingMatrix baseline_merge(const EmbeddingMatrix& f_i, int l_u, MergeMode mode);

// One heatmap PGM per query row (<prefix>_q##.pgm) plus an overlay on the
// source image (<prefix>_q##_overlay.pgm). Heatmaps are normalized by their
// maximum. Returns the written paths.
std::vector<std::string> export_attention(const MatF& attn, const TextImage& img, int patch_h,
                                          int patch_w, const std::string& prefix);

}  // namespace dptr
