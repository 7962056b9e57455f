#pragma once

#include "dptr/autodiff.hpp"
#include "dptr/common.hpp"
#include "dptr/config.hpp"
#include "dptr/corpus.hpp"
#include "dptr/embedding.hpp"
#include "dptr/nn.hpp"
#include "dptr/render.hpp"
#include "dptr/thread_pool.hpp"
#include "dptr/vocab.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace dptr {

struct DualEncoderConfig {
  int d = 64;
  int heads = 4;
  int text_layers = 2;
  int image_layers = 3;
  int ffn_mult = 4;
  int l_t = 25;  // prompt rows including the trailing [EOS]
  int canvas_h = 32;
  int canvas_w = 64;
  int patch_h = 4;
  int patch_w = 8;

  int n_patches() const { return (canvas_h / patch_h) * (canvas_w / patch_w); }
  int image_rows() const { return 1 + n_patches(); }

  static DualEncoderConfig from_train_config(const TrainConfig& tc) {
    DualEncoderConfig c;
    c.d = tc.dims.feat_dim;
    c.heads = tc.dims.heads;
    c.text_layers = tc.dims.text_layers;
    c.image_layers = tc.dims.image_layers;
    c.ffn_mult = tc.dims.ffn_mult;
    c.l_t = tc.l_t();
    c.canvas_h = tc.canvas_h;
    c.canvas_w = tc.canvas_w;
    c.patch_h = tc.patch_h;
    c.patch_w = tc.patch_w;
    return c;
  }
};

// Flattens an image into one row per patch (patch pixels in row-major order).
template <typename S>
Matrix<S> patchify(const MatF& pixels, int patch_h, int patch_w) {
  const int h = static_cast<int>(pixels.rows());
  const int w = static_cast<int>(pixels.cols());
  require(h % patch_h == 0 && w % patch_w == 0, "image dims not divisible by patch dims");
  const int rows = h / patch_h, cols = w / patch_w;
  Matrix<S> out(rows * cols, patch_h * patch_w);
  for (int pr = 0; pr < rows; ++pr)
    for (int pc = 0; pc < cols; ++pc)
      for (int r = 0; r < patch_h; ++r)
        for (int c = 0; c < patch_w; ++c)
          out(pr * cols + pc, r * patch_w + c) =
              static_cast<S>(pixels(pr * patch_h + r, pc * patch_w + c));
  return out;
}

template <typename S>
struct TextTowerNet {
  int tok_emb = -1;
  int pos_emb = -1;
  std::vector<EncoderBlock<S>> blocks;
  LayerNormIdx<S> ln_f;

  void init(ParamStore<S>& ps, const std::string& prefix, const DualEncoderConfig& cfg,
            Rng& rng) {
    tok_emb = ps.add(prefix + ".tok_emb", randn<S>(vocab::kSize, cfg.d, static_cast<S>(0.02), rng));
    pos_emb = ps.add(prefix + ".pos_emb", randn<S>(cfg.l_t, cfg.d, static_cast<S>(0.02), rng));
    blocks.resize(static_cast<size_t>(cfg.text_layers));
    for (int l = 0; l < cfg.text_layers; ++l)
      blocks[static_cast<size_t>(l)].init(ps, prefix + ".block" + std::to_string(l), cfg.d,
                                          cfg.heads, cfg.ffn_mult, rng);
    ln_f.init(ps, prefix + ".ln_f", cfg.d);
  }

  typename Tape<S>::Ref forward(Tape<S>& t, const std::vector<int>& ids, bool frozen) const {
    auto x = t.add(t.gather_rows(leaf(t, tok_emb, frozen), ids), leaf(t, pos_emb, frozen));
    for (const auto& b : blocks) x = b.apply(t, x, frozen);
    return ln_f.apply(t, x, frozen);
  }
};

template <typename S>
struct ImageTowerNet {
  LinearIdx<S> patch_proj;
  int cls = -1;
  int pos_emb = -1;
  std::vector<EncoderBlock<S>> blocks;
  LayerNormIdx<S> ln_f;

  void init(ParamStore<S>& ps, const std::string& prefix, const DualEncoderConfig& cfg,
            Rng& rng) {
    patch_proj.init(ps, prefix + ".patch", cfg.patch_h * cfg.patch_w, cfg.d, rng);
    cls = ps.add(prefix + ".cls", randn<S>(1, cfg.d, static_cast<S>(0.02), rng));
    pos_emb = ps.add(prefix + ".pos_emb",
                     randn<S>(cfg.image_rows(), cfg.d, static_cast<S>(0.02), rng));
    blocks.resize(static_cast<size_t>(cfg.image_layers));
    for (int l = 0; l < cfg.image_layers; ++l)
      blocks[static_cast<size_t>(l)].init(ps, prefix + ".block" + std::to_string(l), cfg.d,
                                          cfg.heads, cfg.ffn_mult, rng);
    ln_f.init(ps, prefix + ".ln_f", cfg.d);
  }

  typename Tape<S>::Ref forward(Tape<S>& t, const MatF& pixels, int patch_h, int patch_w,
                                bool frozen) const {
    auto patches = t.input(patchify<S>(pixels, patch_h, patch_w));
    auto tokens = patch_proj.apply(t, patches, frozen);
    auto x = t.add(t.concat_rows(leaf(t, cls, frozen), tokens), leaf(t, pos_emb, frozen));
    for (const auto& b : blocks) x = b.apply(t, x, frozen);
    return ln_f.apply(t, x, frozen);
  }
};

template <typename S>
struct DualEncoderNet {
  TextTowerNet<S> text;
  ImageTowerNet<S> image;
  int log_scale = -1;  // learned log temperature, init ln(1/0.07)

  void init(ParamStore<S>& ps, const DualEncoderConfig& cfg, Rng& rng) {
    text.init(ps, "text", cfg, rng);
    image.init(ps, "image", cfg, rng);
    Matrix<S> s(1, 1);
    s(0, 0) = std::log(static_cast<S>(1) / static_cast<S>(0.07));
    log_scale = ps.add("logit_scale", std::move(s));
  }
};

// Float bundle used by the pipeline.
struct DualEncoder {
  DualEncoderConfig cfg;
  ParamStore<float> store;
  DualEncoderNet<float> net;
  std::uint64_t seed = 0;

  static DualEncoder init(const DualEncoderConfig& cfg, std::uint64_t seed);
};

// F_t = T(prompt): all token rows, [EOS] row at index l_t-1.
EmbeddingMatrix text_encode(const DualEncoder& enc, const TokenSeq& prompt);

// (1 + n_patches) x D with [CLS] at row 0.
EmbeddingMatrix image_encode(const DualEncoder& enc, const TextImage& img);

// One symmetric-cross-entropy step over [EOS] x [CLS] similarities (rows are
// L2-normalized, logits scaled by exp(log_scale)). Updates params in place
// and returns the loss. Aborts on a non-finite loss.
class ContrastiveTrainer {
 public:
  ContrastiveTrainer(DualEncoder& enc, float lr, int threads);

  double step(const std::vector<const TextImage*>& images,
              const std::vector<const TokenSeq*>& prompts);

 private:
  DualEncoder& enc_;
  Adam<float> opt_;
  ThreadPool pool_;
  std::vector<GradStore<float>> chunk_grads_;
};

// Raw [EOS]x[CLS] dot products summed per group, then softmax over group
// sums. group_of[i] is the group of images[i]; throws "degenerate sample"
// when a group has no image.
std::vector<double> similarity_probe(const EmbeddingMatrix& text,
                                     const std::vector<const EmbeddingMatrix*>& images,
                                     const std::vector<int>& group_of, int n_groups);

}  // namespace dptr
