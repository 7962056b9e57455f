#include "dptr/dualenc.hpp"

#include <cmath>
#include <memory>

namespace dptr {

DualEncoder DualEncoder::init(const DualEncoderConfig& cfg, std::uint64_t seed) {
  DualEncoder enc;
  enc.cfg = cfg;
  enc.seed = seed;
  Rng rng(Rng::mix({seed, 0x64756165ull}));  // independent init stream
  enc.net.init(enc.store, cfg, rng);
  return enc;
}

EmbeddingMatrix text_encode(const DualEncoder& enc, const TokenSeq& prompt) {
  require(prompt.kind == SeqKind::prompt, "text_encode expects a prompt sequence");
  require(static_cast<int>(prompt.ids.size()) == enc.cfg.l_t, "prompt length mismatch");
  require(enc.store.finite(), "numerical failure");
  Tape<float> t(&enc.store, nullptr);
  const auto out = enc.net.text.forward(t, prompt.ids, /*frozen=*/true);
  EmbeddingMatrix e;
  e.values = t.val(out);
  e.role = Role::prompt;
  e.special = enc.cfg.l_t - 1;
  require(e.values.allFinite(), "numerical failure");
  return e;
}

EmbeddingMatrix image_encode(const DualEncoder& enc, const TextImage& img) {
  require(enc.store.finite(), "numerical failure");
  Tape<float> t(&enc.store, nullptr);
  const auto out =
      enc.net.image.forward(t, img.pixels, enc.cfg.patch_h, enc.cfg.patch_w, /*frozen=*/true);
  EmbeddingMatrix e;
  e.values = t.val(out);
  e.role = Role::image;
  e.special = 0;
  require(e.values.allFinite(), "numerical failure");
  return e;
}

namespace {
constexpr int kChunk = 8;
}

ContrastiveTrainer::ContrastiveTrainer(DualEncoder& enc, float lr, int threads)
    : enc_(enc), opt_(enc.store, lr), pool_(threads) {}

double ContrastiveTrainer::step(const std::vector<const TextImage*>& images,
                                const std::vector<const TokenSeq*>& prompts) {
  const int b = static_cast<int>(images.size());
  require(b >= 2, "contrastive batch must have >= 2 pairs");
  require(prompts.size() == images.size(), "batch size mismatch");
  const int d = enc_.cfg.d;
  const int n_chunks = (b + kChunk - 1) / kChunk;
  if (static_cast<int>(chunk_grads_.size()) < n_chunks) {
    chunk_grads_.resize(static_cast<size_t>(n_chunks));
  }
  for (int c = 0; c < n_chunks; ++c) {
    if (chunk_grads_[static_cast<size_t>(c)].grads.empty())
      chunk_grads_[static_cast<size_t>(c)].reset(enc_.store);
    else
      chunk_grads_[static_cast<size_t>(c)].zero();
  }

  // Phase 1: per-sample tower forwards, keeping tapes alive for phase 3.
  std::vector<std::unique_ptr<Tape<float>>> text_tapes(static_cast<size_t>(b));
  std::vector<std::unique_ptr<Tape<float>>> image_tapes(static_cast<size_t>(b));
  std::vector<int> text_out(static_cast<size_t>(b));
  std::vector<int> image_out(static_cast<size_t>(b));
  MatF text_rows(b, d), image_rows(b, d);
  pool_.run_indexed(n_chunks, [&](int c) {
    GradStore<float>* grads = &chunk_grads_[static_cast<size_t>(c)];
    for (int i = c * kChunk; i < std::min(b, (c + 1) * kChunk); ++i) {
      auto& tt = text_tapes[static_cast<size_t>(i)] =
          std::make_unique<Tape<float>>(&enc_.store, grads);
      const auto t_full = enc_.net.text.forward(*tt, prompts[static_cast<size_t>(i)]->ids, false);
      text_out[static_cast<size_t>(i)] = tt->rows(t_full, enc_.cfg.l_t - 1, 1);
      text_rows.row(i) = tt->val(text_out[static_cast<size_t>(i)]).row(0);

      auto& it = image_tapes[static_cast<size_t>(i)] =
          std::make_unique<Tape<float>>(&enc_.store, grads);
      const auto i_full = enc_.net.image.forward(*it, images[static_cast<size_t>(i)]->pixels,
                                                 enc_.cfg.patch_h, enc_.cfg.patch_w, false);
      image_out[static_cast<size_t>(i)] = it->rows(i_full, 0, 1);
      image_rows.row(i) = it->val(image_out[static_cast<size_t>(i)]).row(0);
    }
  });

  // Phase 2: symmetric InfoNCE over the pooled rows (single-threaded).
  GradStore<float> head_grads(enc_.store);
  Tape<float> t(&enc_.store, &head_grads);
  const auto tr = t.input_ref(&text_rows);
  const auto ir = t.input_ref(&image_rows);
  const auto tn = t.l2_normalize_rows(tr);
  const auto in = t.l2_normalize_rows(ir);
  const auto scale = t.exp_elem(t.param(enc_.net.log_scale));
  const auto logits = t.scale_by(t.matmul_nt(tn, in), scale);
  std::vector<int> diag(static_cast<size_t>(b));
  for (int i = 0; i < b; ++i) diag[static_cast<size_t>(i)] = i;
  const std::vector<std::uint8_t> all(static_cast<size_t>(b), 1);
  const auto loss_t = t.cross_entropy(logits, diag, all);
  const auto loss_i = t.cross_entropy(t.transpose(logits), diag, all);
  const auto loss = t.scale(t.add(loss_t, loss_i), 0.5f);
  const double loss_val = static_cast<double>(t.val(loss)(0, 0));
  require(std::isfinite(loss_val), "numerical failure");
  t.backward(loss);

  // Phase 3: push pooled-row gradients back through the towers.
  pool_.run_indexed(n_chunks, [&](int c) {
    for (int i = c * kChunk; i < std::min(b, (c + 1) * kChunk); ++i) {
      MatF g(1, d);
      g.row(0) = t.grad_of(tr).row(i);
      text_tapes[static_cast<size_t>(i)]->backward(text_out[static_cast<size_t>(i)], g);
      g.row(0) = t.grad_of(ir).row(i);
      image_tapes[static_cast<size_t>(i)]->backward(image_out[static_cast<size_t>(i)], g);
    }
  });

  // Deterministic reduction: chunk order, then the loss-head gradients.
  GradStore<float>& total = chunk_grads_[0];
  for (int c = 1; c < n_chunks; ++c) total.add(chunk_grads_[static_cast<size_t>(c)]);
  total.add(head_grads);
  opt_.step(enc_.store, total);
  require(enc_.store.finite(), "numerical failure");
  return loss_val;
}

std::vector<double> similarity_probe(const EmbeddingMatrix& text,
                                     const std::vector<const EmbeddingMatrix*>& images,
                                     const std::vector<int>& group_of, int n_groups) {
  require(n_groups >= 1, "degenerate sample");
  require(images.size() == group_of.size(), "group tags mismatch");
  require(text.special >= 0, "text embedding missing [EOS] row");
  std::vector<double> sums(static_cast<size_t>(n_groups), 0.0);
  std::vector<int> counts(static_cast<size_t>(n_groups), 0);
  for (size_t i = 0; i < images.size(); ++i) {
    const EmbeddingMatrix& img = *images[i];
    require(img.special >= 0, "image embedding missing [CLS] row");
    require(img.values.cols() == text.values.cols(), "feature dim mismatch");
    const int g = group_of[i];
    require(g >= 0 && g < n_groups, "bad group index");
    const double dot = text.values.row(text.special)
                           .cast<double>()
                           .dot(img.values.row(img.special).cast<double>());
    sums[static_cast<size_t>(g)] += dot;
    counts[static_cast<size_t>(g)] += 1;
  }
  for (int g = 0; g < n_groups; ++g)
    require(counts[static_cast<size_t>(g)] > 0, "degenerate sample");
  double maxv = sums[0];
  for (double s : sums) maxv = std::max(maxv, s);
  double denom = 0.0;
  std::vector<double> out(sums.size());
  for (size_t g = 0; g < sums.size(); ++g) {
    out[g] = std::exp(sums[g] - maxv);
    denom += out[g];
  }
  for (double& o : out) o /= denom;
  return out;
}

}  // namespace dptr
