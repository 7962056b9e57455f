#pragma once

#include "dptr/autodiff.hpp"
#include "dptr/common.hpp"
#include "dptr/config.hpp"
#include "dptr/corpus.hpp"
#include "dptr/embedding.hpp"
#include "dptr/mask.hpp"
#include "dptr/nn.hpp"
#include "dptr/vocab.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace dptr {

struct Logits {
  MatF values;  // (T+1) x (S+1)
};

struct DecoderConfig {
  int d = 64;
  int heads = 4;
  int layers = 2;
  int ffn_mult = 4;
  int t_max = 12;  // query rows = t_max + 1

  static DecoderConfig from_train_config(const TrainConfig& tc) {
    DecoderConfig c;
    c.d = tc.dims.feat_dim;
    c.heads = tc.dims.heads;
    c.layers = tc.dims.dec_layers;
    c.ffn_mult = tc.dims.ffn_mult;
    c.t_max = tc.max_len;
    return c;
  }
};

// Query-stream decoder: learned position queries attend over the content
// embeddings of the input tokens under the attention mask, then over the
// memory, then through a feed-forward. Token content reaches row i only via
// the masked attention, so a row is exactly independent of every input
// position its mask hides (the cloze diagonal, causal future positions).
template <typename S>
struct DecoderNet {
  DecoderConfig cfg;
  int tok_emb = -1;
  int pos_query = -1;  // shared: content position embedding and query seed

  struct Layer {
    LayerNormIdx<S> ln_q, ln_c, ln_x, ln_f;
    LinearIdx<S> q, k, v, o;      // masked attention over content
    LinearIdx<S> xq, xk, xv, xo;  // cross attention over memory
    LinearIdx<S> f1, f2;
  };
  std::vector<Layer> layers;
  LayerNormIdx<S> ln_out;
  LinearIdx<S> head;

  void init(ParamStore<S>& ps, const std::string& prefix, const DecoderConfig& c, Rng& rng) {
    cfg = c;
    tok_emb = ps.add(prefix + ".tok_emb", randn<S>(vocab::kSize, c.d, static_cast<S>(0.02), rng));
    pos_query =
        ps.add(prefix + ".pos_query", randn<S>(c.t_max + 1, c.d, static_cast<S>(0.02), rng));
    layers.resize(static_cast<size_t>(c.layers));
    for (int l = 0; l < c.layers; ++l) {
      Layer& L = layers[static_cast<size_t>(l)];
      const std::string p = prefix + ".layer" + std::to_string(l);
      L.ln_q.init(ps, p + ".ln_q", c.d);
      L.ln_c.init(ps, p + ".ln_c", c.d);
      L.ln_x.init(ps, p + ".ln_x", c.d);
      L.ln_f.init(ps, p + ".ln_f", c.d);
      L.q.init(ps, p + ".q", c.d, c.d, rng);
      L.k.init(ps, p + ".k", c.d, c.d, rng);
      L.v.init(ps, p + ".v", c.d, c.d, rng);
      L.o.init(ps, p + ".o", c.d, c.d, rng);
      L.xq.init(ps, p + ".xq", c.d, c.d, rng);
      L.xk.init(ps, p + ".xk", c.d, c.d, rng);
      L.xv.init(ps, p + ".xv", c.d, c.d, rng);
      L.xo.init(ps, p + ".xo", c.d, c.d, rng);
      L.f1.init(ps, p + ".f1", c.d, c.d * c.ffn_mult, rng);
      L.f2.init(ps, p + ".f2", c.d * c.ffn_mult, c.d, rng);
    }
    ln_out.init(ps, prefix + ".ln_out", c.d);
    head.init(ps, prefix + ".head", c.d, vocab::kNumClasses, rng);
  }

  // One forward per mask; content embeddings and per-layer key/value
  // projections of content and memory are shared across the K masks.
  std::vector<typename Tape<S>::Ref> forward_multi(Tape<S>& t, std::span<const int> input_ids,
                                                   const std::vector<const AttentionMask*>& masks,
                                                   typename Tape<S>::Ref memory,
                                                   bool frozen) const {
    const int n = static_cast<int>(input_ids.size());
    require(n >= 1 && n <= cfg.t_max + 1, "decoder input length out of range");
    for (const AttentionMask* m : masks)
      require(m->size() == n, "mask size must match input length");

    std::vector<int> ids(input_ids.begin(), input_ids.end());
    auto content = t.add(t.gather_rows(leaf(t, tok_emb, frozen), ids),
                         t.rows(leaf(t, pos_query, frozen), 0, n));
    auto queries0 = t.rows(leaf(t, pos_query, frozen), 0, n);

    std::vector<typename Tape<S>::Ref> h(masks.size(), queries0);
    for (const Layer& L : layers) {
      const auto cn = L.ln_c.apply(t, content, frozen);
      const auto ck = L.k.apply(t, cn, frozen);
      const auto cv = L.v.apply(t, cn, frozen);
      const auto mk = L.xk.apply(t, memory, frozen);
      const auto mv = L.xv.apply(t, memory, frozen);
      for (size_t m = 0; m < masks.size(); ++m) {
        auto x = h[m];
        const auto qn = L.ln_q.apply(t, x, frozen);
        const auto a = t.attention(L.q.apply(t, qn, frozen), ck, cv, cfg.heads,
                                   masks[m]->visibility);
        x = t.add(x, L.o.apply(t, a, frozen));
        const auto xn = L.ln_x.apply(t, x, frozen);
        const auto xa = t.attention(L.xq.apply(t, xn, frozen), mk, mv, cfg.heads, BoolMat{});
        x = t.add(x, L.xo.apply(t, xa, frozen));
        const auto fn = L.ln_f.apply(t, x, frozen);
        x = t.add(x, L.f2.apply(t, t.gelu(L.f1.apply(t, fn, frozen)), frozen));
        h[m] = x;
      }
    }
    std::vector<typename Tape<S>::Ref> out;
    out.reserve(masks.size());
    for (size_t m = 0; m < masks.size(); ++m)
      out.push_back(head.apply(t, ln_out.apply(t, h[m], frozen), frozen));
    return out;
  }
};

// Standalone float decoder (the pre-training artifact).
struct Decoder {
  DecoderConfig cfg;
  ParamStore<float> store;
  DecoderNet<float> net;
  std::uint64_t seed = 0;

  static Decoder init(const DecoderConfig& cfg, std::uint64_t seed);
};

// Net-level entry points shared with the full recognizer (which keeps its
// decoder inside a larger parameter store).
Logits decode_with(const DecoderNet<float>& net, const ParamStore<float>& store,
                   const EmbeddingMatrix& memory, std::span<const int> input_ids,
                   const AttentionMask& mask);
std::string greedy_decode(const DecoderNet<float>& net, const ParamStore<float>& store,
                          const EmbeddingMatrix& memory, int max_len);

// Memory must be role prompt/perturbed/merged. Input ids are the decoder
// input tokens ([BOS], y1, ...); logits row i scores the token at position
// i+1. Returns (|ids|) x (S+1).
Logits decode(const Decoder& dec, const EmbeddingMatrix& memory, std::span<const int> input_ids,
              const AttentionMask& mask);

// Convenience overload for a full-width target sequence: feeds
// target.ids[0..t_max] and returns (t_max+1) x (S+1).
Logits decode(const Decoder& dec, const EmbeddingMatrix& memory, const TokenSeq& target,
              const AttentionMask& mask);

// Mean per-position cross entropy against the shifted target, pad positions
// excluded; parseq averages over the mask set. Accumulates in double.
double sequence_loss(const std::vector<Logits>& logit_set, const TokenSeq& target,
                     LossVariant variant);

// Left-to-right greedy decoding from [BOS]; stops at [EOS] or max_len.
std::string greedy_infer(const Decoder& dec, const EmbeddingMatrix& memory, int max_len);

}  // namespace dptr
