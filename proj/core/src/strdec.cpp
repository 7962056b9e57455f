#include "dptr/strdec.hpp"

#include <cmath>

namespace dptr {

Decoder Decoder::init(const DecoderConfig& cfg, std::uint64_t seed) {
  Decoder dec;
  dec.cfg = cfg;
  dec.seed = seed;
  Rng rng(Rng::mix({seed, 0x64656373ull}));
  dec.net.init(dec.store, "dec", cfg, rng);
  return dec;
}

namespace {

void check_memory_role(const EmbeddingMatrix& memory) {
  require(memory.role == Role::prompt || memory.role == Role::perturbed ||
              memory.role == Role::merged,
          "decoder memory must be prompt, perturbed or merged");
  require(memory.values.allFinite(), "numerical failure");
}

}  // namespace

Logits decode_with(const DecoderNet<float>& net, const ParamStore<float>& store,
                   const EmbeddingMatrix& memory, std::span<const int> input_ids,
                   const AttentionMask& mask) {
  check_memory_role(memory);
  Tape<float> t(&store, nullptr);
  const auto mem = t.input_ref(&memory.values);
  const auto outs = net.forward_multi(t, input_ids, {&mask}, mem, /*frozen=*/true);
  Logits l;
  l.values = t.val(outs[0]);
  require(l.values.allFinite(), "numerical failure");
  return l;
}

std::string greedy_decode(const DecoderNet<float>& net, const ParamStore<float>& store,
                          const EmbeddingMatrix& memory, int max_len) {
  check_memory_role(memory);
  const int t_max = net.cfg.t_max;
  const int steps = std::min(max_len, t_max);
  // Fixed-width input: future positions hold [PAD], which the causal mask
  // hides, so every step reuses identical shapes.
  std::vector<int> ids(static_cast<size_t>(t_max) + 1, vocab::kPad);
  ids[0] = vocab::kBos;
  const AttentionMask mask = causal_mask(t_max);
  std::string out;
  for (int i = 0; i < steps; ++i) {
    const Logits l = decode_with(net, store, memory, std::span<const int>(ids), mask);
    Eigen::Index cls = 0;
    l.values.row(i).maxCoeff(&cls);
    if (static_cast<int>(cls) == vocab::kEosClass) break;
    const int tok = vocab::token_of_class(static_cast<int>(cls));
    ids[static_cast<size_t>(i) + 1] = tok;
    out.push_back(vocab::char_of(tok));
  }
  return out;
}

Logits decode(const Decoder& dec, const EmbeddingMatrix& memory, std::span<const int> input_ids,
              const AttentionMask& mask) {
  return decode_with(dec.net, dec.store, memory, input_ids, mask);
}

Logits decode(const Decoder& dec, const EmbeddingMatrix& memory, const TokenSeq& target,
              const AttentionMask& mask) {
  require(target.kind == SeqKind::target, "decode expects a target sequence");
  require(static_cast<int>(target.ids.size()) >= dec.cfg.t_max + 2, "target too short");
  return decode(dec, memory,
                std::span<const int>(target.ids.data(), static_cast<size_t>(dec.cfg.t_max + 1)),
                mask);
}

double sequence_loss(const std::vector<Logits>& logit_set, const TokenSeq& target,
                     LossVariant variant) {
  require(!logit_set.empty(), "no logits");
  if (variant == LossVariant::nrtr || variant == LossVariant::cloze)
    require(logit_set.size() == 1, "single-mask variants take exactly one logits matrix");

  double total = 0.0;
  for (const Logits& l : logit_set) {
    const Eigen::Index rows = l.values.rows();
    require(static_cast<size_t>(rows) + 1 <= target.ids.size(), "target shorter than logits");
    int used = 0;
    double loss = 0.0;
    for (Eigen::Index i = 0; i < rows; ++i) {
      const int tok = target.ids[static_cast<size_t>(i) + 1];
      if (tok == vocab::kPad) continue;
      ++used;
      const int cls = vocab::class_of_token(tok);
      const Eigen::RowVectorXd row = l.values.row(i).cast<double>();
      const double m = row.maxCoeff();
      const double lse = m + std::log((row.array() - m).exp().sum());
      loss += lse - row(cls);
    }
    require(used > 0, "empty target");
    total += loss / used;
  }
  return total / static_cast<double>(logit_set.size());
}

std::string greedy_infer(const Decoder& dec, const EmbeddingMatrix& memory, int max_len) {
  return greedy_decode(dec.net, dec.store, memory, max_len);
}

}  // namespace dptr
