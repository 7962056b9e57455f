#include "dptr/strdec.hpp"

#include <doctest.h>

#include <cmath>

#include "testutil.hpp"

using namespace dptr;

namespace {

EmbeddingMatrix random_memory(int rows, int d, std::uint64_t seed,
                              Role role = Role::perturbed) {
  Rng rng(seed);
  EmbeddingMatrix m;
  m.values = randn<float>(rows, d, 1.f, rng);
  m.role = role;
  return m;
}

Decoder tiny_decoder(std::uint64_t seed, int t_max = 6, int d = 32, int layers = 2) {
  DecoderConfig cfg;
  cfg.d = d;
  cfg.heads = 4;
  cfg.layers = layers;
  cfg.ffn_mult = 2;
  cfg.t_max = t_max;
  return Decoder::init(cfg, seed);
}

// Brute-force per-position cross entropy in long double, fully independent
// of the library implementation.
long double oracle_ce(const MatF& logits, const std::vector<int>& target_ids) {
  long double total = 0;
  int used = 0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const int tok = target_ids[static_cast<size_t>(i) + 1];
    if (tok == vocab::kPad) continue;
    long double denom = 0;
    for (Eigen::Index c = 0; c < logits.cols(); ++c)
      denom += expl(static_cast<long double>(logits(i, c)));
    const int cls = vocab::class_of_token(tok);
    total += -logl(expl(static_cast<long double>(logits(i, cls))) / denom);
    ++used;
  }
  return total / used;
}

}  // namespace

TEST_CASE("causal mask is the lower triangle including the diagonal") {
  const AttentionMask m = causal_mask(2);
  REQUIRE(m.size() == 3);
  const int expect[3][3] = {{1, 0, 0}, {1, 1, 0}, {1, 1, 1}};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) CHECK(int(m.visibility(i, j)) == expect[i][j]);
}

TEST_CASE("cloze mask sees everything but self") {
  const AttentionMask m = cloze_mask(2);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) CHECK(int(m.visibility(i, j)) == (i == j ? 0 : 1));
}

TEST_CASE("identity permutation reproduces the causal mask exactly") {
  Rng rng(5);
  const auto masks = build_mask(MaskKind::perm, 3, 1, rng);
  REQUIRE(masks.size() == 1);
  CHECK(masks[0].visibility == causal_mask(3).visibility);
}

TEST_CASE("build_mask returns K perm masks, first identity") {
  Rng rng(6);
  const auto masks = build_mask(MaskKind::perm, 5, 4, rng);
  REQUIRE(masks.size() == 4);
  CHECK(masks[0].visibility == causal_mask(5).visibility);
}

TEST_CASE("every perm mask is a permutation-conjugate of the causal mask") {
  Rng rng(7);
  const auto masks = build_mask(MaskKind::perm, 6, 8, rng);
  for (const auto& m : masks) {
    const int n = m.size();
    // The number of visible positions per row recovers the rank order.
    std::vector<int> rank(static_cast<size_t>(n));
    std::vector<bool> seen(static_cast<size_t>(n), false);
    for (int i = 0; i < n; ++i) {
      int count = 0;
      for (int j = 0; j < n; ++j) count += m.visibility(i, j);
      rank[static_cast<size_t>(i)] = count - 1;
      CHECK(!seen[static_cast<size_t>(count - 1)]);
      seen[static_cast<size_t>(count - 1)] = true;
    }
    CHECK(rank[0] == 0);  // [BOS] first
    const AttentionMask causal = causal_mask(n - 1);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        CHECK(m.visibility(i, j) ==
              causal.visibility(rank[static_cast<size_t>(i)], rank[static_cast<size_t>(j)]));
  }
}

TEST_CASE("decode emits (T+1) x (S+1) logits in the toy configuration") {
  TrainConfig tc;  // toy defaults: max_len 12
  DecoderConfig cfg = DecoderConfig::from_train_config(tc);
  const Decoder dec = Decoder::init(cfg, 1);
  const EmbeddingMatrix mem = random_memory(25, tc.dims.feat_dim, 2);
  const TokenSeq target = encode_target("hello", 12);
  const Logits l = decode(dec, mem, target, causal_mask(12));
  CHECK(l.values.rows() == 13);
  CHECK(l.values.cols() == 39);
}

TEST_CASE("softmax of every logits row sums to 1") {
  const Decoder dec = tiny_decoder(3);
  const EmbeddingMatrix mem = random_memory(9, 32, 4);
  const Logits l = decode(dec, mem, encode_target("abc", 6), causal_mask(6));
  for (Eigen::Index i = 0; i < l.values.rows(); ++i) {
    const Eigen::ArrayXd row = l.values.row(i).cast<double>().array();
    const double m = row.maxCoeff();
    const Eigen::ArrayXd p = (row - m).exp() / (row - m).exp().sum();
    CHECK(std::abs(p.sum() - 1.0) < 1e-5);
  }
}

TEST_CASE("causal rows are bit-exactly independent of future tokens") {
  const Decoder dec = tiny_decoder(11);
  const EmbeddingMatrix mem = random_memory(9, 32, 12);
  const AttentionMask mask = causal_mask(6);
  const TokenSeq a = encode_target("abcdef", 6);
  const Logits la = decode(dec, mem, a, mask);
  // Rewrite every token after position i; rows 0..i must not move.
  for (int i = 0; i <= 5; ++i) {
    TokenSeq b = a;
    for (int j = i + 1; j <= 6; ++j) b.ids[static_cast<size_t>(j)] = vocab::id_of('z');
    const Logits lb = decode(dec, mem, b, mask);
    for (int r = 0; r <= i; ++r) CHECK(la.values.row(r) == lb.values.row(r));
    CHECK(la.values.row(i + 1) != lb.values.row(i + 1));
  }
}

TEST_CASE("cloze rows are bit-exactly independent of their own token") {
  const Decoder dec = tiny_decoder(13);
  const EmbeddingMatrix mem = random_memory(9, 32, 14);
  const AttentionMask mask = cloze_mask(6);
  const TokenSeq a = encode_target("abcdef", 6);
  const Logits la = decode(dec, mem, a, mask);
  for (int i = 1; i <= 6; ++i) {
    TokenSeq b = a;
    b.ids[static_cast<size_t>(i)] = vocab::id_of('z');
    const Logits lb = decode(dec, mem, b, mask);
    CHECK(la.values.row(i) == lb.values.row(i));
    // Other rows do change in general; at least one row must differ.
    CHECK(la.values != lb.values);
  }
}

TEST_CASE("full-sequence causal decoding equals incremental decoding bit-exactly") {
  const Decoder dec = tiny_decoder(15);
  const EmbeddingMatrix mem = random_memory(9, 32, 16);
  const TokenSeq full = encode_target("abcdef", 6);
  const Logits lf = decode(dec, mem, full, causal_mask(6));
  for (int prefix = 2; prefix <= 7; ++prefix) {
    const std::span<const int> ids(full.ids.data(), static_cast<size_t>(prefix));
    const Logits lp = decode(dec, mem, ids, causal_mask(prefix - 1));
    REQUIRE(lp.values.rows() == prefix);
    for (int r = 0; r < prefix; ++r) CHECK(lp.values.row(r) == lf.values.row(r));
  }
}

TEST_CASE("sequence_loss of uniform logits is ln(S+1) per position") {
  Logits l;
  l.values = MatF::Zero(7, vocab::kNumClasses);
  const TokenSeq target = encode_target("abc", 6);
  const double loss = sequence_loss({l}, target, LossVariant::nrtr);
  CHECK(loss == doctest::Approx(std::log(39.0)).epsilon(1e-9));
}

TEST_CASE("parseq loss with K identical matrices equals the single-mask loss") {
  Rng rng(17);
  Logits l;
  l.values = randn<float>(7, vocab::kNumClasses, 1.f, rng);
  const TokenSeq target = encode_target("abcd", 6);
  const double single = sequence_loss({l}, target, LossVariant::nrtr);
  const double parseq = sequence_loss({l, l, l}, target, LossVariant::parseq);
  CHECK(parseq == single);
}

TEST_CASE("sequence_loss matches the brute-force oracle within 1e-6") {
  Rng rng(18);
  std::vector<Logits> set;
  for (int k = 0; k < 3; ++k) {
    Logits l;
    l.values = randn<float>(7, vocab::kNumClasses, 2.f, rng);
    set.push_back(std::move(l));
  }
  const TokenSeq target = encode_target("abcde", 6);
  long double expect = 0;
  for (const auto& l : set) expect += oracle_ce(l.values, target.ids);
  expect /= 3;
  const double got = sequence_loss(set, target, LossVariant::parseq);
  CHECK(std::abs(got - static_cast<double>(expect)) < 1e-6);
}

TEST_CASE("all-pad targets raise empty target") {
  Logits l;
  l.values = MatF::Zero(7, vocab::kNumClasses);
  TokenSeq target;
  target.kind = SeqKind::target;
  target.ids.assign(8, vocab::kPad);
  CHECK_THROWS_WITH(static_cast<void>(sequence_loss({l}, target, LossVariant::nrtr)),
                    "empty target");
}

TEST_CASE("greedy inference is deterministic and stops on immediate EOS") {
  Decoder dec = tiny_decoder(19);
  const EmbeddingMatrix mem = random_memory(9, 32, 20);
  const std::string a = greedy_infer(dec, mem, 6);
  const std::string b = greedy_infer(dec, mem, 6);
  CHECK(a == b);

  // Forcing the head bias towards [EOS] yields the empty string.
  const int bias = dec.store.find("dec.head.b");
  REQUIRE(bias >= 0);
  dec.store[bias](0, vocab::kEosClass) = 100.f;
  CHECK(greedy_infer(dec, mem, 6) == "");
}

TEST_CASE("a decoder fit to one sample reproduces it greedily") {
  Decoder dec = tiny_decoder(21, 6, 32, 1);
  const EmbeddingMatrix mem = random_memory(9, 32, 22);
  const TokenSeq target = encode_target("ab", 6);
  std::vector<int> input(target.ids.begin(), target.ids.begin() + 7);
  std::vector<int> classes(7, 0);
  std::vector<std::uint8_t> use(7, 0);
  for (int i = 0; i < 7; ++i) {
    const int tok = target.ids[static_cast<size_t>(i) + 1];
    if (tok == vocab::kPad) continue;
    classes[static_cast<size_t>(i)] = vocab::class_of_token(tok);
    use[static_cast<size_t>(i)] = 1;
  }
  const AttentionMask mask = causal_mask(6);
  Adam<float> opt(dec.store, 1e-3f);
  GradStore<float> grads(dec.store);
  double loss = 0;
  for (int step = 0; step < 300; ++step) {
    grads.zero();
    Tape<float> t(&dec.store, &grads);
    const auto mem_ref = t.input_ref(&mem.values);
    const auto outs = dec.net.forward_multi(t, std::span<const int>(input), {&mask}, mem_ref,
                                            /*frozen=*/false);
    const auto l = t.cross_entropy(outs[0], classes, use);
    loss = t.val(l)(0, 0);
    t.backward(l);
    opt.step(dec.store, grads);
  }
  CHECK(loss < 0.1);
  CHECK(greedy_infer(dec, mem, 6) == "ab");
}

TEST_CASE("decoder gradients match finite differences at double precision") {
  DecoderConfig cfg;
  cfg.d = 8;
  cfg.heads = 2;
  cfg.layers = 2;
  cfg.ffn_mult = 2;
  cfg.t_max = 3;
  ParamStore<double> ps;
  DecoderNet<double> net;
  Rng rng(23);
  net.init(ps, "dec", cfg, rng);
  Rng mem_rng(24);
  const Matrix<double> memory = randn<double>(5, 8, 1.0, mem_rng);
  const TokenSeq target = encode_target("ab", 3);
  std::vector<int> input(target.ids.begin(), target.ids.begin() + 4);
  std::vector<int> classes(4, 0);
  std::vector<std::uint8_t> use(4, 0);
  for (int i = 0; i < 4; ++i) {
    const int tok = target.ids[static_cast<size_t>(i) + 1];
    if (tok == vocab::kPad) continue;
    classes[static_cast<size_t>(i)] = vocab::class_of_token(tok);
    use[static_cast<size_t>(i)] = 1;
  }
  Rng mask_rng(25);
  const auto masks = build_mask(MaskKind::perm, 3, 2, mask_rng);
  std::vector<const AttentionMask*> mask_ptrs{&masks[0], &masks[1]};

  auto build = [&](Tape<double>& t) {
    const auto mem_ref = t.input_ref(&memory);
    const auto outs =
        net.forward_multi(t, std::span<const int>(input), mask_ptrs, mem_ref, false);
    auto loss = t.cross_entropy(outs[0], classes, use);
    loss = t.add(loss, t.cross_entropy(outs[1], classes, use));
    return t.scale(loss, 0.5);
  };
  GradStore<double> grads(ps);
  {
    Tape<double> t(&ps, &grads);
    t.backward(build(t));
  }
  auto loss_fn = [&]() {
    Tape<double> t(&ps, nullptr);
    return t.val(build(t))(0, 0);
  };
  const double err = max_rel_grad_error<double>(ps, grads, loss_fn, 1e-5);
  CHECK(err < 1e-4);
}
