#include "dptr/dualenc.hpp"

#include <doctest.h>

#include <cmath>

#include "testutil.hpp"

using namespace dptr;

namespace {

DualEncoder tiny_encoder(std::uint64_t seed = 5) {
  return DualEncoder::init(DualEncoderConfig::from_train_config(dptr_test::tiny_config()), seed);
}

TextImage render_simple(const std::string& label, const DualEncoderConfig& cfg,
                        std::uint64_t seed) {
  Rng rng(seed);
  return render_label(label, cfg.canvas_h, cfg.canvas_w, rng);
}

EmbeddingMatrix make_emb(std::initializer_list<float> row, int special_rows, int special) {
  EmbeddingMatrix e;
  e.values = MatF::Zero(special_rows, static_cast<Eigen::Index>(row.size()));
  int i = 0;
  for (float v : row) e.values(special, i++) = v;
  e.special = special;
  e.role = Role::image;
  return e;
}

}  // namespace

TEST_CASE("text_encode returns all token rows with the toy and reference shapes") {
  const DualEncoder enc = tiny_encoder();
  const TokenSeq prompt = tokenize_prompt(make_prompt("ab"), enc.cfg.l_t - 1);
  const EmbeddingMatrix f_t = text_encode(enc, prompt);
  CHECK(f_t.values.rows() == 21);  // tiny config: l_budget 20
  CHECK(f_t.values.cols() == 32);
  CHECK(f_t.role == Role::prompt);
  CHECK(f_t.special == 20);

  // Reference configuration: 77 + [EOS] tokens, feature dim 512.
  DualEncoderConfig ref = DualEncoderConfig::from_train_config(TrainConfig::reference());
  ref.text_layers = 1;  // shape check only
  ref.image_layers = 1;
  const DualEncoder ref_enc = DualEncoder::init(ref, 6);
  const EmbeddingMatrix rf = text_encode(ref_enc, tokenize_prompt(make_prompt("nvidia"), 77));
  CHECK(rf.values.rows() == 78);
  CHECK(rf.values.cols() == 512);
}

TEST_CASE("image_encode prepends CLS to the patch tokens") {
  const DualEncoder enc = tiny_encoder();
  const EmbeddingMatrix f_i = image_encode(enc, render_simple("ab", enc.cfg, 7));
  CHECK(f_i.values.rows() == 1 + enc.cfg.n_patches());
  CHECK(f_i.special == 0);

  // 32x128 canvas with 4x8 patches: 128 tokens + CLS.
  DualEncoderConfig wide = enc.cfg;
  wide.canvas_w = 128;
  wide.canvas_h = 32;
  const DualEncoder wide_enc = DualEncoder::init(wide, 8);
  TextImage img;
  img.pixels = MatF::Zero(32, 128);
  CHECK(image_encode(wide_enc, img).values.rows() == 129);
}

TEST_CASE("encoders are pure: repeated calls are bit-identical") {
  const DualEncoder enc = tiny_encoder();
  const TokenSeq prompt = tokenize_prompt(make_prompt("pure"), enc.cfg.l_t - 1);
  CHECK(text_encode(enc, prompt).values == text_encode(enc, prompt).values);
  TextImage img;
  img.pixels = MatF::Zero(enc.cfg.canvas_h, enc.cfg.canvas_w);
  CHECK(image_encode(enc, img).values == image_encode(enc, img).values);
}

TEST_CASE("different labels produce different prompt embeddings") {
  const DualEncoder enc = tiny_encoder();
  const EmbeddingMatrix a =
      text_encode(enc, tokenize_prompt(make_prompt("left"), enc.cfg.l_t - 1));
  const EmbeddingMatrix b =
      text_encode(enc, tokenize_prompt(make_prompt("right"), enc.cfg.l_t - 1));
  CHECK(a.values != b.values);
}

TEST_CASE("contrastive steps are deterministic and reduce the loss") {
  const TrainConfig cfg = dptr_test::tiny_config();
  std::vector<TextImage> images;
  std::vector<TokenSeq> prompts;
  const std::vector<std::string> labels = {"ab", "cd", "ef", "gh", "ij", "kl", "mn", "op"};
  for (size_t i = 0; i < labels.size(); ++i) {
    Rng rng(100 + i);
    TextImage clean = render_label(labels[i], cfg.canvas_h, cfg.canvas_w, rng);
    images.push_back(corrupt_image(clean, 0.5, rng));
    prompts.push_back(tokenize_prompt(make_prompt(labels[i]), cfg.l_budget));
  }
  std::vector<const TextImage*> image_ptrs;
  std::vector<const TokenSeq*> prompt_ptrs;
  for (size_t i = 0; i < labels.size(); ++i) {
    image_ptrs.push_back(&images[i]);
    prompt_ptrs.push_back(&prompts[i]);
  }

  auto run = [&](int steps) {
    DualEncoder enc = DualEncoder::init(DualEncoderConfig::from_train_config(cfg), 42);
    ContrastiveTrainer trainer(enc, 1e-3f, 2);
    double first = 0, last = 0;
    for (int s = 0; s < steps; ++s) {
      last = trainer.step(image_ptrs, prompt_ptrs);
      if (s == 0) first = last;
    }
    return std::pair<double, double>(first, last);
  };
  const auto [first_a, last_a] = run(40);
  const auto [first_b, last_b] = run(40);
  CHECK(first_a == first_b);  // bit-identical reruns
  CHECK(last_a == last_b);
  CHECK(last_a < first_a);  // memorizes the tiny batch
}

TEST_CASE("contrastive batches need at least two pairs") {
  DualEncoder enc = tiny_encoder();
  ContrastiveTrainer trainer(enc, 1e-3f, 1);
  TextImage img;
  img.pixels = MatF::Zero(enc.cfg.canvas_h, enc.cfg.canvas_w);
  const TokenSeq prompt = tokenize_prompt(make_prompt("solo"), enc.cfg.l_t - 1);
  CHECK_THROWS((void)trainer.step({&img}, {&prompt}));
}

TEST_CASE("contrastive loss gradients match finite differences at double precision") {
  DualEncoderConfig cfg;
  cfg.d = 8;
  cfg.heads = 2;
  cfg.text_layers = 2;
  cfg.image_layers = 2;
  cfg.ffn_mult = 2;
  cfg.l_t = 5;
  cfg.canvas_h = 8;
  cfg.canvas_w = 8;
  cfg.patch_h = 4;
  cfg.patch_w = 4;
  ParamStore<double> ps;
  DualEncoderNet<double> net;
  Rng rng(23);
  net.init(ps, cfg, rng);

  const int b = 3;
  std::vector<std::vector<int>> ids(b);
  std::vector<MatF> pixels(b);
  for (int i = 0; i < b; ++i) {
    const TokenSeq p = tokenize_prompt(make_prompt(std::string(1, char('a' + i))), cfg.l_t - 1);
    ids[size_t(i)] = p.ids;
    Rng prng(50 + static_cast<std::uint64_t>(i));
    pixels[size_t(i)] = MatF(cfg.canvas_h, cfg.canvas_w);
    for (Eigen::Index k = 0; k < pixels[size_t(i)].size(); ++k)
      pixels[size_t(i)].data()[k] = static_cast<float>(prng.uniform());
  }

  auto build = [&](Tape<double>& t) {
    Tape<double>::Ref trows = -1, irows = -1;
    for (int i = 0; i < b; ++i) {
      const auto tf = net.text.forward(t, ids[size_t(i)], false);
      const auto te = t.rows(tf, cfg.l_t - 1, 1);
      const auto im = net.image.forward(t, pixels[size_t(i)], cfg.patch_h, cfg.patch_w, false);
      const auto ie = t.rows(im, 0, 1);
      trows = i == 0 ? te : t.concat_rows(trows, te);
      irows = i == 0 ? ie : t.concat_rows(irows, ie);
    }
    const auto tn = t.l2_normalize_rows(trows);
    const auto in = t.l2_normalize_rows(irows);
    const auto z = t.scale_by(t.matmul_nt(tn, in), t.exp_elem(t.param(net.log_scale)));
    const std::vector<int> diag = {0, 1, 2};
    const std::vector<std::uint8_t> all = {1, 1, 1};
    const auto lt = t.cross_entropy(z, diag, all);
    const auto li = t.cross_entropy(t.transpose(z), diag, all);
    return t.scale(t.add(lt, li), 0.5);
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
  CHECK(max_rel_grad_error<double>(ps, grads, loss_fn, 1e-5) < 1e-4);
}

TEST_CASE("similarity probe softmax examples") {
  // [EOS] row of the text embedding dotted with [CLS] rows of the images.
  EmbeddingMatrix text = make_emb({1.f, 0.f}, 3, 2);
  text.role = Role::prompt;

  SUBCASE("equal group sums give (0.5, 0.5)") {
    const EmbeddingMatrix a = make_emb({0.7f, 0.f}, 2, 0);
    const EmbeddingMatrix b = make_emb({0.7f, 0.f}, 2, 0);
    const auto out = similarity_probe(text, {&a, &b}, {0, 1}, 2);
    CHECK(out[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(out[1] == doctest::Approx(0.5).epsilon(1e-12));
  }

  SUBCASE("group sums (2, 0) give the closed-form softmax") {
    const EmbeddingMatrix a = make_emb({2.f, 0.f}, 2, 0);
    const EmbeddingMatrix b = make_emb({0.f, 5.f}, 2, 0);  // orthogonal: dot 0
    const auto out = similarity_probe(text, {&a, &b}, {0, 1}, 2);
    const double e2 = std::exp(2.0);
    CHECK(out[0] == doctest::Approx(e2 / (e2 + 1.0)).epsilon(1e-9));
    CHECK(out[1] == doctest::Approx(1.0 / (e2 + 1.0)).epsilon(1e-9));
    CHECK(out[0] == doctest::Approx(0.881).epsilon(1e-3));
  }

  SUBCASE("rows sum to one") {
    const EmbeddingMatrix a = make_emb({0.3f, 0.9f}, 2, 0);
    const EmbeddingMatrix b = make_emb({-1.2f, 0.4f}, 2, 0);
    const auto out = similarity_probe(text, {&a, &b}, {0, 1}, 2);
    CHECK(std::abs(out[0] + out[1] - 1.0) < 1e-6);
  }

  SUBCASE("an empty group is degenerate") {
    const EmbeddingMatrix a = make_emb({1.f, 0.f}, 2, 0);
    CHECK_THROWS_WITH((void)similarity_probe(text, {&a}, {0}, 2), "degenerate sample");
  }
}
