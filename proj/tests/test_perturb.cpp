#include "dptr/perturb.hpp"

#include "dptr/io.hpp"

#include <doctest.h>

#include <cmath>

#include "testutil.hpp"

using namespace dptr;

namespace {

DualEncoder tiny_encoder(std::uint64_t seed = 7) {
  return DualEncoder::init(DualEncoderConfig::from_train_config(dptr_test::tiny_config()), seed);
}

EmbeddingMatrix prompt_embedding(const DualEncoder& enc, const std::string& label) {
  return text_encode(enc, tokenize_prompt(make_prompt(label), enc.cfg.l_t - 1));
}

}  // namespace

TEST_CASE("texture cache has the requested count and rebuilds byte-identically") {
  dptr_test::TempDir dir("cache");
  const DualEncoder enc = tiny_encoder();
  const PerturbCache a = build_texture_cache(enc, 6, enc.cfg.l_t, 99);
  CHECK(a.count() == 6);
  CHECK(a.rows_per_entry == enc.cfg.n_patches());
  save_cache(a, dir.file("a.bin"));
  const PerturbCache b = build_texture_cache(enc, 6, enc.cfg.l_t, 99);
  save_cache(b, dir.file("b.bin"));
  CHECK(read_file(dir.file("a.bin")) == read_file(dir.file("b.bin")));

  const PerturbCache loaded = load_cache(dir.file("a.bin"));
  REQUIRE(loaded.count() == 6);
  for (int i = 0; i < 6; ++i) CHECK(loaded.bank[size_t(i)] == a.bank[size_t(i)]);
  CHECK(loaded.seed == 99);
}

TEST_CASE("entries shorter than the prompt length are rejected") {
  const DualEncoder enc = tiny_encoder();
  CHECK_THROWS_WITH(build_texture_cache(enc, 2, enc.cfg.n_patches() + 1, 1),
                    "cache entry too short");
}

TEST_CASE("crop offsets cover the valid range uniformly") {
  Rng data_rng(3);
  const MatF entry = randn<float>(64, 4, 1.f, data_rng);

  SUBCASE("bounds and identity") {
    Rng rng(4);
    for (int i = 0; i < 200; ++i) {
      const MatF crop = crop_tokens(entry, 25, rng);
      REQUIRE(crop.rows() == 25);
      // Valid offsets are 0..39; the crop must match the entry at some offset.
      bool found = false;
      for (int off = 0; off <= 39; ++off)
        if (crop == entry.middleRows(off, 25)) {
          found = true;
          break;
        }
      CHECK(found);
    }
    const MatF exact = crop_tokens(entry.topRows(25), 25, rng);
    CHECK(exact == entry.topRows(25));
    CHECK_THROWS(crop_tokens(entry.topRows(10), 25, rng));
  }

  SUBCASE("chi-squared uniformity over 10000 draws") {
    // Offset recovered by matching the first crop row against the entry.
    Rng rng(5);
    std::vector<int> counts(40, 0);
    for (int i = 0; i < 10000; ++i) {
      const MatF crop = crop_tokens(entry, 25, rng);
      for (int off = 0; off <= 39; ++off) {
        if (crop.row(0) == entry.row(off)) {
          ++counts[size_t(off)];
          break;
        }
      }
    }
    const double expected = 10000.0 / 40.0;
    double chi2 = 0;
    int total = 0;
    for (int c : counts) {
      chi2 += (c - expected) * (c - expected) / expected;
      total += c;
    }
    CHECK(total == 10000);
    // 99th percentile of chi-squared with 39 dof.
    CHECK(chi2 < 62.43);
  }
}

TEST_CASE("perturb at lambda 0 is the identity on values") {
  const DualEncoder enc = tiny_encoder();
  const PerturbCache cache = build_texture_cache(enc, 4, enc.cfg.l_t, 11);
  const EmbeddingMatrix f_t = prompt_embedding(enc, "hello");
  Rng rng(12);
  const EmbeddingMatrix f_p = perturb(f_t, cache, 0.0, rng);
  CHECK(f_p.values == f_t.values);
  CHECK(f_p.role == Role::perturbed);
}

TEST_CASE("a replayed crop scales exactly linearly in lambda") {
  const DualEncoder enc = tiny_encoder();
  const PerturbCache cache = build_texture_cache(enc, 4, enc.cfg.l_t, 13);
  const EmbeddingMatrix f_t = prompt_embedding(enc, "linear");
  Rng rng1(21);
  Rng rng2 = rng1;  // replay the same entry + offset draws
  const MatF d1 = (perturb(f_t, cache, 0.1, rng1).values - f_t.values);
  const MatF d2 = (perturb(f_t, cache, 0.2, rng2).values - f_t.values);
  const float denom = d2.cwiseAbs().maxCoeff();
  REQUIRE(denom > 0.f);
  CHECK(((d2 - 2.f * d1).cwiseAbs().maxCoeff() / denom) <= 1e-6f);
}

TEST_CASE("perturb leaves its inputs untouched") {
  const DualEncoder enc = tiny_encoder();
  const PerturbCache cache = build_texture_cache(enc, 4, enc.cfg.l_t, 14);
  const EmbeddingMatrix f_t = prompt_embedding(enc, "frozen");
  const MatF f_t_before = f_t.values;
  std::vector<MatF> bank_before = cache.bank;
  Rng rng(15);
  (void)perturb(f_t, cache, 0.3, rng);
  CHECK(f_t.values == f_t_before);
  for (size_t i = 0; i < cache.bank.size(); ++i) CHECK(cache.bank[i] == bank_before[i]);
}

TEST_CASE("different rng states give different perturbations") {
  const DualEncoder enc = tiny_encoder();
  const PerturbCache cache = build_texture_cache(enc, 8, enc.cfg.l_t, 16);
  const EmbeddingMatrix f_t = prompt_embedding(enc, "vary");
  Rng rng(17);
  int distinct = 0;
  const int trials = 50;
  MatF prev;
  for (int i = 0; i < trials; ++i) {
    const MatF v = perturb(f_t, cache, 0.1, rng).values;
    if (i > 0 && v != prev) ++distinct;
    prev = v;
  }
  // With 8 entries x 2+ offsets, collisions between consecutive draws are rare.
  CHECK(distinct >= trials - 5);
}

TEST_CASE("mean perturbation magnitude is linear in lambda within 5 percent") {
  const DualEncoder enc = tiny_encoder();
  const PerturbCache cache = build_texture_cache(enc, 8, enc.cfg.l_t, 18);
  const EmbeddingMatrix f_t = prompt_embedding(enc, "scale");
  auto mean_mag = [&](double lambda, std::uint64_t seed) {
    Rng rng(seed);
    double acc = 0;
    const int draws = 600;
    for (int i = 0; i < draws; ++i)
      acc += (perturb(f_t, cache, lambda, rng).values - f_t.values).cwiseAbs().mean();
    return acc / draws;
  };
  const double m005 = mean_mag(0.05, 31);
  const double m01 = mean_mag(0.1, 32);
  const double m02 = mean_mag(0.2, 33);
  CHECK(std::abs(m01 / m005 - 2.0) < 0.1);   // ratio within 5% of 2
  CHECK(std::abs(m02 / m01 - 2.0) < 0.1);
  CHECK(std::abs(m02 / m005 - 4.0) < 0.2);
}

TEST_CASE("import-cache validates and canonicalizes an external file") {
  dptr_test::TempDir dir("import");
  const DualEncoder enc = tiny_encoder();
  const PerturbCache cache = build_texture_cache(enc, 3, enc.cfg.l_t, 19);
  save_cache(cache, dir.file("ext.bin"));
  const PerturbCache imported = import_cache(dir.file("ext.bin"), dir.file("canon.bin"), enc.cfg.l_t);
  CHECK(imported.count() == 3);
  CHECK(read_file(dir.file("ext.bin")) == read_file(dir.file("canon.bin")));
  CHECK_THROWS_WITH((void)import_cache(dir.file("ext.bin"), dir.file("x.bin"), 999),
                    "cache entry too short");

  // Truncated payloads are rejected.
  const std::string bytes = read_file(dir.file("ext.bin"));
  atomic_write(dir.file("trunc.bin"), bytes.substr(0, bytes.size() - 4));
  CHECK_THROWS((void)load_cache(dir.file("trunc.bin")));
}
