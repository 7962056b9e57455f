#include "dptr/corpus.hpp"
#include "dptr/vocab.hpp"

#include <doctest.h>

#include <set>

using namespace dptr;

TEST_CASE("dedup_and_load case-folds and dedups in first-occurrence order") {
  const LabelCorpus c = dedup_and_load({"ab", "AB", "cd"}, 12);
  REQUIRE(c.labels == std::vector<std::string>{"ab", "cd"});
}

TEST_CASE("dedup_and_load drops over-long labels and errors on empty result") {
  CHECK_THROWS_WITH(dedup_and_load({"abcdefghijklm"}, 12), "empty corpus");
  CHECK_THROWS_WITH(dedup_and_load({}, 12), "empty corpus");
}

TEST_CASE("dedup_and_load drops labels outside the alphanumeric charset") {
  const LabelCorpus c = dedup_and_load({"it's", "ok", "a b", "x-y"}, 12);
  REQUIRE(c.labels == std::vector<std::string>{"ok"});
}

TEST_CASE("toy list with duplicates shrinks by the set-size oracle") {
  Rng rng(99);
  const auto raw = generate_toy_labels(500, 20, rng);
  REQUIRE(raw.size() == 500);
  const std::set<std::string> oracle(raw.begin(), raw.end());
  const LabelCorpus c = dedup_and_load(raw, 12);
  CHECK(c.labels.size() == oracle.size());
  CHECK(c.labels.size() == 480);
}

TEST_CASE("make_prompt follows the template exactly") {
  CHECK(make_prompt("nvidia") == "a photo of a 'nvidia'");
  CHECK(make_prompt("x") == "a photo of a 'x'");
  CHECK_THROWS(make_prompt(""));
}

TEST_CASE("tokenize_prompt emits a fixed-width sequence with trailing EOS") {
  const TokenSeq seq = tokenize_prompt(make_prompt("ab"), 24);
  REQUIRE(seq.kind == SeqKind::prompt);
  REQUIRE(seq.ids.size() == 25);
  CHECK(seq.ids[24] == vocab::kEos);
  CHECK(seq.ids[0] == vocab::id_of('a'));
  // "a photo of a 'ab'" is 17 chars; the rest is padding.
  CHECK(seq.ids[17] == vocab::kPad);

  // 77 content tokens + [EOS] = 78 total in the reference configuration.
  const TokenSeq ref = tokenize_prompt(make_prompt("nvidia"), 77);
  CHECK(ref.ids.size() == 78);
  CHECK(ref.ids[77] == vocab::kEos);
}

TEST_CASE("tokenize_prompt truncates over-long prompts, keeps the EOS slot") {
  const std::string prompt = make_prompt("abcdefghijkl");  // 27 chars
  const TokenSeq seq = tokenize_prompt(prompt, 24);
  REQUIRE(seq.ids.size() == 25);
  CHECK(seq.ids[24] == vocab::kEos);
  for (int i = 0; i < 24; ++i) CHECK(seq.ids[size_t(i)] == vocab::id_of(prompt[size_t(i)]));
}

TEST_CASE("tokenize_prompt rejects unknown symbols") {
  CHECK_THROWS_WITH(tokenize_prompt("a photo of a \"x\"", 24), "unknown symbol");
}

TEST_CASE("prompt tokenization is deterministic and constant-width across a corpus") {
  Rng rng(3);
  const LabelCorpus c = dedup_and_load(generate_toy_labels(50, 0, rng), 12);
  size_t width = 0;
  for (const auto& label : c.labels) {
    const TokenSeq a = tokenize_prompt(make_prompt(label), 24);
    const TokenSeq b = tokenize_prompt(make_prompt(label), 24);
    CHECK(a.ids == b.ids);
    if (width == 0) width = a.ids.size();
    CHECK(a.ids.size() == width);
  }
}

TEST_CASE("encode_target layout and padding") {
  const TokenSeq seq = encode_target("ab", 4);
  REQUIRE(seq.ids == std::vector<int>{vocab::kBos, vocab::id_of('a'), vocab::id_of('b'),
                                      vocab::kEos, vocab::kPad, vocab::kPad});
}

TEST_CASE("encode_target round-trips for random labels") {
  Rng rng(11);
  const auto labels = generate_toy_labels(100, 0, rng);
  for (const auto& label : labels) {
    CHECK(decode_target(encode_target(label, 12)) == label);
  }
}
