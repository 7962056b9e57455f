#pragma once

#include "dptr/rng.hpp"

#include <string>
#include <vector>

namespace dptr {

// Pool of unique lowercase alphanumeric labels used both for prompt
// generation and as ground truth strings.
struct LabelCorpus {
  std::vector<std::string> labels;
  int max_len = 0;
};

enum class SeqKind { prompt, target };

struct TokenSeq {
  std::vector<int> ids;
  SeqKind kind = SeqKind::target;
};

// Case-folds, drops labels that are empty, longer than max_len or contain
// anything outside a-z0-9 (labels with quote characters are excluded rather
// than templated), dedups keeping first occurrence. Throws "empty corpus"
// when nothing survives.
LabelCorpus dedup_and_load(const std::vector<std::string>& raw, int max_len);

LabelCorpus load_labels_file(const std::string& path, int max_len);

// "a photo of a 'LABEL'"
std::string make_prompt(const std::string& label);

// Fixed-width prompt ids: l_budget content positions (truncating, padding
// with [PAD]) plus [EOS] at index l_budget. Length is always l_budget+1.
TokenSeq tokenize_prompt(const std::string& prompt, int l_budget);

// [BOS] + chars + [EOS], padded with [PAD] to max_len+2.
TokenSeq encode_target(const std::string& label, int max_len);
std::string decode_target(const TokenSeq& seq);

// Deterministic pseudo-word list for toy runs: `count` entries of which
// `duplicates` repeat an earlier entry.
std::vector<std::string> generate_toy_labels(int count, int duplicates, Rng& rng);

}  // namespace dptr
