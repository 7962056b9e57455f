#include "dptr/corpus.hpp"

#include "dptr/common.hpp"
#include "dptr/io.hpp"
#include "dptr/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <unordered_set>

namespace dptr {

namespace {

bool is_alnum_lower(const std::string& s) {
  return std::all_of(s.begin(), s.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9');
  });
}

}  // namespace

LabelCorpus dedup_and_load(const std::vector<std::string>& raw, int max_len) {
  LabelCorpus corpus;
  corpus.max_len = max_len;
  std::unordered_set<std::string> seen;
  for (const std::string& r : raw) {
    std::string s = r;
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (s.empty() || static_cast<int>(s.size()) > max_len) continue;
    if (!is_alnum_lower(s)) continue;
    if (seen.insert(s).second) corpus.labels.push_back(std::move(s));
  }
  require(!corpus.labels.empty(), "empty corpus");
  return corpus;
}

LabelCorpus load_labels_file(const std::string& path, int max_len) {
  return dedup_and_load(read_lines(path), max_len);
}

std::string make_prompt(const std::string& label) {
  require(!label.empty(), "empty label");
  return "a photo of a '" + label + "'";
}

TokenSeq tokenize_prompt(const std::string& prompt, int l_budget) {
  require(l_budget >= 1, "bad token budget");
  TokenSeq seq;
  seq.kind = SeqKind::prompt;
  seq.ids.assign(static_cast<size_t>(l_budget) + 1, vocab::kPad);
  const int n = std::min<int>(l_budget, static_cast<int>(prompt.size()));
  for (int i = 0; i < n; ++i) seq.ids[static_cast<size_t>(i)] = vocab::id_of(prompt[static_cast<size_t>(i)]);
  seq.ids[static_cast<size_t>(l_budget)] = vocab::kEos;
  return seq;
}

TokenSeq encode_target(const std::string& label, int max_len) {
  require(static_cast<int>(label.size()) <= max_len, "label exceeds max_len");
  TokenSeq seq;
  seq.kind = SeqKind::target;
  seq.ids.assign(static_cast<size_t>(max_len) + 2, vocab::kPad);
  seq.ids[0] = vocab::kBos;
  for (size_t i = 0; i < label.size(); ++i) seq.ids[i + 1] = vocab::id_of(label[i]);
  seq.ids[label.size() + 1] = vocab::kEos;
  return seq;
}

std::string decode_target(const TokenSeq& seq) {
  std::string out;
  for (size_t i = 0; i < seq.ids.size(); ++i) {
    const int id = seq.ids[i];
    if (i == 0 && id == vocab::kBos) continue;
    if (id == vocab::kEos || id == vocab::kPad) break;
    out.push_back(vocab::char_of(id));
  }
  return out;
}

std::vector<std::string> generate_toy_labels(int count, int duplicates, Rng& rng) {
  require(count > 0 && duplicates >= 0 && duplicates < count, "bad toy label counts");
  const int unique = count - duplicates;
  std::vector<std::string> out;
  out.reserve(static_cast<size_t>(count));
  std::unordered_set<std::string> seen;
  static const std::string letters = "abcdefghijklmnopqrstuvwxyz";
  static const std::string digits = "0123456789";
  while (static_cast<int>(out.size()) < unique) {
    const int len = 2 + rng.uniform_int(7);  // 2..8 characters
    std::string w;
    for (int i = 0; i < len; ++i) {
      // mostly letters, occasional digit
      if (rng.uniform() < 0.12)
        w.push_back(digits[static_cast<size_t>(rng.uniform_int(10))]);
      else
        w.push_back(letters[static_cast<size_t>(rng.uniform_int(26))]);
    }
    if (seen.insert(w).second) out.push_back(std::move(w));
  }
  for (int i = 0; i < duplicates; ++i) {
    out.push_back(out[static_cast<size_t>(rng.uniform_int(unique))]);
  }
  return out;
}

}  // namespace dptr
