#include "dptr/vocab.hpp"

#include "dptr/common.hpp"
#include "dptr/io.hpp"

#include <nlohmann/json.hpp>

namespace dptr {
namespace vocab {

namespace {
// Symbol order fixes the id layout: letters, digits, space, apostrophe.
const std::string kSymbols = "abcdefghijklmnopqrstuvwxyz0123456789 '";
}  // namespace

bool known(char c) { return kSymbols.find(c) != std::string::npos; }

int id_of(char c) {
  const auto pos = kSymbols.find(c);
  require(pos != std::string::npos, "unknown symbol");
  return kFirstSymbol + static_cast<int>(pos);
}

char char_of(int id) {
  require(id >= kFirstSymbol && id < kSize, "unknown symbol");
  return kSymbols[static_cast<size_t>(id - kFirstSymbol)];
}

int class_of_token(int id) {
  if (id == kEos) return kEosClass;
  require(id >= kFirstSymbol && id < kSize, "unknown symbol");
  return id - kFirstSymbol;
}

int token_of_class(int cls) {
  if (cls == kEosClass) return kEos;
  require(cls >= 0 && cls < kNumSymbols, "unknown symbol");
  return cls + kFirstSymbol;
}

std::vector<int> encode_chars(const std::string& text) {
  std::vector<int> ids;
  ids.reserve(text.size());
  for (char c : text) ids.push_back(id_of(c));
  return ids;
}

std::string decode_chars(const std::vector<int>& ids) {
  std::string out;
  for (int id : ids) {
    if (id == kEos || id == kPad) break;
    if (id == kBos) continue;
    out.push_back(char_of(id));
  }
  return out;
}

std::string to_json() {
  nlohmann::json j;
  j["[PAD]"] = kPad;
  j["[BOS]"] = kBos;
  j["[EOS]"] = kEos;
  for (size_t i = 0; i < kSymbols.size(); ++i) {
    j[std::string(1, kSymbols[i])] = kFirstSymbol + static_cast<int>(i);
  }
  return j.dump(2) + "\n";
}

void write_json(const std::string& path) { atomic_write(path, to_json()); }

}  // namespace vocab
}  // namespace dptr
