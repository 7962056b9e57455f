#pragma once

#include <string>
#include <vector>

namespace dptr {

// Character-level vocabulary shared by the prompt side and the target side:
// [PAD]/[BOS]/[EOS] + 26 letters + 10 digits + space + apostrophe.
// Decoder output classes are the 38 printable symbols plus [EOS] as the last
// class; [PAD] and [BOS] are never predicted.
namespace vocab {

inline constexpr int kPad = 0;
inline constexpr int kBos = 1;
inline constexpr int kEos = 2;
inline constexpr int kFirstSymbol = 3;
inline constexpr int kNumSymbols = 38;            // a-z 0-9 space apostrophe
inline constexpr int kSize = kFirstSymbol + kNumSymbols;  // 41 token ids
inline constexpr int kEosClass = kNumSymbols;     // last output class
inline constexpr int kNumClasses = kNumSymbols + 1;

bool known(char c);
int id_of(char c);        // throws "unknown symbol"
char char_of(int id);     // symbol ids only

// token id <-> decoder output class
int class_of_token(int id);
int token_of_class(int cls);

std::vector<int> encode_chars(const std::string& text);
std::string decode_chars(const std::vector<int>& ids);  // stops at EOS/PAD

// symbol -> id map, JSON object, one key per symbol plus the special tokens.
std::string to_json();
void write_json(const std::string& path);

}  // namespace vocab
}  // namespace dptr
