#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace a2d {

using Token = std::int32_t;
using TokenSeq = std::vector<Token>;

/// Fixed vocabulary, version "v1". Layout:
///   structural delimiters, three operation codes, "=", digits 0..kMaxModulus-1,
///   then kMaxVariants diversity-instruction tokens.
namespace vocab {

inline constexpr std::string_view kVersion = "v1";

inline constexpr Token kPad = 0;
inline constexpr Token kQuestion = 1;
inline constexpr Token kReason = 2;     // vanilla "reason step by step" suffix
inline constexpr Token kDecompose = 3;  // decomposer instruction suffix
inline constexpr Token kTips = 4;
inline constexpr Token kSubqOpen = 5;
inline constexpr Token kSubqClose = 6;
inline constexpr Token kAnswer = 7;
inline constexpr Token kEos = 8;
inline constexpr Token kAdd = 9;
inline constexpr Token kSub = 10;
inline constexpr Token kMul = 11;
inline constexpr Token kEquals = 12;

inline constexpr int kMaxModulus = 16;
inline constexpr Token kDigit0 = 13;
inline constexpr int kMaxVariants = 8;
inline constexpr Token kVariant0 = kDigit0 + kMaxModulus;
inline constexpr int kSize = kVariant0 + kMaxVariants;

constexpr bool is_digit(Token t) noexcept { return t >= kDigit0 && t < kDigit0 + kMaxModulus; }
constexpr bool is_op(Token t) noexcept { return t >= kAdd && t <= kMul; }
constexpr bool is_variant(Token t) noexcept { return t >= kVariant0 && t < kSize; }
constexpr bool in_vocab(Token t) noexcept { return t >= 0 && t < kSize; }

inline Token digit(int value) {
  if (value < 0 || value >= kMaxModulus) throw std::out_of_range("digit value outside vocabulary");
  return kDigit0 + value;
}
constexpr int digit_value(Token t) noexcept { return t - kDigit0; }

inline Token variant(int id) {
  if (id < 0 || id >= kMaxVariants) throw std::out_of_range("diversity variant outside vocabulary");
  return kVariant0 + id;
}

/// Surface text of a token, used by the character-count format rule and for
/// human-readable dumps. EOS and PAD render to nothing.
inline std::string text(Token t) {
  switch (t) {
    case kPad: return "";
    case kQuestion: return "Q:";
    case kReason: return "[reason]";
    case kDecompose: return "[decompose]";
    case kTips: return "Tips:";
    case kSubqOpen: return "<sq>";
    case kSubqClose: return "</sq>";
    case kAnswer: return "Answer:";
    case kEos: return "";
    case kAdd: return "+";
    case kSub: return "-";
    case kMul: return "*";
    case kEquals: return "=";
    default: break;
  }
  if (is_digit(t)) return std::to_string(digit_value(t));
  if (is_variant(t)) return "[explore" + std::to_string(t - kVariant0) + "]";
  throw std::out_of_range("token id outside vocabulary");
}

/// Stable identifier used in serialized files ("ADD", "D3", "V0", ...).
inline std::string name(Token t) {
  static constexpr std::array<std::string_view, 13> kNames = {
      "PAD", "QUESTION", "REASON", "DECOMPOSE", "TIPS", "SUBQ_OPEN", "SUBQ_CLOSE",
      "ANSWER", "EOS", "ADD", "SUB", "MUL", "EQUALS"};
  if (t >= 0 && t < static_cast<Token>(kNames.size())) return std::string(kNames[t]);
  if (is_digit(t)) return "D" + std::to_string(digit_value(t));
  if (is_variant(t)) return "V" + std::to_string(t - kVariant0);
  throw std::out_of_range("token id outside vocabulary");
}

inline Token from_name(std::string_view s) {
  for (Token t = 0; t < kSize; ++t)
    if (name(t) == s) return t;
  throw std::invalid_argument("unknown token name: " + std::string(s));
}

/// Tokens joined by single spaces, skipping empty renderings.
inline std::string render(std::span<const Token> tokens) {
  std::string out;
  for (Token t : tokens) {
    std::string piece = text(t);
    if (piece.empty()) continue;
    if (!out.empty()) out += ' ';
    out += piece;
  }
  return out;
}

}  // namespace vocab
}  // namespace a2d
