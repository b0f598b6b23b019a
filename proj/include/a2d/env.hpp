#pragma once

// Synthetic compositional arithmetic environment: multi-hop modular chains,
// prompt rendering, exact answer verification.

#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "a2d/rng.hpp"
#include "a2d/vocab.hpp"

namespace a2d::env {

enum class Op : std::uint8_t { kAdd, kSub, kMul };

inline constexpr int kMaxChainLen = 8;

struct Step {
  Op op = Op::kAdd;
  int operand = 0;
  friend bool operator==(const Step&, const Step&) = default;
};

struct TaskInstance {
  std::uint64_t task_id = 0;
  std::vector<Step> chain;
  int modulus = 2;
  TokenSeq question_tokens;
  int answer = 0;

  int difficulty() const { return static_cast<int>(chain.size()); }
  friend bool operator==(const TaskInstance&, const TaskInstance&) = default;
};

struct SubQuestionList {
  std::vector<TokenSeq> items;

  std::size_t count() const { return items.size(); }
  bool empty() const { return items.empty(); }
  friend bool operator==(const SubQuestionList&, const SubQuestionList&) = default;
};

struct PromptStyle {
  enum class Kind : std::uint8_t { kVanilla, kWithSubQuestions, kDiversity };
  Kind kind = Kind::kVanilla;
  int variant_id = 0;

  static PromptStyle vanilla() { return {Kind::kVanilla, 0}; }
  static PromptStyle with_subquestions() { return {Kind::kWithSubQuestions, 0}; }
  static PromptStyle diversity(int v) { return {Kind::kDiversity, v}; }
};

struct RewardValues {
  double pos = 1.0;
  double neg = 0.0;
};

struct EnvConfig {
  int modulus = 7;
  int chain_len_min = 1;
  int chain_len_max = 3;
  int n_variants = 4;
  RewardValues reward;

  void validate() const {
    if (modulus < 2 || modulus > vocab::kMaxModulus)
      throw std::invalid_argument("env.modulus must be in [2, " +
                                  std::to_string(vocab::kMaxModulus) + "]");
    if (chain_len_min < 1 || chain_len_max > kMaxChainLen || chain_len_min > chain_len_max)
      throw std::invalid_argument("env.chain_len_{min,max} must satisfy 1 <= min <= max <= " +
                                  std::to_string(kMaxChainLen));
    if (n_variants < 1 || n_variants > vocab::kMaxVariants)
      throw std::invalid_argument("env.n_variants must be in [1, " +
                                  std::to_string(vocab::kMaxVariants) + "]");
  }
};

inline Token op_token(Op op) {
  switch (op) {
    case Op::kAdd: return vocab::kAdd;
    case Op::kSub: return vocab::kSub;
    case Op::kMul: return vocab::kMul;
  }
  throw std::logic_error("bad op");
}

inline Op op_from_token(Token t) {
  switch (t) {
    case vocab::kAdd: return Op::kAdd;
    case vocab::kSub: return Op::kSub;
    case vocab::kMul: return Op::kMul;
    default: throw std::invalid_argument("token is not an operation code");
  }
}

inline const char* op_name(Op op) {
  switch (op) {
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
  }
  return "?";
}

inline Op op_from_name(std::string_view s) {
  if (s == "add") return Op::kAdd;
  if (s == "sub") return Op::kSub;
  if (s == "mul") return Op::kMul;
  throw std::invalid_argument("unknown operation name: " + std::string(s));
}

inline int apply(Op op, int value, int operand, int modulus) {
  switch (op) {
    case Op::kAdd: return (value + operand) % modulus;
    case Op::kSub: return ((value - operand) % modulus + modulus) % modulus;
    case Op::kMul: return (value * operand) % modulus;
  }
  throw std::logic_error("bad op");
}

/// Values after each step, starting from 0. The last entry is the answer.
inline std::vector<int> prefix_values(std::span<const Step> chain, int modulus) {
  std::vector<int> out;
  out.reserve(chain.size());
  int v = 0;
  for (const Step& s : chain) {
    v = apply(s.op, v, s.operand, modulus);
    out.push_back(v);
  }
  return out;
}

inline TokenSeq encode_question(std::span<const Step> chain) {
  TokenSeq out{vocab::kQuestion};
  for (const Step& s : chain) {
    out.push_back(op_token(s.op));
    out.push_back(vocab::digit(s.operand));
  }
  return out;
}

inline std::vector<Step> parse_question(std::span<const Token> tokens) {
  if (tokens.empty() || tokens[0] != vocab::kQuestion || tokens.size() % 2 != 1)
    throw std::invalid_argument("malformed question tokens");
  std::vector<Step> chain;
  for (std::size_t i = 1; i < tokens.size(); i += 2) {
    if (!vocab::is_digit(tokens[i + 1])) throw std::invalid_argument("malformed question operand");
    chain.push_back({op_from_token(tokens[i]), vocab::digit_value(tokens[i + 1])});
  }
  return chain;
}

/// Builds and checks a task from an explicit chain.
inline TaskInstance make_task(std::uint64_t task_id, std::vector<Step> chain, int modulus) {
  if (modulus < 2 || modulus > vocab::kMaxModulus)
    throw std::invalid_argument("modulus out of bounds");
  if (chain.empty() || static_cast<int>(chain.size()) > kMaxChainLen)
    throw std::invalid_argument("chain length out of bounds");
  for (const Step& s : chain)
    if (s.operand < 1 || s.operand >= modulus)
      throw std::invalid_argument("operand must lie in [1, modulus)");
  TaskInstance t;
  t.task_id = task_id;
  t.modulus = modulus;
  t.question_tokens = encode_question(chain);
  t.answer = prefix_values(chain, modulus).back();
  t.chain = std::move(chain);
  return t;
}

/// Deterministic in (rng_seed, chain_len, modulus); rng_seed doubles as the task id.
inline TaskInstance generate_task(std::uint64_t rng_seed, int chain_len, int modulus) {
  if (chain_len < 1 || chain_len > kMaxChainLen)
    throw std::invalid_argument("chain_len must be in [1, " + std::to_string(kMaxChainLen) + "]");
  if (modulus < 2 || modulus > vocab::kMaxModulus)
    throw std::invalid_argument("modulus must be in [2, " + std::to_string(vocab::kMaxModulus) + "]");
  Rng rng(stream_seed(rng_seed, "env/task"));
  std::vector<Step> chain;
  chain.reserve(chain_len);
  for (int i = 0; i < chain_len; ++i) {
    const auto op = static_cast<Op>(rng.below(3));
    const int operand = 1 + static_cast<int>(rng.below(static_cast<std::size_t>(modulus - 1)));
    chain.push_back({op, operand});
  }
  return make_task(rng_seed, std::move(chain), modulus);
}

/// `n` tasks with lengths drawn uniformly from [len_min, len_max]. Chains in
/// `exclude` are skipped so held-out suites never repeat a training chain.
inline std::vector<TaskInstance> generate_suite(std::uint64_t master_seed, std::string_view name,
                                                std::size_t n, int len_min, int len_max, int modulus,
                                                const std::set<std::vector<Token>>* exclude = nullptr) {
  std::vector<TaskInstance> out;
  out.reserve(n);
  std::set<std::vector<Token>> seen;
  Rng len_rng(stream_seed(master_seed, name, 0xA11));
  for (std::uint64_t i = 0; out.size() < n; ++i) {
    if (i > 1000 * (n + 10)) throw std::runtime_error("task space exhausted for suite '" + std::string(name) + "'");
    const int len = len_min + static_cast<int>(len_rng.below(static_cast<std::size_t>(len_max - len_min + 1)));
    TaskInstance t = generate_task(stream_seed(master_seed, name, i), len, modulus);
    if (exclude && exclude->contains(t.question_tokens)) continue;
    if (!seen.insert(t.question_tokens).second) continue;
    out.push_back(std::move(t));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Prompts

inline TokenSeq render_prompt(const TaskInstance& task, PromptStyle style,
                              const SubQuestionList* subq = nullptr) {
  TokenSeq out = task.question_tokens;
  switch (style.kind) {
    case PromptStyle::Kind::kVanilla:
      out.push_back(vocab::kReason);
      break;
    case PromptStyle::Kind::kWithSubQuestions:
      if (subq == nullptr) throw std::invalid_argument("WithSubQuestions prompt requires a sub-question list");
      out.push_back(vocab::kTips);
      for (const TokenSeq& span : subq->items) {
        out.push_back(vocab::kSubqOpen);
        out.insert(out.end(), span.begin(), span.end());
        out.push_back(vocab::kSubqClose);
      }
      out.push_back(vocab::kReason);
      break;
    case PromptStyle::Kind::kDiversity:
      out.push_back(vocab::variant(style.variant_id));
      break;
  }
  return out;
}

inline TokenSeq render_prompt(const TaskInstance& task, PromptStyle style, const SubQuestionList& subq) {
  return render_prompt(task, style, &subq);
}

inline TokenSeq decomposer_prompt(const TaskInstance& task) {
  TokenSeq out = task.question_tokens;
  out.push_back(vocab::kDecompose);
  return out;
}

inline TokenSeq render_answer(int answer) { return {vocab::kAnswer, vocab::digit(answer), vocab::kEos}; }

/// Step-by-step solution: each step restated with its value ("op k = v"),
/// then the answer span.
inline TokenSeq render_solution(const TaskInstance& task) {
  TokenSeq out;
  const auto values = prefix_values(task.chain, task.modulus);
  for (std::size_t i = 0; i < task.chain.size(); ++i) {
    out.push_back(op_token(task.chain[i].op));
    out.push_back(vocab::digit(task.chain[i].operand));
    out.push_back(vocab::kEquals);
    out.push_back(vocab::digit(values[i]));
  }
  out.push_back(vocab::kAnswer);
  out.push_back(vocab::digit(task.answer));
  out.push_back(vocab::kEos);
  return out;
}

// ---------------------------------------------------------------------------
// Verification

/// Value of the last answer span: the tokens after the final ANSWER up to EOS
/// (or the end) must be exactly one digit.
inline std::optional<int> extract_answer(std::span<const Token> response) {
  std::size_t end = response.size();
  for (std::size_t i = 0; i < response.size(); ++i)
    if (response[i] == vocab::kEos) {
      end = i;
      break;
    }
  std::optional<std::size_t> last;
  for (std::size_t i = 0; i < end; ++i)
    if (response[i] == vocab::kAnswer) last = i;
  if (!last || *last + 2 != end) return std::nullopt;
  const Token t = response[*last + 1];
  if (!vocab::is_digit(t)) return std::nullopt;
  return vocab::digit_value(t);
}

inline double verify(const TaskInstance& task, std::span<const Token> response, RewardValues r = {}) {
  const auto a = extract_answer(response);
  return (a && *a == task.answer) ? r.pos : r.neg;
}

inline bool is_correct(const TaskInstance& task, std::span<const Token> response) {
  const auto a = extract_answer(response);
  return a && *a == task.answer;
}

// ---------------------------------------------------------------------------
// Ground-truth decomposition (tests and evaluation baselines only)

/// Sub-question i asks for the value after applying step i: span = [op_i, k_i].
inline SubQuestionList oracle_decompose(const TaskInstance& task) {
  SubQuestionList out;
  for (const Step& s : task.chain) out.items.push_back({op_token(s.op), vocab::digit(s.operand)});
  return out;
}

/// Target of each oracle sub-question.
inline std::vector<int> subquestion_targets(const TaskInstance& task) {
  return prefix_values(task.chain, task.modulus);
}

// ---------------------------------------------------------------------------
// Line-delimited task records

inline nlohmann::json to_json(const TaskInstance& t) {
  nlohmann::json chain = nlohmann::json::array();
  for (const Step& s : t.chain) chain.push_back({op_name(s.op), s.operand});
  return {{"task_id", t.task_id}, {"chain", chain}, {"modulus", t.modulus}, {"answer", t.answer}};
}

inline TaskInstance task_from_json(const nlohmann::json& j) {
  std::vector<Step> chain;
  for (const auto& s : j.at("chain")) chain.push_back({op_from_name(s.at(0).get<std::string>()), s.at(1).get<int>()});
  TaskInstance t = make_task(j.at("task_id").get<std::uint64_t>(), std::move(chain), j.at("modulus").get<int>());
  if (t.answer != j.at("answer").get<int>())
    throw std::invalid_argument("task " + std::to_string(t.task_id) + ": recorded answer disagrees with chain");
  return t;
}

inline void write_tasks(std::ostream& os, std::span<const TaskInstance> tasks) {
  for (const TaskInstance& t : tasks) os << to_json(t).dump() << '\n';
}

inline std::vector<TaskInstance> read_tasks(std::istream& is) {
  std::vector<TaskInstance> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    if (j.contains("meta")) continue;
    out.push_back(task_from_json(j));
  }
  return out;
}

}  // namespace a2d::env
