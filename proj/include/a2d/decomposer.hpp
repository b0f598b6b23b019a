#pragma once

// Decomposer reward (format x quality) and its RLVR training phase.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "a2d/env.hpp"
#include "a2d/policy.hpp"
#include "a2d/rlvr.hpp"

namespace a2d::decomposer {

using env::SubQuestionList;
using env::TaskInstance;

enum class QualityMode { kPassAtK, kPassAt1 };

struct DecomposerConfig {
  int n_proxy = 4;
  QualityMode quality_mode = QualityMode::kPassAtK;
  bool format_reward_enabled = true;
  int min_content_chars = 10;
  policy::SamplingOptions proxy_sampling{1.0, 1.0, 24, false};
  env::RewardValues reward;

  void validate() const {
    if (n_proxy < 1) throw std::invalid_argument("decomposer.n_proxy must be at least 1");
    if (min_content_chars < 1) throw std::invalid_argument("decomposer.min_content_chars must be at least 1");
  }
};

enum class ParseFailure {
  kMissingOpen,      // does not begin with the sub-question tag
  kNestedOpen,       // a sub-question holds a second opening tag
  kUnclosedSpan,
  kEmptySpan,
  kAnswerLeak,       // answer marker inside the decomposition
  kTrailingContent,  // tokens outside any span
};

inline const char* failure_name(ParseFailure f) {
  switch (f) {
    case ParseFailure::kMissingOpen: return "missing_open";
    case ParseFailure::kNestedOpen: return "nested_open";
    case ParseFailure::kUnclosedSpan: return "unclosed_span";
    case ParseFailure::kEmptySpan: return "empty_span";
    case ParseFailure::kAnswerLeak: return "answer_leak";
    case ParseFailure::kTrailingContent: return "trailing_content";
  }
  return "?";
}

using ParseResult = std::variant<SubQuestionList, ParseFailure>;

/// Response body: everything before the first EOS.
inline std::span<const Token> body(std::span<const Token> response) {
  for (std::size_t i = 0; i < response.size(); ++i)
    if (response[i] == vocab::kEos) return response.first(i);
  return response;
}

/// Strict split into OPEN ... CLOSE spans.
inline ParseResult parse_subquestions(std::span<const Token> response) {
  const auto b = body(response);
  if (b.empty() || b[0] != vocab::kSubqOpen) return ParseFailure::kMissingOpen;
  SubQuestionList out;
  std::size_t i = 0;
  while (i < b.size()) {
    if (b[i] != vocab::kSubqOpen) return ParseFailure::kTrailingContent;
    TokenSeq span;
    std::size_t j = i + 1;
    for (; j < b.size() && b[j] != vocab::kSubqClose; ++j) {
      if (b[j] == vocab::kSubqOpen) return ParseFailure::kNestedOpen;
      if (b[j] == vocab::kAnswer) return ParseFailure::kAnswerLeak;
      span.push_back(b[j]);
    }
    if (j == b.size()) return ParseFailure::kUnclosedSpan;
    if (span.empty()) return ParseFailure::kEmptySpan;
    out.items.push_back(std::move(span));
    i = j + 1;
  }
  return out;
}

inline bool parsed(const ParseResult& r) { return std::holds_alternative<SubQuestionList>(r); }

/// Individual format rules, exposed for diagnostics and tests.
struct FormatCheck {
  bool begins_with_tag = false;
  bool single_tag_per_subquestion = false;
  bool long_enough = false;
  bool well_formed = false;  // closed, non-empty, no answer marker, nothing outside spans

  bool pass() const { return begins_with_tag && single_tag_per_subquestion && long_enough && well_formed; }
};

inline FormatCheck check_format(std::span<const Token> response, int min_content_chars) {
  const auto b = body(response);
  FormatCheck fc;
  fc.begins_with_tag = !b.empty() && b[0] == vocab::kSubqOpen;

  // A sub-question runs from one opening tag to the next opening tag; it may
  // contain at most one opening tag before its closing tag.
  fc.single_tag_per_subquestion = true;
  bool open = false;
  for (Token t : b) {
    if (t == vocab::kSubqOpen) {
      if (open) {
        fc.single_tag_per_subquestion = false;
        break;
      }
      open = true;
    } else if (t == vocab::kSubqClose) {
      open = false;
    }
  }
  fc.long_enough = static_cast<int>(vocab::render(b).size()) > min_content_chars;
  fc.well_formed = parsed(parse_subquestions(response));
  return fc;
}

inline int format_reward(std::span<const Token> response, const DecomposerConfig& cfg) {
  return check_format(response, cfg.min_content_chars).pass() ? 1 : 0;
}

/// Sub-questions handed to the proxy when the format reward is switched off:
/// the strict parse when it succeeds, otherwise the whole body as one span.
inline SubQuestionList lenient_subquestions(std::span<const Token> response) {
  ParseResult r = parse_subquestions(response);
  if (auto* list = std::get_if<SubQuestionList>(&r)) return std::move(*list);
  SubQuestionList out;
  const auto b = body(response);
  if (!b.empty()) out.items.emplace_back(b.begin(), b.end());
  return out;
}

/// Frozen reasoner that answers the sub-question-guided prompt.
struct PolicyProxy {
  const policy::PolicyParams* params = nullptr;
  policy::SamplingOptions sampling;

  TokenSeq operator()(std::span<const Token> prompt, Rng& rng) const {
    return policy::sample(*params, prompt, sampling, rng).tokens;
  }
};

/// 1 iff any of the proxy attempts verifies. Attempt a draws from its own
/// stream seeded from one draw of `rng`.
template <typename Proxy>
int quality_reward(const TaskInstance& task, const SubQuestionList& subq, const DecomposerConfig& cfg,
                   const Proxy& proxy, Rng& rng) {
  const TokenSeq prompt = env::render_prompt(task, env::PromptStyle::with_subquestions(), subq);
  const int attempts = cfg.quality_mode == QualityMode::kPassAtK ? cfg.n_proxy : 1;
  const std::uint64_t base = rng.next_u64();
  for (int a = 0; a < attempts; ++a) {
    Rng attempt_rng(stream_seed(base, "decomposer/proxy", static_cast<std::uint64_t>(a)));
    const TokenSeq answer = proxy(prompt, attempt_rng);
    if (env::is_correct(task, answer)) return 1;
  }
  return 0;
}

/// R = R_F * R_Q. The proxy is never consulted when R_F = 0.
template <typename Proxy>
int decomposer_reward(const TaskInstance& task, std::span<const Token> response, const DecomposerConfig& cfg,
                      const Proxy& proxy, Rng& rng) {
  if (cfg.format_reward_enabled) {
    if (format_reward(response, cfg) == 0) return 0;
    const auto list = std::get<SubQuestionList>(parse_subquestions(response));
    return quality_reward(task, list, cfg, proxy, rng);
  }
  return quality_reward(task, lenient_subquestions(response), cfg, proxy, rng);
}

inline bool contains_answer_token(std::span<const Token> tokens) {
  for (Token t : tokens)
    if (t == vocab::kAnswer) return true;
  return false;
}

/// Extra per-step fields: format_pass_rate, leaks (ANSWER tokens inside
/// format-passing responses).
inline rlvr::TrainState train_decomposer(policy::PolicyParams init, const policy::PolicyParams& proxy_params,
                                         std::span<const TaskInstance> dataset, const rlvr::RlvrConfig& rcfg,
                                         const DecomposerConfig& dcfg, std::uint64_t master_seed,
                                         std::function<void(const rlvr::StepStats&)> on_step = {},
                                         std::function<void(std::span<const Token>)> on_format_pass = {}) {
  dcfg.validate();
  if (dataset.empty()) throw std::invalid_argument("train_decomposer: empty dataset");
  const PolicyProxy proxy{&proxy_params, dcfg.proxy_sampling};
  rlvr::TrainHooks hooks;
  hooks.on_wave = [&](std::span<const rlvr::RolloutGroup> groups, rlvr::StepStats& s) {
    std::size_t n = 0, pass = 0, leaks = 0;
    for (const auto& g : groups)
      for (const auto& r : g.rollouts) {
        ++n;
        if (format_reward(r.tokens, dcfg)) {
          ++pass;
          if (contains_answer_token(body(r.tokens))) ++leaks;
          if (on_format_pass) on_format_pass(r.tokens);
        }
      }
    s.extra["format_pass_rate"] = n ? static_cast<double>(pass) / static_cast<double>(n) : 0.0;
    s.extra["leaks"] = static_cast<double>(leaks);
  };
  hooks.on_step = std::move(on_step);
  auto st = rlvr::train_rlvr(
      std::move(init), dataset.size(), [&](std::size_t i) { return env::decomposer_prompt(dataset[i]); },
      [&](std::size_t i, const policy::Rollout& r, Rng& rng) {
        return static_cast<double>(decomposer_reward(dataset[i], r.tokens, dcfg, proxy, rng));
      },
      rcfg, master_seed, "decomposer", hooks);
  st.params.lineage += ">decomposer:" + std::to_string(master_seed);
  return st;
}

}  // namespace a2d::decomposer
