#pragma once

// Pass@k estimation, evaluation reports and sub-question statistics.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "a2d/a2d.hpp"
#include "a2d/env.hpp"
#include "a2d/parallel.hpp"
#include "a2d/policy.hpp"

namespace a2d::eval {

/// Unbiased estimator 1 - C(n-c, k) / C(n, k), evaluated as a running
/// product to stay finite for any n.
inline double pass_at_k(int n, int c, int k) {
  if (n < 1 || c < 0 || c > n) throw std::invalid_argument("pass_at_k: need 0 <= c <= n, n >= 1");
  if (k < 1 || k > n) throw std::invalid_argument("pass_at_k: need 1 <= k <= n");
  if (n - c < k) return 1.0;
  double miss = 1.0;
  for (int i = n - c + 1; i <= n; ++i) miss *= 1.0 - static_cast<double>(k) / static_cast<double>(i);
  return 1.0 - miss;
}

struct EvalItem {
  env::TaskInstance task;
  env::SubQuestionList subq;
};

inline std::vector<EvalItem> items_from(std::span<const env::TaskInstance> tasks) {
  std::vector<EvalItem> out;
  for (const auto& t : tasks) out.push_back({t, {}});
  return out;
}

inline std::vector<EvalItem> items_from(std::span<const trainer::AnnotatedInstance> annotated) {
  std::vector<EvalItem> out;
  for (const auto& a : annotated) out.push_back({a.task, a.subq});
  return out;
}

inline std::string style_name(env::PromptStyle s) {
  switch (s.kind) {
    case env::PromptStyle::Kind::kVanilla: return "vanilla";
    case env::PromptStyle::Kind::kWithSubQuestions: return "with_subquestions";
    case env::PromptStyle::Kind::kDiversity: return "diversity" + std::to_string(s.variant_id);
  }
  return "?";
}

struct EvalReport {
  std::string suite;
  std::string style;
  int n_samples = 0;
  std::vector<int> k_list;
  std::map<int, double> pass_at;  // k -> mean over tasks
  std::vector<std::uint64_t> task_ids;
  std::vector<int> n_per_task;
  std::vector<int> correct_per_task;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::string code_version;

  double pass1() const { return pass_at.at(1); }
  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

inline nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json pk = nlohmann::json::object();
  for (const auto& [k, v] : r.pass_at) pk[std::to_string(k)] = v;
  return {{"suite", r.suite},       {"style", r.style},         {"n_samples", r.n_samples},
          {"k_list", r.k_list},     {"pass_at", pk},            {"task_ids", r.task_ids},
          {"n", r.n_per_task},      {"c", r.correct_per_task},  {"seed", r.seed},
          {"config_hash", r.config_hash}, {"code_version", r.code_version}};
}

inline EvalReport report_from_json(const nlohmann::json& j) {
  EvalReport r;
  r.suite = j.at("suite").get<std::string>();
  r.style = j.at("style").get<std::string>();
  r.n_samples = j.at("n_samples").get<int>();
  r.k_list = j.at("k_list").get<std::vector<int>>();
  for (const auto& [k, v] : j.at("pass_at").items()) r.pass_at[std::stoi(k)] = v.get<double>();
  r.task_ids = j.at("task_ids").get<std::vector<std::uint64_t>>();
  r.n_per_task = j.at("n").get<std::vector<int>>();
  r.correct_per_task = j.at("c").get<std::vector<int>>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.config_hash = j.at("config_hash").get<std::string>();
  r.code_version = j.value("code_version", "");
  return r;
}

struct EvalOptions {
  int n_samples = 8;
  std::vector<int> k_list{1, 8};
  policy::SamplingOptions sampling{1.0, 1.0, 24, false};
  int workers = 1;
};

/// n_samples rollouts per task; sample j of task i draws from
/// stream "eval/<suite>" at (i, j). Pass@1 is the mean over all samples,
/// i.e. the repeated-run accuracy averaged over n_samples repeats.
inline EvalReport evaluate(const policy::PolicyParams& params, std::span<const EvalItem> suite, env::PromptStyle style,
                           const EvalOptions& opt, std::uint64_t seed, const std::string& suite_name = "eval") {
  if (suite.empty()) throw std::invalid_argument("evaluate: empty suite");
  if (opt.k_list.empty()) throw std::invalid_argument("evaluate: empty k list");
  for (int k : opt.k_list)
    if (k < 1 || k > opt.n_samples) throw std::invalid_argument("evaluate: k exceeds n_samples");
  EvalReport rep;
  rep.suite = suite_name;
  rep.style = style_name(style);
  rep.n_samples = opt.n_samples;
  rep.k_list = opt.k_list;
  rep.seed = seed;
  rep.task_ids.resize(suite.size());
  rep.n_per_task.assign(suite.size(), opt.n_samples);
  rep.correct_per_task.assign(suite.size(), 0);

  std::vector<TokenSeq> prompts(suite.size());
  for (std::size_t i = 0; i < suite.size(); ++i) {
    rep.task_ids[i] = suite[i].task.task_id;
    prompts[i] = env::render_prompt(suite[i].task, style, &suite[i].subq);
  }
  const auto n = static_cast<std::size_t>(opt.n_samples);
  std::vector<char> ok(suite.size() * n, 0);
  const std::string stream = "eval/" + suite_name;
  const StreamKey key{seed, stream};
  parallel_for(suite.size() * n, [&](std::size_t idx) {
    const std::size_t i = idx / n, j = idx % n;
    Rng rng = key.at(i, j);
    const auto r = policy::sample(params, prompts[i], opt.sampling, rng);
    ok[idx] = env::is_correct(suite[i].task, r.tokens) ? 1 : 0;
  }, opt.workers);
  for (std::size_t i = 0; i < suite.size(); ++i)
    for (std::size_t j = 0; j < n; ++j) rep.correct_per_task[i] += ok[i * n + j];
  for (int k : opt.k_list) {
    double sum = 0.0;
    for (std::size_t i = 0; i < suite.size(); ++i) sum += pass_at_k(rep.n_per_task[i], rep.correct_per_task[i], k);
    rep.pass_at[k] = sum / static_cast<double>(suite.size());
  }
  return rep;
}

// ---------------------------------------------------------------------------

struct Summary {
  double mean = 0.0, std = 0.0, min = 0.0, max = 0.0;
};

/// Population statistics.
inline Summary summarize(std::span<const double> xs) {
  if (xs.empty()) throw std::invalid_argument("summarize: empty input");
  Summary s;
  s.min = *std::min_element(xs.begin(), xs.end());
  s.max = *std::max_element(xs.begin(), xs.end());
  for (double x : xs) s.mean += x;
  s.mean /= static_cast<double>(xs.size());
  for (double x : xs) s.std += (x - s.mean) * (x - s.mean);
  s.std = std::sqrt(s.std / static_cast<double>(xs.size()));
  s.mean = std::clamp(s.mean, s.min, s.max);
  return s;
}

struct SubqStats {
  Summary count;
  Summary tokens;  // span tokens per annotation, delimiters excluded
  std::map<std::string, bool> leaks;
};

/// Leak classes: "answer_tag" (an ANSWER token in any span) and
/// "bare_answer" (a span that is just the task's final value).
inline SubqStats subq_stats(std::span<const trainer::AnnotatedInstance> annotations) {
  if (annotations.empty()) throw std::invalid_argument("subq_stats: no annotations");
  std::vector<double> counts, lens;
  SubqStats out;
  out.leaks = {{"answer_tag", false}, {"bare_answer", false}};
  for (const auto& a : annotations) {
    counts.push_back(static_cast<double>(a.subq.count()));
    std::size_t len = 0;
    for (const auto& span : a.subq.items) {
      len += span.size();
      for (Token t : span)
        if (t == vocab::kAnswer) out.leaks["answer_tag"] = true;
      if (span.size() == 1 && span[0] == vocab::digit(a.task.answer)) out.leaks["bare_answer"] = true;
    }
    lens.push_back(static_cast<double>(len));
  }
  out.count = summarize(counts);
  out.tokens = summarize(lens);
  return out;
}

inline nlohmann::json to_json(const Summary& s) {
  return {{"mean", s.mean}, {"std", s.std}, {"min", s.min}, {"max", s.max}};
}

inline nlohmann::json to_json(const SubqStats& s) {
  return {{"count", to_json(s.count)}, {"tokens", to_json(s.tokens)}, {"leaks", s.leaks}};
}

}  // namespace a2d::eval
