#pragma once

// Sub-question annotation and reasoner training with the gated in-context
// distillation loss.

#include <cmath>
#include <cstdint>
#include <functional>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "a2d/decomposer.hpp"
#include "a2d/env.hpp"
#include "a2d/policy.hpp"
#include "a2d/rlvr.hpp"

namespace a2d::trainer {

using env::SubQuestionList;
using env::TaskInstance;
using policy::PolicyParams;
using policy::Rollout;

struct AnnotatedInstance {
  TaskInstance task;
  SubQuestionList subq;
  std::uint64_t response_hash = 0;  // FNV-1a of the accepted decomposer response
  bool flagged = false;             // every attempt failed to parse; subq is empty
};

struct AnnotateConfig {
  int max_retries = 4;
  policy::SamplingOptions sampling{1.0, 1.0, 24, false};
  int min_content_chars = 10;
  int workers = 1;
};

struct AnnotationReport {
  std::size_t total = 0;
  std::size_t flagged = 0;
  std::size_t retries = 0;
};

inline std::uint64_t hash_tokens(std::span<const Token> tokens) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (Token t : tokens) {
    h ^= static_cast<std::uint64_t>(t);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Attempt a of task i samples from `stream` (default "annotate") at (i, a).
/// Only format-valid responses are accepted.
inline std::vector<AnnotatedInstance> annotate_dataset(const PolicyParams& decomposer_params,
                                                       std::span<const TaskInstance> dataset, const AnnotateConfig& cfg,
                                                       std::uint64_t master_seed, AnnotationReport* report = nullptr,
                                                       std::string_view stream = "annotate") {
  std::vector<AnnotatedInstance> out(dataset.size());
  std::vector<std::size_t> retries(dataset.size(), 0);
  const StreamKey key{master_seed, stream};
  decomposer::DecomposerConfig fmt;
  fmt.min_content_chars = cfg.min_content_chars;
  parallel_for(dataset.size(), [&](std::size_t i) {
    AnnotatedInstance& a = out[i];
    a.task = dataset[i];
    a.flagged = true;
    const TokenSeq prompt = env::decomposer_prompt(dataset[i]);
    for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
      Rng rng = key.at(i, static_cast<std::uint64_t>(attempt));
      const Rollout r = policy::sample(decomposer_params, prompt, cfg.sampling, rng);
      if (decomposer::format_reward(r.tokens, fmt) == 0) {
        ++retries[i];
        continue;
      }
      a.subq = std::get<SubQuestionList>(decomposer::parse_subquestions(r.tokens));
      a.response_hash = hash_tokens(r.tokens);
      a.flagged = false;
      break;
    }
  }, cfg.workers);
  if (report) {
    report->total = out.size();
    report->flagged = 0;
    report->retries = 0;
    for (std::size_t i = 0; i < out.size(); ++i) {
      report->flagged += out[i].flagged ? 1 : 0;
      report->retries += retries[i];
    }
  }
  return out;
}

/// Ground-truth annotation, used for baselines and tests.
inline std::vector<AnnotatedInstance> oracle_annotations(std::span<const TaskInstance> dataset) {
  std::vector<AnnotatedInstance> out;
  out.reserve(dataset.size());
  for (const auto& t : dataset) out.push_back({t, env::oracle_decompose(t), 0, false});
  return out;
}

// Annotation file: one record per task.
//   {"task_id":..,"subquestions":[["ADD","D3"],..],"response_hash":"..","flagged":false}

inline nlohmann::json to_json(const AnnotatedInstance& a) {
  nlohmann::json spans = nlohmann::json::array();
  for (const auto& s : a.subq.items) {
    nlohmann::json span = nlohmann::json::array();
    for (Token t : s) span.push_back(vocab::name(t));
    spans.push_back(span);
  }
  std::ostringstream h;
  h << std::hex << a.response_hash;
  return {{"task_id", a.task.task_id}, {"subquestions", spans}, {"response_hash", h.str()}, {"flagged", a.flagged}};
}

inline void write_annotations(std::ostream& os, std::span<const AnnotatedInstance> items) {
  for (const auto& a : items) os << to_json(a).dump() << '\n';
}

/// Joins annotation records with their tasks by task_id.
inline std::vector<AnnotatedInstance> read_annotations(std::istream& is, std::span<const TaskInstance> tasks) {
  std::map<std::uint64_t, const TaskInstance*> by_id;
  for (const auto& t : tasks) by_id[t.task_id] = &t;
  std::vector<AnnotatedInstance> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    if (j.contains("meta")) continue;
    const auto id = j.at("task_id").get<std::uint64_t>();
    auto it = by_id.find(id);
    if (it == by_id.end()) throw std::runtime_error("annotation references unknown task " + std::to_string(id));
    AnnotatedInstance a;
    a.task = *it->second;
    for (const auto& span : j.at("subquestions")) {
      TokenSeq s;
      for (const auto& name : span) s.push_back(vocab::from_name(name.get<std::string>()));
      a.subq.items.push_back(std::move(s));
    }
    a.response_hash = std::stoull(j.at("response_hash").get<std::string>(), nullptr, 16);
    a.flagged = j.at("flagged").get<bool>();
    out.push_back(std::move(a));
  }
  return out;
}

// ---------------------------------------------------------------------------

struct A2dConfig {
  double k1 = 0.9;  // gate any question with at least one failed rollout out of 8
  double k2 = 0.25;
  double alpha = 1.0;
  bool selection_enabled = true;
  bool diversity_enabled = true;
  int n_variants = 4;

  /// k1 = 0 is accepted: it switches the gate off entirely.
  void validate() const {
    if (!(k1 >= 0.0 && k1 < 1.0)) throw std::invalid_argument("a2d.k1 must be in [0, 1)");
    if (!(k2 > 0.0 && k2 < 1.0)) throw std::invalid_argument("a2d.k2 must be in (0, 1)");
    if (!(alpha >= 0.0)) throw std::invalid_argument("a2d.alpha must be nonnegative");
    if (n_variants < 1 || n_variants > vocab::kMaxVariants) throw std::invalid_argument("a2d.n_variants out of range");
  }
};

/// floor(k2 * n_rollout); the small slack absorbs representation error such
/// as 0.29 * 100 = 28.999...
inline std::size_t selection_cap(double k2, int n_rollout) {
  return static_cast<std::size_t>(std::floor(k2 * static_cast<double>(n_rollout) + 1e-9));
}

/// Indices of the kept positives: positives shuffled by `rng`, first q kept,
/// q = min(N_pos, floor(k2 * n_rollout)). With selection off every positive is kept.
inline std::vector<std::size_t> select_positive(std::span<const Rollout> guided, double k2, Rng& rng,
                                                double r_pos = 1.0, bool selection_enabled = true) {
  std::vector<std::size_t> pos;
  for (std::size_t i = 0; i < guided.size(); ++i)
    if (guided[i].reward == r_pos) pos.push_back(i);
  rng.shuffle(pos);
  if (selection_enabled) {
    const std::size_t q = std::min(pos.size(), selection_cap(k2, static_cast<int>(guided.size())));
    pos.resize(q);
  }
  return pos;
}

struct IdlResult {
  double loss = 0.0;
  std::vector<double> grad;
};

/// One selected response with the prompt it is distilled under.
struct IdlSample {
  TokenSeq prompt;
  TokenSeq tokens;
};

/// Conditioning prompt of selected response j: a diversity variant drawn
/// from `rng` when enabled, else the vanilla prompt. Never contains sub-questions.
inline std::vector<IdlSample> idl_samples(const TaskInstance& task, std::span<const Rollout> selected,
                                          bool diversity_enabled, int n_variants, Rng& rng) {
  std::vector<IdlSample> out;
  out.reserve(selected.size());
  for (const auto& r : selected) {
    const env::PromptStyle style =
        diversity_enabled ? env::PromptStyle::diversity(static_cast<int>(rng.below(static_cast<std::size_t>(n_variants))))
                          : env::PromptStyle::vanilla();
    out.push_back({env::render_prompt(task, style), r.tokens});
  }
  return out;
}

/// Adds weight * d/dtheta of -(1/|S|) sum_j log pi(y_j | prompt_j) into
/// `grad` and returns the unweighted loss.
inline double idl_accumulate(const PolicyParams& params, std::span<const IdlSample> samples, double weight,
                             std::span<double> grad) {
  if (samples.empty()) throw std::invalid_argument("idl_loss: empty selection");
  const double scale = 1.0 / static_cast<double>(samples.size());
  double loss = 0.0;
  for (const auto& s : samples) {
    for (Token t : s.prompt)
      if (t == vocab::kSubqOpen || t == vocab::kSubqClose || t == vocab::kTips)
        throw std::logic_error("idl_loss: conditioning prompt carries sub-questions");
    const auto lp = policy::accumulate_backward_fn(params, s.prompt, s.tokens,
                                                   [&](std::size_t, double) { return -weight * scale; }, grad);
    for (double v : lp) loss -= scale * v;
  }
  return loss;
}

/// -(1/|S|) sum_j log pi(y_j | prompt_j) and its gradient.
inline IdlResult idl_loss(const PolicyParams& params, std::span<const IdlSample> samples) {
  IdlResult out;
  out.grad.assign(params.values.size(), 0.0);
  out.loss = idl_accumulate(params, samples, 1.0, out.grad);
  return out;
}

inline IdlResult idl_loss(const PolicyParams& params, const TaskInstance& task, std::span<const Rollout> selected,
                          bool diversity_enabled, int n_variants, Rng& rng) {
  const auto samples = idl_samples(task, selected, diversity_enabled, n_variants, rng);
  return idl_loss(params, samples);
}

/// Everything the gate decided for one question of a wave.
struct GateRecord {
  bool active = false;
  double unguided_mean = 0.0;
  double guided_mean = 0.0;
  std::vector<IdlSample> selected;
};

struct ReasonerHooks {
  std::function<void(const rlvr::StepStats&)> on_step;
  std::function<void(std::int64_t, const PolicyParams&)> on_params;  // after every wave
};

/// Streams (shared with plain training under phase "reasoner"):
///   reasoner/shuffle, reasoner/unguided, reasoner/reward      — identical to train_rlvr
///   reasoner/guided, reasoner/select, reasoner/diversity      — gate-only consumers
class A2dTrainer {
 public:
  A2dTrainer(PolicyParams init, std::span<const AnnotatedInstance> data, rlvr::RlvrConfig rcfg, A2dConfig acfg,
             std::uint64_t master_seed, env::RewardValues reward = {})
      : st_{std::move(init), {}, {}},
        data_(data),
        rcfg_(rcfg),
        acfg_(acfg),
        seed_(master_seed),
        reward_(reward),
        batches_(data.size(), StreamKey{master_seed, "reasoner/shuffle"}) {
    rcfg_.validate();
    acfg_.validate();
    if (data_.empty()) throw std::invalid_argument("train_reasoner: empty annotated dataset");
    if (rcfg_.beta > 0.0) reference_ = st_.params;
  }

  /// One sampling wave plus its mini-batch updates.
  const rlvr::StepStats& step() {
    const std::int64_t s = step_++;
    const auto qs = batches_.next(static_cast<std::size_t>(rcfg_.batch_size));
    std::vector<TokenSeq> prompts;
    for (std::size_t q : qs) prompts.push_back(env::render_prompt(data_[q].task, env::PromptStyle::vanilla()));
    auto groups = rlvr::sample_groups(st_.params, qs, prompts, rcfg_.n_rollout, rcfg_.sampling,
                                      StreamKey{seed_, "reasoner/unguided"}, s, rcfg_.workers);
    for (auto& g : groups) {
      std::vector<double> r;
      for (const auto& ro : g.rollouts) r.push_back(env::verify(data_[g.question].task, ro.tokens, reward_));
      g.set_rewards(std::move(r));
    }
    rlvr::assign_advantages(groups, rcfg_.estimator);

    std::vector<GateRecord> gates = run_gates(groups, s);

    std::vector<rlvr::StepStats> parts;
    const auto mbs = static_cast<std::size_t>(rcfg_.mini_batch_size);
    double idl_total = 0.0;
    std::size_t idl_count = 0;
    for (std::size_t lo = 0; lo < groups.size(); lo += mbs) {
      const std::size_t hi = std::min(groups.size(), lo + mbs);
      std::span<rlvr::RolloutGroup> mb(groups.data() + lo, hi - lo);
      rlvr::GradientResult res = rlvr::rlvr_gradient(st_.params, mb, rcfg_, reference_ ? &*reference_ : nullptr);
      if (acfg_.alpha > 0.0) {
        const double w = acfg_.alpha / static_cast<double>(hi - lo);
        for (std::size_t b = lo; b < hi; ++b) {
          if (!gates[b].active || gates[b].selected.empty()) continue;
          idl_total += idl_accumulate(st_.params, gates[b].selected, w, res.grad);
          ++idl_count;
        }
      }
      policy::adam_update(st_.params, res.grad, st_.opt, rcfg_.adam);
      parts.push_back(res.stats);
    }

    rlvr::StepStats stats = rlvr::merge_stats(parts, s);
    std::size_t active = 0, selected = 0;
    double guided = 0.0;
    for (const auto& g : gates) {
      if (!g.active) continue;
      ++active;
      guided += g.guided_mean;
      selected += g.selected.size();
    }
    stats.extra["gate_rate"] = static_cast<double>(active) / static_cast<double>(gates.size());
    stats.extra["guided_mean_reward"] = active ? guided / static_cast<double>(active) : 0.0;
    stats.extra["selected"] = static_cast<double>(selected);
    stats.extra["idl_loss"] = idl_count ? idl_total / static_cast<double>(idl_count) : 0.0;
    st_.history.push_back(std::move(stats));
    return st_.history.back();
  }

  rlvr::TrainState& state() { return st_; }
  std::int64_t steps_done() const { return step_; }

 private:
  std::vector<GateRecord> run_gates(const std::vector<rlvr::RolloutGroup>& groups, std::int64_t s) {
    std::vector<GateRecord> gates(groups.size());
    std::vector<std::size_t> active;
    for (std::size_t b = 0; b < groups.size(); ++b) {
      gates[b].unguided_mean = groups[b].mean_reward;
      const AnnotatedInstance& inst = data_[groups[b].question];
      gates[b].active = acfg_.k1 > groups[b].mean_reward && !inst.subq.empty();
      if (gates[b].active) active.push_back(b);
    }
    if (active.empty()) return gates;

    std::vector<std::size_t> qs;
    std::vector<TokenSeq> prompts;
    for (std::size_t b : active) {
      const AnnotatedInstance& inst = data_[groups[b].question];
      qs.push_back(groups[b].question);
      prompts.push_back(env::render_prompt(inst.task, env::PromptStyle::with_subquestions(), inst.subq));
    }
    // Slots are indexed by batch position b, not by position among active
    // questions, so a question's guided draws do not depend on its neighbours.
    const auto G = static_cast<std::size_t>(rcfg_.n_rollout);
    const StreamKey guided_key{seed_, "reasoner/guided"};
    std::vector<std::vector<Rollout>> guided(active.size(), std::vector<Rollout>(G));
    parallel_for(active.size() * G, [&](std::size_t idx) {
      const std::size_t a = idx / G, j = idx % G;
      Rng rng = guided_key.at(static_cast<std::uint64_t>(s), active[a], j);
      Rollout r = policy::sample(st_.params, prompts[a], rcfg_.sampling, rng);
      r.guided = true;
      r.reward = env::verify(data_[qs[a]].task, r.tokens, reward_);
      guided[a][j] = std::move(r);
    }, rcfg_.workers);

    for (std::size_t a = 0; a < active.size(); ++a) {
      const std::size_t b = active[a];
      double sum = 0.0;
      for (const auto& r : guided[a]) sum += r.reward;
      gates[b].guided_mean = sum / static_cast<double>(G);
      Rng sel = StreamKey{seed_, "reasoner/select"}.at(static_cast<std::uint64_t>(s), b);
      const auto idx = select_positive(guided[a], acfg_.k2, sel, reward_.pos, acfg_.selection_enabled);
      std::vector<Rollout> chosen;
      for (std::size_t i : idx) chosen.push_back(guided[a][i]);
      Rng div = StreamKey{seed_, "reasoner/diversity"}.at(static_cast<std::uint64_t>(s), b);
      gates[b].selected = idl_samples(data_[qs[a]].task, chosen, acfg_.diversity_enabled, acfg_.n_variants, div);
    }
    return gates;
  }

  rlvr::TrainState st_;
  std::span<const AnnotatedInstance> data_;
  rlvr::RlvrConfig rcfg_;
  A2dConfig acfg_;
  std::uint64_t seed_;
  env::RewardValues reward_;
  rlvr::EpochSampler batches_;
  std::optional<PolicyParams> reference_;
  std::int64_t step_ = 0;
};

/// Single-instance step: one question, one combined update.
inline rlvr::StepStats a2d_step(PolicyParams& params, policy::AdamState& opt, const AnnotatedInstance& instance,
                                rlvr::RlvrConfig rcfg, const A2dConfig& acfg, std::uint64_t seed,
                                env::RewardValues reward = {}) {
  rcfg.batch_size = 1;
  rcfg.mini_batch_size = 1;
  A2dTrainer t(params, std::span<const AnnotatedInstance>(&instance, 1), rcfg, acfg, seed, reward);
  t.state().opt = opt;
  rlvr::StepStats s = t.step();
  params = t.state().params;
  opt = t.state().opt;
  return s;
}

inline rlvr::TrainState train_reasoner(PolicyParams init, std::span<const AnnotatedInstance> data,
                                       const rlvr::RlvrConfig& rcfg, const A2dConfig& acfg, std::uint64_t master_seed,
                                       env::RewardValues reward = {}, const ReasonerHooks& hooks = {}) {
  if (rcfg.steps == 0) return {std::move(init), {}, {}};
  A2dTrainer t(std::move(init), data, rcfg, acfg, master_seed, reward);
  for (int i = 0; i < rcfg.steps; ++i) {
    const auto& s = t.step();
    if (hooks.on_step) hooks.on_step(s);
    if (hooks.on_params) hooks.on_params(s.step, t.state().params);
  }
  t.state().params.lineage += ">reasoner:" + std::to_string(master_seed);
  return std::move(t.state());
}

/// Plain RLVR reasoner training on the same streams (phase "reasoner").
/// With `guided_prompts`, questions carry their sub-questions in the prompt.
inline rlvr::TrainState train_reasoner_plain(PolicyParams init, std::span<const AnnotatedInstance> data,
                                             const rlvr::RlvrConfig& rcfg, std::uint64_t master_seed,
                                             env::RewardValues reward = {}, bool guided_prompts = false,
                                             const ReasonerHooks& hooks = {}) {
  if (rcfg.steps == 0) return {std::move(init), {}, {}};
  rlvr::TrainHooks th;
  th.on_step = hooks.on_step;
  th.on_params = hooks.on_params;
  auto st = rlvr::train_rlvr(
      std::move(init), data.size(),
      [&](std::size_t i) {
        const auto& a = data[i];
        if (guided_prompts && !a.subq.empty())
          return env::render_prompt(a.task, env::PromptStyle::with_subquestions(), a.subq);
        return env::render_prompt(a.task, env::PromptStyle::vanilla());
      },
      [&](std::size_t i, const Rollout& r, Rng&) { return env::verify(data[i].task, r.tokens, reward); }, rcfg,
      master_seed, "reasoner", th);
  st.params.lineage += ">reasoner:" + std::to_string(master_seed);
  return st;
}

}  // namespace a2d::trainer
