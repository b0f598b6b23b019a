#pragma once

// Advantage estimators, clipped importance-sampling surrogate, KL penalty and
// the policy-gradient update shared by every training phase.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "a2d/parallel.hpp"
#include "a2d/policy.hpp"
#include "a2d/rng.hpp"

namespace a2d::rlvr {

using policy::PolicyParams;
using policy::Rollout;

enum class Estimator { kGrpo, kRloo, kReinforcePP };

inline const char* estimator_name(Estimator e) {
  switch (e) {
    case Estimator::kGrpo: return "grpo";
    case Estimator::kRloo: return "rloo";
    case Estimator::kReinforcePP: return "reinforcepp";
  }
  return "?";
}

inline Estimator estimator_from_name(std::string_view s) {
  if (s == "grpo") return Estimator::kGrpo;
  if (s == "rloo") return Estimator::kRloo;
  if (s == "reinforcepp" || s == "reinforce++") return Estimator::kReinforcePP;
  throw std::invalid_argument("unknown estimator: " + std::string(s));
}

// ---------------------------------------------------------------------------
// Advantages

/// Group-normalized advantage with population std; a zero-variance group
/// carries no signal and gets all zeros.
inline std::vector<double> grpo_advantage(std::span<const double> rewards) {
  const std::size_t g = rewards.size();
  if (g < 2) throw std::invalid_argument("grpo_advantage: group needs at least 2 rewards");
  const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / static_cast<double>(g);
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double sd = std::sqrt(var / static_cast<double>(g));
  std::vector<double> out(g, 0.0);
  // Equal rewards carry no signal; rounding in the mean must not turn them into +-1.
  const bool constant = std::all_of(rewards.begin(), rewards.end(), [&](double r) { return r == rewards[0]; });
  if (constant || sd == 0.0) return out;
  for (std::size_t i = 0; i < g; ++i) out[i] = (rewards[i] - mean) / sd;
  return out;
}

/// Leave-one-out baseline: R_i - mean(R_j, j != i), computed through the
/// identity G/(G-1) * (R_i - mean) so symmetric groups cancel exactly.
inline std::vector<double> rloo_advantage(std::span<const double> rewards) {
  const std::size_t g = rewards.size();
  if (g < 2) throw std::invalid_argument("rloo_advantage: group needs at least 2 rewards");
  const double n = static_cast<double>(g);
  const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / n;
  std::vector<double> out(g);
  for (std::size_t i = 0; i < g; ++i) out[i] = (rewards[i] - mean) * n / (n - 1.0);
  const bool constant = std::all_of(rewards.begin(), rewards.end(), [&](double r) { return r == rewards[0]; });
  if (constant) std::fill(out.begin(), out.end(), 0.0);
  return out;
}

/// Global batch z-normalization (no per-prompt baseline, no critic).
inline std::vector<double> reinforcepp_advantage(std::span<const double> batch_rewards) {
  const std::size_t n = batch_rewards.size();
  if (n < 2) throw std::invalid_argument("reinforcepp_advantage: batch needs at least 2 rewards");
  const double mean = std::accumulate(batch_rewards.begin(), batch_rewards.end(), 0.0) / static_cast<double>(n);
  double var = 0.0;
  for (double r : batch_rewards) var += (r - mean) * (r - mean);
  const double sd = std::sqrt(var / static_cast<double>(n));
  std::vector<double> out(n, 0.0);
  if (sd == 0.0) return out;
  for (std::size_t i = 0; i < n; ++i) out[i] = (batch_rewards[i] - mean) / sd;
  return out;
}

// ---------------------------------------------------------------------------
// Surrogate and KL

inline double surrogate_term(double ratio, double adv, double eps_low, double eps_high) {
  const double clipped = std::clamp(ratio, 1.0 - eps_low, 1.0 + eps_high);
  return std::min(ratio * adv, clipped * adv);
}

/// d surrogate / d log pi_new. Zero on the clipped branch.
inline double surrogate_grad_logp(double ratio, double adv, double eps_low, double eps_high, bool* clipped = nullptr) {
  const double c = std::clamp(ratio, 1.0 - eps_low, 1.0 + eps_high);
  const bool use_clipped = c * adv < ratio * adv;
  if (clipped) *clipped = use_clipped;
  return use_clipped ? 0.0 : ratio * adv;
}

/// Per-token exp(d) - d - 1 with d = logp_ref - logp_new. Nonnegative, zero iff equal.
inline std::vector<double> kl_penalty(std::span<const double> logp_new, std::span<const double> logp_ref) {
  if (logp_new.size() != logp_ref.size()) throw std::invalid_argument("kl_penalty: length mismatch");
  std::vector<double> out(logp_new.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double d = logp_ref[i] - logp_new[i];
    out[i] = std::expm1(d) - d;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Groups, configuration, statistics

struct RolloutGroup {
  std::size_t question = 0;
  std::vector<Rollout> rollouts;
  std::vector<double> rewards;
  std::vector<double> advantages;
  double mean_reward = 0.0;

  void set_rewards(std::vector<double> r) {
    if (r.size() != rollouts.size()) throw std::invalid_argument("reward count must match rollout count");
    rewards = std::move(r);
    for (std::size_t i = 0; i < rollouts.size(); ++i) rollouts[i].reward = rewards[i];
    mean_reward = rewards.empty() ? 0.0 : std::accumulate(rewards.begin(), rewards.end(), 0.0) / static_cast<double>(rewards.size());
  }
};

struct RlvrConfig {
  Estimator estimator = Estimator::kGrpo;
  double eps_low = 0.2;
  double eps_high = 0.28;
  double beta = 0.0;
  int n_rollout = 8;
  policy::AdamConfig adam;
  policy::SamplingOptions sampling;
  int steps = 100;
  int batch_size = 8;       // questions per sampling wave
  int mini_batch_size = 8;  // questions per optimizer update
  int workers = 1;

  void validate() const {
    if (!(eps_low > 0.0) || !(eps_high > 0.0)) throw std::invalid_argument("rlvr.eps_low/eps_high must be positive");
    if (!(beta >= 0.0)) throw std::invalid_argument("rlvr.beta must be nonnegative");
    if (n_rollout < 2) throw std::invalid_argument("rlvr.n_rollout must be at least 2");
    if (!(adam.lr > 0.0)) throw std::invalid_argument("rlvr.lr must be positive");
    if (steps < 0) throw std::invalid_argument("rlvr.steps must be nonnegative");
    if (batch_size < 1 || mini_batch_size < 1) throw std::invalid_argument("rlvr.batch_size/mini_batch_size must be positive");
    if (!(sampling.temperature > 0.0)) throw std::invalid_argument("rlvr.temperature must be positive");
    if (!(sampling.top_p > 0.0 && sampling.top_p <= 1.0)) throw std::invalid_argument("rlvr.top_p must be in (0, 1]");
    if (sampling.max_len < 1) throw std::invalid_argument("rlvr.max_response_len must be positive");
  }
};

struct StepStats {
  std::int64_t step = 0;
  double mean_reward = 0.0;
  double mean_advantage = 0.0;
  double clip_fraction = 0.0;
  double kl = 0.0;
  double policy_loss = 0.0;
  std::map<std::string, double> extra;  // phase-specific: gate rate, format pass rate, ...
};

class NonFiniteLoss : public std::runtime_error {
 public:
  NonFiniteLoss(std::size_t group, double value)
      : std::runtime_error("non-finite loss (" + std::to_string(value) + ") in rollout group " + std::to_string(group)),
        group_(group) {}
  std::size_t group() const { return group_; }

 private:
  std::size_t group_;
};

/// Fills `advantages` of every group. GRPO and RLOO work per group;
/// REINFORCE++ normalizes across every reward in `groups`.
inline void assign_advantages(std::span<RolloutGroup> groups, Estimator est) {
  if (est == Estimator::kReinforcePP) {
    std::vector<double> all;
    for (const auto& g : groups) all.insert(all.end(), g.rewards.begin(), g.rewards.end());
    const std::vector<double> adv = reinforcepp_advantage(all);
    std::size_t k = 0;
    for (auto& g : groups) {
      g.advantages.assign(adv.begin() + static_cast<std::ptrdiff_t>(k), adv.begin() + static_cast<std::ptrdiff_t>(k + g.rewards.size()));
      k += g.rewards.size();
    }
    return;
  }
  for (auto& g : groups) g.advantages = est == Estimator::kGrpo ? grpo_advantage(g.rewards) : rloo_advantage(g.rewards);
}

struct GradientResult {
  std::vector<double> grad;  // gradient of the loss (= -objective)
  StepStats stats;
};

/// Gradient of -J over `groups`: group mean of token-mean clipped surrogate
/// minus beta * KL. Refreshes each rollout's current_logprobs.
inline GradientResult rlvr_gradient(const PolicyParams& params, std::span<RolloutGroup> groups, const RlvrConfig& cfg,
                                    const PolicyParams* reference = nullptr) {
  if (groups.empty()) throw std::invalid_argument("rlvr_gradient: no groups");
  if (cfg.beta > 0.0 && reference == nullptr) throw std::invalid_argument("rlvr_gradient: beta > 0 needs a reference policy");
  const double n_groups = static_cast<double>(groups.size());

  struct Partial {
    std::vector<double>* grad = nullptr;
    double loss = 0.0, kl = 0.0, adv = 0.0;
    std::size_t tokens = 0, clipped = 0, rollouts = 0;
    double reward = 0.0;
  };
  std::vector<Partial> parts(groups.size());
  // Per-group buffers survive across calls on the calling thread.
  thread_local std::vector<std::vector<double>> pool;
  if (pool.size() < groups.size()) pool.resize(groups.size());
  for (std::size_t gi = 0; gi < groups.size(); ++gi) parts[gi].grad = &pool[gi];

  parallel_for(groups.size(), [&](std::size_t gi) {
    RolloutGroup& g = groups[gi];
    if (g.advantages.size() != g.rollouts.size()) throw std::invalid_argument("rlvr_gradient: advantages not assigned");
    Partial& part = parts[gi];
    part.grad->assign(params.values.size(), 0.0);
    const double G = static_cast<double>(g.rollouts.size());
    for (std::size_t i = 0; i < g.rollouts.size(); ++i) {
      Rollout& r = g.rollouts[i];
      if (r.behavior_logprobs.size() != r.tokens.size()) throw std::invalid_argument("rollout lacks behavior log-probs");
      std::vector<double> ref_lp;
      if (cfg.beta > 0.0) ref_lp = policy::logprob(*reference, r.prompt, r.tokens);
      const double scale = 1.0 / (n_groups * G * static_cast<double>(r.tokens.size()));
      const double a = g.advantages[i];
      r.current_logprobs = policy::accumulate_backward_fn(params, r.prompt, r.tokens, [&](std::size_t t, double lp) {
        const double ratio = std::exp(lp - r.behavior_logprobs[t]);
        bool clipped = false;
        double dobj = surrogate_grad_logp(ratio, a, cfg.eps_low, cfg.eps_high, &clipped);
        double obj = surrogate_term(ratio, a, cfg.eps_low, cfg.eps_high);
        if (cfg.beta > 0.0) {
          const double d = ref_lp[t] - lp;
          const double kl = std::expm1(d) - d;
          obj -= cfg.beta * kl;
          dobj -= cfg.beta * (-std::expm1(d));
          part.kl += kl;
        }
        if (!std::isfinite(obj)) throw NonFiniteLoss(gi, obj);
        part.loss -= scale * obj;
        part.clipped += clipped ? 1 : 0;
        ++part.tokens;
        return -scale * dobj;
      }, *part.grad);
      if (!std::isfinite(part.loss)) throw NonFiniteLoss(gi, part.loss);
      part.adv += a;
      part.reward += g.rewards[i];
      ++part.rollouts;
    }
  }, cfg.workers);

  GradientResult out;
  out.grad.assign(params.values.size(), 0.0);
  double loss = 0.0, kl = 0.0, adv = 0.0, reward = 0.0;
  std::size_t tokens = 0, clipped = 0, rollouts = 0;
  for (std::size_t gi = 0; gi < parts.size(); ++gi) {
    const Partial& p = parts[gi];
    const std::vector<double>& pg = *p.grad;
    for (std::size_t k = 0; k < out.grad.size(); ++k) out.grad[k] += pg[k];
    loss += p.loss;
    kl += p.kl;
    adv += p.adv;
    reward += p.reward;
    tokens += p.tokens;
    clipped += p.clipped;
    rollouts += p.rollouts;
  }
  for (std::size_t gi = 0; gi < out.grad.size(); ++gi)
    if (!std::isfinite(out.grad[gi])) throw NonFiniteLoss(0, out.grad[gi]);
  out.stats.policy_loss = loss;
  out.stats.kl = tokens ? kl / static_cast<double>(tokens) : 0.0;
  out.stats.clip_fraction = tokens ? static_cast<double>(clipped) / static_cast<double>(tokens) : 0.0;
  out.stats.mean_advantage = rollouts ? adv / static_cast<double>(rollouts) : 0.0;
  out.stats.mean_reward = rollouts ? reward / static_cast<double>(rollouts) : 0.0;
  return out;
}

/// One optimizer update on the clipped objective over `groups`.
inline StepStats rlvr_step(PolicyParams& params, policy::AdamState& opt, std::span<RolloutGroup> groups,
                           const RlvrConfig& cfg, const PolicyParams* reference = nullptr) {
  for (auto& g : groups)
    if (g.advantages.size() != g.rollouts.size()) {
      assign_advantages(groups, cfg.estimator);
      break;
    }
  GradientResult res = rlvr_gradient(params, groups, cfg, reference);
  policy::adam_update(params, res.grad, opt, cfg.adam);
  return res.stats;
}

// ---------------------------------------------------------------------------
// Sampling waves and the plain training loop

/// Sample `n_rollout` rollouts for each prompt. Rollout j of batch slot b at
/// step s uses the private stream key.at(s, b, j).
inline std::vector<RolloutGroup> sample_groups(const PolicyParams& params, std::span<const std::size_t> questions,
                                               std::span<const TokenSeq> prompts, int n_rollout,
                                               const policy::SamplingOptions& opt, const StreamKey& key,
                                               std::int64_t step, int workers, bool guided = false) {
  std::vector<RolloutGroup> groups(questions.size());
  const auto G = static_cast<std::size_t>(n_rollout);
  for (std::size_t b = 0; b < groups.size(); ++b) {
    groups[b].question = questions[b];
    groups[b].rollouts.resize(G);
  }
  parallel_for(questions.size() * G, [&](std::size_t idx) {
    const std::size_t b = idx / G, j = idx % G;
    Rng rng = key.at(static_cast<std::uint64_t>(step), b, j);
    Rollout r = policy::sample(params, prompts[b], opt, rng);
    r.guided = guided;
    groups[b].rollouts[j] = std::move(r);
  }, workers);
  return groups;
}

/// Walks a dataset in reshuffled epochs; epoch e uses key.at(e).
class EpochSampler {
 public:
  EpochSampler(std::size_t n, StreamKey key) : n_(n), key_(key) {}

  std::vector<std::size_t> next(std::size_t count) {
    std::vector<std::size_t> out;
    out.reserve(count);
    while (out.size() < count) {
      if (pos_ >= order_.size()) refill();
      out.push_back(order_[pos_++]);
    }
    return out;
  }

 private:
  void refill() {
    order_.resize(n_);
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    Rng rng = key_.at(epoch_++);
    rng.shuffle(order_);
    pos_ = 0;
  }
  std::size_t n_;
  StreamKey key_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
  std::uint64_t epoch_ = 0;
};

struct TrainState {
  PolicyParams params;
  policy::AdamState opt;
  std::vector<StepStats> history;
};

/// Averages per-update stats of one wave into a single record.
inline StepStats merge_stats(std::span<const StepStats> parts, std::int64_t step) {
  StepStats s;
  s.step = step;
  if (parts.empty()) return s;
  for (const auto& p : parts) {
    s.mean_reward += p.mean_reward;
    s.mean_advantage += p.mean_advantage;
    s.clip_fraction += p.clip_fraction;
    s.kl += p.kl;
    s.policy_loss += p.policy_loss;
    for (const auto& [k, v] : p.extra) s.extra[k] += v;
  }
  const double n = static_cast<double>(parts.size());
  s.mean_reward /= n;
  s.mean_advantage /= n;
  s.clip_fraction /= n;
  s.kl /= n;
  s.policy_loss /= n;
  for (auto& [k, v] : s.extra) v /= n;
  return s;
}

/// Plain RLVR over a dataset of `n_items` prompts.
///   prompt_of(i)               -> TokenSeq
///   reward_of(i, rollout, rng) -> double
/// Streams: "<phase>/shuffle", "<phase>/unguided", "<phase>/reward".
struct TrainHooks {
  /// Sees every scored wave before the update; may add fields to the stats.
  std::function<void(std::span<const RolloutGroup>, StepStats&)> on_wave;
  std::function<void(const StepStats&)> on_step;
  std::function<void(std::int64_t, const PolicyParams&)> on_params;  // after every wave
};

template <typename PromptFn, typename RewardFn>
TrainState train_rlvr(PolicyParams init, std::size_t n_items, PromptFn&& prompt_of, RewardFn&& reward_of,
                      const RlvrConfig& cfg, std::uint64_t master_seed, const std::string& phase,
                      const TrainHooks& hooks = {}) {
  cfg.validate();
  if (n_items == 0) throw std::invalid_argument("train_rlvr: empty dataset");
  TrainState st{std::move(init), {}, {}};
  const PolicyParams reference = st.params;
  const std::string shuffle_name = phase + "/shuffle", sample_name = phase + "/unguided", reward_name = phase + "/reward";
  EpochSampler batches(n_items, StreamKey{master_seed, shuffle_name});
  const StreamKey sample_key{master_seed, sample_name}, reward_key{master_seed, reward_name};

  for (std::int64_t step = 0; step < cfg.steps; ++step) {
    const std::vector<std::size_t> qs = batches.next(static_cast<std::size_t>(cfg.batch_size));
    std::vector<TokenSeq> prompts;
    prompts.reserve(qs.size());
    for (std::size_t q : qs) prompts.push_back(prompt_of(q));
    std::vector<RolloutGroup> groups =
        sample_groups(st.params, qs, prompts, cfg.n_rollout, cfg.sampling, sample_key, step, cfg.workers);

    const auto G = static_cast<std::size_t>(cfg.n_rollout);
    std::vector<std::vector<double>> rewards(groups.size(), std::vector<double>(G));
    parallel_for(groups.size() * G, [&](std::size_t idx) {
      const std::size_t b = idx / G, j = idx % G;
      Rng rng = reward_key.at(static_cast<std::uint64_t>(step), b, j);
      rewards[b][j] = reward_of(groups[b].question, groups[b].rollouts[j], rng);
    }, cfg.workers);
    for (std::size_t b = 0; b < groups.size(); ++b) groups[b].set_rewards(std::move(rewards[b]));
    assign_advantages(groups, cfg.estimator);

    std::vector<StepStats> parts;
    for (std::size_t lo = 0; lo < groups.size(); lo += static_cast<std::size_t>(cfg.mini_batch_size)) {
      const std::size_t hi = std::min(groups.size(), lo + static_cast<std::size_t>(cfg.mini_batch_size));
      std::span<RolloutGroup> mb(groups.data() + lo, hi - lo);
      parts.push_back(rlvr_step(st.params, st.opt, mb, cfg, cfg.beta > 0.0 ? &reference : nullptr));
    }
    StepStats s = merge_stats(parts, step);
    if (hooks.on_wave) hooks.on_wave(groups, s);
    st.history.push_back(std::move(s));
    if (hooks.on_step) hooks.on_step(st.history.back());
    if (hooks.on_params) hooks.on_params(step, st.params);
  }
  return st;
}

}  // namespace a2d::rlvr
