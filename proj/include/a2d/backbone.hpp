#pragma once

// Supervised warm-up that produces the shared backbone policy: a small
// "instruction-following" model that
//   - solves short chains step by step under the vanilla or a diversity prompt,
//   - solves chains of any length step by step when sub-question tips are in
//     the prompt,
//   - follows the decomposition instruction only loosely (it often leaks a
//     direct answer or emits malformed tags).
// Longer chains under the vanilla prompt are never shown, so the backbone
// has to extrapolate there.

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "a2d/env.hpp"
#include "a2d/policy.hpp"
#include "a2d/rng.hpp"

namespace a2d::backbone {

struct BackboneConfig {
  int steps = 4000;
  int batch_size = 32;
  double lr = 1e-2;
  double w_vanilla = 0.25;    // vanilla or diversity prompt -> step-by-step solution, chains up to vanilla_len_max
  int vanilla_len_max = 2;
  double diversity_share = 0.5;  // share of those examples that use a diversity prompt
  double w_guided = 0.55;     // sub-question prompt -> step-by-step solution
  double w_decompose = 0.20;  // decomposer prompt -> imperfect decomposition
  double decompose_leak = 0.5;   // share of decomposer targets that are a direct answer
  double decompose_noise = 0.25; // per-span corruption probability otherwise

  void validate() const {
    if (steps < 0 || batch_size < 1 || !(lr > 0.0)) throw std::invalid_argument("backbone: bad optimizer settings");
    if (w_vanilla < 0 || w_guided < 0 || w_decompose < 0 || w_vanilla + w_guided + w_decompose <= 0)
      throw std::invalid_argument("backbone: mixture weights must be nonnegative and not all zero");
    if (vanilla_len_max < 1) throw std::invalid_argument("backbone.vanilla_len_max must be positive");
    if (diversity_share < 0 || diversity_share > 1) throw std::invalid_argument("backbone.diversity_share must be in [0,1]");
  }
};

struct Example {
  TokenSeq prompt;
  TokenSeq target;
};

/// Decomposition with per-span corruption: wrong operand, wrong operation,
/// missing closing tag or a dropped span.
inline TokenSeq noisy_decomposition(const env::TaskInstance& task, double noise, Rng& rng) {
  TokenSeq out;
  for (const auto& s : task.chain) {
    Token op = env::op_token(s.op);
    Token k = vocab::digit(s.operand);
    bool close = true;
    if (rng.uniform() < noise) {
      switch (rng.below(4)) {
        case 0: k = vocab::digit(1 + static_cast<int>(rng.below(static_cast<std::size_t>(task.modulus - 1)))); break;
        case 1: op = vocab::kAdd + static_cast<Token>(rng.below(3)); break;
        case 2: close = false; break;
        default: continue;
      }
    }
    out.push_back(vocab::kSubqOpen);
    out.push_back(op);
    out.push_back(k);
    if (close) out.push_back(vocab::kSubqClose);
  }
  out.push_back(vocab::kEos);
  return out;
}

inline Example draw_example(const BackboneConfig& cfg, const env::EnvConfig& ecfg, Rng& rng) {
  const double total = cfg.w_vanilla + cfg.w_guided + cfg.w_decompose;
  const double u = rng.uniform() * total;
  const std::uint64_t task_seed = rng.next_u64();
  auto pick_len = [&](int lo, int hi) { return lo + static_cast<int>(rng.below(static_cast<std::size_t>(hi - lo + 1))); };

  if (u < cfg.w_vanilla) {
    const int len = pick_len(ecfg.chain_len_min, std::min(cfg.vanilla_len_max, ecfg.chain_len_max));
    const auto t = env::generate_task(task_seed, len, ecfg.modulus);
    auto style = env::PromptStyle::vanilla();
    if (rng.uniform() < cfg.diversity_share)
      style = env::PromptStyle::diversity(static_cast<int>(rng.below(static_cast<std::size_t>(ecfg.n_variants))));
    return {env::render_prompt(t, style), env::render_solution(t)};
  }
  const int len = pick_len(ecfg.chain_len_min, ecfg.chain_len_max);
  const auto t = env::generate_task(task_seed, len, ecfg.modulus);
  if (u < cfg.w_vanilla + cfg.w_guided) {
    return {env::render_prompt(t, env::PromptStyle::with_subquestions(), env::oracle_decompose(t)), env::render_solution(t)};
  }
  if (rng.uniform() < cfg.decompose_leak) return {env::decomposer_prompt(t), env::render_answer(t.answer)};
  return {env::decomposer_prompt(t), noisy_decomposition(t, cfg.decompose_noise, rng)};
}

/// Token-mean negative log-likelihood training on freshly drawn batches.
/// on_step fires every report_every steps and on the last one.
/// Batch b of step s draws from stream "backbone/corpus" at (s, b).
inline policy::PolicyParams pretrain(policy::PolicyParams params, const BackboneConfig& cfg, const env::EnvConfig& ecfg,
                                     std::uint64_t seed,
                                     const std::function<void(int, double)>& on_step = {}, int report_every = 1) {
  cfg.validate();
  ecfg.validate();
  policy::AdamState opt;
  policy::AdamConfig adam;
  adam.lr = cfg.lr;
  const StreamKey key{seed, "backbone/corpus"};
  std::vector<double> grad(params.values.size());
  for (int step = 0; step < cfg.steps; ++step) {
    std::vector<Example> batch;
    std::size_t tokens = 0;
    for (int b = 0; b < cfg.batch_size; ++b) {
      Rng rng = key.at(static_cast<std::uint64_t>(step), static_cast<std::uint64_t>(b));
      batch.push_back(draw_example(cfg, ecfg, rng));
      tokens += batch.back().target.size();
    }
    std::fill(grad.begin(), grad.end(), 0.0);
    double nll = 0.0;
    const bool report = on_step && (step % std::max(1, report_every) == 0 || step + 1 == cfg.steps);
    const double scale = 1.0 / static_cast<double>(tokens);
    for (const auto& ex : batch) {
      const std::vector<double> w(ex.target.size(), -scale);
      policy::accumulate_backward(params, ex.prompt, ex.target, w, grad);
      if (report)
        for (double lp : policy::logprob(params, ex.prompt, ex.target)) nll -= scale * lp;
    }
    policy::adam_update(params, grad, opt, adam);
    if (report) on_step(step, nll);
  }
  params.lineage += ">backbone:" + std::to_string(seed);
  return params;
}

}  // namespace a2d::backbone
