// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any fails. Usage: acceptance [--runs DIR] [criterion ...]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "a2d/a2d.hpp"
#include "a2d/backbone.hpp"
#include "a2d/decomposer.hpp"
#include "a2d/eval.hpp"
#include "a2d/experiment.hpp"

using namespace a2d;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... xs) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, xs...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double mean(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
}

constexpr int kSeeds = 5;
fs::path g_runs = "acceptance_runs";

// ---------------------------------------------------------------------------
// Shared state for the training criteria

config::RunConfig base_config() {
  config::RunConfig c;
  c.backbone_checkpoint = (g_runs / "backbone.bin").string();
  return c;
}

/// Warm-up checkpoint shared by every seed, built from the default config.
const policy::PolicyParams& backbone() {
  static const policy::PolicyParams p = [] {
    const config::RunConfig c;
    const auto t0 = std::chrono::steady_clock::now();
    auto b = backbone::pretrain(policy::init_params(c.seed, c.shape, c.init_scale), c.backbone, c.env, c.seed);
    std::cerr << fmt("[backbone] pretrained in %.1fs\n", seconds_since(t0));
    experiment::save_checkpoint(b, experiment::provenance_of(c), g_runs / "backbone.bin");
    return b;
  }();
  return p;
}

fs::path run_dir(const std::string& mode, std::uint64_t seed) {
  return g_runs / (mode + "-s" + std::to_string(seed));
}

/// Both modes for every seed, through the same pipeline the CLI uses.
void ensure_runs() {
  static bool done = false;
  if (done) return;
  backbone();
  for (std::uint64_t seed = 1; seed <= kSeeds; ++seed)
    for (const std::string mode : {"a2d", "grpo"}) {
      auto c = base_config();
      c.seed = seed;
      c.mode_text = mode;
      c.out = run_dir(mode, seed).string();
      experiment::Options opt;
      opt.force = true;
      opt.log_every = 0;
      experiment::Run run(c, opt);
      run.create();
      run.pipeline();
    }
  done = true;
}

double phase_seconds(const fs::path& dir, const std::string& phase) {
  const auto s = experiment::load_run(dir).state;
  return s.done(phase) ? s.phases.at(phase).at("seconds").get<double>() : 0.0;
}

// ---------------------------------------------------------------------------
// 1. Group-standardized advantage

Outcome c1() {
  using rlvr::grpo_advantage;
  const bool known = grpo_advantage(std::vector<double>{1, 0, 0, 1}) == std::vector<double>{1, -1, -1, 1};
  bool zeros = true;
  for (double v : {0.0, 1.0, -1.0, 0.37})
    for (int n : {2, 4, 8, 64})
      for (double a : grpo_advantage(std::vector<double>(static_cast<std::size_t>(n), v))) zeros &= a == 0.0;
  Rng rng(101);
  double worst_mean = 0.0, worst_std = 0.0;
  for (int g = 0; g < 1000; ++g) {
    std::vector<double> r(2 + rng.below(63));
    const bool binary = g % 2 == 0;
    do
      for (double& x : r) x = binary ? static_cast<double>(rng.below(2)) : rng.uniform(-5.0, 5.0);
    while (*std::min_element(r.begin(), r.end()) == *std::max_element(r.begin(), r.end()));
    const auto a = grpo_advantage(r);
    double m = 0.0, v = 0.0;
    for (double x : a) m += x;
    m /= static_cast<double>(a.size());
    for (double x : a) v += (x - m) * (x - m);
    worst_mean = std::max(worst_mean, std::abs(m));
    worst_std = std::max(worst_std, std::abs(std::sqrt(v / static_cast<double>(a.size())) - 1.0));
  }
  return {known && zeros && worst_mean <= 1e-12 && worst_std <= 1e-9,
          fmt("[1,0,0,1]->[1,-1,-1,1] %s, constant groups zero %s, 1000 groups max|mean| %.1e max|std-1| %.1e",
              known ? "yes" : "no", zeros ? "yes" : "no", worst_mean, worst_std)};
}

// ---------------------------------------------------------------------------
// 2. Gradient fidelity at the default architecture

Outcome c2() {
  const config::RunConfig c;
  auto p = policy::init_params(7, c.shape, 0.5);
  Rng rng(202);
  auto random_seq = [&](std::size_t n) {
    TokenSeq s;
    for (std::size_t i = 0; i < n; ++i) s.push_back(static_cast<Token>(rng.below(vocab::kSize)));
    return s;
  };
  // Five-point central difference: O(h^4) truncation keeps h large enough
  // that rounding in the summed log-likelihood stays far below tolerance.
  auto central = [&](std::size_t i, const std::function<double()>& f) {
    const double x = p.values[i], h = 1e-3;
    auto at = [&](double d) {
      p.values[i] = x + d;
      return f();
    };
    const double d = (8.0 * (at(h) - at(-h)) - (at(2 * h) - at(-2 * h))) / (12.0 * h);
    p.values[i] = x;
    return d;
  };
  auto rel = [](double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6}); };
  auto probe = [&](std::span<const double> g) {
    std::vector<std::size_t> nz, out;
    for (std::size_t i = 0; i < g.size(); ++i)
      if (g[i] != 0.0) nz.push_back(i);
    for (std::size_t k = 0; k < 100; ++k)
      out.push_back(k % 4 != 0 && !nz.empty() ? nz[rng.below(nz.size())] : rng.below(g.size()));
    return out;
  };

  double worst_bw = 0.0, worst_idl = 0.0;
  std::size_t checked = 0;
  const auto tasks = env::generate_suite(202, "fd", 20, 1, 3, c.env.modulus);
  for (int inst = 0; inst < 20; ++inst) {
    // Weighted log-likelihood of a random continuation.
    TokenSeq prompt = random_seq(4 + rng.below(12)), y = random_seq(4 + rng.below(12));
    std::vector<double> w;
    for (std::size_t i = 0; i < y.size(); ++i) w.push_back(rng.uniform(-1.0, 1.0));
    const auto g = policy::backward(p, prompt, y, w);
    auto f = [&] {
      const auto lp = policy::logprob(p, prompt, y);
      double s = 0.0;
      for (std::size_t i = 0; i < lp.size(); ++i) s += w[i] * lp[i];
      return s;
    };
    for (std::size_t i : probe(g)) worst_bw = std::max(worst_bw, rel(g[i], central(i, f)));

    // Imitation loss over selected solutions under both prompt kinds.
    const auto& t = tasks[static_cast<std::size_t>(inst)];
    const std::vector<trainer::IdlSample> s{
        {env::render_prompt(t, env::PromptStyle::vanilla()), env::render_solution(t)},
        {env::render_prompt(t, env::PromptStyle::diversity(1 + inst % c.env.n_variants)), env::render_solution(t)},
    };
    const auto res = trainer::idl_loss(p, s);
    auto loss = [&] { return trainer::idl_loss(p, s).loss; };
    for (std::size_t i : probe(res.grad)) worst_idl = std::max(worst_idl, rel(res.grad[i], central(i, loss)));
    checked += 200;
  }
  return {worst_bw < 1e-4 && worst_idl < 1e-4,
          fmt("%zu coordinates, max rel error backward %.2e, imitation loss %.2e", checked, worst_bw, worst_idl)};
}

// ---------------------------------------------------------------------------
// 3. Clipped surrogate

Outcome c3() {
  const double a = rlvr::surrogate_term(2.0, 1.0, 0.2, 0.28), b = rlvr::surrogate_term(0.5, -1.0, 0.2, 0.28);
  const bool values = std::abs(a - 1.28) < 1e-12 && std::abs(b + 0.8) < 1e-12;

  // Freshly sampled groups scored at the sampling policy: every ratio is 1.
  const config::RunConfig c;
  const auto p = policy::init_params(3, c.shape, 0.5);
  const auto tasks = env::generate_suite(303, "clip", 8, 1, 3, c.env.modulus);
  std::vector<TokenSeq> prompts;
  for (const auto& t : tasks) prompts.push_back(env::render_prompt(t, env::PromptStyle::vanilla()));
  std::vector<std::size_t> qs(tasks.size());
  std::iota(qs.begin(), qs.end(), 0);
  auto rc = c.reasoner_rlvr();
  auto groups = rlvr::sample_groups(p, qs, prompts, rc.n_rollout, rc.sampling, StreamKey{303, "clip"}, 0, 1);
  Rng rr(303);
  for (auto& g : groups) {
    std::vector<double> r;
    for (std::size_t i = 0; i < g.rollouts.size(); ++i) r.push_back(static_cast<double>(rr.below(2)));
    g.set_rewards(r);
  }
  rlvr::assign_advantages(groups, rlvr::Estimator::kGrpo);
  const double direct = rlvr::rlvr_gradient(p, groups, rc).stats.clip_fraction;

  // First update of a real run with a single on-policy epoch.
  auto rc1 = rc;
  rc1.steps = 1;
  rc1.mini_batch_size = rc1.batch_size;
  const auto st = trainer::train_reasoner_plain(p, trainer::oracle_annotations(tasks), rc1, 303);
  const double trained = st.history.at(0).clip_fraction;
  return {values && direct == 0.0 && trained == 0.0,
          fmt("J(2,+1)=%.4f J(0.5,-1)=%.4f, on-policy clip fraction %.3g (gradient) %.3g (first step)", a, b, direct,
              trained)};
}

// ---------------------------------------------------------------------------
// 4. Decomposer reward factorization

Outcome c4() {
  using namespace vocab;
  // Deterministic proxy: attempt number (prompt length mod 6) is the first
  // correct one, so quality takes both values across the enumeration.
  struct Proxy {
    int* calls;
    int answer, modulus;
    TokenSeq operator()(std::span<const Token> prompt, Rng&) const {
      const bool ok = (*calls)++ == static_cast<int>(prompt.size() % 6);
      return env::render_answer(ok ? answer : (answer + 1) % modulus);
    }
  };
  const auto task = env::make_task(1, {{env::Op::kAdd, 3}, {env::Op::kMul, 2}}, 7);
  const std::vector<Token> alphabet{kSubqOpen, kSubqClose, kAdd, digit(3), kAnswer, kEos};
  const decomposer::DecomposerConfig cfg;
  std::size_t checked = 0, mismatches = 0, format_pass = 0, quality_pass = 0;
  std::size_t alone[3] = {0, 0, 0}, alone_nonzero = 0;
  std::vector<TokenSeq> frontier{{}};
  for (int len = 0; len <= 8; ++len) {
    std::vector<TokenSeq> next;
    next.reserve(frontier.size() * alphabet.size());
    for (const auto& r : frontier) {
      int calls = 0;
      Rng rng(1);
      const int reward = decomposer::decomposer_reward(task, r, cfg, Proxy{&calls, task.answer, 7}, rng);
      const int fmt_r = decomposer::format_reward(r, cfg);
      int quality = 0;
      const auto parsed = decomposer::parse_subquestions(r);
      if (decomposer::parsed(parsed)) {
        calls = 0;
        quality = decomposer::quality_reward(task, std::get<env::SubQuestionList>(parsed), cfg,
                                             Proxy{&calls, task.answer, 7}, rng);
      }
      mismatches += static_cast<std::size_t>(reward != fmt_r * quality);
      format_pass += static_cast<std::size_t>(fmt_r);
      quality_pass += static_cast<std::size_t>(fmt_r && quality);
      const auto fc = decomposer::check_format(r, cfg.min_content_chars);
      const bool rules[3] = {fc.begins_with_tag, fc.single_tag_per_subquestion, fc.long_enough};
      for (int k = 0; k < 3; ++k)
        if (!rules[k] && rules[(k + 1) % 3] && rules[(k + 2) % 3]) {
          ++alone[k];
          alone_nonzero += static_cast<std::size_t>(reward != 0);
        }
      ++checked;
      if (len < 8)
        for (Token t : alphabet) {
          next.push_back(r);
          next.back().push_back(t);
        }
    }
    frontier = std::move(next);
  }
  const bool ok = mismatches == 0 && format_pass > 0 && quality_pass > 0 && quality_pass < format_pass &&
                  alone[0] > 0 && alone[1] > 0 && alone[2] > 0 && alone_nonzero == 0;
  return {ok, fmt("%zu responses (len<=8, 6 tokens), %zu mismatches, format pass %zu, rewarded %zu; "
                  "single-rule failures %zu/%zu/%zu all zero: %s",
                  checked, mismatches, format_pass, quality_pass, alone[0], alone[1], alone[2],
                  alone_nonzero == 0 ? "yes" : "no")};
}

// ---------------------------------------------------------------------------
// 5. Positive selection

Outcome c5() {
  Rng rng(505);
  std::size_t cases = 0, wrong_size = 0, negatives = 0, duplicates = 0;
  for (int n = 1; n <= 64; ++n)
    for (double k2 = 0.0; k2 <= 1.0 + 1e-12; k2 += 0.05)
      for (int trial = 0; trial < 5; ++trial) {
        std::vector<policy::Rollout> g(static_cast<std::size_t>(n));
        std::size_t npos = 0;
        const double p_pos = rng.uniform(0.0, 1.0);
        for (auto& r : g) {
          r.reward = rng.uniform(0.0, 1.0) < p_pos ? 1.0 : (rng.below(2) ? -1.0 : 0.0);
          npos += static_cast<std::size_t>(r.reward == 1.0);
        }
        const auto sel = trainer::select_positive(g, k2, rng, 1.0);
        const auto q = std::min(npos, static_cast<std::size_t>(std::floor(k2 * n + 1e-9)));
        wrong_size += static_cast<std::size_t>(sel.size() != q);
        for (std::size_t i : sel) negatives += static_cast<std::size_t>(g[i].reward <= 0.0);
        duplicates += sel.size() - std::set<std::size_t>(sel.begin(), sel.end()).size();
        ++cases;
      }
  return {wrong_size == 0 && negatives == 0 && duplicates == 0,
          fmt("%zu groups (n 1..64, k2 0..1): size mismatches %zu, nonpositive selected %zu, duplicates %zu", cases,
              wrong_size, negatives, duplicates)};
}

// ---------------------------------------------------------------------------
// 6. Gate reduction

Outcome c6() {
  const auto& bb = backbone();
  const auto t0 = std::chrono::steady_clock::now();
  const config::RunConfig c;
  const auto data = trainer::oracle_annotations(experiment::make_suites(c).train);
  auto rc = c.reasoner_rlvr();
  rc.steps = 50;
  const auto plain = policy::serialize(trainer::train_reasoner_plain(bb, data, rc, c.seed).params);
  trainer::A2dConfig no_gate = c.a2d;
  no_gate.k1 = 0.0;
  trainer::A2dConfig no_weight = c.a2d;
  no_weight.alpha = 0.0;
  const auto a = trainer::train_reasoner(bb, data, rc, no_gate, c.seed);
  const auto b = trainer::train_reasoner(bb, data, rc, no_weight, c.seed);
  double fired = 0.0;
  for (const auto& s : b.history) fired += s.extra.at("gate_rate");
  fired /= static_cast<double>(b.history.size());
  const bool same_a = policy::serialize(a.params) == plain, same_b = policy::serialize(b.params) == plain;
  const double secs = seconds_since(t0);
  return {same_a && same_b && fired > 0.0 && secs < 120.0,
          fmt("50 steps: k1=0 identical %s, alpha=0 identical %s (gate fired on %.2f of questions), %.1fs",
              same_a ? "yes" : "no", same_b ? "yes" : "no", fired, secs)};
}

// ---------------------------------------------------------------------------
// 7. pass@k

Outcome c7() {
  const auto t0 = std::chrono::steady_clock::now();
  const double known = eval::pass_at_k(8, 2, 4);
  const bool exact = std::abs(known - 11.0 / 14.0) < 1e-12;
  // Monte Carlo: in a random ordering of n samples with c correct, pass@k is
  // the event that the first correct sample sits among the first k.
  Rng rng(707);
  const int trials = 100000;
  double worst = 0.0;
  std::size_t cases = 0;
  for (int n = 1; n <= 16; ++n)
    for (int c = 0; c <= n; ++c) {
      std::vector<int> first(static_cast<std::size_t>(n) + 1, 0);
      std::vector<char> v(static_cast<std::size_t>(n), 0);
      for (int t = 0; t < trials; ++t) {
        std::fill(v.begin(), v.end(), 0);
        std::fill(v.begin(), v.begin() + c, 1);
        int pos = n;
        for (int i = 0; i < n; ++i) {
          const auto j = static_cast<std::size_t>(i) + rng.below(static_cast<std::uint64_t>(n - i));
          std::swap(v[static_cast<std::size_t>(i)], v[j]);
          if (v[static_cast<std::size_t>(i)]) {
            pos = i;
            break;
          }
        }
        ++first[static_cast<std::size_t>(pos)];
      }
      int hits = 0;
      for (int k = 1; k <= n; ++k) {
        hits += first[static_cast<std::size_t>(k - 1)];
        worst = std::max(worst, std::abs(eval::pass_at_k(n, c, k) - hits / double(trials)));
        ++cases;
      }
    }
  const double secs = seconds_since(t0);
  return {exact && worst <= 0.01 && secs < 60.0,
          fmt("pass@4(n=8,c=2)=%.6f (11/14=%.6f), %zu (n,c,k) cases x %d draws max |diff| %.4f, %.1fs", known,
              11.0 / 14.0, cases, trials, worst, secs)};
}

// ---------------------------------------------------------------------------
// 8. Decomposer training

Outcome c8() {
  ensure_runs();
  const int window = 20;
  std::vector<std::vector<double>> reward, format;
  double secs = 0.0;
  for (std::uint64_t seed = 1; seed <= kSeeds; ++seed) {
    const auto dir = run_dir("a2d", seed);
    secs += phase_seconds(dir, "train-decomposer");
    std::vector<double> r, f;
    for (const auto& m : experiment::read_metrics(experiment::RunDir{dir}.metrics("decomposer"))) {
      r.push_back(m.at("mean_reward").get<double>());
      f.push_back(m.at("format_pass_rate").get<double>());
    }
    reward.push_back(r);
    format.push_back(f);
  }
  const std::size_t steps = reward[0].size();
  // Seed-mean curves smoothed over a trailing window.
  auto smoothed = [&](const std::vector<std::vector<double>>& xs, std::size_t step) {
    double s = 0.0;
    int n = 0;
    for (const auto& x : xs)
      for (std::size_t t = step + 1 >= window ? step + 1 - window : 0; t <= step && t < x.size(); ++t, ++n) s += x[t];
    return n ? s / n : 0.0;
  };
  long first = -1;
  for (std::size_t t = 0; t < steps && t < 300; ++t)
    if (smoothed(reward, t) > 0.7 && smoothed(format, t) > 0.9) {
      first = static_cast<long>(t);
      break;
    }
  const double r0 = smoothed(reward, window - 1), f0 = smoothed(format, window - 1);
  const double r1 = smoothed(reward, steps - 1), f1 = smoothed(format, steps - 1);
  return {first >= 0 && steps <= 300 && secs < 300.0,
          fmt("5-seed mean (%d-step window): reward %.3f->%.3f, format pass %.3f->%.3f over %zu steps; "
              "both thresholds first met at step %ld; %.1fs",
              window, r0, r1, f0, f1, steps, first, secs)};
}

// ---------------------------------------------------------------------------
// 9. Sub-question prompting

Outcome c9() {
  ensure_runs();
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<double> van, sub;
  std::string per_seed;
  for (std::uint64_t seed = 1; seed <= kSeeds; ++seed) {
    const experiment::RunDir d{run_dir("a2d", seed)};
    const auto tasks = experiment::load_tasks(d.eval_tasks());
    const auto ann = experiment::load_annotations(d.eval_annotations(), tasks);
    std::vector<eval::EvalItem> items;
    for (const auto& a : ann)
      if (!a.subq.empty()) items.push_back({a.task, a.subq});
    auto c = base_config();
    c.seed = seed;
    const auto eo = c.eval_options();
    const double v = eval::evaluate(backbone(), items, env::PromptStyle::vanilla(), eo, seed, "subq").pass_at.at(8);
    const double s =
        eval::evaluate(backbone(), items, env::PromptStyle::with_subquestions(), eo, seed, "subq").pass_at.at(8);
    van.push_back(v);
    sub.push_back(s);
    per_seed += fmt(" %.3f/%.3f", s, v);
  }
  const double secs = seconds_since(t0), margin = mean(sub) - mean(van);
  return {margin > 0.0 && secs < 180.0,
          fmt("backbone pass@8 on held-out L=3 with sub-questions %.3f vs vanilla %.3f (margin %+.3f; per seed"
              "%s), %.1fs",
              mean(sub), mean(van), margin, per_seed.c_str(), secs)};
}

// ---------------------------------------------------------------------------
// 10. A2D against GRPO

Outcome c10() {
  ensure_runs();
  std::vector<double> a2d_p1, grpo_p1, gate_early, gate_late;
  double secs = 0.0;
  std::string per_seed;
  for (std::uint64_t seed = 1; seed <= kSeeds; ++seed) {
    const auto a = experiment::load_run(run_dir("a2d", seed)), g = experiment::load_run(run_dir("grpo", seed));
    a2d_p1.push_back(a.reports.at("vanilla").pass1());
    grpo_p1.push_back(g.reports.at("vanilla").pass1());
    per_seed += fmt(" %.3f/%.3f", a2d_p1.back(), grpo_p1.back());
    for (const auto* r : {&a, &g})
      secs += r->state.phases.at("train-reasoner").at("seconds").get<double>() +
              r->state.phases.at("eval").at("seconds").get<double>();
    const auto& m = a.reasoner_metrics;
    const std::size_t tenth = std::max<std::size_t>(1, m.size() / 10);
    std::vector<double> early, late;
    for (std::size_t i = 0; i < tenth; ++i) {
      early.push_back(m[i].at("gate_rate").get<double>());
      late.push_back(m[m.size() - 1 - i].at("gate_rate").get<double>());
    }
    gate_early.push_back(mean(early));
    gate_late.push_back(mean(late));
  }
  const bool better = mean(a2d_p1) >= mean(grpo_p1), declines = mean(gate_late) < mean(gate_early);
  return {better && declines && secs < 600.0,
          fmt("held-out L=3 pass@1 A2D %.4f vs GRPO %.4f (per seed a2d/grpo%s); gate rate first 10%% %.3f, "
              "last 10%% %.3f; %.1fs",
              mean(a2d_p1), mean(grpo_p1), per_seed.c_str(), mean(gate_early), mean(gate_late), secs)};
}

// ---------------------------------------------------------------------------
// 11. No answer leakage

Outcome c11() {
  ensure_runs();
  std::size_t tasks = 0, annotated = 0, leaks = 0;
  for (std::uint64_t seed = 1; seed <= kSeeds; ++seed) {
    const experiment::RunDir d{run_dir("a2d", seed)};
    const auto ann = experiment::load_annotations(d.eval_annotations(), experiment::load_tasks(d.eval_tasks()));
    tasks += ann.size();
    for (const auto& a : ann) {
      annotated += static_cast<std::size_t>(!a.subq.empty());
      for (const auto& q : a.subq.items) leaks += static_cast<std::size_t>(std::count(q.begin(), q.end(), vocab::kAnswer));
    }
  }
  return {leaks == 0 && annotated > 0 && tasks == static_cast<std::size_t>(kSeeds) * 200,
          fmt("%d seeds x 200 held-out tasks: %zu annotated, %zu ANSWER tokens in sub-questions", kSeeds, annotated,
              leaks)};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--runs" && i + 1 < argc) g_runs = argv[++i];
    else only.insert(std::stoi(a));
  }
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"group-standardized advantage", c1},   {"gradient fidelity", c2},
      {"clipped surrogate", c3},              {"decomposer reward factorization", c4},
      {"positive selection", c5},             {"gate reduction to GRPO", c6},
      {"pass@k estimator", c7},               {"decomposer training", c8},
      {"sub-question prompting", c9},         {"A2D vs GRPO", c10},
      {"no answer leakage", c11},
  };
  fs::create_directories(g_runs);
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.contains(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << id << "] " << criteria[i].first << ": " << o.detail
              << fmt(" (%.1fs)", seconds_since(t0)) << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
