#include <gtest/gtest.h>

#include <sstream>

#include "a2d/a2d.hpp"
#include "a2d/backbone.hpp"
#include "test_util.hpp"

using namespace a2d;
using namespace a2d::trainer;

namespace {

std::vector<policy::Rollout> with_rewards(const std::vector<double>& r) {
  std::vector<policy::Rollout> out(r.size());
  for (std::size_t i = 0; i < r.size(); ++i) {
    out[i].reward = r[i];
    out[i].tokens = {vocab::digit(static_cast<int>(i % 7)), vocab::kEos};
  }
  return out;
}

}  // namespace

TEST(Selection, CapIsFloorOfK2TimesN) {
  EXPECT_EQ(selection_cap(0.25, 8), 2u);
  EXPECT_EQ(selection_cap(0.29, 100), 29u);
  EXPECT_EQ(selection_cap(0.1, 9), 0u);
  EXPECT_EQ(selection_cap(0.5, 7), 3u);
}

TEST(Selection, KeepsMinOfPositivesAndCapAndNeverANegative) {
  Rng rng(1);
  for (int n : {2, 4, 8, 16, 32})
    for (double k2 : {0.05, 0.1, 0.25, 0.5, 0.75, 0.95})
      for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> r(static_cast<std::size_t>(n));
        for (double& x : r) x = rng.below(2) ? 1.0 : -1.0;
        const auto g = with_rewards(r);
        const std::size_t npos = static_cast<std::size_t>(std::count(r.begin(), r.end(), 1.0));
        const auto sel = select_positive(g, k2, rng, 1.0);
        EXPECT_EQ(sel.size(), std::min(npos, selection_cap(k2, n)));
        std::set<std::size_t> uniq(sel.begin(), sel.end());
        EXPECT_EQ(uniq.size(), sel.size());
        for (std::size_t i : sel) EXPECT_EQ(r[i], 1.0);
        const auto all = select_positive(g, k2, rng, 1.0, false);
        EXPECT_EQ(all.size(), npos);
      }
}

TEST(Idl, SamplesNeverCarrySubQuestions) {
  const auto t = fixtures::task_of({{env::Op::kAdd, 2}, {env::Op::kSub, 5}});
  const auto sel = with_rewards({1, 1, 1});
  Rng rng(2);
  for (bool div : {true, false})
    for (const auto& s : idl_samples(t, sel, div, 4, rng)) {
      for (Token tok : s.prompt) {
        EXPECT_NE(tok, vocab::kTips);
        EXPECT_NE(tok, vocab::kSubqOpen);
      }
      if (!div) EXPECT_EQ(s.prompt, env::render_prompt(t, env::PromptStyle::vanilla()));
      else EXPECT_TRUE(vocab::is_variant(s.prompt.back()));
    }
  const std::vector<IdlSample> leaky{{env::render_prompt(t, env::PromptStyle::with_subquestions(), env::oracle_decompose(t)), {vocab::kEos}}};
  auto p = fixtures::small_policy();
  EXPECT_THROW(idl_loss(p, leaky), std::logic_error);
  EXPECT_THROW(idl_loss(p, std::vector<IdlSample>{}), std::invalid_argument);
}

TEST(Idl, LossAndGradientMatchDefinition) {
  auto p = fixtures::small_policy(7);
  const auto t = fixtures::task_of({{env::Op::kMul, 3}, {env::Op::kAdd, 1}});
  const std::vector<IdlSample> s{
      {env::render_prompt(t, env::PromptStyle::vanilla()), env::render_solution(t)},
      {env::render_prompt(t, env::PromptStyle::diversity(1)), env::render_answer(t.answer)},
  };
  auto direct = [&] {
    double l = 0.0;
    for (const auto& x : s)
      for (double lp : policy::logprob(p, x.prompt, x.tokens)) l -= lp / 2.0;
    return l;
  };
  const auto res = idl_loss(p, s);
  EXPECT_NEAR(res.loss, direct(), 1e-12);
  Rng rng(3);
  double worst = 0.0;
  for (std::size_t i : fixtures::probe_coords(res.grad, 60, rng))
    worst = std::max(worst, fixtures::rel_error(res.grad[i], fixtures::central_diff(p, i, direct)));
  EXPECT_LT(worst, 1e-5);
}

TEST(Annotate, FileRoundTripAndOracle) {
  const auto tasks = env::generate_suite(4, "a", 10, 1, 3, 7);
  auto ann = oracle_annotations(tasks);
  ann[3].subq = {};
  ann[3].flagged = true;
  std::stringstream ss;
  write_annotations(ss, ann);
  const auto back = read_annotations(ss, tasks);
  ASSERT_EQ(back.size(), ann.size());
  for (std::size_t i = 0; i < ann.size(); ++i) {
    EXPECT_EQ(back[i].task, ann[i].task);
    EXPECT_EQ(back[i].subq, ann[i].subq);
    EXPECT_EQ(back[i].flagged, ann[i].flagged);
  }
}

TEST(Annotate, AcceptsOnlyFormatValidResponsesAndIsDeterministic) {
  // An untrained policy almost never produces a valid decomposition.
  const auto p = fixtures::small_policy(1, 0.05);
  const auto tasks = env::generate_suite(4, "a", 8, 1, 3, 7);
  AnnotateConfig cfg;
  cfg.max_retries = 2;
  AnnotationReport rep;
  const auto a = annotate_dataset(p, tasks, cfg, 9, &rep);
  const auto b = annotate_dataset(p, tasks, cfg, 9);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].subq, b[i].subq);
    EXPECT_EQ(a[i].flagged, a[i].subq.empty());
  }
  EXPECT_EQ(rep.total, tasks.size());
  // A flagged task used every attempt.
  EXPECT_GE(rep.retries, rep.flagged * static_cast<std::size_t>(cfg.max_retries + 1));
}

namespace {

std::vector<AnnotatedInstance> gate_data() {
  return oracle_annotations(env::generate_suite(2, "gate", 12, 1, 2, 5));
}

rlvr::RlvrConfig gate_rlvr() {
  rlvr::RlvrConfig rc;
  rc.steps = 6;
  rc.batch_size = 4;
  rc.mini_batch_size = 2;
  rc.n_rollout = 4;
  rc.adam.lr = 0.01;
  rc.sampling.max_len = 10;
  return rc;
}

policy::PolicyParams gate_init() {
  // A short warm-up so rewards vary and the gate has something to act on.
  backbone::BackboneConfig bc;
  bc.steps = 60;
  env::EnvConfig ec;
  ec.modulus = 5;
  ec.chain_len_max = 2;
  return backbone::pretrain(policy::init_params(1, {6, 16, vocab::kSize}, 0.1), bc, ec, 1);
}

}  // namespace

TEST(Gate, ZeroThresholdOrZeroWeightReducesToPlainTraining) {
  const auto data = gate_data();
  const auto init = gate_init();
  const auto rc = gate_rlvr();
  const auto plain = train_reasoner_plain(init, data, rc, 3);
  A2dConfig off_gate;
  off_gate.k1 = 0.0;
  A2dConfig off_weight;
  off_weight.k1 = 0.99;
  off_weight.alpha = 0.0;
  const auto a = train_reasoner(init, data, rc, off_gate, 3);
  const auto b = train_reasoner(init, data, rc, off_weight, 3);
  EXPECT_EQ(policy::serialize(a.params), policy::serialize(plain.params));
  EXPECT_EQ(policy::serialize(b.params), policy::serialize(plain.params));
  double gate = 0.0;
  for (const auto& s : b.history) gate += s.extra.at("gate_rate");
  EXPECT_GT(gate, 0.0);  // the gate did fire; only its weight was zero
  A2dConfig on;
  on.k1 = 0.99;
  const auto c = train_reasoner(init, data, rc, on, 3);
  EXPECT_NE(policy::serialize(c.params), policy::serialize(plain.params));
}

TEST(Gate, SkipsQuestionsWithoutSubQuestions) {
  auto data = gate_data();
  for (auto& a : data) a.subq = {};
  A2dConfig on;
  on.k1 = 0.99;
  const auto st = train_reasoner(gate_init(), data, gate_rlvr(), on, 3);
  for (const auto& s : st.history) EXPECT_EQ(s.extra.at("gate_rate"), 0.0);
}

TEST(Gate, SingleInstanceStepMakesOneUpdate) {
  const auto data = gate_data();
  auto p = gate_init();
  policy::AdamState opt;
  A2dConfig on;
  on.k1 = 0.99;
  const auto s = a2d_step(p, opt, data[0], gate_rlvr(), on, 5);
  EXPECT_EQ(opt.step, 1);
  EXPECT_TRUE(std::isfinite(s.mean_reward));
  EXPECT_NE(policy::params_hash(p), policy::params_hash(gate_init()));
}

TEST(Gate, WorkerCountDoesNotChangeTheResult) {
  const auto data = gate_data();
  auto rc = gate_rlvr();
  A2dConfig on;
  on.k1 = 0.99;
  const auto a = train_reasoner(gate_init(), data, rc, on, 3);
  rc.workers = 3;
  const auto b = train_reasoner(gate_init(), data, rc, on, 3);
  EXPECT_EQ(a.params.values, b.params.values);
}
