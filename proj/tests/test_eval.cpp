#include <gtest/gtest.h>

#include <cmath>

#include "a2d/eval.hpp"
#include "test_util.hpp"

using namespace a2d;
using eval::pass_at_k;

namespace {

double binom(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

}  // namespace

TEST(PassAtK, KnownValues) {
  EXPECT_NEAR(pass_at_k(8, 2, 4), 11.0 / 14.0, 1e-15);
  EXPECT_EQ(pass_at_k(8, 0, 4), 0.0);
  EXPECT_EQ(pass_at_k(8, 5, 4), 1.0);
  EXPECT_NEAR(pass_at_k(10, 3, 1), 0.3, 1e-15);
  EXPECT_THROW(pass_at_k(4, 5, 1), std::invalid_argument);
  EXPECT_THROW(pass_at_k(4, 1, 5), std::invalid_argument);
  EXPECT_THROW(pass_at_k(4, 1, 0), std::invalid_argument);
}

TEST(PassAtK, MatchesBinomialFormula) {
  for (int n = 1; n <= 30; ++n)
    for (int c = 0; c <= n; ++c)
      for (int k = 1; k <= n; ++k)
        EXPECT_NEAR(pass_at_k(n, c, k), 1.0 - binom(n - c, k) / binom(n, k), 1e-12);
  EXPECT_TRUE(std::isfinite(pass_at_k(2000, 3, 1000)));
}

TEST(PassAtK, MatchesMonteCarlo) {
  Rng rng(1);
  const int trials = 40000;
  for (int n : {4, 9, 16})
    for (int c : {1, n / 2})
      for (int k : {1, 2, n / 2}) {
        std::vector<int> idx(static_cast<std::size_t>(n));
        int hits = 0;
        for (int t = 0; t < trials; ++t) {
          std::iota(idx.begin(), idx.end(), 0);
          rng.shuffle(idx);
          bool any = false;
          for (int j = 0; j < k; ++j) any |= idx[static_cast<std::size_t>(j)] < c;
          hits += any;
        }
        EXPECT_NEAR(hits / double(trials), pass_at_k(n, c, k), 0.01) << n << " " << c << " " << k;
      }
}

TEST(Evaluate, CountsCorrectSamplesDeterministically) {
  const auto p = fixtures::small_policy(3, 0.5);
  const auto tasks = env::generate_suite(1, "e", 6, 1, 2, 3);
  eval::EvalOptions opt;
  opt.n_samples = 6;
  opt.k_list = {1, 3, 6};
  opt.sampling.max_len = 4;
  const auto items = eval::items_from(tasks);
  const auto a = eval::evaluate(p, items, env::PromptStyle::vanilla(), opt, 2);
  const auto b = eval::evaluate(p, items, env::PromptStyle::vanilla(), opt, 2);
  EXPECT_EQ(a, b);
  double mean = 0.0;
  for (int c : a.correct_per_task) mean += c / 6.0;
  EXPECT_NEAR(a.pass_at.at(1), mean / tasks.size(), 1e-12);
  EXPECT_LE(a.pass_at.at(1), a.pass_at.at(3));
  EXPECT_LE(a.pass_at.at(3), a.pass_at.at(6));
  opt.workers = 3;
  EXPECT_EQ(eval::evaluate(p, items, env::PromptStyle::vanilla(), opt, 2), a);
  EXPECT_EQ(eval::report_from_json(eval::to_json(a)), a);
  opt.k_list = {7};
  EXPECT_THROW(eval::evaluate(p, items, env::PromptStyle::vanilla(), opt, 2), std::invalid_argument);
}

TEST(Summary, PopulationStatistics) {
  const std::vector<double> x{1, 2, 3, 4};
  const auto s = eval::summarize(x);
  EXPECT_DOUBLE_EQ(s.mean, 2.5);
  EXPECT_DOUBLE_EQ(s.std, std::sqrt(1.25));
  EXPECT_EQ(s.min, 1);
  EXPECT_EQ(s.max, 4);
}

TEST(SubqStats, DetectsLeaks) {
  const auto tasks = env::generate_suite(1, "e", 4, 2, 2, 7);
  auto ann = trainer::oracle_annotations(tasks);
  auto st = eval::subq_stats(ann);
  EXPECT_DOUBLE_EQ(st.count.mean, 2.0);
  EXPECT_DOUBLE_EQ(st.tokens.mean, 4.0);
  EXPECT_FALSE(st.leaks["answer_tag"]);
  ann[0].subq.items.push_back({vocab::kAnswer, vocab::digit(1)});
  ann[1].subq.items.push_back({vocab::digit(tasks[1].answer)});
  st = eval::subq_stats(ann);
  EXPECT_TRUE(st.leaks["answer_tag"]);
  EXPECT_TRUE(st.leaks["bare_answer"]);
}
