#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "support/fixtures.hpp"
#include "txadv/error.hpp"
#include "txadv/metrics.hpp"

using namespace txadv;
using txadv::testing::pair_auc;

TEST(RocAuc, HandWorkedExamples) {
  const std::vector<double> s{0.1, 0.4, 0.35, 0.8};
  const std::vector<int> y{0, 0, 1, 1};
  EXPECT_DOUBLE_EQ(roc_auc(s, y), 0.75);
  const std::vector<double> perfect{0.1, 0.2, 0.9, 0.95};
  EXPECT_DOUBLE_EQ(roc_auc(perfect, y), 1.0);
  const std::vector<double> flipped{0.9, 0.95, 0.1, 0.2};
  EXPECT_DOUBLE_EQ(roc_auc(flipped, y), 0.0);
  const std::vector<double> ties(4, 0.5);
  EXPECT_DOUBLE_EQ(roc_auc(ties, y), 0.5);
}

TEST(RocAuc, SingleClassIsAnError) {
  const std::vector<double> s{0.1, 0.2};
  const std::vector<int> y{1, 1};
  EXPECT_THROW(roc_auc(s, y), Error);
  const std::vector<int> short_labels{1};
  EXPECT_THROW(roc_auc(s, short_labels), Error);
}

TEST(RocAuc, MatchesPairCountingWithTies) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 300; ++trial) {
    const size_t n = 2 + rng() % 60;
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng() % 7) / 7.0;
      y[i] = static_cast<int>(rng() % 2);
    }
    y[0] = 0;
    y[1] = 1;
    EXPECT_EQ(roc_auc(s, y), pair_auc(s, y)) << trial;
  }
}

TEST(RocAuc, FiftyPairsByHand) {
  std::vector<double> s;
  std::vector<int> y;
  for (int i = 0; i < 10; ++i) {
    s.push_back(i);
    y.push_back(1);
  }
  for (int j = 0; j < 5; ++j) {
    s.push_back(2 * j + 0.5);
    y.push_back(0);
  }
  // negatives at 0.5, 2.5, 4.5, 6.5, 8.5 beaten by 9, 7, 5, 3, 1 positives
  EXPECT_DOUBLE_EQ(roc_auc(s, y), 25.0 / 50.0);
}

TEST(HarmonicMean, Examples) {
  EXPECT_DOUBLE_EQ(harmonic_mean(0.7, 0.7), 0.7);
  EXPECT_NEAR(harmonic_mean(0.75, 0.5), 0.6, 1e-15);
  EXPECT_EQ(harmonic_mean(0.0, 0.8), 0.0);
  std::mt19937_64 rng(2);
  for (int k = 0; k < 200; ++k) {
    const double a = std::uniform_real_distribution<double>(0.01, 1)(rng);
    const double b = std::uniform_real_distribution<double>(0.01, 1)(rng);
    EXPECT_NEAR(harmonic_mean(a, b), 2 * a * b / (a + b), 1e-12);
    EXPECT_LE(harmonic_mean(a, b), std::max(a, b));
    EXPECT_GE(harmonic_mean(a, b), std::min(a, b));
  }
}

TEST(Spearman, IdentityReversalAndConstant) {
  const std::vector<double> a{1, 2, 3, 4, 5};
  const std::vector<double> b{10, 20, 30, 40, 50};
  const std::vector<double> r{5, 4, 3, 2, 1};
  const std::vector<double> c(5, 1.0);
  EXPECT_NEAR(spearman(a, b), 1.0, 1e-12);
  EXPECT_NEAR(spearman(a, r), -1.0, 1e-12);
  EXPECT_TRUE(std::isnan(spearman(a, c)));
  const std::vector<double> m = midranks(std::vector<double>{3, 1, 3, 2});
  EXPECT_EQ(m, (std::vector<double>{3.5, 1, 3.5, 2}));
}

TEST(Cohort, ScoresFollowTheirDefinitions) {
  ScoredCohort c;
  c.client_ids = {"a", "b", "c", "d"};
  c.labels = {0, 0, 1, 1};
  c.clean = {0.1, 0.2, 0.8, 0.9};
  c.attacked = {0.1, 0.85, 0.8, 0.05};
  EXPECT_DOUBLE_EQ(attack_score(c), 1.0 - 0.25);
  EXPECT_NEAR(defense_score(c), 2 * 1.0 * 0.25 / 1.25, 1e-12);
  c.attacked.pop_back();
  EXPECT_THROW(c.validate(), Error);
}
