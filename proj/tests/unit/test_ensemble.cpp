#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "support/fixtures.hpp"
#include "txadv/attacks.hpp"
#include "txadv/ensemble.hpp"
#include "txadv/error.hpp"
#include "txadv/metrics.hpp"
#include "txadv/pipeline.hpp"

using namespace txadv;
using txadv::testing::make_sequence;

namespace {

ModelPtr constant(double v) { return std::make_shared<ConstantModel>(v); }

}  // namespace

TEST(Ensemble, MixOfTwoIsTheMean) {
  const auto m = boosting_mix({constant(0.4), constant(0.6)}, {});
  EXPECT_DOUBLE_EQ(m->score(make_sequence("a", {1, 2, 3}).transactions), 0.5);
}

TEST(Ensemble, MixOfFiveWeightsFullMembersByHalf) {
  const double a = 0.9, b = 0.7, c = 0.2, d = 0.4, e = 0.1;
  const auto m = boosting_mix({constant(a), constant(b)}, {constant(c), constant(d), constant(e)});
  EXPECT_NEAR(m->score(make_sequence("a", {1}).transactions), (0.5 * a + 0.5 * b + c + d + e) / 4.0, 1e-15);
}

TEST(Ensemble, ScoreStaysWithinMemberExtremes) {
  const Dataset ds = txadv::testing::small_dataset(60, 40);
  std::vector<ModelPtr> members;
  for (int mcc = 0; mcc < 4; ++mcc) members.push_back(std::make_shared<txadv::testing::ToyScorer>(mcc));
  const EnsembleModel m(members, {0.3, 1.0, 2.0, 0.7});
  for (const auto& s : ds.sequences) {
    double lo = 1, hi = 0;
    for (const auto& p : members) {
      lo = std::min(lo, p->score(s.transactions));
      hi = std::max(hi, p->score(s.transactions));
    }
    const double v = m.score(s.transactions);
    EXPECT_GE(v, lo - 1e-15);
    EXPECT_LE(v, hi + 1e-15);
  }
}

TEST(Ensemble, InvalidWeightsAreRejected) {
  EXPECT_THROW(EnsembleModel({constant(0.1)}, {1.0, 2.0}), Error);
  EXPECT_THROW(EnsembleModel({constant(0.1)}, {-1.0}), Error);
  EXPECT_THROW(EnsembleModel({}, {}), Error);
}

TEST(Ensemble, CandidatesMatchRescoring) {
  const Dataset ds = txadv::testing::small_dataset(60, 40);
  const MccCatalog cat = build_catalog(ds);
  const EnsembleModel m({std::make_shared<txadv::testing::ToyScorer>(1), std::make_shared<txadv::testing::ToyScorer>(2)},
                        {1.0, 3.0});
  const auto& seq = ds.sequences[3].transactions;
  std::vector<Edit> cands;
  for (int p = 0; p < 10; ++p) cands.push_back(Edit::substitute(p, 1 + p % 2, cat.stats(1 + p % 2).amount_min));
  const auto fast = m.score_candidates(seq, cands);
  for (size_t k = 0; k < cands.size(); ++k) {
    const Edit e[] = {cands[k]};
    EXPECT_NEAR(fast[k], m.score(apply_edits(seq, e)), 1e-12);
  }
}

TEST(Distill, ConstantTeacherGivesConstantStudent) {
  const Dataset ds = txadv::testing::small_dataset(120, 40);
  const MccCatalog cat = build_catalog(ds);
  GbdtParams p;
  p.loss = Loss::kSquared;
  p.n_trees = 20;
  DistillReport rep;
  const auto student = distill(ConstantModel(0.7), ds.sequences, AggregateSpec::full(cat), p, 1, &rep);
  for (const auto& s : ds.sequences) EXPECT_NEAR(student->score(s.transactions), 0.7, 1e-6);
  EXPECT_TRUE(std::isnan(rep.holdout_spearman));
  EXPECT_EQ(rep.train_rows + rep.holdout_rows, ds.size());
}

TEST(Distill, AggregateTeacherIsRecoveredInRank) {
  const Dataset ds = txadv::testing::small_dataset(400, 60);
  const MccCatalog cat = build_catalog(ds);
  const AggregateSpec spec = AggregateSpec::full(cat);
  // Teacher is itself a function of the aggregates, so a student can match it.
  const int m = cat.frequency_order()[2];
  const txadv::testing::ToyScorer teacher(m);
  GbdtParams p;
  p.loss = Loss::kSquared;
  p.n_trees = 150;
  DistillReport rep;
  distill(teacher, ds.sequences, spec, p, 1, &rep);
  EXPECT_GE(rep.holdout_spearman, 0.95);
}

TEST(SurrogatePool, SingleMemberEqualsThatMember) {
  const Dataset ds = txadv::testing::small_dataset(150, 40);
  const MccCatalog cat = build_catalog(ds);
  const AggregateSpec spec = AggregateSpec::full(cat);
  std::vector<double> t;
  for (const auto& s : ds.sequences) t.push_back(txadv::testing::ToyScorer(3).score(s.transactions));
  PoolParams pp;
  pp.n_members = 1;
  pp.member.n_trees = 10;
  const auto pool = build_surrogate_pool(ds.sequences, t, spec, pp);
  ASSERT_EQ(pool->members().size(), 1u);
  for (const auto& s : ds.sequences) EXPECT_EQ(pool->score(s.transactions), pool->members()[0]->score(s.transactions));
}

TEST(SurrogatePool, MeanBoundsDistinctSubsetsAndDeterminism) {
  const Dataset ds = txadv::testing::small_dataset(150, 40);
  const MccCatalog cat = build_catalog(ds);
  const AggregateSpec spec = AggregateSpec::full(cat);
  std::vector<double> t;
  for (const auto& s : ds.sequences) t.push_back(txadv::testing::ToyScorer(5).score(s.transactions));
  PoolParams pp;
  pp.n_members = 100;
  pp.member.n_trees = 3;
  pp.member.max_depth = 2;
  pp.seed = 4;
  const auto pool = build_surrogate_pool(ds.sequences, t, spec, pp);
  EXPECT_GE(pool->distinct_subsets(), 95u);
  for (size_t i = 0; i < 20; ++i) {
    const auto ms = pool->member_scores(ds.sequences[i].transactions);
    const double v = pool->score(ds.sequences[i].transactions);
    EXPECT_GE(v, *std::min_element(ms.begin(), ms.end()) - 1e-15);
    EXPECT_LE(v, *std::max_element(ms.begin(), ms.end()) + 1e-15);
  }
  const auto again = build_surrogate_pool(ds.sequences, t, spec, pp);
  EXPECT_EQ(again->to_json().dump(), pool->to_json().dump());
  pp.n_members = 0;
  EXPECT_THROW(build_surrogate_pool(ds.sequences, t, spec, pp), Error);
}
