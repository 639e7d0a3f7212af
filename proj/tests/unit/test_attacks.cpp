#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>
#include <set>

#include "support/fixtures.hpp"
#include "txadv/attacks.hpp"
#include "txadv/error.hpp"
#include "txadv/features.hpp"
#include "txadv/gbdt.hpp"

using namespace txadv;
using txadv::testing::make_sequence;
using txadv::testing::toy_catalog;
using txadv::testing::ToyScorer;

namespace {

// Scorer rewarding MCC 1 next to MCC 2, so single edits interact.
class PairScorer final : public ScoreModel {
 public:
  double score(std::span<const Transaction> seq) const override {
    if (seq.size() < 2) return 0.0;
    double s = 0.0;
    for (size_t i = 0; i + 1 < seq.size(); ++i) s += (seq[i].mcc == 1 && seq[i + 1].mcc == 2) ? 1.0 : 0.0;
    for (const auto& t : seq) s += t.mcc == 3 ? 0.1 : 0.0;
    return s / static_cast<double>(seq.size());
  }
  using ScoreModel::score;
  std::string kind() const override { return "pair"; }
  Json to_json() const override { return Json{{"kind", "pair"}}; }
};

// Minimum objective over every set of at most `budget` substitutions drawn
// from `mccs` (the scorers ignore amounts).
double brute_force(const ScoreModel& m, std::vector<Transaction> seq, const std::vector<int>& mccs, int budget,
                   int direction, size_t from = 0) {
  double best = AttackObjective::value(m.score(seq), direction);
  if (budget == 0) return best;
  for (size_t p = from; p < seq.size(); ++p) {
    const int keep = seq[p].mcc;
    for (int c : mccs) {
      if (c == keep) continue;
      seq[p].mcc = c;
      best = std::min(best, brute_force(m, seq, mccs, budget - 1, direction, p + 1));
    }
    seq[p].mcc = keep;
  }
  return best;
}

AttackConfig toy_config(int budget, int candidates) {
  AttackConfig c;
  c.budget.max_edits = budget;
  c.candidates = candidates;
  c.beam_candidates = candidates;
  c.beam_width = 20;
  c.seed = 17;
  return c;
}

std::shared_ptr<GruModel> random_gru(const Dataset& ds, uint64_t seed) {
  GruHyper h;
  h.hidden = 8;
  h.init_scale = 2.0;
  h.seed = seed;
  const auto cards = channel_cardinalities(ds.n_mcc, ds.n_currency);
  return std::make_shared<GruModel>(fit_amount_binner(ds), cards, h, init_gru_params(cards, h));
}

}  // namespace

TEST(ToyOracle, GreedyAndBeamReachTheBruteForceOptimum) {
  const MccCatalog cat = toy_catalog(4, {0, 1, 2, 3});
  const ToyScorer scorer(0);
  const auto seq = make_sequence("toy", std::vector<int>(10, 0));
  ASSERT_EQ(scorer.score(seq.transactions), 1.0);
  const double opt = brute_force(scorer, seq.transactions, {0, 1, 2, 3}, 3, -1);
  EXPECT_NEAR(opt, 0.7, 1e-15);
  const auto g = greedy_attack(scorer, seq, cat, toy_config(3, 200), -1);
  EXPECT_EQ(AttackObjective::value(g.attacked_score, -1), opt);
  const auto b = beam_sampling_attack(scorer, seq, cat, toy_config(3, 200), -1);
  EXPECT_EQ(AttackObjective::value(b.attacked_score, -1), opt);
}

TEST(ToyOracle, PairScorerOptimumInBothDirections) {
  const MccCatalog cat = toy_catalog(4, {0, 1, 2, 3});
  const PairScorer scorer;
  const auto seq = make_sequence("pair", {1, 2, 0, 0, 1, 0});
  for (int dir : {-1, 1}) {
    const double opt = brute_force(scorer, seq.transactions, {0, 1, 2, 3}, 2, dir);
    const auto b = beam_sampling_attack(scorer, seq, cat, toy_config(2, 400), dir);
    EXPECT_NEAR(AttackObjective::value(b.attacked_score, dir), opt, 1e-15) << dir;
    EXPECT_NEAR(AttackObjective::value(scorer.score(apply_edits(seq, b.edits).transactions), dir), opt, 1e-15);
    const auto g = greedy_attack(scorer, seq, cat, toy_config(2, 400), dir);
    EXPECT_NEAR(AttackObjective::value(g.attacked_score, dir), opt, 1e-15) << dir;
  }
}

TEST(Greedy, BeamOfWidthOneIsGreedy) {
  const Dataset ds = txadv::testing::small_dataset(40, 50);
  const MccCatalog cat = build_catalog(ds);
  const ToyScorer scorer(cat.frequency_order()[0]);
  AttackConfig c = toy_config(6, 50);
  c.beam_width = 1;
  for (int i = 0; i < 10; ++i) {
    const auto& s = ds.sequences[static_cast<size_t>(i)];
    const auto g = greedy_attack(scorer, s, cat, c, -1);
    const auto b = beam_sampling_attack(scorer, s, cat, c, -1);
    EXPECT_EQ(g.edits, b.edits);
    EXPECT_EQ(g.attacked_score, b.attacked_score);
  }
}

TEST(Greedy, SmallerBudgetsArePrefixes) {
  const Dataset ds = txadv::testing::small_dataset(40, 50);
  const MccCatalog cat = build_catalog(ds);
  const ToyScorer scorer(cat.frequency_order()[1]);
  for (int i = 0; i < 10; ++i) {
    const auto& s = ds.sequences[static_cast<size_t>(i)];
    const auto full = greedy_attack(scorer, s, cat, toy_config(10, 30), 1);
    for (int b : {0, 3, 5}) {
      const auto part = greedy_attack(scorer, s, cat, toy_config(b, 30), 1);
      const EditList lists[] = {full.edits};
      EXPECT_EQ(part.edits, truncate_edits(lists, b)[0]);
    }
  }
}

TEST(Greedy, TrajectoryDecreasesAndEvaluationsAreBounded) {
  const Dataset ds = txadv::testing::small_dataset(40, 50);
  const MccCatalog cat = build_catalog(ds);
  const ToyScorer scorer(cat.frequency_order()[0]);
  for (const auto& s : ds.sequences) {
    const auto a = greedy_attack(scorer, s, cat, toy_config(10, 25), -1);
    ASSERT_EQ(a.trajectory.size(), a.edits.edits.size() + 1);
    for (size_t k = 1; k < a.trajectory.size(); ++k) EXPECT_LT(a.trajectory[k], a.trajectory[k - 1]);
    EXPECT_LE(a.evaluations, 25 * 10 + 1);
    EXPECT_LE(a.attacked_score, a.clean_score);
    EXPECT_TRUE(validate_edits(s, a.edits, AttackBudget{}, cat).ok());
  }
}

TEST(RandomAttack, DistinctPositionsAndEmptyAtZeroBudget) {
  const Dataset ds = txadv::testing::small_dataset(40, 50);
  const MccCatalog cat = build_catalog(ds);
  for (const auto& s : ds.sequences) {
    const EditList el = random_attack(s, cat, toy_config(10, 1));
    ASSERT_EQ(el.edits.size(), 10u);
    std::set<int> pos;
    for (const auto& e : el.edits) pos.insert(e.position);
    EXPECT_EQ(pos.size(), 10u);
    EXPECT_TRUE(validate_edits(s, el, AttackBudget{}, cat).ok());
    EXPECT_TRUE(random_attack(s, cat, toy_config(0, 1)).edits.empty());
  }
  const auto shorty = make_sequence("short", {1, 2, 3});
  EXPECT_EQ(random_attack(shorty, toy_catalog(4, {1, 2, 3}), toy_config(10, 1)).edits.size(), 3u);
}

TEST(Sampler, GenModeStaysAtOrBelowTheMedianFrequency) {
  const Dataset ds = txadv::testing::small_dataset(60, 60);
  const MccCatalog cat = build_catalog(ds);
  const CandidateSampler gen(cat, SamplerMode::kGen, 0.95);
  Rng rng(3);
  for (int k = 0; k < 2000; ++k) {
    const Edit e = gen.sample(60, {}, rng);
    EXPECT_LE(static_cast<double>(cat.stats(e.new_mcc).frequency), cat.median_frequency());
    EXPECT_TRUE(gen.interval(e.new_mcc).contains(e.new_amount));
  }
}

TEST(Sampler, UniformModeCoversMccsEvenly) {
  const Dataset ds = txadv::testing::small_dataset(60, 60);
  const MccCatalog cat = build_catalog(ds);
  const CandidateSampler uni(cat, SamplerMode::kUniform, 0.95);
  const auto& elig = uni.eligible_mccs();
  ASSERT_EQ(elig.size(), cat.observed_mccs().size());
  Rng rng(4);
  std::map<int, int> counts;
  std::map<int, int> positions;
  const int n = 30000;
  for (int k = 0; k < n; ++k) {
    const Edit e = uni.sample(60, {}, rng);
    ++counts[e.new_mcc];
    ++positions[e.position];
  }
  auto chi2 = [](const std::map<int, int>& c, size_t cells, int total) {
    const double expect = static_cast<double>(total) / static_cast<double>(cells);
    double x = 0.0;
    for (const auto& [k, v] : c) x += (v - expect) * (v - expect) / expect;
    x += static_cast<double>(cells - c.size()) * expect;
    return x;
  };
  // Wilson-Hilferty upper 0.1% point of chi-square.
  auto crit = [](double df) { return df * std::pow(1 - 2 / (9 * df) + 3.09 * std::sqrt(2 / (9 * df)), 3); };
  const double df_m = static_cast<double>(elig.size()) - 1;
  EXPECT_LT(chi2(counts, elig.size(), n), crit(df_m));
  EXPECT_LT(chi2(positions, 60, n), crit(59));
}

TEST(Sampler, EditedPositionsAreNeverResampled) {
  const MccCatalog cat = toy_catalog(4, {0, 1, 2, 3});
  const CandidateSampler uni(cat, SamplerMode::kUniform, 0.95);
  std::vector<char> edited(8, 1);
  edited[5] = 0;
  Rng rng(1);
  for (int k = 0; k < 50; ++k) EXPECT_EQ(uni.sample(8, edited, rng).position, 5);
  std::fill(edited.begin(), edited.end(), 1);
  EXPECT_THROW(uni.sample(8, edited, rng), Error);
}

TEST(Baseline, RepresentativesAreLeftAloneAndAppendsAreCapped) {
  const Dataset ds = txadv::testing::small_dataset(30, 50);
  const MccCatalog cat = build_catalog(ds);
  const ToyScorer scorer(cat.frequency_order()[0]);
  std::vector<ClientSequence> two{ds.sequences[0]};
  for (const auto& s : ds.sequences)
    if (scorer.score(s.transactions) != scorer.score(two[0].transactions)) {
      two.push_back(s);
      break;
    }
  ASSERT_EQ(two.size(), 2u);
  const auto r2 = baseline_transplant_attack(scorer, two, cat, AttackBudget{});
  for (const auto& el : r2.edits) EXPECT_TRUE(el.edits.empty());
  const auto r = baseline_transplant_attack(scorer, ds.sequences, cat, AttackBudget{});
  size_t nonempty = 0;
  for (size_t i = 0; i < ds.size(); ++i) {
    EXPECT_LE(r.edits[i].edits.size(), 10u);
    nonempty += !r.edits[i].edits.empty();
    for (const auto& e : r.edits[i].edits) EXPECT_EQ(e.kind, EditKind::kAppend);
    EXPECT_TRUE(validate_edits(ds.sequences[i], r.edits[i], AttackBudget{}, cat).ok());
  }
  EXPECT_EQ(nonempty, ds.size() - 2);
}

TEST(Gradient, StepMustBePositive) {
  const Dataset ds = txadv::testing::small_dataset(20, 30);
  const MccCatalog cat = build_catalog(ds);
  const auto gru = random_gru(ds, 5);
  AttackConfig c = toy_config(10, 1);
  c.gradient_step = 0.0;
  EXPECT_THROW(gradient_attack(*gru, ds.sequences[0], cat, c, -1), Error);
  const ModelPtr toy = std::make_shared<ToyScorer>(1);
  const ModelPtr ms[] = {toy};
  c.gradient_step = 1.0;
  EXPECT_THROW(run_attack(AttackKind::kGradient, ms, {}, ds.sequences, cat, c), Error);
}

TEST(Gradient, EditsAreValidAndImprove) {
  const Dataset ds = txadv::testing::small_dataset(20, 30);
  const MccCatalog cat = build_catalog(ds);
  const auto gru = random_gru(ds, 6);
  AttackConfig c = toy_config(10, 1);
  c.gradient_step = 5.0;
  for (int i = 0; i < 5; ++i) {
    const auto& s = ds.sequences[static_cast<size_t>(i)];
    const auto a = gradient_attack(*gru, s, cat, c, 1);
    EXPECT_TRUE(validate_edits(s, a.edits, AttackBudget{}, cat).ok());
    EXPECT_GE(a.attacked_score, a.clean_score);
    EXPECT_DOUBLE_EQ(gru->score(apply_edits(s, a.edits).transactions), a.attacked_score);
  }
}

TEST(RunAttack, CombinedWithOneModelIsGreedy) {
  const Dataset ds = txadv::testing::small_dataset(30, 40);
  const MccCatalog cat = build_catalog(ds);
  const ModelPtr m = std::make_shared<ToyScorer>(cat.frequency_order()[0]);
  const ModelPtr ms[] = {m};
  const auto g = run_attack(AttackKind::kGreedy, ms, {}, ds.sequences, cat, toy_config(4, 20));
  const auto c = run_attack(AttackKind::kCombined, ms, {}, ds.sequences, cat, toy_config(4, 20));
  EXPECT_EQ(g.edits, c.edits);
  EXPECT_EQ(g.tau, c.tau);
}

TEST(RunAttack, RandomChoiceSplitsRoughlyEvenly) {
  Dataset ds;
  ds.n_mcc = 4;
  ds.n_currency = 1;
  for (int i = 0; i < 1000; ++i) {
    ds.sequences.push_back(make_sequence("c" + std::to_string(i), {0, 1, 2, 3}));
    ds.split_tags.push_back(SplitTag::kPublic);
  }
  const MccCatalog cat = build_catalog(ds);
  const ModelPtr ms[] = {std::make_shared<ConstantModel>(0.2), std::make_shared<ConstantModel>(0.4)};
  const auto r = run_attack(AttackKind::kCombined, ms, {}, ds.sequences, cat, toy_config(2, 3), 1, true);
  int first = 0;
  for (int p : r.header.at("picks")) first += p == 0;
  EXPECT_NEAR(first, 500, 60);
  const ModelPtr one[] = {ms[0]};
  EXPECT_THROW(run_attack(AttackKind::kCombined, one, {}, ds.sequences, cat, toy_config(2, 3), 1, true), Error);
}

TEST(RunAttack, WorkerCountDoesNotChangeResults) {
  const Dataset ds = txadv::testing::small_dataset(40, 40);
  const MccCatalog cat = build_catalog(ds);
  std::vector<double> y;
  for (const auto& s : ds.sequences) y.push_back(*s.label);
  GbdtParams p;
  p.n_trees = 10;
  const ModelPtr m = train_gbdt_model(ds.sequences, y, AggregateSpec::full(cat), {}, p);
  const ModelPtr ms[] = {m};
  for (AttackKind k : {AttackKind::kRandom, AttackKind::kGreedy, AttackKind::kBeam, AttackKind::kBaseline}) {
    AttackConfig c = toy_config(5, 20);
    c.beam_candidates = 40;
    c.beam_width = 4;
    const auto a = run_attack(k, ms, {}, ds.sequences, cat, c, 1);
    const auto b = run_attack(k, ms, {}, ds.sequences, cat, c, 4);
    EXPECT_EQ(a.edits, b.edits) << attack_kind_name(k);
    EXPECT_EQ(a.attacked_scores, b.attacked_scores);
    EXPECT_EQ(a.header.dump(), b.header.dump());
  }
}

TEST(RunAttack, OutputsPassTheValidator) {
  const Dataset ds = txadv::testing::small_dataset(50, 40);
  const MccCatalog cat = build_catalog(ds);
  const auto gru = random_gru(ds, 2);
  const ModelPtr ms[] = {gru, std::make_shared<ToyScorer>(cat.frequency_order()[0])};
  for (AttackKind k : {AttackKind::kRandom, AttackKind::kGreedy, AttackKind::kBeam, AttackKind::kGradient,
                       AttackKind::kCombined, AttackKind::kBaseline})
    for (SamplerMode mode : {SamplerMode::kUniform, SamplerMode::kGen}) {
      AttackConfig c = toy_config(7, 10);
      c.beam_candidates = 20;
      c.beam_width = 3;
      c.sampler = mode;
      const auto r = run_attack(k, ms, {}, ds.sequences, cat, c);
      for (size_t i = 0; i < ds.size(); ++i)
        EXPECT_TRUE(validate_edits(ds.sequences[i], r.edits[i], c.budget, cat).ok()) << attack_kind_name(k);
    }
}

TEST(Objective, FlipDirectionAroundTau) {
  AttackObjective o;
  o.tau = 0.3;
  EXPECT_EQ(o.direction(0.5), -1);
  EXPECT_EQ(o.direction(0.3), -1);
  EXPECT_EQ(o.direction(0.1), 1);
  o.mode = ObjectiveMode::kBoost;
  EXPECT_EQ(o.direction(0.9), 1);
  EXPECT_EQ(parse_objective(objective_name(ObjectiveMode::kSuppress)), ObjectiveMode::kSuppress);
  EXPECT_THROW(parse_attack_kind("nope"), Error);
  EXPECT_EQ(AttackConfig::from_json(toy_config(3, 9).to_json()).to_json(), toy_config(3, 9).to_json());
}
