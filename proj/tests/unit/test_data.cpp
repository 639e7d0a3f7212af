#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <sstream>

#include "support/fixtures.hpp"
#include "txadv/error.hpp"
#include "txadv/io.hpp"

using namespace txadv;
using txadv::testing::make_sequence;
using txadv::testing::toy_catalog;

TEST(Synthetic, SameSeedSameBytes) {
  SynthConfig c;
  c.n_clients = 50;
  c.seed = 7;
  std::ostringstream a, b;
  io::write_dataset(a, generate_synthetic(c));
  io::write_dataset(b, generate_synthetic(c));
  EXPECT_EQ(a.str(), b.str());
  c.seed = 8;
  std::ostringstream d;
  io::write_dataset(d, generate_synthetic(c));
  EXPECT_NE(a.str(), d.str());
}

TEST(Synthetic, LabelRateWithinBinomialBand) {
  SynthConfig c;
  c.n_clients = 2000;
  c.default_rate = 0.04;
  c.seed = 1;
  const Dataset ds = generate_synthetic(c);
  double mean = 0.0;
  for (const auto& s : ds.sequences) mean += *s.label;
  mean /= ds.size();
  const double sd = std::sqrt(0.04 * 0.96 / 2000.0);
  EXPECT_NEAR(mean, 0.04, 4.5 * sd);
  EXPECT_GE(mean, 0.02);
  EXPECT_LE(mean, 0.06);
}

TEST(Synthetic, SatisfiesDatasetInvariants) {
  SynthConfig c;
  c.n_clients = 100;
  const Dataset ds = generate_synthetic(c);
  EXPECT_NO_THROW(ds.validate());
  for (const auto& s : ds.sequences) {
    EXPECT_EQ(s.transactions.size(), 300u);
    EXPECT_TRUE(is_time_sorted(s.transactions));
  }
}

TEST(Synthetic, RejectsInvalidConfig) {
  SynthConfig c;
  c.n_clients = 0;
  EXPECT_THROW(generate_synthetic(c), Error);
  c = SynthConfig{};
  c.signal_strength = 1.5;
  EXPECT_THROW(generate_synthetic(c), Error);
}

TEST(Dataset, ValidateCatchesBrokenInvariants) {
  Dataset ds;
  ds.n_mcc = 5;
  ds.n_currency = 1;
  ds.sequences = {make_sequence("a", {1, 2}), make_sequence("a", {1})};
  ds.split_tags.assign(2, SplitTag::kTrain);
  EXPECT_THROW(ds.validate(), Error);
  ds.sequences[1].client_id = "b";
  EXPECT_NO_THROW(ds.validate());
  std::swap(ds.sequences[0].transactions[0], ds.sequences[0].transactions[1]);
  EXPECT_THROW(ds.validate(), Error);
  std::swap(ds.sequences[0].transactions[0], ds.sequences[0].transactions[1]);
  ds.sequences[0].transactions[0].mcc = 9;
  EXPECT_THROW(ds.validate(), Error);
}

TEST(Catalog, DirectMinMaxAndFrequency) {
  Dataset ds;
  ds.n_mcc = 5;
  ds.n_currency = 1;
  ClientSequence s = make_sequence("a", {3, 3, 3, 1});
  s.transactions[0].amount = 5;
  s.transactions[1].amount = 9;
  s.transactions[2].amount = 7;
  ds.sequences = {s};
  ds.split_tags = {SplitTag::kTrain};
  const MccCatalog cat = build_catalog(ds);
  EXPECT_TRUE(cat.observed(3));
  EXPECT_EQ(cat.stats(3).amount_min, 5.0);
  EXPECT_EQ(cat.stats(3).amount_max, 9.0);
  EXPECT_EQ(cat.stats(3).frequency, 3);
  EXPECT_FALSE(cat.observed(0));
  EXPECT_THROW(allowed_amount_interval(cat, 0, 0.95), Error);
}

TEST(Catalog, MatchesSinglePassScan) {
  SynthConfig c;
  c.n_clients = 300;
  const Dataset ds = generate_synthetic(c);
  const MccCatalog cat = build_catalog(ds);
  std::map<int, std::tuple<double, double, int64_t>> scan;
  for (const auto& s : ds.sequences)
    for (const auto& t : s.transactions) {
      auto [it, fresh] = scan.try_emplace(t.mcc, t.amount, t.amount, 0);
      auto& [lo, hi, n] = it->second;
      lo = std::min(lo, t.amount);
      hi = std::max(hi, t.amount);
      ++n;
    }
  for (int m = 0; m < ds.n_mcc; ++m) {
    auto it = scan.find(m);
    ASSERT_EQ(cat.observed(m), it != scan.end()) << m;
    if (it == scan.end()) continue;
    EXPECT_EQ(cat.stats(m).amount_min, std::get<0>(it->second));
    EXPECT_EQ(cat.stats(m).amount_max, std::get<1>(it->second));
    EXPECT_EQ(cat.stats(m).frequency, std::get<2>(it->second));
    EXPECT_LE(cat.stats(m).samples.size(), MccCatalog::kReservoirSize);
    EXPECT_TRUE(std::is_sorted(cat.stats(m).samples.begin(), cat.stats(m).samples.end()));
  }
}

TEST(Catalog, FrequencyOrderAndMedian) {
  Dataset ds;
  ds.n_mcc = 4;
  ds.n_currency = 1;
  ds.sequences = {make_sequence("a", {2, 2, 2, 0, 0, 1})};
  ds.split_tags = {SplitTag::kTrain};
  const MccCatalog cat = build_catalog(ds);
  EXPECT_EQ(cat.frequency_order().front(), 2);
  EXPECT_EQ(cat.frequency_rank(2), 0);
  EXPECT_EQ(cat.frequency_rank(0), 1);
  EXPECT_DOUBLE_EQ(cat.median_frequency(), 2.0);
}

TEST(AmountInterval, ShrinksAboutTheMidpoint) {
  Dataset ds;
  ds.n_mcc = 3;
  ds.n_currency = 1;
  ClientSequence s = make_sequence("a", {0, 0, 1, 2, 2});
  s.transactions[0].amount = 0;
  s.transactions[1].amount = 100;
  s.transactions[2].amount = 10;
  s.transactions[3].amount = 10;
  s.transactions[4].amount = 100;
  ds.sequences = {s};
  ds.split_tags = {SplitTag::kTrain};
  const MccCatalog cat = build_catalog(ds);
  auto iv = allowed_amount_interval(cat, 0, 0.95);
  EXPECT_DOUBLE_EQ(iv.lo, 2.5);
  EXPECT_DOUBLE_EQ(iv.hi, 97.5);
  iv = allowed_amount_interval(cat, 1, 0.5);
  EXPECT_EQ(iv.lo, 10.0);
  EXPECT_EQ(iv.hi, 10.0);
  iv = allowed_amount_interval(cat, 2, 0.95);
  EXPECT_DOUBLE_EQ(iv.lo, 12.25);
  EXPECT_DOUBLE_EQ(iv.hi, 97.75);
}

TEST(ApplyEdits, EmptyIsIdentity) {
  const ClientSequence s = make_sequence("a", {1, 2, 3});
  EXPECT_EQ(apply_edits(s, EditList{"a", {}}), s);
}

TEST(ApplyEdits, SubstituteTouchesOnlyMccAndAmount) {
  const ClientSequence s = make_sequence("a", {1, 2, 3});
  const ClientSequence e = apply_edits(s, EditList{"a", {Edit::substitute(0, 2, 5.0)}});
  EXPECT_EQ(e.transactions[0].mcc, 2);
  EXPECT_EQ(e.transactions[0].amount, 5.0);
  EXPECT_EQ(e.transactions[0].timestamp, s.transactions[0].timestamp);
  EXPECT_EQ(e.transactions[0].currency, s.transactions[0].currency);
  for (size_t i = 1; i < 3; ++i) EXPECT_EQ(e.transactions[i], s.transactions[i]);
  EXPECT_EQ(s.transactions[0].mcc, 1);
}

TEST(ApplyEdits, AppendsGoToTheEndInOrder) {
  ClientSequence s = make_sequence("a", std::vector<int>(300, 1));
  EditList el{"a", {Edit::append(2, 3.0), Edit::append(3, 4.0), Edit::append(4, 5.0)}};
  const ClientSequence e = apply_edits(s, el);
  ASSERT_EQ(e.transactions.size(), 303u);
  EXPECT_EQ(e.transactions[300].mcc, 2);
  EXPECT_EQ(e.transactions[301].mcc, 3);
  EXPECT_EQ(e.transactions[302].mcc, 4);
  EXPECT_EQ(e.transactions[302].timestamp, s.transactions.back().timestamp);
  EXPECT_TRUE(is_time_sorted(e.transactions));
}

class Validator : public ::testing::Test {
 protected:
  MccCatalog cat = toy_catalog(6, {0, 1, 2, 3, 4});
  ClientSequence seq = make_sequence("c", std::vector<int>(20, 0));
  AttackBudget budget;
};

TEST_F(Validator, ElevenEditsExceedTheBudget) {
  EditList el{"c", {}};
  for (int i = 0; i < 11; ++i) el.edits.push_back(Edit::substitute(i, 1, 50.0));
  const auto rep = validate_edits(seq, el, budget, cat);
  EXPECT_TRUE(rep.has(ViolationKind::kBudgetExceeded));
  el.edits.pop_back();
  EXPECT_TRUE(validate_edits(seq, el, budget, cat).ok());
}

TEST_F(Validator, BoundsAreClosed) {
  const auto iv = allowed_amount_interval(cat, 1, budget.amount_shrink);
  EXPECT_TRUE(validate_edits(seq, {"c", {Edit::substitute(0, 1, iv.lo), Edit::substitute(1, 1, iv.hi)}}, budget, cat).ok());
  const auto rep = validate_edits(seq, {"c", {Edit::substitute(0, 1, std::nextafter(iv.hi, 1e9))}}, budget, cat);
  EXPECT_TRUE(rep.has(ViolationKind::kAmountOutOfInterval));
  EXPECT_TRUE(validate_edits(seq, {"c", {Edit::append(1, 1.0)}}, budget, cat).has(ViolationKind::kAmountOutOfInterval));
}

TEST_F(Validator, CatchesEveryClass) {
  EXPECT_TRUE(validate_edits(seq, {"c", {Edit::substitute(20, 1, 50.0)}}, budget, cat).has(ViolationKind::kBadPosition));
  EXPECT_TRUE(validate_edits(seq, {"c", {Edit::substitute(-1, 1, 50.0)}}, budget, cat).has(ViolationKind::kBadPosition));
  EXPECT_TRUE(validate_edits(seq, {"c", {Edit::substitute(3, 1, 50.0), Edit::substitute(3, 2, 50.0)}}, budget, cat)
                  .has(ViolationKind::kDuplicatePosition));
  EXPECT_TRUE(validate_edits(seq, {"c", {Edit::substitute(3, 5, 50.0)}}, budget, cat).has(ViolationKind::kUnobservedMcc));
  EXPECT_TRUE(validate_edits(seq, {"other", {}}, budget, cat).has(ViolationKind::kClientMismatch));
  EXPECT_TRUE(validate_edits(seq, {"c", {Edit::substitute(3, 1, std::nan(""))}}, budget, cat)
                  .has(ViolationKind::kAmountOutOfInterval));
}

TEST(Split, StratifiesDefaults) {
  Dataset ds;
  ds.n_mcc = 3;
  ds.n_currency = 1;
  for (int i = 0; i < 100; ++i) {
    ds.sequences.push_back(make_sequence("c" + std::to_string(i), {1}));
    ds.sequences.back().label = i < 4 ? 1 : 0;
  }
  ds.split_tags.assign(100, SplitTag::kPublic);
  const auto halves = split_public_private(ds, 5);
  auto defaults = [&](const std::vector<size_t>& h) {
    int n = 0;
    for (size_t i : h) n += *ds.sequences[i].label;
    return n;
  };
  EXPECT_EQ(defaults(halves.public_half), 2);
  EXPECT_EQ(defaults(halves.private_half), 2);
  EXPECT_EQ(halves.public_half.size(), 50u);
  const auto again = split_public_private(ds, 5);
  EXPECT_EQ(again.public_half, halves.public_half);
}

TEST(Split, OddCountSizesDifferByOne) {
  Dataset ds;
  ds.n_mcc = 3;
  ds.n_currency = 1;
  for (int i = 0; i < 101; ++i) {
    ds.sequences.push_back(make_sequence("c" + std::to_string(i), {1}));
    ds.sequences.back().label = i % 7 == 0;
  }
  ds.split_tags.assign(101, SplitTag::kPublic);
  const auto h = split_public_private(ds, 1);
  EXPECT_EQ(std::min(h.public_half.size(), h.private_half.size()), 50u);
  EXPECT_EQ(std::max(h.public_half.size(), h.private_half.size()), 51u);
  std::vector<size_t> all = h.public_half;
  all.insert(all.end(), h.private_half.begin(), h.private_half.end());
  std::sort(all.begin(), all.end());
  for (size_t i = 0; i < all.size(); ++i) EXPECT_EQ(all[i], i);

  Dataset one = ds.subset(std::vector<size_t>{0});
  EXPECT_THROW(split_public_private(one, 1), Error);
}

TEST(Split, AssignSplitsTagsEveryClient) {
  Dataset ds = generate_synthetic(txadv::testing::small_synth(400));
  assign_splits(ds, 0.5, 9);
  const size_t train = ds.indices_with(SplitTag::kTrain).size();
  const size_t pub = ds.indices_with(SplitTag::kPublic).size();
  const size_t priv = ds.indices_with(SplitTag::kPrivate).size();
  EXPECT_EQ(train + pub + priv, 400u);
  EXPECT_NEAR(static_cast<double>(train), 200.0, 1.0);
  EXPECT_LE(std::max(pub, priv) - std::min(pub, priv), 1u);
  EXPECT_EQ(ds.test_indices().size(), pub + priv);
}

TEST(Io, DatasetRoundTrip) {
  const Dataset ds = txadv::testing::small_dataset(40, 20);
  std::stringstream ss;
  io::write_dataset(ss, ds);
  EXPECT_EQ(io::read_dataset(ss), ds);
}

TEST(Io, EditFileRoundTrip) {
  io::EditFile f;
  f.header = Json{{"attack", "greedy"}, {"seed", 4}};
  f.lists = {{"a", {Edit::substitute(3, 1, 12.34), Edit::append(2, 0.1)}}, {"b", {}}};
  std::stringstream ss;
  io::write_edit_file(ss, f);
  const io::EditFile g = io::read_edit_file(ss);
  EXPECT_EQ(g.lists, f.lists);
  EXPECT_EQ(g.header["attack"], "greedy");
}

TEST(Io, MalformedInputIsAnError) {
  std::stringstream ss("{\"not\": \"a dataset\"}\n");
  EXPECT_THROW(io::read_dataset(ss), Error);
}
