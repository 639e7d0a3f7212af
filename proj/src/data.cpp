#include "txadv/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <set>
#include <unordered_set>

#include "txadv/error.hpp"
#include "txadv/random.hpp"

namespace txadv {

const char* split_name(SplitTag tag) {
  switch (tag) {
    case SplitTag::kTrain:
      return "train";
    case SplitTag::kPublic:
      return "public";
    case SplitTag::kPrivate:
      return "private";
  }
  return "?";
}

SplitTag parse_split(const std::string& name) {
  if (name == "train") return SplitTag::kTrain;
  if (name == "public") return SplitTag::kPublic;
  if (name == "private") return SplitTag::kPrivate;
  throw Error("unknown split tag '" + name + "'");
}

std::vector<size_t> Dataset::indices_with(SplitTag tag) const {
  std::vector<size_t> out;
  for (size_t i = 0; i < split_tags.size(); ++i)
    if (split_tags[i] == tag) out.push_back(i);
  return out;
}

std::vector<size_t> Dataset::test_indices() const {
  std::vector<size_t> out;
  for (size_t i = 0; i < split_tags.size(); ++i)
    if (split_tags[i] != SplitTag::kTrain) out.push_back(i);
  return out;
}

Dataset Dataset::subset(std::span<const size_t> indices) const {
  Dataset out;
  out.n_mcc = n_mcc;
  out.n_currency = n_currency;
  out.sequences.reserve(indices.size());
  out.split_tags.reserve(indices.size());
  for (size_t i : indices) {
    out.sequences.push_back(sequences.at(i));
    out.split_tags.push_back(i < split_tags.size() ? split_tags[i] : SplitTag::kTrain);
  }
  return out;
}

std::vector<int> Dataset::labels() const {
  std::vector<int> out;
  out.reserve(sequences.size());
  for (const auto& s : sequences) {
    if (!s.label) throw Error("client " + s.client_id + " has no label");
    out.push_back(*s.label);
  }
  return out;
}

bool is_time_sorted(std::span<const Transaction> transactions) {
  for (size_t i = 1; i < transactions.size(); ++i)
    if (transactions[i].timestamp < transactions[i - 1].timestamp) return false;
  return true;
}

void Dataset::validate() const {
  if (split_tags.size() != sequences.size()) throw Error("split tags do not match sequence count");
  std::unordered_set<std::string> ids;
  for (const auto& s : sequences) {
    if (!ids.insert(s.client_id).second) throw Error("duplicate client id " + s.client_id);
    if (s.transactions.empty()) throw Error("client " + s.client_id + " has no transactions");
    if (!is_time_sorted(s.transactions))
      throw Error("client " + s.client_id + " transactions are not time-sorted");
    if (s.label && *s.label != 0 && *s.label != 1)
      throw Error("client " + s.client_id + " label is not binary");
    for (const auto& t : s.transactions) {
      if (t.mcc < 0 || t.mcc >= n_mcc) throw Error("client " + s.client_id + " mcc out of range");
      if (t.currency < 0 || t.currency >= n_currency)
        throw Error("client " + s.client_id + " currency out of range");
      if (!(t.amount >= 0.0) || !std::isfinite(t.amount))
        throw Error("client " + s.client_id + " has a negative or non-finite amount");
    }
  }
}

MccCatalog::MccCatalog(int n_mcc, int n_currency, std::vector<MccStats> stats)
    : n_mcc_(n_mcc), n_currency_(n_currency), stats_(std::move(stats)) {
  if (static_cast<int>(stats_.size()) != n_mcc_) throw Error("catalog size does not match n_mcc");
  std::vector<int64_t> observed_freq;
  for (int m = 0; m < n_mcc_; ++m) {
    const auto& s = stats_[static_cast<size_t>(m)];
    total_count_ += s.frequency;
    if (s.observed) {
      if (s.amount_min > s.amount_max) throw Error("catalog interval inverted");
      observed_.push_back(m);
      observed_freq.push_back(s.frequency);
    }
  }
  by_frequency_.resize(static_cast<size_t>(n_mcc_));
  std::iota(by_frequency_.begin(), by_frequency_.end(), 0);
  std::stable_sort(by_frequency_.begin(), by_frequency_.end(), [&](int a, int b) {
    return stats_[static_cast<size_t>(a)].frequency > stats_[static_cast<size_t>(b)].frequency;
  });
  rank_.assign(static_cast<size_t>(n_mcc_), 0);
  for (size_t r = 0; r < by_frequency_.size(); ++r) rank_[static_cast<size_t>(by_frequency_[r])] = static_cast<int>(r);
  if (!observed_freq.empty()) {
    std::sort(observed_freq.begin(), observed_freq.end());
    const size_t n = observed_freq.size();
    median_frequency_ = n % 2 ? static_cast<double>(observed_freq[n / 2])
                              : 0.5 * static_cast<double>(observed_freq[n / 2 - 1] + observed_freq[n / 2]);
  }
}

bool MccCatalog::observed(int mcc) const {
  return mcc >= 0 && mcc < n_mcc_ && stats_[static_cast<size_t>(mcc)].observed;
}

double MccCatalog::amount_percentile(int mcc, double x) const {
  if (!observed(mcc)) return 0.5;
  const auto& s = stats_[static_cast<size_t>(mcc)].samples;
  if (s.empty()) return 0.5;
  const auto it = std::upper_bound(s.begin(), s.end(), x);
  return static_cast<double>(it - s.begin()) / static_cast<double>(s.size());
}

void AttackBudget::validate() const {
  if (max_edits < 0) throw Error("max_edits must be nonnegative");
  if (!(amount_shrink > 0.0 && amount_shrink <= 1.0)) throw Error("amount_shrink must lie in (0, 1]");
}

void SynthConfig::validate() const {
  if (n_clients < 1) throw Error("n_clients must be at least 1");
  if (seq_len < 1) throw Error("seq_len must be at least 1");
  if (n_mcc < 2) throw Error("n_mcc must be at least 2");
  if (n_currency < 1) throw Error("n_currency must be at least 1");
  if (!(default_rate > 0.0 && default_rate < 1.0)) throw Error("default_rate must lie in (0, 1)");
  if (!(signal_strength >= 0.0 && signal_strength <= 1.0))
    throw Error("signal_strength must lie in [0, 1]");
}

const char* violation_name(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::kBudgetExceeded:
      return "budget exceeded";
    case ViolationKind::kBadPosition:
      return "bad position";
    case ViolationKind::kDuplicatePosition:
      return "duplicate position";
    case ViolationKind::kUnobservedMcc:
      return "unobserved mcc";
    case ViolationKind::kAmountOutOfInterval:
      return "amount outside allowed interval";
    case ViolationKind::kClientMismatch:
      return "client mismatch";
  }
  return "?";
}

bool ValidationReport::has(ViolationKind kind) const {
  return std::any_of(violations.begin(), violations.end(),
                     [&](const Violation& v) { return v.kind == kind; });
}

namespace {

constexpr int64_t kEpochStart = 1672531200;  // 2023-01-01T00:00:00Z
constexpr int64_t kDay = 86400;

// Daytime-peaked hour-of-day weights.
constexpr double kHourProfile[24] = {0.3, 0.2, 0.15, 0.1, 0.1, 0.2, 0.5, 1.0, 1.6, 2.0, 2.2, 2.4,
                                     2.6, 2.5, 2.3, 2.2, 2.2, 2.4, 2.6, 2.5, 2.0, 1.5, 1.0, 0.6};

// Each transaction of a defaulter is distressed with this probability; the
// risk MCCs sit mid-table so they are neither noise nor dominant.
constexpr double kDistressShare = 0.2;
constexpr double kNightShift = 0.2;

double round_cents(double x) { return std::max(0.01, std::round(x * 100.0) / 100.0); }

}  // namespace

// Clients draw MCCs from a Zipf popularity profile perturbed by per-client
// gamma noise. Every transaction of a defaulter is distressed with
// probability 0.2, scattered over the whole history; a distressed
// transaction takes its MCC from the risk subset with probability
// signal_strength, and the hour of day moves to the night with probability
// 0.2 * signal_strength. With signal_strength = 0 labels are independent of
// every feature.
Dataset generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  const int n_mcc = cfg.n_mcc;
  Rng global(derive_seed(cfg.seed, "synth.global"));

  std::vector<int> rank_to_mcc(static_cast<size_t>(n_mcc));
  std::iota(rank_to_mcc.begin(), rank_to_mcc.end(), 0);
  std::shuffle(rank_to_mcc.begin(), rank_to_mcc.end(), global);
  std::vector<double> popularity(static_cast<size_t>(n_mcc));
  for (int r = 0; r < n_mcc; ++r)
    popularity[static_cast<size_t>(rank_to_mcc[static_cast<size_t>(r)])] = 1.0 / std::pow(r + 1.0, 1.1);

  const int n_risk = std::max(1, n_mcc / 12);
  std::vector<int> risk;
  for (int k = 0; k < n_risk; ++k) {
    const int r = (n_mcc / 4 + 3 * k) % n_mcc;
    risk.push_back(rank_to_mcc[static_cast<size_t>(r)]);
  }

  std::vector<double> mu(static_cast<size_t>(n_mcc)), sigma(static_cast<size_t>(n_mcc));
  for (int m = 0; m < n_mcc; ++m) {
    mu[static_cast<size_t>(m)] = uniform(global, 1.5, 5.5);
    sigma[static_cast<size_t>(m)] = uniform(global, 0.4, 1.0);
  }
  std::discrete_distribution<int> hour_dist(std::begin(kHourProfile), std::end(kHourProfile));

  Dataset ds;
  ds.n_mcc = n_mcc;
  ds.n_currency = cfg.n_currency;
  ds.sequences.resize(static_cast<size_t>(cfg.n_clients));
  ds.split_tags.assign(static_cast<size_t>(cfg.n_clients), SplitTag::kTrain);

  for (int i = 0; i < cfg.n_clients; ++i) {
    Rng rng(derive_seed(cfg.seed, "synth.client", static_cast<uint64_t>(i)));
    ClientSequence& seq = ds.sequences[static_cast<size_t>(i)];
    char id[32];
    std::snprintf(id, sizeof id, "c%06d", i);
    seq.client_id = id;
    const bool defaulter = uniform01(rng) < cfg.default_rate;
    seq.label = defaulter ? 1 : 0;

    std::gamma_distribution<double> pref_noise(1.0, 1.0);
    std::vector<double> prefs(static_cast<size_t>(n_mcc));
    for (int m = 0; m < n_mcc; ++m)
      prefs[static_cast<size_t>(m)] = popularity[static_cast<size_t>(m)] * pref_noise(rng) + 1e-12;
    std::discrete_distribution<int> base_mcc(prefs.begin(), prefs.end());
    const double amount_shift = std::normal_distribution<double>(0.0, 0.3)(rng);
    const int start_day = static_cast<int>(uniform_index(rng, 30));
    const double span_days = uniform(rng, 250.0, 365.0);

    const int T = cfg.seq_len;
    std::vector<int64_t> stamps(static_cast<size_t>(T));
    for (auto& ts : stamps) {
      const int64_t day = start_day + static_cast<int64_t>(uniform(rng, 0.0, span_days));
      const int64_t within = hour_dist(rng) * 3600 + static_cast<int64_t>(uniform_index(rng, 3600));
      ts = kEpochStart + day * kDay + within;
    }
    std::sort(stamps.begin(), stamps.end());

    seq.transactions.resize(static_cast<size_t>(T));
    for (int t = 0; t < T; ++t) {
      Transaction& tx = seq.transactions[static_cast<size_t>(t)];
      const bool distressed = defaulter && uniform01(rng) < kDistressShare;
      int64_t ts = stamps[static_cast<size_t>(t)];
      if (distressed && uniform01(rng) < cfg.signal_strength) {
        tx.mcc = risk[uniform_index(rng, risk.size())];
      } else {
        tx.mcc = base_mcc(rng);
      }
      if (distressed && uniform01(rng) < kNightShift * cfg.signal_strength) {
        const int64_t day_start = ts - ((ts % kDay) + kDay) % kDay;
        ts = day_start + static_cast<int64_t>(uniform_index(rng, 6)) * 3600 + (ts % 3600);
      }
      tx.timestamp = ts;
      const auto m = static_cast<size_t>(tx.mcc);
      tx.amount = round_cents(std::exp(mu[m] + amount_shift + sigma[m] * std::normal_distribution<double>()(rng)));
      tx.currency = (cfg.n_currency == 1 || uniform01(rng) < 0.97)
                        ? 0
                        : 1 + static_cast<int>(uniform_index(rng, static_cast<uint64_t>(cfg.n_currency - 1)));
    }
    std::stable_sort(seq.transactions.begin(), seq.transactions.end(),
                     [](const Transaction& a, const Transaction& b) { return a.timestamp < b.timestamp; });
  }
  return ds;
}

MccCatalog build_catalog(const Dataset& dataset) {
  if (dataset.sequences.empty()) throw Error("cannot build a catalog from an empty dataset");
  std::vector<MccStats> stats(static_cast<size_t>(dataset.n_mcc));
  Rng reservoir_rng(0x5eedcafeULL);
  for (const auto& seq : dataset.sequences) {
    for (const auto& tx : seq.transactions) {
      if (tx.mcc < 0 || tx.mcc >= dataset.n_mcc) throw Error("mcc out of range in catalog build");
      MccStats& s = stats[static_cast<size_t>(tx.mcc)];
      if (!s.observed) {
        s.observed = true;
        s.amount_min = s.amount_max = tx.amount;
      } else {
        s.amount_min = std::min(s.amount_min, tx.amount);
        s.amount_max = std::max(s.amount_max, tx.amount);
      }
      ++s.frequency;
      // Algorithm R reservoir.
      if (s.samples.size() < MccCatalog::kReservoirSize) {
        s.samples.push_back(tx.amount);
      } else {
        const uint64_t j = uniform_index(reservoir_rng, static_cast<uint64_t>(s.frequency));
        if (j < MccCatalog::kReservoirSize) s.samples[j] = tx.amount;
      }
    }
  }
  for (auto& s : stats) std::sort(s.samples.begin(), s.samples.end());
  return MccCatalog(dataset.n_mcc, dataset.n_currency, std::move(stats));
}

AmountInterval allowed_amount_interval(const MccCatalog& catalog, int mcc, double shrink) {
  if (!catalog.observed(mcc))
    throw Error("mcc " + std::to_string(mcc) + " is unobserved: no legal substitution");
  const MccStats& s = catalog.stats(mcc);
  if (s.amount_min == s.amount_max) return {s.amount_min, s.amount_max};
  const double mid = 0.5 * (s.amount_min + s.amount_max);
  const double half = 0.5 * shrink * (s.amount_max - s.amount_min);
  return {mid - half, mid + half};
}

std::vector<Transaction> apply_edits(std::span<const Transaction> transactions,
                                     std::span<const Edit> edits) {
  std::vector<Transaction> out(transactions.begin(), transactions.end());
  const size_t n = transactions.size();
  std::vector<char> used(n, 0);
  for (const Edit& e : edits) {
    if (e.kind != EditKind::kSubstitute) continue;
    if (e.position < 0 || static_cast<size_t>(e.position) >= n)
      throw Error("substitute position " + std::to_string(e.position) + " out of range");
    if (used[static_cast<size_t>(e.position)]++)
      throw Error("duplicate substitute position " + std::to_string(e.position));
    out[static_cast<size_t>(e.position)].mcc = e.new_mcc;
    out[static_cast<size_t>(e.position)].amount = e.new_amount;
  }
  for (const Edit& e : edits) {
    if (e.kind != EditKind::kAppend) continue;
    if (n == 0) throw Error("cannot append to an empty sequence");
    Transaction tx = transactions.back();
    tx.mcc = e.new_mcc;
    tx.amount = e.new_amount;
    out.push_back(tx);
  }
  return out;
}

ClientSequence apply_edits(const ClientSequence& seq, const EditList& edits) {
  ClientSequence out;
  out.client_id = seq.client_id;
  out.label = seq.label;
  out.transactions = apply_edits(seq.transactions, edits.edits);
  return out;
}

ValidationReport validate_edits(const ClientSequence& seq, const EditList& edits,
                                const AttackBudget& budget, const MccCatalog& catalog) {
  ValidationReport report;
  auto add = [&](ViolationKind k, int idx, std::string msg) {
    report.violations.push_back({k, idx, std::move(msg)});
  };
  if (edits.client_id != seq.client_id)
    add(ViolationKind::kClientMismatch, -1, "edits for " + edits.client_id + " applied to " + seq.client_id);
  if (static_cast<int64_t>(edits.edits.size()) > budget.max_edits)
    add(ViolationKind::kBudgetExceeded, -1,
        std::to_string(edits.edits.size()) + " edits exceed budget " + std::to_string(budget.max_edits));
  std::set<int> positions;
  const auto n = static_cast<int64_t>(seq.transactions.size());
  for (size_t i = 0; i < edits.edits.size(); ++i) {
    const Edit& e = edits.edits[i];
    const int idx = static_cast<int>(i);
    if (e.kind == EditKind::kSubstitute) {
      if (e.position < 0 || e.position >= n) {
        add(ViolationKind::kBadPosition, idx, "position " + std::to_string(e.position) + " out of range");
      } else if (!positions.insert(e.position).second) {
        add(ViolationKind::kDuplicatePosition, idx, "position " + std::to_string(e.position) + " repeated");
      }
    }
    if (!catalog.observed(e.new_mcc)) {
      add(ViolationKind::kUnobservedMcc, idx, "mcc " + std::to_string(e.new_mcc) + " unobserved");
      continue;
    }
    const AmountInterval iv = allowed_amount_interval(catalog, e.new_mcc, budget.amount_shrink);
    if (!std::isfinite(e.new_amount) || !iv.contains(e.new_amount))
      add(ViolationKind::kAmountOutOfInterval, idx, "amount outside allowed interval");
  }
  return report;
}

PublicPrivate split_public_private(const Dataset& dataset, std::span<const size_t> indices,
                                   uint64_t seed) {
  if (indices.size() < 2) throw Error("need at least one client per half");
  std::vector<size_t> pos, neg;
  for (size_t i : indices) {
    const auto& label = dataset.sequences.at(i).label;
    (label && *label == 1 ? pos : neg).push_back(i);
  }
  Rng rng(derive_seed(seed, "split.public_private"));
  std::shuffle(pos.begin(), pos.end(), rng);
  std::shuffle(neg.begin(), neg.end(), rng);
  std::vector<size_t> order = pos;
  order.insert(order.end(), neg.begin(), neg.end());
  PublicPrivate out;
  for (size_t k = 0; k < order.size(); ++k) (k % 2 == 0 ? out.public_half : out.private_half).push_back(order[k]);
  std::sort(out.public_half.begin(), out.public_half.end());
  std::sort(out.private_half.begin(), out.private_half.end());
  return out;
}

PublicPrivate split_public_private(const Dataset& dataset, uint64_t seed) {
  std::vector<size_t> all(dataset.size());
  std::iota(all.begin(), all.end(), 0);
  return split_public_private(dataset, all, seed);
}

void assign_splits(Dataset& dataset, double train_fraction, uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw Error("train_fraction must lie in (0, 1)");
  std::vector<size_t> pos, neg;
  for (size_t i = 0; i < dataset.size(); ++i) {
    const auto& label = dataset.sequences[i].label;
    (label && *label == 1 ? pos : neg).push_back(i);
  }
  Rng rng(derive_seed(seed, "split.train_test"));
  std::shuffle(pos.begin(), pos.end(), rng);
  std::shuffle(neg.begin(), neg.end(), rng);
  dataset.split_tags.assign(dataset.size(), SplitTag::kTrain);
  std::vector<size_t> test;
  for (auto* group : {&pos, &neg}) {
    const auto n_train = static_cast<size_t>(std::llround(train_fraction * static_cast<double>(group->size())));
    for (size_t k = n_train; k < group->size(); ++k) test.push_back((*group)[k]);
  }
  std::sort(test.begin(), test.end());
  const PublicPrivate halves = split_public_private(dataset, test, seed);
  for (size_t i : halves.public_half) dataset.split_tags[i] = SplitTag::kPublic;
  for (size_t i : halves.private_half) dataset.split_tags[i] = SplitTag::kPrivate;
}

}  // namespace txadv
