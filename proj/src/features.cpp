#include "txadv/features.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "txadv/error.hpp"

namespace txadv {

AmountBinner::AmountBinner(std::vector<double> edges) : edges_(std::move(edges)) {
  if (edges_.size() != kBins - 1) throw Error("amount binner needs exactly 99 edges");
  if (!std::is_sorted(edges_.begin(), edges_.end())) throw Error("amount binner edges must be nondecreasing");
}

AmountBinner AmountBinner::fit(std::vector<double> amounts) {
  if (amounts.size() < static_cast<size_t>(kBins)) throw Error("need at least 100 amounts to fit the binner");
  std::sort(amounts.begin(), amounts.end());
  const double n1 = static_cast<double>(amounts.size() - 1);
  std::vector<double> edges(kBins - 1);
  for (int k = 1; k < kBins; ++k) {
    const double pos = n1 * k / kBins;
    const auto lo = static_cast<size_t>(std::floor(pos));
    const size_t hi = std::min(lo + 1, amounts.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    edges[static_cast<size_t>(k - 1)] = amounts[lo] + frac * (amounts[hi] - amounts[lo]);
  }
  // Interpolation rounding must not break monotonicity.
  for (size_t i = 1; i < edges.size(); ++i) edges[i] = std::max(edges[i], edges[i - 1]);
  return AmountBinner(std::move(edges));
}

int AmountBinner::bin(double x) const {
  return static_cast<int>(std::lower_bound(edges_.begin(), edges_.end(), x) - edges_.begin());
}

std::pair<double, double> AmountBinner::bin_range(int b, double lo, double hi) const {
  const double left = b == 0 ? lo : edges_[static_cast<size_t>(b - 1)];
  const double right = b == kBins - 1 ? hi : edges_[static_cast<size_t>(b)];
  return {left, right};
}

Json AmountBinner::to_json() const {
  Json j;
  j["bins"] = kBins;
  j["edges"] = edges_;
  return j;
}

AmountBinner AmountBinner::from_json(const Json& j) {
  return AmountBinner(j.at("edges").get<std::vector<double>>());
}

AmountBinner fit_amount_binner(const Dataset& train) {
  std::vector<double> amounts;
  for (const auto& s : train.sequences)
    for (const auto& t : s.transactions) amounts.push_back(t.amount);
  return AmountBinner::fit(std::move(amounts));
}

const char* channel_name(int channel) {
  static constexpr const char* kNames[kNumChannels] = {"mcc",  "amount_bin",  "currency", "hour",
                                                       "day", "day_of_week", "month"};
  return kNames[channel];
}

std::array<int, kNumChannels> channel_cardinalities(int n_mcc, int n_currency) {
  return {n_mcc, AmountBinner::kBins, n_currency, 24, 31, 7, 12};
}

CalendarFields calendar_fields(int64_t timestamp) {
  using namespace std::chrono;
  const sys_seconds tp{seconds{timestamp}};
  const sys_days day = floor<days>(tp);
  const year_month_day ymd{day};
  const auto since_midnight = tp - day;
  CalendarFields f;
  f.hour = static_cast<int>(duration_cast<hours>(since_midnight).count());
  f.day = static_cast<int>(static_cast<unsigned>(ymd.day())) - 1;
  f.day_of_week = static_cast<int>(weekday{day}.iso_encoding()) - 1;
  f.month = static_cast<int>(static_cast<unsigned>(ymd.month())) - 1;
  return f;
}

TokenizedTransaction tokenize(const Transaction& tx, const AmountBinner& binner) {
  const CalendarFields cal = calendar_fields(tx.timestamp);
  TokenizedTransaction tok;
  tok.tokens = {tx.mcc, binner.bin(tx.amount), tx.currency, cal.hour, cal.day, cal.day_of_week, cal.month};
  return tok;
}

std::vector<TokenizedTransaction> tokenize(std::span<const Transaction> seq, const AmountBinner& binner) {
  std::vector<TokenizedTransaction> out;
  out.reserve(seq.size());
  for (const auto& tx : seq) out.push_back(tokenize(tx, binner));
  return out;
}

AggregateSpec::AggregateSpec(AggregateMode mode, int n_mcc, std::vector<int32_t> slot_mccs, int target_dim)
    : mode_(mode), n_mcc_(n_mcc), slot_mccs_(std::move(slot_mccs)), target_dim_(target_dim) {
  mcc_to_slot_.assign(static_cast<size_t>(std::max(0, n_mcc_)), -1);
  if (mode_ == AggregateMode::kFull) {
    for (size_t k = 0; k < slot_mccs_.size(); ++k) {
      const int m = slot_mccs_[k];
      if (m < 0) continue;
      if (m >= n_mcc_) throw Error("aggregate slot mcc out of range");
      if (mcc_to_slot_[static_cast<size_t>(m)] >= 0) throw Error("aggregate slot mcc repeated");
      mcc_to_slot_[static_cast<size_t>(m)] = static_cast<int32_t>(k);
    }
  } else if (!slot_mccs_.empty()) {
    throw Error("robust aggregate spec takes no MCC slots");
  }
  const int natural = mode_ == AggregateMode::kFull ? 3 * static_cast<int>(slot_mccs_.size()) + 4 : kRobustDim;
  if (natural != target_dim_)
    throw Error("aggregate dimension mismatch: recipe yields " + std::to_string(natural) + ", spec declares " +
                std::to_string(target_dim_));
}

AggregateSpec AggregateSpec::full(const MccCatalog& catalog, int n_top) {
  std::vector<int32_t> slots(static_cast<size_t>(n_top), -1);
  const auto& order = catalog.frequency_order();
  for (size_t k = 0; k < slots.size() && k < order.size(); ++k) slots[k] = order[k];
  return AggregateSpec(AggregateMode::kFull, catalog.n_mcc(), std::move(slots), 3 * n_top + 4);
}

AggregateSpec AggregateSpec::robust(int n_mcc) { return AggregateSpec(AggregateMode::kRobust, n_mcc, {}, kRobustDim); }

int AggregateSpec::slot_of(int mcc) const {
  if (mcc < 0 || mcc >= n_mcc_) return -1;
  return mcc_to_slot_[static_cast<size_t>(mcc)];
}

std::vector<std::string> AggregateSpec::feature_names() const {
  std::vector<std::string> names;
  if (mode_ == AggregateMode::kFull) {
    for (size_t k = 0; k < slot_mccs_.size(); ++k) {
      const std::string base = slot_mccs_[k] >= 0 ? "mcc_" + std::to_string(slot_mccs_[k]) : "slot_" + std::to_string(k);
      names.push_back(base + "_count");
      names.push_back(base + "_sum");
      names.push_back(base + "_mean");
    }
    for (const char* g : {"total_count", "total_sum", "mean_amount", "mean_gap_days"}) names.emplace_back(g);
  } else {
    for (int h = 0; h < 24; ++h) names.push_back("hour_" + std::to_string(h));
    for (int d = 0; d < 7; ++d) names.push_back("weekday_" + std::to_string(d));
    for (int m = 0; m < 12; ++m) names.push_back("month_" + std::to_string(m));
    for (const char* g : {"gap_mean", "gap_std", "gap_min", "gap_max", "length"}) names.emplace_back(g);
  }
  return names;
}

void AggregateSpec::check_catalog(const MccCatalog& catalog) const {
  if (catalog.n_mcc() != n_mcc_) throw Error("aggregate spec built for a different MCC cardinality");
}

Json AggregateSpec::to_json() const {
  Json j;
  j["mode"] = mode_ == AggregateMode::kFull ? "full" : "robust";
  j["n_mcc"] = n_mcc_;
  j["slot_mccs"] = slot_mccs_;
  j["dim"] = target_dim_;
  return j;
}

AggregateSpec AggregateSpec::from_json(const Json& j) {
  const std::string mode = j.at("mode").get<std::string>();
  if (mode != "full" && mode != "robust") throw Error("unknown aggregate mode '" + mode + "'");
  return AggregateSpec(mode == "full" ? AggregateMode::kFull : AggregateMode::kRobust, j.at("n_mcc").get<int>(),
                       j.at("slot_mccs").get<std::vector<int32_t>>(), j.at("dim").get<int>());
}

AggregateAccumulator::AggregateAccumulator(const AggregateSpec& spec, std::span<const Transaction> seq)
    : spec_(&spec) {
  if (spec.mode() == AggregateMode::kFull) {
    slot_count_.assign(spec.slot_mccs().size(), 0);
    slot_cents_.assign(spec.slot_mccs().size(), 0);
  }
  stamps_.reserve(seq.size() + 16);
  for (const auto& tx : seq) stamps_.push_back(tx.timestamp);
  std::sort(stamps_.begin(), stamps_.end());
  for (const auto& tx : seq) {
    ++count_;
    cents_ += to_cents(tx.amount);
    if (spec.mode() == AggregateMode::kFull) {
      const int slot = spec.slot_of(tx.mcc);
      if (slot >= 0) {
        ++slot_count_[static_cast<size_t>(slot)];
        slot_cents_[static_cast<size_t>(slot)] += to_cents(tx.amount);
      }
    } else {
      const CalendarFields cal = calendar_fields(tx.timestamp);
      ++hours_[static_cast<size_t>(cal.hour)];
      ++weekdays_[static_cast<size_t>(cal.day_of_week)];
      ++months_[static_cast<size_t>(cal.month)];
    }
  }
}

void AggregateAccumulator::remove(const Transaction& tx) {
  --count_;
  cents_ -= to_cents(tx.amount);
  auto it = std::lower_bound(stamps_.begin(), stamps_.end(), tx.timestamp);
  if (it != stamps_.end() && *it == tx.timestamp) stamps_.erase(it);
  if (spec_->mode() == AggregateMode::kFull) {
    const int slot = spec_->slot_of(tx.mcc);
    if (slot >= 0) {
      --slot_count_[static_cast<size_t>(slot)];
      slot_cents_[static_cast<size_t>(slot)] -= to_cents(tx.amount);
    }
  } else {
    const CalendarFields cal = calendar_fields(tx.timestamp);
    --hours_[static_cast<size_t>(cal.hour)];
    --weekdays_[static_cast<size_t>(cal.day_of_week)];
    --months_[static_cast<size_t>(cal.month)];
  }
}

void AggregateAccumulator::add(const Transaction& tx) {
  ++count_;
  cents_ += to_cents(tx.amount);
  stamps_.insert(std::upper_bound(stamps_.begin(), stamps_.end(), tx.timestamp), tx.timestamp);
  if (spec_->mode() == AggregateMode::kFull) {
    const int slot = spec_->slot_of(tx.mcc);
    if (slot >= 0) {
      ++slot_count_[static_cast<size_t>(slot)];
      slot_cents_[static_cast<size_t>(slot)] += to_cents(tx.amount);
    }
  } else {
    const CalendarFields cal = calendar_fields(tx.timestamp);
    ++hours_[static_cast<size_t>(cal.hour)];
    ++weekdays_[static_cast<size_t>(cal.day_of_week)];
    ++months_[static_cast<size_t>(cal.month)];
  }
}

void AggregateAccumulator::substitute(const Transaction& old_tx, const Transaction& new_tx) {
  if (old_tx.timestamp != new_tx.timestamp || spec_->mode() == AggregateMode::kRobust) {
    remove(old_tx);
    add(new_tx);
    return;
  }
  cents_ += to_cents(new_tx.amount) - to_cents(old_tx.amount);
  const int old_slot = spec_->slot_of(old_tx.mcc);
  if (old_slot >= 0) {
    --slot_count_[static_cast<size_t>(old_slot)];
    slot_cents_[static_cast<size_t>(old_slot)] -= to_cents(old_tx.amount);
  }
  const int new_slot = spec_->slot_of(new_tx.mcc);
  if (new_slot >= 0) {
    ++slot_count_[static_cast<size_t>(new_slot)];
    slot_cents_[static_cast<size_t>(new_slot)] += to_cents(new_tx.amount);
  }
}

void AggregateAccumulator::emit(std::span<double> out) const {
  if (static_cast<int>(out.size()) != spec_->dim()) throw Error("aggregate output buffer has the wrong dimension");
  constexpr double kDaySeconds = 86400.0;
  if (spec_->mode() == AggregateMode::kFull) {
    size_t o = 0;
    for (size_t k = 0; k < slot_count_.size(); ++k) {
      const double sum = static_cast<double>(slot_cents_[k]) / 100.0;
      out[o++] = static_cast<double>(slot_count_[k]);
      out[o++] = sum;
      out[o++] = slot_count_[k] > 0 ? sum / static_cast<double>(slot_count_[k]) : 0.0;
    }
    const double total = static_cast<double>(cents_) / 100.0;
    out[o++] = static_cast<double>(count_);
    out[o++] = total;
    out[o++] = count_ > 0 ? total / static_cast<double>(count_) : 0.0;
    out[o++] = stamps_.size() > 1
                   ? static_cast<double>(stamps_.back() - stamps_.front()) / kDaySeconds /
                         static_cast<double>(stamps_.size() - 1)
                   : 0.0;
    return;
  }
  size_t o = 0;
  for (auto c : hours_) out[o++] = static_cast<double>(c);
  for (auto c : weekdays_) out[o++] = static_cast<double>(c);
  for (auto c : months_) out[o++] = static_cast<double>(c);
  double mean = 0.0, sd = 0.0, lo = 0.0, hi = 0.0;
  if (stamps_.size() > 1) {
    const auto n_gaps = static_cast<double>(stamps_.size() - 1);
    mean = static_cast<double>(stamps_.back() - stamps_.front()) / kDaySeconds / n_gaps;
    int64_t gmin = stamps_[1] - stamps_[0], gmax = gmin;
    double ss = 0.0;
    for (size_t i = 1; i < stamps_.size(); ++i) {
      const int64_t g = stamps_[i] - stamps_[i - 1];
      gmin = std::min(gmin, g);
      gmax = std::max(gmax, g);
      const double d = static_cast<double>(g) / kDaySeconds - mean;
      ss += d * d;
    }
    sd = std::sqrt(ss / n_gaps);
    lo = static_cast<double>(gmin) / kDaySeconds;
    hi = static_cast<double>(gmax) / kDaySeconds;
  }
  out[o++] = mean;
  out[o++] = sd;
  out[o++] = lo;
  out[o++] = hi;
  out[o++] = static_cast<double>(count_);
}

std::vector<double> aggregate_features(std::span<const Transaction> seq, const AggregateSpec& spec) {
  std::vector<double> out(static_cast<size_t>(spec.dim()));
  AggregateAccumulator(spec, seq).emit(out);
  return out;
}

std::vector<double> aggregate_features(std::span<const Transaction> seq, const MccCatalog& catalog,
                                       const AggregateSpec& spec) {
  spec.check_catalog(catalog);
  return aggregate_features(seq, spec);
}

}  // namespace txadv
