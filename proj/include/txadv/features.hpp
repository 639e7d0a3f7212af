#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "txadv/data.hpp"
#include "txadv/io.hpp"

namespace txadv {

// Amount quantizer over 100 quantile bins fit on training amounts.
class AmountBinner {
 public:
  static constexpr int kBins = 100;

  AmountBinner() = default;
  explicit AmountBinner(std::vector<double> edges);

  // Empirical 1%..99% quantiles (linear interpolation) of the sample.
  static AmountBinner fit(std::vector<double> amounts);

  // Number of edges strictly below x: amounts at or below the first edge
  // land in bin 0, amounts above the last edge in bin 99.
  int bin(double x) const;
  // Closed range of amounts mapping to `bin`, bounded by [lo, hi] for the
  // two open-ended outer bins.
  std::pair<double, double> bin_range(int bin, double lo, double hi) const;

  const std::vector<double>& edges() const { return edges_; }

  Json to_json() const;
  static AmountBinner from_json(const Json& j);

  bool operator==(const AmountBinner&) const = default;

 private:
  std::vector<double> edges_;
};

AmountBinner fit_amount_binner(const Dataset& train);

enum Channel : int {
  kChannelMcc = 0,
  kChannelAmountBin,
  kChannelCurrency,
  kChannelHour,
  kChannelDay,
  kChannelDayOfWeek,
  kChannelMonth,
};
inline constexpr int kNumChannels = 7;

const char* channel_name(int channel);

struct TokenizedTransaction {
  std::array<int32_t, kNumChannels> tokens{};

  int32_t operator[](int channel) const { return tokens[static_cast<size_t>(channel)]; }
  bool operator==(const TokenizedTransaction&) const = default;
};

std::array<int, kNumChannels> channel_cardinalities(int n_mcc, int n_currency);

struct CalendarFields {
  int hour;         // 0..23
  int day;          // day of month, 0-based
  int day_of_week;  // Monday = 0
  int month;        // 0-based
};

CalendarFields calendar_fields(int64_t timestamp);

TokenizedTransaction tokenize(const Transaction& tx, const AmountBinner& binner);
std::vector<TokenizedTransaction> tokenize(std::span<const Transaction> seq, const AmountBinner& binner);

enum class AggregateMode : uint8_t { kFull, kRobust };

// Aggregate feature recipe. Full mode: per-slot (count, sum, mean) for the
// top MCCs by global frequency followed by 4 globals (count, sum, mean
// amount, mean inter-arrival gap in days). Robust mode: timestamp/count
// features only (hour 24, weekday 7, month 12, gap mean/std/min/max,
// length), which substitutions cannot change.
class AggregateSpec {
 public:
  static constexpr int kTopMccs = 132;
  static constexpr int kFullDim = 3 * kTopMccs + 4;
  static constexpr int kRobustDim = 24 + 7 + 12 + 4 + 1;

  AggregateSpec() = default;
  AggregateSpec(AggregateMode mode, int n_mcc, std::vector<int32_t> slot_mccs, int target_dim);

  static AggregateSpec full(const MccCatalog& catalog, int n_top = kTopMccs);
  static AggregateSpec robust(int n_mcc);

  AggregateMode mode() const { return mode_; }
  int n_mcc() const { return n_mcc_; }
  int dim() const { return target_dim_; }
  // Slot index for an MCC, -1 if the MCC has no slot.
  int slot_of(int mcc) const;
  const std::vector<int32_t>& slot_mccs() const { return slot_mccs_; }
  std::vector<std::string> feature_names() const;
  void check_catalog(const MccCatalog& catalog) const;

  Json to_json() const;
  static AggregateSpec from_json(const Json& j);

  bool operator==(const AggregateSpec&) const = default;

 private:
  AggregateMode mode_ = AggregateMode::kFull;
  int n_mcc_ = 0;
  std::vector<int32_t> slot_mccs_;  // -1 marks an empty slot
  std::vector<int32_t> mcc_to_slot_;
  int target_dim_ = 0;
};

// Amounts enter sums as integer cents, so aggregates are exact and
// independent of transaction order.
inline int64_t to_cents(double amount) { return static_cast<int64_t>(std::llround(amount * 100.0)); }

// Incremental full/robust aggregate state. emit() on a state built from
// a sequence is bitwise equal to aggregate_features() of that sequence.
class AggregateAccumulator {
 public:
  AggregateAccumulator(const AggregateSpec& spec, std::span<const Transaction> seq);

  void remove(const Transaction& tx);
  void add(const Transaction& tx);
  // remove(old_tx) then add(new_tx), skipping timestamp bookkeeping when the
  // timestamp is unchanged.
  void substitute(const Transaction& old_tx, const Transaction& new_tx);
  void emit(std::span<double> out) const;

 private:
  const AggregateSpec* spec_;
  std::vector<int64_t> slot_count_;
  std::vector<int64_t> slot_cents_;
  int64_t count_ = 0;
  int64_t cents_ = 0;
  std::vector<int64_t> stamps_;  // sorted; only kept for gap statistics
  std::array<int64_t, 24> hours_{};
  std::array<int64_t, 7> weekdays_{};
  std::array<int64_t, 12> months_{};
};

std::vector<double> aggregate_features(std::span<const Transaction> seq, const AggregateSpec& spec);
// Checks the aggregate spec against the catalog before aggregating.
std::vector<double> aggregate_features(std::span<const Transaction> seq, const MccCatalog& catalog,
                                       const AggregateSpec& spec);

}  // namespace txadv
