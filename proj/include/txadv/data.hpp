#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace txadv {

struct Transaction {
  int32_t mcc = 0;
  double amount = 0.0;
  int32_t currency = 0;
  int64_t timestamp = 0;  // seconds since the Unix epoch, UTC

  bool operator==(const Transaction&) const = default;
};

struct ClientSequence {
  std::string client_id;
  std::vector<Transaction> transactions;  // nondecreasing timestamps
  std::optional<int> label;               // 1 = default

  bool operator==(const ClientSequence&) const = default;
};

enum class SplitTag : uint8_t { kTrain, kPublic, kPrivate };

const char* split_name(SplitTag tag);
SplitTag parse_split(const std::string& name);

struct Dataset {
  int n_mcc = 0;
  int n_currency = 0;
  std::vector<ClientSequence> sequences;
  std::vector<SplitTag> split_tags;  // parallel to sequences

  size_t size() const { return sequences.size(); }
  std::vector<size_t> indices_with(SplitTag tag) const;
  // Test cohort: public and private clients, in dataset order.
  std::vector<size_t> test_indices() const;
  Dataset subset(std::span<const size_t> indices) const;
  std::vector<int> labels() const;

  // Throws Error when client ids repeat, sequences are empty or unsorted,
  // or a field leaves its cardinality.
  void validate() const;

  bool operator==(const Dataset&) const = default;
};

struct AmountInterval {
  double lo = 0.0;
  double hi = 0.0;

  bool contains(double x) const { return x >= lo && x <= hi; }
  double clamp(double x) const { return x < lo ? lo : (x > hi ? hi : x); }
};

struct MccStats {
  bool observed = false;
  double amount_min = 0.0;
  double amount_max = 0.0;
  int64_t frequency = 0;
  std::vector<double> samples;  // bounded reservoir, sorted ascending

  bool operator==(const MccStats&) const = default;
};

class MccCatalog {
 public:
  static constexpr size_t kReservoirSize = 256;

  MccCatalog() = default;
  MccCatalog(int n_mcc, int n_currency, std::vector<MccStats> stats);

  int n_mcc() const { return n_mcc_; }
  int n_currency() const { return n_currency_; }
  const MccStats& stats(int mcc) const { return stats_.at(static_cast<size_t>(mcc)); }
  const std::vector<MccStats>& all_stats() const { return stats_; }
  bool observed(int mcc) const;
  int64_t total_count() const { return total_count_; }

  const std::vector<int>& observed_mccs() const { return observed_; }
  // MCC ids ordered by frequency, descending; ties by id.
  const std::vector<int>& frequency_order() const { return by_frequency_; }
  int frequency_rank(int mcc) const { return rank_.at(static_cast<size_t>(mcc)); }
  // Median frequency over observed MCCs.
  double median_frequency() const { return median_frequency_; }
  // Empirical CDF of the MCC's amount reservoir at x; 0.5 for unobserved.
  double amount_percentile(int mcc, double x) const;

  bool operator==(const MccCatalog& other) const {
    return n_mcc_ == other.n_mcc_ && n_currency_ == other.n_currency_ && stats_ == other.stats_;
  }

 private:
  int n_mcc_ = 0;
  int n_currency_ = 0;
  std::vector<MccStats> stats_;
  std::vector<int> observed_;
  std::vector<int> by_frequency_;
  std::vector<int> rank_;
  double median_frequency_ = 0.0;
  int64_t total_count_ = 0;
};

struct AttackBudget {
  int max_edits = 10;
  double amount_shrink = 0.95;

  void validate() const;
};

enum class EditKind : uint8_t { kSubstitute, kAppend };

struct Edit {
  EditKind kind = EditKind::kSubstitute;
  int position = -1;  // substitute only
  int32_t new_mcc = 0;
  double new_amount = 0.0;

  static Edit substitute(int position, int32_t mcc, double amount) {
    return {EditKind::kSubstitute, position, mcc, amount};
  }
  static Edit append(int32_t mcc, double amount) { return {EditKind::kAppend, -1, mcc, amount}; }

  bool operator==(const Edit&) const = default;
};

struct EditList {
  std::string client_id;
  std::vector<Edit> edits;

  bool operator==(const EditList&) const = default;
};

struct SynthConfig {
  int n_clients = 2000;
  int seq_len = 300;
  int n_mcc = 100;
  int n_currency = 3;
  double default_rate = 0.04;
  double signal_strength = 0.6;
  uint64_t seed = 0;

  void validate() const;
};

enum class ViolationKind : uint8_t {
  kBudgetExceeded,
  kBadPosition,
  kDuplicatePosition,
  kUnobservedMcc,
  kAmountOutOfInterval,
  kClientMismatch,
};

const char* violation_name(ViolationKind kind);

struct Violation {
  ViolationKind kind;
  int edit_index;  // -1 for list-level violations
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }
  bool has(ViolationKind kind) const;
};

Dataset generate_synthetic(const SynthConfig& config);

MccCatalog build_catalog(const Dataset& dataset);

// Observed [min, max] shrunk about its midpoint to width shrink * (max - min).
// Throws Error for an unobserved MCC: it admits no legal substitution.
AmountInterval allowed_amount_interval(const MccCatalog& catalog, int mcc, double shrink);

std::vector<Transaction> apply_edits(std::span<const Transaction> transactions,
                                     std::span<const Edit> edits);
ClientSequence apply_edits(const ClientSequence& seq, const EditList& edits);

ValidationReport validate_edits(const ClientSequence& seq, const EditList& edits,
                                const AttackBudget& budget, const MccCatalog& catalog);

struct PublicPrivate {
  std::vector<size_t> public_half;
  std::vector<size_t> private_half;
};

// Splits the given client indices into disjoint halves (sizes differ by at
// most one), stratified by label.
PublicPrivate split_public_private(const Dataset& dataset, std::span<const size_t> indices,
                                   uint64_t seed);
PublicPrivate split_public_private(const Dataset& dataset, uint64_t seed);

// Tags a stratified train fraction, then halves the remainder into
// public/private.
void assign_splits(Dataset& dataset, double train_fraction, uint64_t seed);

bool is_time_sorted(std::span<const Transaction> transactions);

}  // namespace txadv
