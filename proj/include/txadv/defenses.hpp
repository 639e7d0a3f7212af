#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "txadv/gbdt.hpp"
#include "txadv/model.hpp"

namespace txadv {

// Number of transactions a share keeps out of `length`: ceil(share * length),
// at least one.
size_t kept_count(double share, size_t length);

// Base model applied to `repeats` resampled views of the input and
// averaged. A view keeps a uniform subset of ceil(share * T) transactions
// (time order preserved) and, when `permute` is set, shuffles it. Draws
// come from a stream seeded by the wrapper seed alone, so scoring is a pure
// function of the input.
class ResampleWrapper : public ScoreModel {
 public:
  ResampleWrapper(ModelPtr base, double share, int repeats, bool permute, uint64_t seed);

  double score(std::span<const Transaction> seq) const override;
  using ScoreModel::score;
  std::vector<double> score_candidates(std::span<const Transaction> base,
                                       std::span<const Edit> candidates) const override;

  const ModelPtr& base() const { return base_; }
  double share() const { return share_; }
  int repeats() const { return repeats_; }
  uint64_t seed() const { return seed_; }
  // Source indices of view r for a length-T input.
  std::vector<size_t> view(size_t length, int r) const;

 protected:
  Json base_json() const;

 private:
  ModelPtr base_;
  double share_;
  int repeats_;
  bool permute_;
  uint64_t seed_;
};

class SubsampleEnsemble final : public ResampleWrapper {
 public:
  SubsampleEnsemble(ModelPtr base, double share = 0.9, int repeats = 9, uint64_t seed = 0)
      : ResampleWrapper(std::move(base), share, repeats, false, seed) {}
  std::string kind() const override { return "subsample_ensemble"; }
  Json to_json() const override;
  static std::shared_ptr<SubsampleEnsemble> from_json(const Json& j);
};

class NnMix final : public ResampleWrapper {
 public:
  NnMix(ModelPtr base, int runs = 10, double share = 0.9, uint64_t seed = 0)
      : ResampleWrapper(std::move(base), share, runs, true, seed) {}
  std::string kind() const override { return "nn_mix"; }
  Json to_json() const override;
  static std::shared_ptr<NnMix> from_json(const Json& j);
};

class PermutationAverage final : public ResampleWrapper {
 public:
  PermutationAverage(ModelPtr base, int n_perm = 1, uint64_t seed = 0)
      : ResampleWrapper(std::move(base), 1.0, n_perm, true, seed) {}
  std::string kind() const override { return "permutation_average"; }
  Json to_json() const override;
  static std::shared_ptr<PermutationAverage> from_json(const Json& j);
};

inline constexpr int kFilterFeatureDim = 14;

// Per-transaction features: 10 one-hot buckets of the MCC's frequency-rank
// decile, amount, the amount's percentile within its MCC, hour, weekday.
void filter_features(const Transaction& tx, const MccCatalog& catalog, double* out);

struct FilterParams {
  double theta = 0.5;
  double negative_ratio = 4.0;
  double holdout_share = 0.2;
  GbdtParams gbdt = [] {
    GbdtParams p;
    p.loss = Loss::kLogistic;
    p.n_trees = 100;
    p.max_depth = 4;
    return p;
  }();
  uint64_t seed = 0;

  void validate() const;
  Json to_json() const;
  static FilterParams from_json(const Json& j);
};

// Suspicion classifier for single transactions.
class FilterModel {
 public:
  FilterModel(MccCatalog catalog, Booster booster, double theta, Json manifest);

  double suspicion(const Transaction& tx) const;
  std::vector<double> suspicions(std::span<const Transaction> seq) const;
  double theta() const { return theta_; }
  const Json& manifest() const { return manifest_; }
  const MccCatalog& catalog() const { return catalog_; }

  Json to_json() const;
  static std::shared_ptr<FilterModel> from_json(const Json& j);

 private:
  MccCatalog catalog_;
  Booster booster_;
  double theta_;
  Json manifest_;
};

// source indices kept by the filter at threshold theta: suspicion <= theta,
// or the ceil(T/10) least suspicious when nothing would survive.
std::vector<size_t> filter_keep(std::span<const double> suspicions, double theta);

using AttackGenerator = std::function<std::vector<EditList>(std::span<const ClientSequence>)>;

struct NamedAttackGenerator {
  std::string name;
  AttackGenerator generate;
};

// Labels transactions touched by the generated attacks 1 and untouched ones
// 0, downsamples negatives, and fits a logistic boosting. Held-out client
// precision/recall at theta go into the manifest.
std::shared_ptr<FilterModel> train_filter(std::span<const ClientSequence> clean, const MccCatalog& catalog,
                                          std::span<const NamedAttackGenerator> attacks, const FilterParams& params);

class FilterDefense final : public ScoreModel {
 public:
  FilterDefense(std::shared_ptr<const FilterModel> filter, ModelPtr base, double theta);

  double score(std::span<const Transaction> seq) const override;
  using ScoreModel::score;
  std::vector<double> score_candidates(std::span<const Transaction> base,
                                       std::span<const Edit> candidates) const override;
  std::string kind() const override { return "filter_defense"; }
  Json to_json() const override;
  static std::shared_ptr<FilterDefense> from_json(const Json& j);

  const ModelPtr& base() const { return base_; }
  const std::shared_ptr<const FilterModel>& filter() const { return filter_; }
  double theta() const { return theta_; }
  std::vector<Transaction> filtered(std::span<const Transaction> seq) const;

 private:
  std::shared_ptr<const FilterModel> filter_;
  ModelPtr base_;
  double theta_;
};

}  // namespace txadv
