#pragma once

#include <memory>
#include <span>
#include <vector>

#include "txadv/gbdt.hpp"
#include "txadv/model.hpp"

namespace txadv {

// Weighted mean of member scores.
class EnsembleModel final : public ScoreModel {
 public:
  EnsembleModel(std::vector<ModelPtr> members, std::vector<double> weights);

  double score(std::span<const Transaction> seq) const override;
  using ScoreModel::score;
  std::vector<double> score_candidates(std::span<const Transaction> base,
                                       std::span<const Edit> candidates) const override;
  std::string kind() const override { return "ensemble"; }
  Json to_json() const override;
  static std::shared_ptr<EnsembleModel> from_json(const Json& j);

  const std::vector<ModelPtr>& members() const { return members_; }
  const std::vector<double>& weights() const { return weights_; }

 private:
  std::vector<ModelPtr> members_;
  std::vector<double> weights_;
  double total_weight_ = 0.0;
};

struct DistillReport {
  double holdout_spearman = 0.0;  // NaN when undefined (e.g. constant teacher)
  size_t train_rows = 0;
  size_t holdout_rows = 0;
};

// Squared-loss boosting on aggregate features regressing the teacher's
// scores. 20% of the rows are held out to measure rank agreement; the
// student is fit on the rest.
std::shared_ptr<GbdtModel> distill(const ScoreModel& teacher, std::span<const ClientSequence> data,
                                   const AggregateSpec& spec, GbdtParams params, int workers = 1,
                                   DistillReport* report = nullptr, std::vector<int> columns = {});
// Same, from precomputed teacher scores.
std::shared_ptr<GbdtModel> distill_scores(std::span<const ClientSequence> data, std::span<const double> teacher_scores,
                                          const AggregateSpec& spec, GbdtParams params, int workers = 1,
                                          DistillReport* report = nullptr, std::vector<int> columns = {});

struct PoolParams {
  int n_members = 100;
  double feature_share = 0.5;
  GbdtParams member = [] {
    GbdtParams p;
    p.loss = Loss::kSquared;
    p.n_trees = 60;
    p.max_depth = 3;
    return p;
  }();
  uint64_t seed = 0;

  void validate() const;
  Json to_json() const;
  static PoolParams from_json(const Json& j);
};

// Mean of boosting members over random subsets of one full aggregate spec.
class SurrogatePool final : public ScoreModel {
 public:
  SurrogatePool(AggregateSpec spec, std::vector<std::shared_ptr<const GbdtModel>> members);

  double score(std::span<const Transaction> seq) const override;
  using ScoreModel::score;
  std::vector<double> score_candidates(std::span<const Transaction> base,
                                       std::span<const Edit> candidates) const override;
  std::string kind() const override { return "surrogate_pool"; }
  Json to_json() const override;
  static std::shared_ptr<SurrogatePool> from_json(const Json& j);

  const std::vector<std::shared_ptr<const GbdtModel>>& members() const { return members_; }
  std::vector<double> member_scores(std::span<const Transaction> seq) const;
  size_t distinct_subsets() const;

  Json metrics;

 private:
  double mean_of(std::span<const double> features) const;

  AggregateSpec spec_;
  std::vector<std::shared_ptr<const GbdtModel>> members_;
};

std::shared_ptr<SurrogatePool> build_surrogate_pool(std::span<const ClientSequence> data,
                                                    std::span<const double> targets, const AggregateSpec& spec,
                                                    const PoolParams& params, int workers = 1);
std::shared_ptr<SurrogatePool> build_surrogate_pool(std::span<const ClientSequence> data, const ScoreModel& teacher,
                                                    const AggregateSpec& spec, const PoolParams& params,
                                                    int workers = 1);

}  // namespace txadv
