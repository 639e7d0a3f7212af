#pragma once

#include <memory>
#include <string>
#include <vector>

#include "txadv/attacks.hpp"
#include "txadv/defenses.hpp"
#include "txadv/ensemble.hpp"
#include "txadv/features.hpp"
#include "txadv/gbdt.hpp"
#include "txadv/gru.hpp"

namespace txadv {

enum class DefendedKind : uint8_t {
  kNnBase,
  kNnMix,
  kBoostBase,
  kBoostMix2,
  kBoostMix5,
  kBoostMixFilter,
  kSurrogatePool,
};

const char* defended_kind_name(DefendedKind kind);
DefendedKind parse_defended_kind(const std::string& name);
const std::vector<DefendedKind>& all_defended_kinds();

struct ZooParams {
  GruHyper gru;
  int nn_mix_runs = 10;
  double nn_mix_share = 0.9;
  GbdtParams boost = [] {
    GbdtParams p;
    p.loss = Loss::kSquared;
    return p;
  }();
  // Second full-mode member: different seed and column subsampling.
  double boost_alt_col_subsample = 0.5;
  GbdtParams robust = [] {
    GbdtParams p;
    p.loss = Loss::kLogistic;
    p.n_trees = 150;
    p.max_depth = 3;
    return p;
  }();
  int robust_members = 3;
  PoolParams pool;
  FilterParams filter;
  int filter_clients = 300;      // train clients attacked to build the filter set
  int filter_candidates = 100;   // greedy k0 for the filter's training attack
  uint64_t seed = 0;

  void validate() const;
  Json to_json() const;
  static ZooParams from_json(const Json& j);
};

// Trained components shared by the defended models.
struct Zoo {
  MccCatalog catalog;
  AmountBinner binner;
  AggregateSpec full;
  AggregateSpec robust;
  std::shared_ptr<const GruModel> nn_base;
  ModelPtr nn_mix;
  std::shared_ptr<const GbdtModel> boost_base;
  std::shared_ptr<const GbdtModel> boost_alt;
  std::vector<std::shared_ptr<const GbdtModel>> robust_members;
  std::shared_ptr<const FilterModel> filter;
  std::shared_ptr<const SurrogatePool> pool;
};

// Fits catalog, binner and aggregate specs on the training split.
Zoo prepare_zoo(const Dataset& ds);

void train_nn_base(Zoo& zoo, const Dataset& ds, const ZooParams& params);
void build_nn_mix(Zoo& zoo, const ZooParams& params);
// Distills both full-mode boosts from `teacher` (NN mix when null).
void train_boosts(Zoo& zoo, const Dataset& ds, const ZooParams& params, ModelPtr teacher = nullptr, int workers = 1);
void train_robust_members(Zoo& zoo, const Dataset& ds, const ZooParams& params, int workers = 1);
// Suspicion filter fit on random and greedy (vs `target`) attacks of a
// seeded subset of `train`.
std::shared_ptr<FilterModel> train_filter_against(const ModelPtr& target, std::span<const ClientSequence> train,
                                                  const MccCatalog& catalog, const ZooParams& params, int workers = 1);
void train_zoo_filter(Zoo& zoo, const Dataset& ds, const ZooParams& params, int workers = 1);
void train_pool(Zoo& zoo, const Dataset& ds, const ZooParams& params, ModelPtr teacher = nullptr, int workers = 1);

// Trains whatever `kind` needs that is still missing from the zoo.
void ensure_components(Zoo& zoo, DefendedKind kind, const Dataset& ds, const ZooParams& params, int workers = 1);

// Assembles a defended model from trained parts; throws Error naming the
// first missing component.
ModelPtr build_defended_model(DefendedKind kind, const Zoo& zoo, const ZooParams& params);

// Boosting mix 5: weights 0.5, 0.5 on the full-mode boosts and 1 on each
// robust member.
ModelPtr boosting_mix(const std::vector<ModelPtr>& full, const std::vector<ModelPtr>& robust);

std::vector<ClientSequence> sequences(const Dataset& ds, SplitTag tag);
std::vector<ClientSequence> test_sequences(const Dataset& ds);
double auc_of(const ScoreModel& model, std::span<const ClientSequence> seqs, int workers = 1);

}  // namespace txadv
