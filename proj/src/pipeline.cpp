#include "txadv/pipeline.hpp"

#include <algorithm>
#include <numeric>

#include "txadv/error.hpp"
#include "txadv/metrics.hpp"
#include "txadv/random.hpp"

namespace txadv {

const char* defended_kind_name(DefendedKind kind) {
  switch (kind) {
    case DefendedKind::kNnBase: return "nn-base";
    case DefendedKind::kNnMix: return "nn-mix";
    case DefendedKind::kBoostBase: return "boost-base";
    case DefendedKind::kBoostMix2: return "boost-mix-2";
    case DefendedKind::kBoostMix5: return "boost-mix-5";
    case DefendedKind::kBoostMixFilter: return "boost-mix-filter";
    case DefendedKind::kSurrogatePool: return "surrogate-pool";
  }
  return "nn-base";
}

const std::vector<DefendedKind>& all_defended_kinds() {
  static const std::vector<DefendedKind> kinds{DefendedKind::kNnBase,     DefendedKind::kNnMix,
                                               DefendedKind::kBoostBase,  DefendedKind::kBoostMix2,
                                               DefendedKind::kBoostMix5,  DefendedKind::kBoostMixFilter,
                                               DefendedKind::kSurrogatePool};
  return kinds;
}

DefendedKind parse_defended_kind(const std::string& name) {
  for (DefendedKind k : all_defended_kinds())
    if (name == defended_kind_name(k)) return k;
  throw Error("unknown model kind '" + name + "'");
}

void ZooParams::validate() const {
  gru.validate();
  boost.validate();
  robust.validate();
  pool.validate();
  filter.validate();
  if (nn_mix_runs < 1) throw Error("nn_mix_runs must be >= 1");
  if (!(nn_mix_share > 0.0 && nn_mix_share <= 1.0)) throw Error("nn_mix_share must lie in (0, 1]");
  if (!(boost_alt_col_subsample > 0.0 && boost_alt_col_subsample <= 1.0))
    throw Error("boost_alt_col_subsample must lie in (0, 1]");
  if (robust_members < 1) throw Error("robust_members must be >= 1");
  if (filter_clients < 1 || filter_candidates < 1) throw Error("filter_clients and filter_candidates must be >= 1");
}

Json ZooParams::to_json() const {
  Json j;
  j["gru"] = gru.to_json();
  j["nn_mix_runs"] = nn_mix_runs;
  j["nn_mix_share"] = nn_mix_share;
  j["boost"] = boost.to_json();
  j["boost_alt_col_subsample"] = boost_alt_col_subsample;
  j["robust"] = robust.to_json();
  j["robust_members"] = robust_members;
  j["pool"] = pool.to_json();
  j["filter"] = filter.to_json();
  j["filter_clients"] = filter_clients;
  j["filter_candidates"] = filter_candidates;
  return j;
}

ZooParams ZooParams::from_json(const Json& j) {
  ZooParams p;
  for (const auto& [key, v] : j.items()) {
    if (key == "gru") p.gru = GruHyper::from_json(v);
    else if (key == "nn_mix_runs") p.nn_mix_runs = v.get<int>();
    else if (key == "nn_mix_share") p.nn_mix_share = v.get<double>();
    else if (key == "boost") p.boost = GbdtParams::from_json(v);
    else if (key == "boost_alt_col_subsample") p.boost_alt_col_subsample = v.get<double>();
    else if (key == "robust") p.robust = GbdtParams::from_json(v);
    else if (key == "robust_members") p.robust_members = v.get<int>();
    else if (key == "pool") p.pool = PoolParams::from_json(v);
    else if (key == "filter") p.filter = FilterParams::from_json(v);
    else if (key == "filter_clients") p.filter_clients = v.get<int>();
    else if (key == "filter_candidates") p.filter_candidates = v.get<int>();
    else throw Error("unknown model parameter '" + key + "'");
  }
  p.validate();
  return p;
}

std::vector<ClientSequence> sequences(const Dataset& ds, SplitTag tag) {
  std::vector<ClientSequence> out;
  for (size_t i : ds.indices_with(tag)) out.push_back(ds.sequences[i]);
  return out;
}

std::vector<ClientSequence> test_sequences(const Dataset& ds) {
  std::vector<ClientSequence> out;
  for (size_t i : ds.test_indices()) out.push_back(ds.sequences[i]);
  return out;
}

double auc_of(const ScoreModel& model, std::span<const ClientSequence> seqs, int workers) {
  std::vector<int> labels;
  for (const auto& s : seqs) {
    if (!s.label) throw Error("AUC needs labeled sequences");
    labels.push_back(*s.label);
  }
  return roc_auc(model.score_batch(seqs, workers), labels);
}

Zoo prepare_zoo(const Dataset& ds) {
  const Dataset train = ds.subset(ds.indices_with(SplitTag::kTrain));
  if (train.size() == 0) throw Error("dataset has no training split");
  Zoo zoo;
  zoo.catalog = build_catalog(train);
  zoo.binner = fit_amount_binner(train);
  zoo.full = AggregateSpec::full(zoo.catalog);
  zoo.robust = AggregateSpec::robust(ds.n_mcc);
  return zoo;
}

void train_nn_base(Zoo& zoo, const Dataset& ds, const ZooParams& params) {
  GruHyper h = params.gru;
  h.seed = derive_seed(params.seed, "train.gru");
  const auto train = sequences(ds, SplitTag::kTrain);
  GruTrainReport rep;
  auto gru = train_gru(train, zoo.binner, ds.n_mcc, ds.n_currency, h, &rep);
  gru->metrics["epoch_loss"] = rep.epoch_loss;
  zoo.nn_base = std::move(gru);
}

void build_nn_mix(Zoo& zoo, const ZooParams& params) {
  if (!zoo.nn_base) throw Error("NN mix needs a trained NN base");
  zoo.nn_mix = std::make_shared<NnMix>(zoo.nn_base, params.nn_mix_runs, params.nn_mix_share,
                                       derive_seed(params.seed, "defense.nn_mix"));
}

void train_boosts(Zoo& zoo, const Dataset& ds, const ZooParams& params, ModelPtr teacher, int workers) {
  if (!teacher) teacher = zoo.nn_mix;
  if (!teacher) throw Error("boosting distillation needs a teacher (NN mix)");
  const auto train = sequences(ds, SplitTag::kTrain);
  const auto scores = teacher->score_batch(train, workers);
  GbdtParams base = params.boost;
  base.seed = derive_seed(params.seed, "train.boost_base");
  zoo.boost_base = distill_scores(train, scores, zoo.full, base, workers);
  GbdtParams alt = params.boost;
  alt.col_subsample = params.boost_alt_col_subsample;
  alt.seed = derive_seed(params.seed, "train.boost_alt");
  zoo.boost_alt = distill_scores(train, scores, zoo.full, alt, workers);
}

void train_robust_members(Zoo& zoo, const Dataset& ds, const ZooParams& params, int workers) {
  const auto train = sequences(ds, SplitTag::kTrain);
  std::vector<double> y;
  for (const auto& s : train) y.push_back(*s.label);
  zoo.robust_members.clear();
  for (int k = 0; k < params.robust_members; ++k) {
    GbdtParams p = params.robust;
    p.seed = derive_seed(params.seed, "train.robust", static_cast<uint64_t>(k));
    zoo.robust_members.push_back(train_gbdt_model(train, y, zoo.robust, {}, p, workers));
  }
}

std::shared_ptr<FilterModel> train_filter_against(const ModelPtr& target, std::span<const ClientSequence> train,
                                                  const MccCatalog& catalog, const ZooParams& params, int workers) {
  std::vector<size_t> order(train.size());
  std::iota(order.begin(), order.end(), size_t{0});
  Rng rng(derive_seed(params.seed, "filter.clients"));
  for (size_t k = order.size(); k > 1; --k) std::swap(order[k - 1], order[uniform_index(rng, k)]);
  order.resize(std::min(order.size(), static_cast<size_t>(params.filter_clients)));
  std::sort(order.begin(), order.end());
  std::vector<ClientSequence> chosen;
  for (size_t i : order) chosen.push_back(train[i]);

  AttackConfig cfg;
  cfg.candidates = params.filter_candidates;
  cfg.seed = derive_seed(params.seed, "filter.attacks");
  std::vector<NamedAttackGenerator> gens;
  gens.push_back({"random", [cfg, &catalog](std::span<const ClientSequence> seqs) {
                    std::vector<EditList> out;
                    for (const auto& s : seqs) out.push_back(random_attack(s, catalog, cfg));
                    return out;
                  }});
  gens.push_back({"greedy:" + target->kind(), [cfg, target, &catalog, workers](std::span<const ClientSequence> seqs) {
                    const ModelPtr models[] = {target};
                    return run_attack(AttackKind::kGreedy, models, {}, seqs, catalog, cfg, workers).edits;
                  }});
  FilterParams fp = params.filter;
  fp.seed = derive_seed(params.seed, "train.filter");
  return train_filter(chosen, catalog, gens, fp);
}

void train_zoo_filter(Zoo& zoo, const Dataset& ds, const ZooParams& params, int workers) {
  if (!zoo.nn_base) throw Error("filter training attacks need a trained NN base");
  const auto train = sequences(ds, SplitTag::kTrain);
  zoo.filter = train_filter_against(zoo.nn_base, train, zoo.catalog, params, workers);
}

void train_pool(Zoo& zoo, const Dataset& ds, const ZooParams& params, ModelPtr teacher, int workers) {
  if (!teacher) teacher = zoo.nn_base;
  if (!teacher) throw Error("surrogate pool needs a teacher (NN base)");
  const auto train = sequences(ds, SplitTag::kTrain);
  PoolParams pp = params.pool;
  pp.seed = derive_seed(params.seed, "train.pool");
  zoo.pool = build_surrogate_pool(train, *teacher, zoo.full, pp, workers);
}

void ensure_components(Zoo& zoo, DefendedKind kind, const Dataset& ds, const ZooParams& params, int workers) {
  auto need_gru = [&] {
    if (!zoo.nn_base) train_nn_base(zoo, ds, params);
  };
  auto need_mix = [&] {
    need_gru();
    if (!zoo.nn_mix) build_nn_mix(zoo, params);
  };
  auto need_boosts = [&] {
    if (!zoo.boost_base || !zoo.boost_alt) {
      need_mix();
      train_boosts(zoo, ds, params, nullptr, workers);
    }
  };
  switch (kind) {
    case DefendedKind::kNnBase: need_gru(); break;
    case DefendedKind::kNnMix: need_mix(); break;
    case DefendedKind::kBoostBase:
    case DefendedKind::kBoostMix2: need_boosts(); break;
    case DefendedKind::kBoostMix5:
    case DefendedKind::kBoostMixFilter:
      need_boosts();
      if (zoo.robust_members.empty()) train_robust_members(zoo, ds, params, workers);
      if (kind == DefendedKind::kBoostMixFilter && !zoo.filter) {
        need_gru();
        train_zoo_filter(zoo, ds, params, workers);
      }
      break;
    case DefendedKind::kSurrogatePool:
      need_gru();
      if (!zoo.pool) train_pool(zoo, ds, params, nullptr, workers);
      break;
  }
}

ModelPtr boosting_mix(const std::vector<ModelPtr>& full, const std::vector<ModelPtr>& robust) {
  std::vector<ModelPtr> members;
  std::vector<double> weights;
  for (const auto& m : full) {
    members.push_back(m);
    weights.push_back(0.5);
  }
  for (const auto& m : robust) {
    members.push_back(m);
    weights.push_back(1.0);
  }
  return std::make_shared<EnsembleModel>(std::move(members), std::move(weights));
}

ModelPtr build_defended_model(DefendedKind kind, const Zoo& zoo, const ZooParams& params) {
  auto require = [&](bool ok, const char* what) {
    if (!ok) throw Error(std::string(defended_kind_name(kind)) + " needs a trained " + what);
  };
  switch (kind) {
    case DefendedKind::kNnBase:
      require(zoo.nn_base != nullptr, "NN base");
      return zoo.nn_base;
    case DefendedKind::kNnMix:
      if (zoo.nn_mix) return zoo.nn_mix;
      require(zoo.nn_base != nullptr, "NN base");
      return std::make_shared<NnMix>(zoo.nn_base, params.nn_mix_runs, params.nn_mix_share,
                                     derive_seed(params.seed, "defense.nn_mix"));
    case DefendedKind::kBoostBase:
      require(zoo.boost_base != nullptr, "distilled boosting");
      return zoo.boost_base;
    case DefendedKind::kBoostMix2:
      require(zoo.boost_base && zoo.boost_alt, "pair of full-mode boostings");
      return boosting_mix({zoo.boost_base, zoo.boost_alt}, {});
    case DefendedKind::kBoostMix5:
    case DefendedKind::kBoostMixFilter: {
      require(zoo.boost_base && zoo.boost_alt, "pair of full-mode boostings");
      require(!zoo.robust_members.empty(), "set of robust boostings");
      std::vector<ModelPtr> robust(zoo.robust_members.begin(), zoo.robust_members.end());
      if (kind == DefendedKind::kBoostMix5) return boosting_mix({zoo.boost_base, zoo.boost_alt}, robust);
      require(zoo.filter != nullptr, "transaction filter");
      // Robust members read only order-free counts that substitutions barely move, so only the
      // full-mode members see the filtered sequence; filtering everything costs clean AUC.
      const double theta = zoo.filter->theta();
      return boosting_mix({std::make_shared<FilterDefense>(zoo.filter, zoo.boost_base, theta),
                           std::make_shared<FilterDefense>(zoo.filter, zoo.boost_alt, theta)},
                          robust);
    }
    case DefendedKind::kSurrogatePool:
      require(zoo.pool != nullptr, "surrogate pool");
      return zoo.pool;
  }
  throw Error("unknown defended model kind");
}

}  // namespace txadv
