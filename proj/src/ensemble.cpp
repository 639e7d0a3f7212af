#include "txadv/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "txadv/error.hpp"
#include "txadv/metrics.hpp"
#include "txadv/parallel.hpp"
#include "txadv/random.hpp"

namespace txadv {

EnsembleModel::EnsembleModel(std::vector<ModelPtr> members, std::vector<double> weights)
    : members_(std::move(members)), weights_(std::move(weights)) {
  if (members_.empty()) throw Error("ensemble needs at least one member");
  if (weights_.size() != members_.size()) throw Error("ensemble weights and members differ in count");
  for (size_t i = 0; i < members_.size(); ++i) {
    if (!members_[i]) throw Error("ensemble member is missing");
    if (!(weights_[i] > 0.0) || !std::isfinite(weights_[i])) throw Error("ensemble weights must be positive");
    total_weight_ += weights_[i];
  }
}

double EnsembleModel::score(std::span<const Transaction> seq) const {
  double s = 0.0;
  for (size_t i = 0; i < members_.size(); ++i) s += weights_[i] * members_[i]->score(seq);
  return std::clamp(s / total_weight_, 0.0, 1.0);
}

std::vector<double> EnsembleModel::score_candidates(std::span<const Transaction> base,
                                                    std::span<const Edit> candidates) const {
  std::vector<double> out(candidates.size(), 0.0);
  for (size_t i = 0; i < members_.size(); ++i) {
    const auto s = members_[i]->score_candidates(base, candidates);
    for (size_t k = 0; k < out.size(); ++k) out[k] += weights_[i] * s[k];
  }
  for (double& v : out) v = std::clamp(v / total_weight_, 0.0, 1.0);
  return out;
}

Json EnsembleModel::to_json() const {
  Json j;
  j["kind"] = kind();
  j["weights"] = weights_;
  Json members = Json::array();
  for (const auto& m : members_) members.push_back(m->to_json());
  j["members"] = std::move(members);
  return j;
}

std::shared_ptr<EnsembleModel> EnsembleModel::from_json(const Json& j) {
  std::vector<ModelPtr> members;
  for (const auto& mj : j.at("members")) members.push_back(model_from_json(mj));
  return std::make_shared<EnsembleModel>(std::move(members), j.at("weights").get<std::vector<double>>());
}

std::shared_ptr<GbdtModel> distill_scores(std::span<const ClientSequence> data, std::span<const double> teacher_scores,
                                          const AggregateSpec& spec, GbdtParams params, int workers,
                                          DistillReport* report, std::vector<int> columns) {
  if (data.empty()) throw Error("distillation needs data");
  if (teacher_scores.size() != data.size()) throw Error("teacher scores and data differ in length");
  params.loss = Loss::kSquared;
  const size_t n = data.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  Rng rng(derive_seed(params.seed, "distill.holdout"));
  for (size_t k = n; k > 1; --k) std::swap(order[k - 1], order[uniform_index(rng, k)]);
  const size_t n_hold = n >= 5 ? n / 5 : 0;
  std::vector<size_t> hold(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_hold));
  std::vector<size_t> fit(order.begin() + static_cast<std::ptrdiff_t>(n_hold), order.end());
  std::sort(hold.begin(), hold.end());
  std::sort(fit.begin(), fit.end());

  const Matrix all = select_columns(aggregate_matrix(data, spec, workers), columns);
  Matrix x(fit.size(), all.cols);
  std::vector<double> y(fit.size());
  for (size_t k = 0; k < fit.size(); ++k) {
    std::copy(all.row(fit[k]), all.row(fit[k]) + all.cols, x.row(k));
    y[k] = teacher_scores[fit[k]];
  }
  std::vector<double> trace;
  auto student = std::make_shared<GbdtModel>(spec, columns, train_gbdt(x, y, params, &trace));

  double rho = std::numeric_limits<double>::quiet_NaN();
  if (!hold.empty()) {
    std::vector<double> t(hold.size()), s(hold.size());
    for (size_t k = 0; k < hold.size(); ++k) {
      t[k] = teacher_scores[hold[k]];
      s[k] = std::clamp(student->booster().predict(all.row(hold[k])), 0.0, 1.0);
    }
    rho = spearman(t, s);
  }
  student->metrics["params"] = params.to_json();
  student->metrics["final_train_loss"] = trace.back();
  student->metrics["teacher_holdout_spearman"] = std::isnan(rho) ? Json(nullptr) : Json(rho);
  if (report) *report = {rho, fit.size(), hold.size()};
  return student;
}

std::shared_ptr<GbdtModel> distill(const ScoreModel& teacher, std::span<const ClientSequence> data,
                                   const AggregateSpec& spec, GbdtParams params, int workers, DistillReport* report,
                                   std::vector<int> columns) {
  const auto scores = teacher.score_batch(data, workers);
  return distill_scores(data, scores, spec, params, workers, report, std::move(columns));
}

void PoolParams::validate() const {
  if (n_members < 1) throw Error("surrogate pool needs at least one member");
  if (!(feature_share > 0.0 && feature_share <= 1.0)) throw Error("feature_share must lie in (0, 1]");
  member.validate();
}

Json PoolParams::to_json() const {
  Json j;
  j["n_members"] = n_members;
  j["feature_share"] = feature_share;
  j["member"] = member.to_json();
  j["seed"] = seed;
  return j;
}

PoolParams PoolParams::from_json(const Json& j) {
  PoolParams p;
  for (const auto& [key, v] : j.items()) {
    if (key == "n_members") p.n_members = v.get<int>();
    else if (key == "feature_share") p.feature_share = v.get<double>();
    else if (key == "member") p.member = GbdtParams::from_json(v);
    else if (key == "seed") p.seed = v.get<uint64_t>();
    else throw Error("unknown surrogate pool parameter '" + key + "'");
  }
  p.validate();
  return p;
}

SurrogatePool::SurrogatePool(AggregateSpec spec, std::vector<std::shared_ptr<const GbdtModel>> members)
    : spec_(std::move(spec)), members_(std::move(members)) {
  if (members_.empty()) throw Error("surrogate pool needs at least one member");
  for (const auto& m : members_)
    if (!m || !(m->spec() == spec_)) throw Error("surrogate pool members must share the pool's aggregate spec");
}

double SurrogatePool::mean_of(std::span<const double> features) const {
  double s = 0.0;
  for (const auto& m : members_) s += m->score_features(features);
  return std::clamp(s / static_cast<double>(members_.size()), 0.0, 1.0);
}

double SurrogatePool::score(std::span<const Transaction> seq) const { return mean_of(aggregate_features(seq, spec_)); }

std::vector<double> SurrogatePool::member_scores(std::span<const Transaction> seq) const {
  const auto f = aggregate_features(seq, spec_);
  std::vector<double> out;
  for (const auto& m : members_) out.push_back(m->score_features(f));
  return out;
}

std::vector<double> SurrogatePool::score_candidates(std::span<const Transaction> base,
                                                    std::span<const Edit> candidates) const {
  if (base.empty()) return ScoreModel::score_candidates(base, candidates);
  std::vector<double> out;
  out.reserve(candidates.size());
  AggregateAccumulator acc(spec_, base);
  std::vector<double> buf(static_cast<size_t>(spec_.dim()));
  for (const auto& c : candidates) {
    if (c.kind == EditKind::kSubstitute) {
      if (c.position < 0 || static_cast<size_t>(c.position) >= base.size())
        throw Error("candidate position out of range");
      const Transaction& old_tx = base[static_cast<size_t>(c.position)];
      Transaction new_tx = old_tx;
      new_tx.mcc = c.new_mcc;
      new_tx.amount = c.new_amount;
      acc.substitute(old_tx, new_tx);
      acc.emit(buf);
      acc.substitute(new_tx, old_tx);
    } else {
      Transaction tx = base.back();
      tx.mcc = c.new_mcc;
      tx.amount = c.new_amount;
      acc.add(tx);
      acc.emit(buf);
      acc.remove(tx);
    }
    out.push_back(mean_of(buf));
  }
  return out;
}

size_t SurrogatePool::distinct_subsets() const {
  std::set<std::vector<int>> s;
  for (const auto& m : members_) s.insert(m->columns());
  return s.size();
}

Json SurrogatePool::to_json() const {
  Json j;
  j["kind"] = kind();
  j["spec"] = spec_.to_json();
  Json members = Json::array();
  for (const auto& m : members_) {
    Json mj;
    mj["columns"] = m->columns();
    mj["booster"] = m->booster().to_json();
    members.push_back(std::move(mj));
  }
  j["members"] = std::move(members);
  if (!metrics.is_null()) j["metrics"] = metrics;
  return j;
}

std::shared_ptr<SurrogatePool> SurrogatePool::from_json(const Json& j) {
  AggregateSpec spec = AggregateSpec::from_json(j.at("spec"));
  std::vector<std::shared_ptr<const GbdtModel>> members;
  for (const auto& mj : j.at("members"))
    members.push_back(std::make_shared<GbdtModel>(spec, mj.at("columns").get<std::vector<int>>(),
                                                  Booster::from_json(mj.at("booster"))));
  auto pool = std::make_shared<SurrogatePool>(std::move(spec), std::move(members));
  if (j.contains("metrics")) pool->metrics = j.at("metrics");
  return pool;
}

std::shared_ptr<SurrogatePool> build_surrogate_pool(std::span<const ClientSequence> data,
                                                    std::span<const double> targets, const AggregateSpec& spec,
                                                    const PoolParams& params, int workers) {
  params.validate();
  if (data.empty()) throw Error("surrogate pool needs data");
  if (targets.size() != data.size()) throw Error("pool targets and data differ in length");
  const Matrix all = aggregate_matrix(data, spec, workers);
  const auto d = static_cast<size_t>(spec.dim());
  const auto k = static_cast<size_t>(std::max(1.0, std::round(params.feature_share * static_cast<double>(d))));
  const auto n = static_cast<size_t>(params.n_members);
  std::vector<std::vector<int>> subsets(n);
  for (size_t m = 0; m < n; ++m) {
    Rng rng(derive_seed(params.seed, "pool.subset", m));
    std::vector<int> cols(d);
    std::iota(cols.begin(), cols.end(), 0);
    for (size_t i = 0; i < k; ++i) std::swap(cols[i], cols[i + uniform_index(rng, d - i)]);
    cols.resize(k);
    std::sort(cols.begin(), cols.end());
    subsets[m] = std::move(cols);
  }
  std::vector<std::shared_ptr<const GbdtModel>> members(n);
  parallel_for(n, workers, [&](size_t m) {
    GbdtParams p = params.member;
    p.seed = derive_seed(params.seed, "pool.member", m);
    const Matrix x = select_columns(all, subsets[m]);
    members[m] = std::make_shared<GbdtModel>(spec, subsets[m], train_gbdt(x, targets, p));
  });
  auto pool = std::make_shared<SurrogatePool>(spec, std::move(members));
  pool->metrics["params"] = params.to_json();
  pool->metrics["distinct_subsets"] = pool->distinct_subsets();
  return pool;
}

std::shared_ptr<SurrogatePool> build_surrogate_pool(std::span<const ClientSequence> data, const ScoreModel& teacher,
                                                    const AggregateSpec& spec, const PoolParams& params,
                                                    int workers) {
  const auto t = teacher.score_batch(data, workers);
  return build_surrogate_pool(data, t, spec, params, workers);
}

}  // namespace txadv
