#include "txadv/defenses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "txadv/error.hpp"
#include "txadv/features.hpp"
#include "txadv/metrics.hpp"
#include "txadv/random.hpp"

namespace txadv {

size_t kept_count(double share, size_t length) {
  const auto k = static_cast<size_t>(std::ceil(share * static_cast<double>(length) - 1e-9));
  return std::clamp<size_t>(k, 1, std::max<size_t>(length, 1));
}

namespace {

// Mean that returns the common value exactly when all inputs agree.
double stable_mean(std::span<const double> v) {
  if (std::all_of(v.begin(), v.end(), [&](double x) { return x == v[0]; })) return v[0];
  double s = 0.0;
  for (double x : v) s += x;
  return std::clamp(s / static_cast<double>(v.size()), 0.0, 1.0);
}

std::vector<Transaction> gather(std::span<const Transaction> seq, std::span<const size_t> idx) {
  std::vector<Transaction> out;
  out.reserve(idx.size());
  for (size_t i : idx) out.push_back(seq[i]);
  return out;
}

bool has_append(std::span<const Edit> c) {
  return std::any_of(c.begin(), c.end(), [](const Edit& e) { return e.kind == EditKind::kAppend; });
}

}  // namespace

ResampleWrapper::ResampleWrapper(ModelPtr base, double share, int repeats, bool permute, uint64_t seed)
    : base_(std::move(base)), share_(share), repeats_(repeats), permute_(permute), seed_(seed) {
  if (!base_) throw Error("defense wrapper needs a base model");
  if (!(share_ > 0.0 && share_ <= 1.0)) throw Error("share must lie in (0, 1]");
  if (repeats_ < 1) throw Error("repeat count must be >= 1");
}

std::vector<size_t> ResampleWrapper::view(size_t length, int r) const {
  const size_t k = kept_count(share_, length);
  std::vector<size_t> idx(length);
  std::iota(idx.begin(), idx.end(), size_t{0});
  if (k < length) {
    Rng rng(derive_seed(seed_, "subsample", static_cast<uint64_t>(r)));
    for (size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + uniform_index(rng, length - i)]);
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
  }
  if (permute_) {
    Rng rng(derive_seed(seed_, "permute", static_cast<uint64_t>(r)));
    for (size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[uniform_index(rng, i)]);
  }
  return idx;
}

double ResampleWrapper::score(std::span<const Transaction> seq) const {
  if (seq.empty()) return base_->score(seq);
  std::vector<double> s(static_cast<size_t>(repeats_));
  for (int r = 0; r < repeats_; ++r) {
    const auto idx = view(seq.size(), r);
    s[static_cast<size_t>(r)] = base_->score(gather(seq, idx));
  }
  return stable_mean(s);
}

std::vector<double> ResampleWrapper::score_candidates(std::span<const Transaction> base,
                                                      std::span<const Edit> candidates) const {
  if (base.empty() || has_append(candidates)) return ScoreModel::score_candidates(base, candidates);
  const size_t m = candidates.size();
  std::vector<std::vector<double>> per_run(m, std::vector<double>(static_cast<size_t>(repeats_)));
  std::vector<int> inv(base.size());
  for (int r = 0; r < repeats_; ++r) {
    const auto idx = view(base.size(), r);
    const auto run = gather(base, idx);
    std::fill(inv.begin(), inv.end(), -1);
    for (size_t k = 0; k < idx.size(); ++k) inv[idx[k]] = static_cast<int>(k);
    std::vector<Edit> mapped;
    std::vector<size_t> which;
    for (size_t i = 0; i < m; ++i) {
      const Edit& c = candidates[i];
      if (c.position < 0 || static_cast<size_t>(c.position) >= base.size())
        throw Error("candidate position out of range");
      const int q = inv[static_cast<size_t>(c.position)];
      if (q < 0) continue;
      mapped.push_back(Edit::substitute(q, c.new_mcc, c.new_amount));
      which.push_back(i);
    }
    const double run_score = which.size() < m ? base_->score(run) : 0.0;
    for (size_t i = 0; i < m; ++i) per_run[i][static_cast<size_t>(r)] = run_score;
    const auto s = base_->score_candidates(run, mapped);
    for (size_t k = 0; k < which.size(); ++k) per_run[which[k]][static_cast<size_t>(r)] = s[k];
  }
  std::vector<double> out(m);
  for (size_t i = 0; i < m; ++i) out[i] = stable_mean(per_run[i]);
  return out;
}

Json ResampleWrapper::base_json() const {
  Json j;
  j["share"] = share_;
  j["repeats"] = repeats_;
  j["seed"] = seed_;
  j["base"] = base_->to_json();
  return j;
}

Json SubsampleEnsemble::to_json() const {
  Json j;
  j["kind"] = kind();
  j.update(base_json());
  return j;
}

std::shared_ptr<SubsampleEnsemble> SubsampleEnsemble::from_json(const Json& j) {
  return std::make_shared<SubsampleEnsemble>(model_from_json(j.at("base")), j.at("share").get<double>(),
                                             j.at("repeats").get<int>(), j.at("seed").get<uint64_t>());
}

Json NnMix::to_json() const {
  Json j;
  j["kind"] = kind();
  j.update(base_json());
  return j;
}

std::shared_ptr<NnMix> NnMix::from_json(const Json& j) {
  return std::make_shared<NnMix>(model_from_json(j.at("base")), j.at("repeats").get<int>(),
                                 j.at("share").get<double>(), j.at("seed").get<uint64_t>());
}

Json PermutationAverage::to_json() const {
  Json j;
  j["kind"] = kind();
  j.update(base_json());
  return j;
}

std::shared_ptr<PermutationAverage> PermutationAverage::from_json(const Json& j) {
  return std::make_shared<PermutationAverage>(model_from_json(j.at("base")), j.at("repeats").get<int>(),
                                              j.at("seed").get<uint64_t>());
}

void filter_features(const Transaction& tx, const MccCatalog& catalog, double* out) {
  std::fill(out, out + kFilterFeatureDim, 0.0);
  const int n = std::max(1, catalog.n_mcc());
  const int rank = (tx.mcc >= 0 && tx.mcc < catalog.n_mcc()) ? catalog.frequency_rank(tx.mcc) : n - 1;
  out[std::min(9, rank * 10 / n)] = 1.0;
  out[10] = tx.amount;
  out[11] = catalog.amount_percentile(tx.mcc, tx.amount);
  const CalendarFields cal = calendar_fields(tx.timestamp);
  out[12] = cal.hour;
  out[13] = cal.day_of_week;
}

void FilterParams::validate() const {
  if (!(theta >= 0.0 && theta <= 1.0)) throw Error("filter theta must lie in [0, 1]");
  if (!(negative_ratio > 0.0)) throw Error("negative_ratio must be > 0");
  if (!(holdout_share >= 0.0 && holdout_share < 1.0)) throw Error("holdout_share must lie in [0, 1)");
  gbdt.validate();
}

Json FilterParams::to_json() const {
  Json j;
  j["theta"] = theta;
  j["negative_ratio"] = negative_ratio;
  j["holdout_share"] = holdout_share;
  j["gbdt"] = gbdt.to_json();
  j["seed"] = seed;
  return j;
}

FilterParams FilterParams::from_json(const Json& j) {
  FilterParams p;
  for (const auto& [key, v] : j.items()) {
    if (key == "theta") p.theta = v.get<double>();
    else if (key == "negative_ratio") p.negative_ratio = v.get<double>();
    else if (key == "holdout_share") p.holdout_share = v.get<double>();
    else if (key == "gbdt") p.gbdt = GbdtParams::from_json(v);
    else if (key == "seed") p.seed = v.get<uint64_t>();
    else throw Error("unknown filter parameter '" + key + "'");
  }
  p.validate();
  return p;
}

FilterModel::FilterModel(MccCatalog catalog, Booster booster, double theta, Json manifest)
    : catalog_(std::move(catalog)), booster_(std::move(booster)), theta_(theta), manifest_(std::move(manifest)) {
  if (booster_.n_features() != static_cast<size_t>(kFilterFeatureDim))
    throw Error("filter booster has the wrong feature width");
  if (!(theta_ >= 0.0 && theta_ <= 1.0)) throw Error("filter theta must lie in [0, 1]");
}

double FilterModel::suspicion(const Transaction& tx) const {
  double f[kFilterFeatureDim];
  filter_features(tx, catalog_, f);
  return std::clamp(booster_.predict(f), 0.0, 1.0);
}

std::vector<double> FilterModel::suspicions(std::span<const Transaction> seq) const {
  std::vector<double> out;
  out.reserve(seq.size());
  for (const auto& tx : seq) out.push_back(suspicion(tx));
  return out;
}

Json FilterModel::to_json() const {
  Json j;
  j["theta"] = theta_;
  j["catalog"] = io::catalog_to_json(catalog_);
  j["booster"] = booster_.to_json();
  j["features"] = {"rank_decile_0", "rank_decile_1", "rank_decile_2", "rank_decile_3", "rank_decile_4",
                   "rank_decile_5", "rank_decile_6", "rank_decile_7", "rank_decile_8", "rank_decile_9",
                   "amount",        "amount_percentile", "hour",     "day_of_week"};
  j["manifest"] = manifest_;
  return j;
}

std::shared_ptr<FilterModel> FilterModel::from_json(const Json& j) {
  return std::make_shared<FilterModel>(io::catalog_from_json(j.at("catalog")), Booster::from_json(j.at("booster")),
                                       j.at("theta").get<double>(), j.value("manifest", Json::object()));
}

std::vector<size_t> filter_keep(std::span<const double> suspicions, double theta) {
  std::vector<size_t> keep;
  for (size_t i = 0; i < suspicions.size(); ++i)
    if (suspicions[i] <= theta) keep.push_back(i);
  if (!keep.empty() || suspicions.empty()) return keep;
  const size_t k = (suspicions.size() + 9) / 10;
  std::vector<size_t> order(suspicions.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return suspicions[a] < suspicions[b]; });
  keep.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  std::sort(keep.begin(), keep.end());
  return keep;
}

std::shared_ptr<FilterModel> train_filter(std::span<const ClientSequence> clean, const MccCatalog& catalog,
                                          std::span<const NamedAttackGenerator> attacks, const FilterParams& params) {
  params.validate();
  if (attacks.empty()) throw Error("train_filter needs at least one attack generator");
  if (clean.empty()) throw Error("train_filter needs clean sequences");
  const size_t n = clean.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  Rng split_rng(derive_seed(params.seed, "filter.holdout"));
  for (size_t k = n; k > 1; --k) std::swap(order[k - 1], order[uniform_index(split_rng, k)]);
  const auto n_hold = static_cast<size_t>(std::floor(params.holdout_share * static_cast<double>(n)));
  std::vector<char> is_hold(n, 0);
  for (size_t k = 0; k < n_hold; ++k) is_hold[order[k]] = 1;

  struct Row {
    std::array<double, kFilterFeatureDim> f;
  };
  std::vector<Row> pos, neg, hold_pos, hold_neg;
  auto push = [&](std::vector<Row>& dst, const Transaction& tx) {
    Row r;
    filter_features(tx, catalog, r.f.data());
    dst.push_back(r);
  };
  for (size_t i = 0; i < n; ++i)
    for (const auto& tx : clean[i].transactions) push(is_hold[i] ? hold_neg : neg, tx);

  Json attack_names = Json::array();
  for (const auto& gen : attacks) {
    attack_names.push_back(gen.name);
    const auto lists = gen.generate(clean);
    if (lists.size() != n) throw Error("attack generator '" + gen.name + "' returned the wrong number of edit lists");
    for (size_t i = 0; i < n; ++i) {
      if (lists[i].client_id != clean[i].client_id)
        throw Error("attack generator '" + gen.name + "' returned edits out of client order");
      const auto& seq = clean[i].transactions;
      const auto edited = apply_edits(seq, lists[i].edits);
      std::vector<char> touched(edited.size(), 0);
      for (const auto& e : lists[i].edits)
        if (e.kind == EditKind::kSubstitute) touched[static_cast<size_t>(e.position)] = 1;
      for (size_t k = seq.size(); k < edited.size(); ++k) touched[k] = 1;
      for (size_t k = 0; k < edited.size(); ++k)
        if (touched[k]) push(is_hold[i] ? hold_pos : pos, edited[k]);
    }
  }
  if (pos.empty()) throw Error("attack generators produced no edits to learn from");

  const auto max_neg = static_cast<size_t>(std::ceil(params.negative_ratio * static_cast<double>(pos.size())));
  if (neg.size() > max_neg) {
    Rng rng(derive_seed(params.seed, "filter.negatives"));
    for (size_t k = 0; k < max_neg; ++k) std::swap(neg[k], neg[k + uniform_index(rng, neg.size() - k)]);
    neg.resize(max_neg);
  }
  Matrix x(pos.size() + neg.size(), kFilterFeatureDim);
  std::vector<double> y(x.rows);
  size_t r = 0;
  for (const auto* group : {&pos, &neg})
    for (const auto& row : *group) {
      std::copy(row.f.begin(), row.f.end(), x.row(r));
      y[r++] = group == &pos ? 1.0 : 0.0;
    }
  GbdtParams gp = params.gbdt;
  gp.loss = Loss::kLogistic;
  gp.seed = derive_seed(params.seed, "filter.gbdt");
  Booster booster = train_gbdt(x, y, gp);

  Json manifest;
  manifest["attacks"] = attack_names;
  manifest["params"] = params.to_json();
  manifest["train_positives"] = pos.size();
  manifest["train_negatives"] = neg.size();
  if (!hold_pos.empty() && !hold_neg.empty()) {
    std::vector<double> scores;
    std::vector<int> labels;
    size_t tp = 0, fp = 0;
    for (const auto* group : {&hold_pos, &hold_neg})
      for (const auto& row : *group) {
        const double s = std::clamp(booster.predict(row.f.data()), 0.0, 1.0);
        const int label = group == &hold_pos ? 1 : 0;
        scores.push_back(s);
        labels.push_back(label);
        if (s > params.theta) (label ? tp : fp)++;
      }
    manifest["holdout_positives"] = hold_pos.size();
    manifest["holdout_negatives"] = hold_neg.size();
    manifest["holdout_recall"] = static_cast<double>(tp) / static_cast<double>(hold_pos.size());
    manifest["holdout_precision"] = tp + fp ? Json(static_cast<double>(tp) / static_cast<double>(tp + fp)) : Json(nullptr);
    manifest["holdout_false_positive_rate"] = static_cast<double>(fp) / static_cast<double>(hold_neg.size());
    manifest["holdout_auc"] = roc_auc(scores, labels);
  }
  return std::make_shared<FilterModel>(catalog, std::move(booster), params.theta, std::move(manifest));
}

FilterDefense::FilterDefense(std::shared_ptr<const FilterModel> filter, ModelPtr base, double theta)
    : filter_(std::move(filter)), base_(std::move(base)), theta_(theta) {
  if (!filter_ || !base_) throw Error("filter defense needs a filter and a base model");
  if (!(theta_ >= 0.0 && theta_ <= 1.0)) throw Error("filter theta must lie in [0, 1]");
}

std::vector<Transaction> FilterDefense::filtered(std::span<const Transaction> seq) const {
  const auto s = filter_->suspicions(seq);
  return gather(seq, filter_keep(s, theta_));
}

double FilterDefense::score(std::span<const Transaction> seq) const { return base_->score(filtered(seq)); }

std::vector<double> FilterDefense::score_candidates(std::span<const Transaction> base,
                                                    std::span<const Edit> candidates) const {
  if (base.empty() || has_append(candidates)) return ScoreModel::score_candidates(base, candidates);
  const auto susp = filter_->suspicions(base);
  std::vector<size_t> keep;
  for (size_t i = 0; i < susp.size(); ++i)
    if (susp[i] <= theta_) keep.push_back(i);
  const size_t m = candidates.size();
  std::vector<double> out(m);
  // The fallback path depends on every suspicion; leave it to the generic route.
  if (keep.size() <= 1) return ScoreModel::score_candidates(base, candidates);
  std::vector<int> inv(base.size(), -1);
  for (size_t k = 0; k < keep.size(); ++k) inv[keep[k]] = static_cast<int>(k);
  const auto kept = gather(base, keep);
  std::vector<Edit> mapped;
  std::vector<size_t> which;
  std::vector<size_t> unchanged;
  for (size_t i = 0; i < m; ++i) {
    const Edit& c = candidates[i];
    if (c.position < 0 || static_cast<size_t>(c.position) >= base.size())
      throw Error("candidate position out of range");
    Transaction tx = base[static_cast<size_t>(c.position)];
    tx.mcc = c.new_mcc;
    tx.amount = c.new_amount;
    const bool passes = filter_->suspicion(tx) <= theta_;
    const int q = inv[static_cast<size_t>(c.position)];
    if (q >= 0 && passes) {
      mapped.push_back(Edit::substitute(q, c.new_mcc, c.new_amount));
      which.push_back(i);
    } else if (q < 0 && !passes) {
      unchanged.push_back(i);
    } else {
      // The kept set changes; rebuild it directly.
      std::vector<Transaction> seq;
      seq.reserve(keep.size() + 1);
      for (size_t k = 0; k < base.size(); ++k) {
        if (k == static_cast<size_t>(c.position)) {
          if (passes) seq.push_back(tx);
        } else if (inv[k] >= 0) {
          seq.push_back(base[k]);
        }
      }
      out[i] = base_->score(seq);
    }
  }
  if (!unchanged.empty()) {
    const double kept_score = base_->score(kept);
    for (size_t i : unchanged) out[i] = kept_score;
  }
  const auto s = base_->score_candidates(kept, mapped);
  for (size_t k = 0; k < which.size(); ++k) out[which[k]] = s[k];
  return out;
}

Json FilterDefense::to_json() const {
  Json j;
  j["kind"] = kind();
  j["theta"] = theta_;
  j["filter"] = filter_->to_json();
  j["base"] = base_->to_json();
  return j;
}

std::shared_ptr<FilterDefense> FilterDefense::from_json(const Json& j) {
  return std::make_shared<FilterDefense>(FilterModel::from_json(j.at("filter")), model_from_json(j.at("base")),
                                         j.at("theta").get<double>());
}

}  // namespace txadv
