#include "txadv/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "txadv/ensemble.hpp"
#include "txadv/error.hpp"
#include "txadv/parallel.hpp"

namespace txadv {

const char* objective_name(ObjectiveMode mode) {
  switch (mode) {
    case ObjectiveMode::kSuppress: return "suppress";
    case ObjectiveMode::kBoost: return "boost";
    case ObjectiveMode::kFlip: return "flip";
  }
  return "flip";
}

ObjectiveMode parse_objective(const std::string& name) {
  if (name == "suppress") return ObjectiveMode::kSuppress;
  if (name == "boost") return ObjectiveMode::kBoost;
  if (name == "flip") return ObjectiveMode::kFlip;
  throw Error("unknown objective '" + name + "'");
}

const char* sampler_name(SamplerMode mode) { return mode == SamplerMode::kUniform ? "uniform" : "gen"; }

SamplerMode parse_sampler(const std::string& name) {
  if (name == "uniform") return SamplerMode::kUniform;
  if (name == "gen") return SamplerMode::kGen;
  throw Error("unknown sampler '" + name + "'");
}

int AttackObjective::direction(double clean_score) const {
  switch (mode) {
    case ObjectiveMode::kSuppress: return -1;
    case ObjectiveMode::kBoost: return 1;
    case ObjectiveMode::kFlip: return clean_score >= tau ? -1 : 1;
  }
  return -1;
}

void AttackConfig::validate() const {
  budget.validate();
  if (candidates < 1 || beam_candidates < 1 || beam_width < 1) throw Error("candidate counts must be positive");
  if (!(gradient_step > 0.0)) throw Error("gradient_step must be > 0");
  if (gradient_attempts < 0) throw Error("gradient_attempts must be >= 0");
  if (!(choice_probability >= 0.0 && choice_probability <= 1.0)) throw Error("choice_probability must lie in [0, 1]");
}

Json AttackConfig::to_json() const {
  Json j;
  j["max_edits"] = budget.max_edits;
  j["amount_shrink"] = budget.amount_shrink;
  j["candidates"] = candidates;
  j["beam_candidates"] = beam_candidates;
  j["beam_width"] = beam_width;
  j["gradient_step"] = gradient_step;
  j["gradient_attempts"] = gradient_attempts;
  j["objective"] = objective_name(objective.mode);
  j["sampler"] = sampler_name(sampler);
  j["choice_probability"] = choice_probability;
  j["seed"] = seed;
  return j;
}

AttackConfig AttackConfig::from_json(const Json& j) {
  AttackConfig c;
  for (const auto& [key, v] : j.items()) {
    if (key == "max_edits") c.budget.max_edits = v.get<int>();
    else if (key == "amount_shrink") c.budget.amount_shrink = v.get<double>();
    else if (key == "candidates") c.candidates = v.get<int>();
    else if (key == "beam_candidates") c.beam_candidates = v.get<int>();
    else if (key == "beam_width") c.beam_width = v.get<int>();
    else if (key == "gradient_step") c.gradient_step = v.get<double>();
    else if (key == "gradient_attempts") c.gradient_attempts = v.get<int>();
    else if (key == "objective") c.objective.mode = parse_objective(v.get<std::string>());
    else if (key == "sampler") c.sampler = parse_sampler(v.get<std::string>());
    else if (key == "choice_probability") c.choice_probability = v.get<double>();
    else if (key == "seed") c.seed = v.get<uint64_t>();
    else throw Error("unknown attack parameter '" + key + "'");
  }
  c.validate();
  return c;
}

CandidateSampler::CandidateSampler(const MccCatalog& catalog, SamplerMode mode, double shrink)
    : catalog_(&catalog), mode_(mode) {
  intervals_.resize(static_cast<size_t>(catalog.n_mcc()));
  for (int m : catalog.observed_mccs()) {
    intervals_[static_cast<size_t>(m)] = allowed_amount_interval(catalog, m, shrink);
    if (mode == SamplerMode::kUniform ||
        static_cast<double>(catalog.stats(m).frequency) <= catalog.median_frequency())
      eligible_.push_back(m);
  }
  if (eligible_.empty()) throw Error(mode == SamplerMode::kGen ? "gen sampler: no MCC at or below the median frequency"
                                                                : "sampler: catalog has no observed MCC");
}

Edit CandidateSampler::sample_at(int position, Rng& rng) const {
  const int mcc = eligible_[uniform_index(rng, eligible_.size())];
  const AmountInterval& iv = intervals_[static_cast<size_t>(mcc)];
  double amount;
  if (mode_ == SamplerMode::kUniform) {
    amount = iv.lo == iv.hi ? iv.lo : uniform(rng, iv.lo, iv.hi);
    amount = iv.clamp(amount);
  } else {
    const auto& s = catalog_->stats(mcc).samples;
    amount = s.empty() ? 0.5 * (iv.lo + iv.hi) : iv.clamp(s[uniform_index(rng, s.size())]);
  }
  return Edit::substitute(position, mcc, amount);
}

Edit CandidateSampler::sample(size_t length, std::span<const char> edited, Rng& rng) const {
  if (length == 0) throw Error("cannot sample a substitution for an empty sequence");
  size_t free = length;
  if (!edited.empty()) free = static_cast<size_t>(std::count(edited.begin(), edited.end(), 0));
  if (free == 0) throw Error("every position is already edited");
  size_t pick = uniform_index(rng, free);
  size_t pos = pick;
  if (!edited.empty())
    for (pos = 0; pos < length; ++pos)
      if (!edited[pos] && pick-- == 0) break;
  return sample_at(static_cast<int>(pos), rng);
}

Edit sample_candidate(std::span<const Transaction> seq, const MccCatalog& catalog, SamplerMode mode, double shrink,
                      Rng& rng) {
  return CandidateSampler(catalog, mode, shrink).sample(seq.size(), {}, rng);
}

uint64_t candidate_seed(uint64_t seed, const std::string& client_id, uint64_t step) {
  return derive_seed(derive_seed(seed, "attack.candidates"), hash_string(client_id), step);
}

namespace {

void substitute_in_place(std::vector<Transaction>& seq, const Edit& e) {
  Transaction& t = seq[static_cast<size_t>(e.position)];
  t.mcc = e.new_mcc;
  t.amount = e.new_amount;
}

size_t free_positions(std::span<const char> edited) {
  return static_cast<size_t>(std::count(edited.begin(), edited.end(), 0));
}

}  // namespace

EditList random_attack(const ClientSequence& seq, const MccCatalog& catalog, const AttackConfig& config) {
  config.validate();
  EditList out{seq.client_id, {}};
  const size_t n = seq.transactions.size();
  const size_t b = std::min(n, static_cast<size_t>(config.budget.max_edits));
  if (b == 0) return out;
  const CandidateSampler sampler(catalog, config.sampler, config.budget.amount_shrink);
  Rng rng(derive_seed(derive_seed(config.seed, "attack.random"), hash_string(seq.client_id)));
  std::vector<size_t> pos(n);
  std::iota(pos.begin(), pos.end(), size_t{0});
  for (size_t i = 0; i < b; ++i) std::swap(pos[i], pos[i + uniform_index(rng, n - i)]);
  for (size_t i = 0; i < b; ++i) out.edits.push_back(sampler.sample_at(static_cast<int>(pos[i]), rng));
  return out;
}

ClientAttack greedy_attack(const ScoreModel& model, const ClientSequence& seq, const MccCatalog& catalog,
                           const AttackConfig& config, int direction) {
  config.validate();
  ClientAttack res;
  res.edits.client_id = seq.client_id;
  std::vector<Transaction> cur = seq.transactions;
  res.clean_score = model.score(cur);
  res.attacked_score = res.clean_score;
  res.evaluations = 1;
  double cur_obj = AttackObjective::value(res.clean_score, direction);
  res.trajectory.push_back(cur_obj);
  if (cur.empty()) return res;
  const CandidateSampler sampler(catalog, config.sampler, config.budget.amount_shrink);
  std::vector<char> edited(cur.size(), 0);
  std::vector<Edit> cands(static_cast<size_t>(config.candidates));
  for (int step = 0; step < config.budget.max_edits && free_positions(edited) > 0; ++step) {
    Rng rng(candidate_seed(config.seed, seq.client_id, static_cast<uint64_t>(step)));
    for (auto& c : cands) c = sampler.sample(cur.size(), edited, rng);
    const auto scores = model.score_candidates(cur, cands);
    res.evaluations += static_cast<int64_t>(cands.size());
    size_t best = 0;
    double best_obj = AttackObjective::value(scores[0], direction);
    for (size_t i = 1; i < scores.size(); ++i) {
      const double v = AttackObjective::value(scores[i], direction);
      if (v < best_obj) {
        best_obj = v;
        best = i;
      }
    }
    if (!(best_obj < cur_obj)) break;
    substitute_in_place(cur, cands[best]);
    edited[static_cast<size_t>(cands[best].position)] = 1;
    res.edits.edits.push_back(cands[best]);
    cur_obj = best_obj;
    res.attacked_score = scores[best];
    res.trajectory.push_back(cur_obj);
  }
  return res;
}

ClientAttack beam_sampling_attack(const ScoreModel& surrogate, const ClientSequence& seq, const MccCatalog& catalog,
                                  const AttackConfig& config, int direction) {
  config.validate();
  struct Entry {
    std::vector<Edit> edits;
    std::vector<Transaction> seq;
    std::vector<char> edited;
    double score;
    double obj;
  };
  ClientAttack res;
  res.edits.client_id = seq.client_id;
  res.clean_score = surrogate.score(seq.transactions);
  res.attacked_score = res.clean_score;
  res.evaluations = 1;
  const double clean_obj = AttackObjective::value(res.clean_score, direction);
  res.trajectory.push_back(clean_obj);
  if (seq.transactions.empty()) return res;
  const CandidateSampler sampler(catalog, config.sampler, config.budget.amount_shrink);
  std::vector<Entry> beam;
  beam.push_back({{}, seq.transactions, std::vector<char>(seq.transactions.size(), 0), res.clean_score, clean_obj});
  const auto width = static_cast<size_t>(config.beam_width);
  const auto k = static_cast<size_t>(config.beam_candidates);

  for (int step = 0; step < config.budget.max_edits; ++step) {
    Rng rng(candidate_seed(config.seed, seq.client_id, static_cast<uint64_t>(step)));
    const size_t nb = beam.size();
    std::vector<std::vector<Edit>> cands(nb);
    std::vector<std::vector<size_t>> gen_index(nb);
    for (size_t j = 0; j < k; ++j) {
      const size_t e = j % nb;
      if (free_positions(beam[e].edited) == 0) continue;
      cands[e].push_back(sampler.sample(beam[e].seq.size(), beam[e].edited, rng));
      gen_index[e].push_back(j);
    }
    struct Option {
      double obj;
      size_t order;  // existing entries first, then generation order
      size_t entry;
      int cand;  // -1 keeps the entry as is
      double score;
    };
    std::vector<Option> pool;
    for (size_t e = 0; e < nb; ++e) pool.push_back({beam[e].obj, e, e, -1, beam[e].score});
    for (size_t e = 0; e < nb; ++e) {
      if (cands[e].empty()) continue;
      const auto scores = surrogate.score_candidates(beam[e].seq, cands[e]);
      res.evaluations += static_cast<int64_t>(scores.size());
      for (size_t i = 0; i < scores.size(); ++i)
        pool.push_back({AttackObjective::value(scores[i], direction), nb + gen_index[e][i], e, static_cast<int>(i),
                        scores[i]});
    }
    std::stable_sort(pool.begin(), pool.end(), [](const Option& a, const Option& b) {
      return a.obj < b.obj || (a.obj == b.obj && a.order < b.order);
    });
    if (pool.size() > width) pool.resize(width);
    const bool unchanged = std::all_of(pool.begin(), pool.end(), [](const Option& o) { return o.cand < 0; });
    if (unchanged) break;
    std::vector<Entry> next;
    next.reserve(pool.size());
    for (const auto& o : pool) {
      Entry en = beam[o.entry];
      if (o.cand >= 0) {
        const Edit& c = cands[o.entry][static_cast<size_t>(o.cand)];
        substitute_in_place(en.seq, c);
        en.edited[static_cast<size_t>(c.position)] = 1;
        en.edits.push_back(c);
        en.score = o.score;
        en.obj = o.obj;
      }
      next.push_back(std::move(en));
    }
    beam = std::move(next);
    res.trajectory.push_back(beam[0].obj);
  }
  res.edits.edits = beam[0].edits;
  res.attacked_score = beam[0].score;
  return res;
}

ClientAttack gradient_attack(const GruModel& gru, const ClientSequence& seq, const MccCatalog& catalog,
                             const AttackConfig& config, int direction) {
  config.validate();
  ClientAttack res;
  res.edits.client_id = seq.client_id;
  std::vector<Transaction> cur = seq.transactions;
  res.clean_score = gru.score(cur);
  res.attacked_score = res.clean_score;
  res.evaluations = 1;
  double cur_obj = AttackObjective::value(res.clean_score, direction);
  res.trajectory.push_back(cur_obj);
  if (cur.empty()) return res;
  const CandidateSampler sampler(catalog, SamplerMode::kUniform, config.budget.amount_shrink);
  const auto& allowed = catalog.observed_mccs();
  std::vector<char> blocked(cur.size(), 0);  // edited or exhausted
  const Eigen::MatrixXd& emb_mcc = gru.embedding(kChannelMcc);
  const Eigen::MatrixXd& emb_amt = gru.embedding(kChannelAmountBin);
  const double sign = direction < 0 ? -1.0 : 1.0;
  int accepted = 0;
  for (int attempt = 0; attempt < config.gradient_attempts && accepted < config.budget.max_edits; ++attempt) {
    const EmbeddingGradient g = gru.embedding_gradient(cur);
    int best = -1;
    double best_norm = -1.0;
    for (Eigen::Index t = 0; t < g.grad.cols(); ++t) {
      const size_t p = static_cast<size_t>(g.window_offset) + static_cast<size_t>(t);
      if (blocked[p]) continue;
      const double norm = g.channel(static_cast<int>(t), kChannelMcc).squaredNorm() +
                          g.channel(static_cast<int>(t), kChannelAmountBin).squaredNorm();
      if (norm > best_norm) {
        best_norm = norm;
        best = static_cast<int>(t);
      }
    }
    if (best < 0) break;
    const size_t p = static_cast<size_t>(g.window_offset) + static_cast<size_t>(best);
    const TokenizedTransaction tok = tokenize(cur[p], gru.binner());
    const Eigen::VectorXd e_mcc =
        emb_mcc.row(tok[kChannelMcc]).transpose() + sign * config.gradient_step * g.channel(best, kChannelMcc);
    const Eigen::VectorXd e_amt = emb_amt.row(tok[kChannelAmountBin]).transpose() +
                                  sign * config.gradient_step * g.channel(best, kChannelAmountBin);
    const int new_mcc = nearest_token(emb_mcc, std::span<const double>(e_mcc.data(), static_cast<size_t>(e_mcc.size())),
                                      allowed);
    const int new_bin =
        nearest_token(emb_amt, std::span<const double>(e_amt.data(), static_cast<size_t>(e_amt.size())));
    const AmountInterval& iv = sampler.interval(new_mcc);
    const auto [blo, bhi] = gru.binner().bin_range(new_bin, iv.lo, iv.hi);
    const double lo = std::max(blo, iv.lo), hi = std::min(bhi, iv.hi);
    const double amount = lo <= hi ? iv.clamp(lo + 0.5 * (hi - lo)) : iv.clamp(blo + 0.5 * (bhi - blo));
    blocked[p] = 1;
    if (new_mcc == cur[p].mcc && amount == cur[p].amount) continue;
    const Edit e = Edit::substitute(static_cast<int>(p), new_mcc, amount);
    std::vector<Transaction> trial = cur;
    substitute_in_place(trial, e);
    const double s = gru.score(trial);
    ++res.evaluations;
    const double v = AttackObjective::value(s, direction);
    if (!(v < cur_obj)) continue;
    cur = std::move(trial);
    cur_obj = v;
    res.attacked_score = s;
    res.edits.edits.push_back(e);
    res.trajectory.push_back(v);
    ++accepted;
  }
  return res;
}

const char* attack_kind_name(AttackKind kind) {
  switch (kind) {
    case AttackKind::kBaseline: return "baseline";
    case AttackKind::kRandom: return "random";
    case AttackKind::kGreedy: return "greedy";
    case AttackKind::kBeam: return "beam";
    case AttackKind::kGradient: return "gradient";
    case AttackKind::kCombined: return "combined";
  }
  return "greedy";
}

AttackKind parse_attack_kind(const std::string& name) {
  for (AttackKind k : {AttackKind::kBaseline, AttackKind::kRandom, AttackKind::kGreedy, AttackKind::kBeam,
                       AttackKind::kGradient, AttackKind::kCombined})
    if (name == attack_kind_name(k)) return k;
  throw Error("unknown attack '" + name + "'");
}

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

AttackResult run_attack(AttackKind kind, std::span<const ModelPtr> models, std::span<const double> weights,
                        std::span<const ClientSequence> cohort, const MccCatalog& catalog, const AttackConfig& config,
                        int workers, bool random_choice) {
  config.validate();
  if (cohort.empty()) throw Error("attack cohort is empty");
  if (models.empty() && kind != AttackKind::kRandom) throw Error("attack needs a target model");
  if (kind == AttackKind::kBaseline) {
    AttackResult r = baseline_transplant_attack(*models[0], cohort, catalog, config.budget, workers);
    r.header["config"] = config.to_json();
    return r;
  }
  ModelPtr target = models.empty() ? nullptr : models[0];
  std::vector<ModelPtr> choices;
  if (kind == AttackKind::kCombined) {
    if (random_choice) {
      if (models.size() < 2) throw Error("random-choice combined attack needs two models");
      choices = {models[0], models[1]};
    } else {
      std::vector<double> w(weights.begin(), weights.end());
      if (w.empty()) w.assign(models.size(), 1.0);
      target = std::make_shared<EnsembleModel>(std::vector<ModelPtr>(models.begin(), models.end()), std::move(w));
    }
  }
  const GruModel* gru = nullptr;
  if (kind == AttackKind::kGradient) {
    gru = dynamic_cast<const GruModel*>(models[0].get());
    if (!gru) throw Error("gradient attack needs a gradient-capable GRU model");
  }

  AttackResult r;
  r.name = attack_kind_name(kind);
  const size_t n = cohort.size();
  r.edits.resize(n);
  r.clean_scores.assign(n, 0.0);
  r.attacked_scores.assign(n, 0.0);
  std::vector<int> pick(n, 0);
  if (!choices.empty()) {
    for (size_t i = 0; i < n; ++i) {
      Rng rng(derive_seed(derive_seed(config.seed, "attack.choice"), hash_string(cohort[i].client_id)));
      pick[i] = uniform01(rng) < config.choice_probability ? 0 : 1;
    }
  }
  auto model_for = [&](size_t i) -> const ScoreModel& { return choices.empty() ? *target : *choices[static_cast<size_t>(pick[i])]; };

  AttackObjective objective = config.objective;
  if (kind != AttackKind::kRandom) {
    std::vector<double> clean(n);
    parallel_for(n, workers, [&](size_t i) { clean[i] = model_for(i).score(cohort[i]); });
    r.clean_scores = clean;
    objective.tau = median(clean);
  }
  r.tau = objective.tau;
  std::vector<int64_t> evals(n, 0);
  parallel_for(n, workers, [&](size_t i) {
    if (kind == AttackKind::kRandom) {
      r.edits[i] = random_attack(cohort[i], catalog, config);
      return;
    }
    const int dir = objective.direction(r.clean_scores[i]);
    ClientAttack a;
    switch (kind) {
      case AttackKind::kGreedy:
      case AttackKind::kCombined: a = greedy_attack(model_for(i), cohort[i], catalog, config, dir); break;
      case AttackKind::kBeam: a = beam_sampling_attack(*target, cohort[i], catalog, config, dir); break;
      case AttackKind::kGradient: a = gradient_attack(*gru, cohort[i], catalog, config, dir); break;
      default: break;
    }
    r.edits[i] = std::move(a.edits);
    r.attacked_scores[i] = a.attacked_score;
    evals[i] = a.evaluations;
  });
  if (kind == AttackKind::kRandom && target) {
    parallel_for(n, workers, [&](size_t i) {
      r.clean_scores[i] = target->score(cohort[i]);
      r.attacked_scores[i] = target->score(apply_edits(cohort[i], r.edits[i]).transactions);
    });
    evals.assign(n, 2);
  }
  r.evaluations = std::accumulate(evals.begin(), evals.end(), int64_t{0});
  r.header["attack"] = r.name;
  r.header["config"] = config.to_json();
  r.header["tau"] = r.tau;
  r.header["random_choice"] = random_choice;
  if (random_choice) r.header["picks"] = pick;
  return r;
}

AttackResult baseline_transplant_attack(const ScoreModel& model, std::span<const ClientSequence> cohort,
                                        const MccCatalog& catalog, const AttackBudget& budget, int workers) {
  budget.validate();
  if (cohort.empty()) throw Error("baseline attack: empty cohort");
  const size_t n = cohort.size();
  AttackResult r;
  r.name = "baseline";
  r.clean_scores = model.score_batch(cohort, workers);
  size_t hi = 0, lo = 0;
  for (size_t i = 1; i < n; ++i) {
    if (r.clean_scores[i] > r.clean_scores[hi]) hi = i;
    if (r.clean_scores[i] < r.clean_scores[lo]) lo = i;
  }
  r.tau = median(r.clean_scores);
  auto tail_edits = [&](const ClientSequence& rep) {
    std::vector<Edit> out;
    const auto& tx = rep.transactions;
    const size_t take = std::min(tx.size(), static_cast<size_t>(std::min(10, budget.max_edits)));
    for (size_t k = tx.size() - take; k < tx.size(); ++k) {
      if (!catalog.observed(tx[k].mcc)) continue;
      const AmountInterval iv = allowed_amount_interval(catalog, tx[k].mcc, budget.amount_shrink);
      out.push_back(Edit::append(tx[k].mcc, iv.clamp(tx[k].amount)));
    }
    return out;
  };
  const auto from_low = tail_edits(cohort[lo]);
  const auto from_high = tail_edits(cohort[hi]);
  r.edits.resize(n);
  r.attacked_scores.assign(n, 0.0);
  parallel_for(n, workers, [&](size_t i) {
    r.edits[i].client_id = cohort[i].client_id;
    if (i != hi && i != lo) r.edits[i].edits = r.clean_scores[i] >= r.tau ? from_low : from_high;
    r.attacked_scores[i] = r.edits[i].edits.empty() ? r.clean_scores[i]
                                                     : model.score(apply_edits(cohort[i], r.edits[i]).transactions);
  });
  r.evaluations = static_cast<int64_t>(2 * n);
  r.header["attack"] = r.name;
  r.header["tau"] = r.tau;
  r.header["representatives"] = {cohort[hi].client_id, cohort[lo].client_id};
  return r;
}

std::vector<EditList> truncate_edits(std::span<const EditList> edits, int budget) {
  std::vector<EditList> out(edits.begin(), edits.end());
  for (auto& l : out)
    if (static_cast<int>(l.edits.size()) > budget) l.edits.resize(static_cast<size_t>(std::max(0, budget)));
  return out;
}

}  // namespace txadv
