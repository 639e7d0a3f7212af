#include "txadv/tournament.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include "txadv/error.hpp"
#include "txadv/metrics.hpp"
#include "txadv/parallel.hpp"

namespace txadv {

TournamentMatrix::TournamentMatrix(std::vector<std::string> attacks, std::vector<std::string> defenses)
    : attacks_(std::move(attacks)),
      defenses_(std::move(defenses)),
      cells_(attacks_.size() * defenses_.size()),
      mask_(attacks_.size() * defenses_.size(), 0) {
  for (const auto* names : {&attacks_, &defenses_}) {
    std::vector<std::string> sorted = *names;
    std::sort(sorted.begin(), sorted.end());
    const auto dup = std::adjacent_find(sorted.begin(), sorted.end());
    if (dup != sorted.end()) throw Error("duplicate tournament entry '" + *dup + "'");
  }
}

size_t TournamentMatrix::index(size_t a, size_t d) const {
  if (a >= attacks_.size() || d >= defenses_.size()) throw Error("tournament cell out of range");
  return a * defenses_.size() + d;
}

void TournamentMatrix::set(size_t a, size_t d, double value) { cells_[index(a, d)] = value; }

std::optional<double> TournamentMatrix::get(size_t a, size_t d) const { return cells_[index(a, d)]; }

void TournamentMatrix::mask(size_t a, size_t d) { mask_[index(a, d)] = 1; }

std::optional<double> TournamentMatrix::row_average(size_t a) const {
  double s = 0.0;
  size_t n = 0;
  for (size_t d = 0; d < defenses_.size(); ++d) {
    const auto v = get(a, d);
    if (masked(a, d) || !v) continue;
    s += *v;
    ++n;
  }
  if (n == 0) return std::nullopt;
  return s / static_cast<double>(n);
}

std::optional<double> TournamentMatrix::column_average(size_t d) const {
  double s = 0.0;
  size_t n = 0;
  for (size_t a = 0; a < attacks_.size(); ++a) {
    const auto v = get(a, d);
    if (masked(a, d) || !v) continue;
    s += *v;
    ++n;
  }
  if (n == 0) return std::nullopt;
  return s / static_cast<double>(n);
}

namespace {

std::vector<std::string> rank(const std::vector<std::string>& names, const std::vector<std::optional<double>>& avg) {
  std::vector<size_t> idx(names.size());
  std::iota(idx.begin(), idx.end(), size_t{0});
  std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) {
    if (avg[a].has_value() != avg[b].has_value()) return avg[a].has_value();
    if (avg[a] && *avg[a] != *avg[b]) return *avg[a] > *avg[b];
    return names[a] < names[b];
  });
  std::vector<std::string> out;
  for (size_t i : idx) out.push_back(names[i]);
  return out;
}

}  // namespace

std::vector<std::string> TournamentMatrix::attack_ranking() const {
  std::vector<std::optional<double>> avg;
  for (size_t a = 0; a < attacks_.size(); ++a) avg.push_back(row_average(a));
  return rank(attacks_, avg);
}

std::vector<std::string> TournamentMatrix::defense_ranking() const {
  std::vector<std::optional<double>> avg;
  for (size_t d = 0; d < defenses_.size(); ++d) avg.push_back(column_average(d));
  return rank(defenses_, avg);
}

std::vector<ClientSequence> apply_attack(std::span<const ClientSequence> cohort, std::span<const EditList> edits) {
  std::map<std::string, const EditList*> by_client;
  for (const auto& e : edits) by_client[e.client_id] = &e;
  std::vector<ClientSequence> out;
  out.reserve(cohort.size());
  for (const auto& seq : cohort) {
    auto it = by_client.find(seq.client_id);
    out.push_back(it == by_client.end() ? seq : apply_edits(seq, *it->second));
  }
  return out;
}

TournamentResult run_tournament(std::span<const AttackEntry> attacks, std::span<const DefenseEntry> defenses,
                                std::span<const ClientSequence> cohort, const MccCatalog& catalog,
                                const AttackBudget& budget, int workers) {
  if (defenses.empty()) throw Error("tournament needs at least one defense");
  for (const auto& d : defenses)
    if (!d.model) throw Error("defense '" + d.name + "' has no model");
  std::map<std::string, const ClientSequence*> by_client;
  for (const auto& s : cohort) by_client[s.client_id] = &s;

  TournamentResult result;
  std::vector<const AttackEntry*> valid;
  for (const auto& a : attacks) {
    bool ok = true;
    for (const auto& list : a.edits) {
      auto it = by_client.find(list.client_id);
      if (it == by_client.end()) {
        result.disqualified.push_back({a.name, list.client_id, "client not in the cohort"});
        ok = false;
        break;
      }
      const auto report = validate_edits(*it->second, list, budget, catalog);
      if (!report.ok()) {
        result.disqualified.push_back({a.name, list.client_id, report.violations.front().message});
        ok = false;
        break;
      }
    }
    if (ok) valid.push_back(&a);
  }

  std::vector<std::string> an, dn;
  for (const auto* a : valid) an.push_back(a->name);
  for (const auto& d : defenses) dn.push_back(d.name);
  result.attack_view = TournamentMatrix(an, dn);
  result.defense_view = TournamentMatrix(an, dn);

  std::vector<int> labels;
  for (const auto& s : cohort) {
    if (!s.label) throw Error("tournament cohort needs labels");
    labels.push_back(*s.label);
  }
  std::vector<std::vector<ClientSequence>> edited(valid.size());
  for (size_t a = 0; a < valid.size(); ++a) edited[a] = apply_attack(cohort, valid[a]->edits);

  std::vector<std::vector<double>> clean(defenses.size());
  for (size_t d = 0; d < defenses.size(); ++d) {
    clean[d] = defenses[d].model->score_batch(cohort, workers);
    result.clean_auc.push_back(roc_auc(clean[d], labels));
  }
  for (size_t a = 0; a < valid.size(); ++a) {
    for (size_t d = 0; d < defenses.size(); ++d) {
      if (!valid[a]->author.empty() && valid[a]->author == defenses[d].author) {
        result.attack_view.mask(a, d);
        result.defense_view.mask(a, d);
        continue;
      }
      ScoredCohort c;
      c.labels = labels;
      c.clean = clean[d];
      c.attacked = defenses[d].model->score_batch(edited[a], workers);
      result.attack_view.set(a, d, attack_score(c));
      result.defense_view.set(a, d, defense_score(c));
    }
  }
  return result;
}

std::vector<SweepRow> budget_sweep(std::span<const SweepEntry> entries, const ScoreModel& model,
                                   std::span<const ClientSequence> cohort, std::span<const int> budgets,
                                   int workers) {
  if (budgets.empty()) throw Error("budget sweep needs at least one budget");
  std::vector<int> labels;
  for (const auto& s : cohort) {
    if (!s.label) throw Error("sweep cohort needs labels");
    labels.push_back(*s.label);
  }
  const auto clean = model.score_batch(cohort, workers);
  const double clean_auc = roc_auc(clean, labels);
  std::vector<SweepRow> rows;
  for (const auto& e : entries) {
    for (int b : budgets) {
      SweepRow row{e.name, e.group, b, clean_auc, clean_auc};
      if (b > 0) {
        const auto edits = e.attack(b);
        const auto attacked = model.score_batch(apply_attack(cohort, edits), workers);
        row.attacked_auc = roc_auc(attacked, labels);
      }
      rows.push_back(row);
    }
  }
  return rows;
}

Json tournament_to_json(const TournamentResult& r) {
  auto view = [](const TournamentMatrix& m) {
    Json j;
    j["attacks"] = m.attacks();
    j["defenses"] = m.defenses();
    Json cells = Json::array();
    for (size_t a = 0; a < m.n_attacks(); ++a) {
      Json row = Json::array();
      for (size_t d = 0; d < m.n_defenses(); ++d) {
        const auto v = m.get(a, d);
        row.push_back(m.masked(a, d) || !v ? Json(nullptr) : Json(*v));
      }
      cells.push_back(std::move(row));
    }
    j["cells"] = std::move(cells);
    Json rows = Json::object(), cols = Json::object();
    for (size_t a = 0; a < m.n_attacks(); ++a) {
      const auto v = m.row_average(a);
      rows[m.attacks()[a]] = v ? Json(*v) : Json(nullptr);
    }
    for (size_t d = 0; d < m.n_defenses(); ++d) {
      const auto v = m.column_average(d);
      cols[m.defenses()[d]] = v ? Json(*v) : Json(nullptr);
    }
    j["attack_averages"] = std::move(rows);
    j["defense_averages"] = std::move(cols);
    j["attack_ranking"] = m.attack_ranking();
    j["defense_ranking"] = m.defense_ranking();
    return j;
  };
  Json j;
  j["attack_view"] = view(r.attack_view);
  j["defense_view"] = view(r.defense_view);
  j["clean_auc"] = r.clean_auc;
  Json dq = Json::array();
  for (const auto& d : r.disqualified) dq.push_back({{"attack", d.attack}, {"client_id", d.client_id}, {"reason", d.reason}});
  j["disqualified"] = std::move(dq);
  return j;
}

}  // namespace txadv
