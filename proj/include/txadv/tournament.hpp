#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "txadv/data.hpp"
#include "txadv/io.hpp"
#include "txadv/model.hpp"

namespace txadv {

// Attack x defense grid. Averages are recomputed from the cells on every
// call and skip masked or missing cells.
class TournamentMatrix {
 public:
  TournamentMatrix() = default;
  TournamentMatrix(std::vector<std::string> attacks, std::vector<std::string> defenses);

  size_t n_attacks() const { return attacks_.size(); }
  size_t n_defenses() const { return defenses_.size(); }
  const std::vector<std::string>& attacks() const { return attacks_; }
  const std::vector<std::string>& defenses() const { return defenses_; }

  void set(size_t a, size_t d, double value);
  std::optional<double> get(size_t a, size_t d) const;
  void mask(size_t a, size_t d);
  bool masked(size_t a, size_t d) const { return mask_[index(a, d)] != 0; }

  // Mean over unmasked, present cells; nullopt when none remain.
  std::optional<double> row_average(size_t a) const;
  std::optional<double> column_average(size_t d) const;

  // Names by descending average (higher is better); rows/columns without
  // an average go last; ties by name.
  std::vector<std::string> attack_ranking() const;
  std::vector<std::string> defense_ranking() const;

 private:
  size_t index(size_t a, size_t d) const;

  std::vector<std::string> attacks_, defenses_;
  std::vector<std::optional<double>> cells_;
  std::vector<char> mask_;
};

struct AttackEntry {
  std::string name;
  std::string author;
  std::vector<EditList> edits;  // matched to cohort clients by client_id
};

struct DefenseEntry {
  std::string name;
  std::string author;
  ModelPtr model;
};

struct Disqualification {
  std::string attack;
  std::string client_id;
  std::string reason;
};

struct TournamentResult {
  TournamentMatrix attack_view;   // attack_score per cell
  TournamentMatrix defense_view;  // defense_score per cell
  std::vector<double> clean_auc;  // per defense
  std::vector<Disqualification> disqualified;
};

// Edited copy of the cohort; clients without an edit list stay unchanged.
std::vector<ClientSequence> apply_attack(std::span<const ClientSequence> cohort, std::span<const EditList> edits);

// Attacks failing validation on any client are disqualified and left out of
// both matrices. Same-author cells are masked.
TournamentResult run_tournament(std::span<const AttackEntry> attacks, std::span<const DefenseEntry> defenses,
                                std::span<const ClientSequence> cohort, const MccCatalog& catalog,
                                const AttackBudget& budget, int workers = 1);

struct SweepEntry {
  std::string name;
  std::string group;  // e.g. same-architecture, different-architecture, random
  std::function<std::vector<EditList>(int budget)> attack;
};

struct SweepRow {
  std::string attack;
  std::string group;
  int budget = 0;
  double clean_auc = 0.0;
  double attacked_auc = 0.0;
};

std::vector<SweepRow> budget_sweep(std::span<const SweepEntry> entries, const ScoreModel& model,
                                   std::span<const ClientSequence> cohort, std::span<const int> budgets,
                                   int workers = 1);

Json tournament_to_json(const TournamentResult& result);

}  // namespace txadv
