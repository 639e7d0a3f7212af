#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "txadv/data.hpp"
#include "txadv/gru.hpp"
#include "txadv/model.hpp"
#include "txadv/random.hpp"

namespace txadv {

enum class ObjectiveMode : uint8_t { kSuppress, kBoost, kFlip };
enum class SamplerMode : uint8_t { kUniform, kGen };

const char* objective_name(ObjectiveMode mode);
ObjectiveMode parse_objective(const std::string& name);
const char* sampler_name(SamplerMode mode);
SamplerMode parse_sampler(const std::string& name);

// Direction per client: -1 pushes the score down, +1 pushes it up. Attacks
// minimize value(score) = -direction * score.
struct AttackObjective {
  ObjectiveMode mode = ObjectiveMode::kFlip;
  double tau = 0.5;  // flip threshold, set from the cohort's clean scores

  int direction(double clean_score) const;
  static double value(double score, int direction) { return direction < 0 ? score : -score; }
};

struct AttackConfig {
  AttackBudget budget;
  int candidates = 1000;         // greedy k0
  int beam_candidates = 10000;   // beam k
  int beam_width = 100;          // beam k0
  double gradient_step = 1.0;    // epsilon
  int gradient_attempts = 30;    // position trials before giving up
  AttackObjective objective;
  SamplerMode sampler = SamplerMode::kUniform;
  double choice_probability = 0.5;  // combined attack, random-surrogate mode
  uint64_t seed = 0;

  void validate() const;
  Json to_json() const;
  static AttackConfig from_json(const Json& j);
};

// Draws single substitutions that respect the catalog constraints.
class CandidateSampler {
 public:
  CandidateSampler(const MccCatalog& catalog, SamplerMode mode, double shrink);

  // Uniform position among those with edited[p] == 0 (all when empty).
  Edit sample(size_t length, std::span<const char> edited, Rng& rng) const;
  // Substitution at a given position.
  Edit sample_at(int position, Rng& rng) const;

  const std::vector<int>& eligible_mccs() const { return eligible_; }
  const AmountInterval& interval(int mcc) const { return intervals_[static_cast<size_t>(mcc)]; }

 private:
  const MccCatalog* catalog_;
  SamplerMode mode_;
  std::vector<int> eligible_;
  std::vector<AmountInterval> intervals_;
};

Edit sample_candidate(std::span<const Transaction> seq, const MccCatalog& catalog, SamplerMode mode, double shrink,
                      Rng& rng);

struct ClientAttack {
  EditList edits;
  double clean_score = 0.0;
  double attacked_score = 0.0;  // under the attacked (surrogate) model
  int64_t evaluations = 0;
  std::vector<double> trajectory;  // objective value after each accepted step, entry 0 = clean
};

// Stream for step `step` of client `client_id`: shared between greedy and
// beam and across budgets.
uint64_t candidate_seed(uint64_t seed, const std::string& client_id, uint64_t step);

EditList random_attack(const ClientSequence& seq, const MccCatalog& catalog, const AttackConfig& config);

ClientAttack greedy_attack(const ScoreModel& model, const ClientSequence& seq, const MccCatalog& catalog,
                           const AttackConfig& config, int direction);

ClientAttack beam_sampling_attack(const ScoreModel& surrogate, const ClientSequence& seq, const MccCatalog& catalog,
                                  const AttackConfig& config, int direction);

ClientAttack gradient_attack(const GruModel& gru, const ClientSequence& seq, const MccCatalog& catalog,
                             const AttackConfig& config, int direction);

enum class AttackKind : uint8_t { kBaseline, kRandom, kGreedy, kBeam, kGradient, kCombined };

const char* attack_kind_name(AttackKind kind);
AttackKind parse_attack_kind(const std::string& name);

struct AttackResult {
  std::string name;
  std::vector<EditList> edits;  // one per cohort client, in cohort order
  std::vector<double> clean_scores;
  std::vector<double> attacked_scores;
  int64_t evaluations = 0;
  double tau = 0.0;
  Json header;  // config and seed for replay
};

// Attacks a cohort. `models` are the attacked (surrogate) models: one for
// everything except kCombined, which averages them with `weights`, or, with
// random_choice set, picks one of the first two per client. kGradient needs
// a GRU as models[0].
AttackResult run_attack(AttackKind kind, std::span<const ModelPtr> models, std::span<const double> weights,
                        std::span<const ClientSequence> cohort, const MccCatalog& catalog, const AttackConfig& config,
                        int workers = 1, bool random_choice = false);

AttackResult baseline_transplant_attack(const ScoreModel& model, std::span<const ClientSequence> cohort,
                                        const MccCatalog& catalog, const AttackBudget& budget, int workers = 1);

// Edits of `result` truncated to their first `budget` entries.
std::vector<EditList> truncate_edits(std::span<const EditList> edits, int budget);

}  // namespace txadv
