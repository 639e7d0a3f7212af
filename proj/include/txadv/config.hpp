#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "txadv/attacks.hpp"
#include "txadv/data.hpp"
#include "txadv/io.hpp"
#include "txadv/pipeline.hpp"

namespace txadv {

Json synth_config_to_json(const SynthConfig& c);
SynthConfig synth_config_from_json(const Json& j);

enum class DefenseStrategy : uint8_t { kSubsample, kNnMix, kPermutationAverage, kFilter };

const char* defense_strategy_name(DefenseStrategy s);
DefenseStrategy parse_defense_strategy(const std::string& name);

struct DefenseSpec {
  DefenseStrategy strategy = DefenseStrategy::kSubsample;
  double share = 0.9;
  int repeats = 9;   // subsample / nn-mix
  int n_perm = 1;    // permutation-average
  double theta = 0.5;

  void validate() const;
};

enum class EvalSplit : uint8_t { kPublic, kPrivate, kBoth };

const char* eval_split_name(EvalSplit s);
EvalSplit parse_eval_split(const std::string& name);

struct RunConfig {
  uint64_t seed = 0;
  int workers = 1;
  SynthConfig data;
  double train_fraction = 0.5;
  DefendedKind model_kind = DefendedKind::kNnBase;
  ZooParams model;
  AttackKind attack_kind = AttackKind::kGreedy;
  AttackConfig attack;
  DefenseSpec defense;
  std::vector<int> budgets{3, 5, 10};
  std::string out_dir = "out";
  EvalSplit split = EvalSplit::kPrivate;

  // Effective config with every stage seed derived from `seed` through the
  // named streams data, train, attack, defense and eval.
  RunConfig resolved() const;
  uint64_t split_seed() const;
  void validate() const;

  Json to_json() const;
  // Strict: unknown keys and per-section seeds are rejected.
  static RunConfig from_json(const Json& j);
  static RunConfig load(const std::filesystem::path& path);
};

// Clients of the dataset's test cohort on the requested split, in order.
std::vector<size_t> split_indices(const Dataset& ds, EvalSplit split);

}  // namespace txadv
