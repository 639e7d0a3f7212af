#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "txadv/data.hpp"
#include "txadv/io.hpp"

namespace txadv {

// Maps a transaction sequence to a default probability in [0, 1]. Scoring
// is const and side-effect free, so one model may be shared by many threads.
class ScoreModel {
 public:
  virtual ~ScoreModel() = default;

  virtual double score(std::span<const Transaction> seq) const = 0;
  double score(const ClientSequence& seq) const { return score(std::span<const Transaction>(seq.transactions)); }

  // Elementwise equal to score(); fans out over `workers` threads.
  virtual std::vector<double> score_batch(std::span<const ClientSequence> seqs, int workers = 1) const;

  // Score of `base` with each single candidate edit applied on its own.
  // Implementations may reuse work across candidates; results agree with
  // score(apply_edits(base, {c})) up to floating-point rounding.
  virtual std::vector<double> score_candidates(std::span<const Transaction> base,
                                               std::span<const Edit> candidates) const;

  virtual bool gradient_capable() const { return false; }
  virtual std::string kind() const = 0;
  virtual Json to_json() const = 0;
};

using ModelPtr = std::shared_ptr<const ScoreModel>;

// Constant-score model; handy as a placeholder teacher or defense.
class ConstantModel final : public ScoreModel {
 public:
  explicit ConstantModel(double value);
  double score(std::span<const Transaction>) const override { return value_; }
  using ScoreModel::score;
  std::vector<double> score_candidates(std::span<const Transaction>, std::span<const Edit> c) const override {
    return std::vector<double>(c.size(), value_);
  }
  std::string kind() const override { return "constant"; }
  Json to_json() const override;
  double value() const { return value_; }

 private:
  double value_;
};

using ModelLoader = std::function<ModelPtr(const Json&)>;

// Loaders are looked up by the "kind" field of a model document.
void register_model_kind(const std::string& kind, ModelLoader loader);
ModelPtr model_from_json(const Json& j);

inline constexpr const char* kModelSchema = "txadv.model";

void save_model(const std::filesystem::path& path, const ScoreModel& model);
ModelPtr load_model(const std::filesystem::path& path);

}  // namespace txadv
