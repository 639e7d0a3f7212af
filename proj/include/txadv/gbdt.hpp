#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "txadv/features.hpp"
#include "txadv/model.hpp"

namespace txadv {

// Dense row-major matrix of doubles.
struct Matrix {
  size_t rows = 0;
  size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(size_t r, size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
  double* row(size_t i) { return data.data() + i * cols; }
  const double* row(size_t i) const { return data.data() + i * cols; }
  double& operator()(size_t i, size_t j) { return data[i * cols + j]; }
  double operator()(size_t i, size_t j) const { return data[i * cols + j]; }
};

enum class Loss : uint8_t { kSquared, kLogistic };

const char* loss_name(Loss loss);
Loss parse_loss(const std::string& name);

struct GbdtParams {
  Loss loss = Loss::kLogistic;
  int n_trees = 200;
  int max_depth = 4;
  double learning_rate = 0.1;
  double row_subsample = 0.8;
  double col_subsample = 1.0;  // per tree
  double l2 = 1.0;
  int min_samples_leaf = 5;
  double min_child_weight = 1e-3;
  uint64_t seed = 0;

  void validate() const;
  Json to_json() const;
  static GbdtParams from_json(const Json& j);
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;  // x < threshold goes left
  int left = -1;
  int right = -1;
  double value = 0.0;
};

struct Tree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  double predict(const double* x) const;
  int depth() const;
};

class Booster {
 public:
  Booster() = default;
  Booster(Loss loss, double base_score, double learning_rate, size_t n_features, std::vector<Tree> trees);

  // base + lr * sum of leaf values, before the link function.
  double raw(const double* x) const;
  // Sigmoid of raw() for logistic loss, raw() itself for squared loss.
  double predict(const double* x) const;

  Loss loss() const { return loss_; }
  double base_score() const { return base_score_; }
  double learning_rate() const { return learning_rate_; }
  size_t n_features() const { return n_features_; }
  const std::vector<Tree>& trees() const { return trees_; }
  // Sorted ids of features used by any split.
  std::vector<int> used_features() const;

  Json to_json() const;
  static Booster from_json(const Json& j);

 private:
  Loss loss_ = Loss::kSquared;
  double base_score_ = 0.0;
  double learning_rate_ = 0.1;
  size_t n_features_ = 0;
  std::vector<Tree> trees_;
};

// Stagewise Newton boosting with exact greedy level-wise splits. When
// `loss_trace` is given it receives the mean training loss after each tree
// (entry 0 is the base-score loss).
Booster train_gbdt(const Matrix& x, std::span<const double> y, const GbdtParams& params,
                   std::vector<double>* loss_trace = nullptr);

double mean_loss(Loss loss, std::span<const double> raw, std::span<const double> y);

// Booster over aggregate features of a sequence. `columns` selects the
// aggregate coordinates fed to the booster (empty = all, in order).
class GbdtModel final : public ScoreModel {
 public:
  GbdtModel(AggregateSpec spec, std::vector<int> columns, Booster booster);

  double score(std::span<const Transaction> seq) const override;
  using ScoreModel::score;
  std::vector<double> score_candidates(std::span<const Transaction> base,
                                       std::span<const Edit> candidates) const override;
  std::string kind() const override { return "gbdt"; }
  Json to_json() const override;
  static std::shared_ptr<GbdtModel> from_json(const Json& j);

  const AggregateSpec& spec() const { return spec_; }
  const std::vector<int>& columns() const { return columns_; }
  const Booster& booster() const { return booster_; }
  // Output for an already computed aggregate vector.
  double score_features(std::span<const double> features) const;

  // Training diagnostics carried along for reporting.
  Json metrics;

 private:
  AggregateSpec spec_;
  std::vector<int> columns_;
  Booster booster_;
};

// Aggregate feature matrix for the given sequences, one row per sequence.
Matrix aggregate_matrix(std::span<const ClientSequence> seqs, const AggregateSpec& spec, int workers = 1);
Matrix select_columns(const Matrix& x, std::span<const int> columns);

std::shared_ptr<GbdtModel> train_gbdt_model(std::span<const ClientSequence> seqs, std::span<const double> targets,
                                            const AggregateSpec& spec, std::vector<int> columns,
                                            const GbdtParams& params, int workers = 1);

}  // namespace txadv
