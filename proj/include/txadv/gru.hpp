#pragma once

#include <Eigen/Dense>
#include <array>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "txadv/features.hpp"
#include "txadv/model.hpp"

namespace txadv {

struct GruHyper {
  std::array<int, kNumChannels> embedding_dims{16, 8, 2, 4, 4, 3, 3};
  int hidden = 32;
  int window = 300;  // most recent transactions fed to the network
  int epochs = 40;
  int batch_size = 8;
  double learning_rate = 3e-4;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double spatial_dropout = 0.5;
  double head_dropout = 0.5;
  double init_scale = 1.0;  // multiplies the default uniform init ranges
  uint64_t seed = 0;

  int input_dim() const;
  void validate() const;
  Json to_json() const;
  static GruHyper from_json(const Json& j);
};

struct GruParams {
  std::array<Eigen::MatrixXd, kNumChannels> embeddings;  // card x dim per channel
  Eigen::MatrixXd w_ih;  // 3H x D, gate rows ordered reset, update, candidate
  Eigen::MatrixXd w_hh;  // 3H x H
  Eigen::VectorXd b_ih;
  Eigen::VectorXd b_hh;
  Eigen::VectorXd w_head;  // H
  double b_head = 0.0;

  bool all_finite() const;
};

// Gradient of the pre-sigmoid logit with respect to each position's
// concatenated embedding vector (column t of `grad`, D rows).
struct EmbeddingGradient {
  Eigen::MatrixXd grad;  // D x T
  int window_offset = 0;  // sequence index of column 0
  std::array<int, kNumChannels> offsets{};
  std::array<int, kNumChannels> dims{};

  Eigen::VectorXd channel(int t, int channel) const {
    return grad.block(offsets[static_cast<size_t>(channel)], t, dims[static_cast<size_t>(channel)], 1);
  }
};

// Single-layer GRU over concatenated per-channel embeddings, last hidden
// state into a linear head and a sigmoid.
class GruModel final : public ScoreModel {
 public:
  GruModel(AmountBinner binner, std::array<int, kNumChannels> cardinalities, GruHyper hyper, GruParams params);

  double score(std::span<const Transaction> seq) const override;
  using ScoreModel::score;
  std::vector<double> score_candidates(std::span<const Transaction> base,
                                       std::span<const Edit> candidates) const override;
  bool gradient_capable() const override { return true; }
  std::string kind() const override { return "gru"; }
  Json to_json() const override;
  static std::shared_ptr<GruModel> from_json(const Json& j);

  double logit(std::span<const Transaction> seq) const;
  // Hidden states h_0 (zeros) .. h_T over the scored window, one per column.
  Eigen::MatrixXd hidden_states(std::span<const Transaction> seq) const;

  // Concatenated embeddings of the scored window, D x T.
  Eigen::MatrixXd embed(std::span<const Transaction> seq) const;
  // Logit computed directly from explicit embedding columns.
  double logit_from_embedded(const Eigen::MatrixXd& x) const;
  EmbeddingGradient embedding_gradient(std::span<const Transaction> seq) const;

  const AmountBinner& binner() const { return binner_; }
  const GruHyper& hyper() const { return hyper_; }
  const GruParams& params() const { return params_; }
  const std::array<int, kNumChannels>& cardinalities() const { return cards_; }
  int channel_offset(int channel) const { return offsets_[static_cast<size_t>(channel)]; }
  const Eigen::MatrixXd& embedding(int channel) const { return params_.embeddings[static_cast<size_t>(channel)]; }
  // First sequence index inside the scored window.
  size_t window_start(size_t length) const;

  Json metrics;

 private:
  void build_tables();
  std::vector<TokenizedTransaction> window_tokens(std::span<const Transaction> seq) const;
  void input_gates(const TokenizedTransaction& tok, double* out) const;

  AmountBinner binner_;
  std::array<int, kNumChannels> cards_;
  GruHyper hyper_;
  GruParams params_;
  std::array<int, kNumChannels> offsets_{};
  // Per channel, 3H x card: input-gate contribution of each token.
  std::array<Eigen::MatrixXd, kNumChannels> proj_;
};

// Row of `table` closest to `v` in Euclidean distance, lowest row on ties.
// `allowed`, when nonempty, restricts the search to the listed rows.
int nearest_token(const Eigen::MatrixXd& table, std::span<const double> v, std::span<const int> allowed = {});

GruParams init_gru_params(const std::array<int, kNumChannels>& cards, const GruHyper& hyper);

struct GruTrainReport {
  std::vector<double> epoch_loss;
  double final_train_loss = 0.0;
};

// Mini-batch AdamW on binary cross-entropy. Throws Error on a non-finite
// loss. Deterministic in hyper.seed.
std::shared_ptr<GruModel> train_gru(std::span<const ClientSequence> train, const AmountBinner& binner, int n_mcc,
                                    int n_currency, const GruHyper& hyper, GruTrainReport* report = nullptr);

}  // namespace txadv
