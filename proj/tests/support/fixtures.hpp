#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "txadv/data.hpp"
#include "txadv/model.hpp"

namespace txadv::testing {

// Fraction of transactions carrying `mcc`.
class ToyScorer final : public ScoreModel {
 public:
  explicit ToyScorer(int mcc = 0) : mcc_(mcc) {}
  double score(std::span<const Transaction> seq) const override {
    if (seq.empty()) return 0.0;
    return static_cast<double>(std::count_if(seq.begin(), seq.end(), [&](const Transaction& t) { return t.mcc == mcc_; })) /
           static_cast<double>(seq.size());
  }
  std::string kind() const override { return "toy"; }
  Json to_json() const override { return Json{{"kind", "toy"}, {"mcc", mcc_}}; }

 private:
  int mcc_;
};

inline ClientSequence make_sequence(const std::string& id, std::vector<int> mccs, int64_t t0 = 1'600'000'000) {
  ClientSequence s;
  s.client_id = id;
  s.label = 0;
  for (size_t i = 0; i < mccs.size(); ++i)
    s.transactions.push_back({mccs[i], 10.0 + static_cast<double>(i), 0, t0 + static_cast<int64_t>(i) * 3600});
  return s;
}

// Catalog where every listed MCC is observed with amounts in [1, 100].
inline MccCatalog toy_catalog(int n_mcc, std::vector<int> observed) {
  Dataset ds;
  ds.n_mcc = n_mcc;
  ds.n_currency = 1;
  ClientSequence s;
  s.client_id = "catalog";
  s.label = 0;
  int64_t ts = 1'600'000'000;
  for (int m : observed) {
    s.transactions.push_back({m, 1.0, 0, ts++});
    s.transactions.push_back({m, 100.0, 0, ts++});
  }
  ds.sequences.push_back(s);
  ds.split_tags.push_back(SplitTag::kTrain);
  return build_catalog(ds);
}

inline SynthConfig small_synth(int n_clients = 200, int seq_len = 60, uint64_t seed = 3) {
  SynthConfig c;
  c.n_clients = n_clients;
  c.seq_len = seq_len;
  c.n_mcc = 30;
  c.default_rate = 0.2;
  c.seed = seed;
  return c;
}

inline Dataset small_dataset(int n_clients = 200, int seq_len = 60, uint64_t seed = 3) {
  Dataset ds = generate_synthetic(small_synth(n_clients, seq_len, seed));
  assign_splits(ds, 0.5, seed + 1);
  return ds;
}

// O(n^2) pair counting: P(score_pos > score_neg) + 0.5 P(tie).
inline double pair_auc(std::span<const double> s, std::span<const int> y) {
  double num = 0.0, pairs = 0.0;
  for (size_t i = 0; i < s.size(); ++i)
    for (size_t j = 0; j < s.size(); ++j)
      if (y[i] == 1 && y[j] == 0) {
        pairs += 1.0;
        num += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
      }
  return num / pairs;
}

}  // namespace txadv::testing
