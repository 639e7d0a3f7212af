#pragma once

#include <span>
#include <string>
#include <vector>

namespace txadv {

// Probability that a random positive outranks a random negative, ties
// counted one half, from midranks. Throws Error unless both classes occur.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

// Harmonic mean 2ab/(a+b); 0 when either side is 0.
double harmonic_mean(double a, double b);

// Spearman rank correlation with midranks; NaN when either side is
// constant or fewer than two points are given.
double spearman(std::span<const double> a, std::span<const double> b);

// Midranks (1-based) of the values.
std::vector<double> midranks(std::span<const double> values);

struct ScoredCohort {
  std::vector<std::string> client_ids;
  std::vector<int> labels;
  std::vector<double> clean;
  std::vector<double> attacked;

  void validate() const;
  double clean_auc() const { return roc_auc(clean, labels); }
  double attacked_auc() const { return roc_auc(attacked, labels); }
};

// AUC(clean) - AUC(attacked).
double attack_score(const ScoredCohort& cohort);
// Harmonic mean of clean and attacked AUC.
double defense_score(const ScoredCohort& cohort);

}  // namespace txadv
