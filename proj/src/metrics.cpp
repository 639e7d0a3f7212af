#include "txadv/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "txadv/error.hpp"

namespace txadv {

std::vector<double> midranks(std::span<const double> values) {
  const size_t n = values.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  for (size_t i = 0; i < n;) {
    size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    // Average of ranks i+1..j+1, exact in binary for the sizes used here.
    const double r = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw Error("roc_auc: scores and labels differ in length");
  int64_t n1 = 0, n0 = 0;
  for (int y : labels) {
    if (y == 1) ++n1;
    else if (y == 0) ++n0;
    else throw Error("roc_auc: labels must be 0 or 1");
  }
  if (n1 == 0 || n0 == 0) throw Error("roc_auc needs both classes");
  for (double s : scores)
    if (std::isnan(s)) throw Error("roc_auc: NaN score");
  const auto ranks = midranks(scores);
  // Twice the positive rank sum is an integer, so the statistic is exact.
  int64_t twice_rank_sum = 0;
  for (size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == 1) twice_rank_sum += static_cast<int64_t>(2.0 * ranks[i]);
  const int64_t twice_u = twice_rank_sum - n1 * (n1 + 1);
  return static_cast<double>(twice_u) / (2.0 * static_cast<double>(n1) * static_cast<double>(n0));
}

double harmonic_mean(double a, double b) {
  if (a == 0.0 || b == 0.0) return 0.0;
  return 2.0 * a * b / (a + b);
}

double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error("spearman: inputs differ in length");
  const size_t n = a.size();
  if (n < 2) return std::numeric_limits<double>::quiet_NaN();
  const auto ra = midranks(a), rb = midranks(b);
  const double mean = (static_cast<double>(n) + 1.0) / 2.0;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double da = ra[i] - mean, db = rb[i] - mean;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return sab / std::sqrt(saa * sbb);
}

void ScoredCohort::validate() const {
  const size_t n = labels.size();
  if (clean.size() != n || attacked.size() != n || (!client_ids.empty() && client_ids.size() != n))
    throw Error("scored cohort arrays differ in length");
}

double attack_score(const ScoredCohort& cohort) {
  cohort.validate();
  return cohort.clean_auc() - cohort.attacked_auc();
}

double defense_score(const ScoredCohort& cohort) {
  cohort.validate();
  return harmonic_mean(cohort.clean_auc(), cohort.attacked_auc());
}

}  // namespace txadv
