#include "edk/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "edk/errors.hpp"

namespace edk::metrics {

double auc(const std::vector<double>& scores,
           const std::vector<double>& labels) {
  if (scores.size() != labels.size())
    throw DataError("auc: scores and labels differ in length");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] < scores[b];
  });

  // Average ranks over tie groups, then sum ranks of positives.
  double pos_rank_sum = 0.0;
  std::size_t n_pos = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * (static_cast<double>(i + 1) +
                                   static_cast<double>(j));  // 1-based
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] > 0.5) {
        pos_rank_sum += avg_rank;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0)
    throw DataError("auc: needs both label classes");
  const double np = static_cast<double>(n_pos);
  const double nn = static_cast<double>(n_neg);
  return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

double logloss(const std::vector<double>& scores,
               const std::vector<double>& labels) {
  if (scores.size() != labels.size())
    throw DataError("logloss: scores and labels differ in length");
  if (scores.empty()) throw DataError("logloss: empty input");
  constexpr double kEps = 1e-7;
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double p = std::min(1.0 - kEps, std::max(kEps, scores[i]));
    total -= labels[i] > 0.5 ? std::log(p) : std::log1p(-p);
  }
  return total / static_cast<double>(scores.size());
}

}  // namespace edk::metrics
