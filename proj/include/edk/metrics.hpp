#ifndef EDK_METRICS_HPP
#define EDK_METRICS_HPP

#include <vector>

namespace edk::metrics {

// Probability that a random positive outranks a random negative; ties count
// half. O(n log n) via average ranks. Throws DataError when only one label
// class is present.
double auc(const std::vector<double>& scores, const std::vector<double>& labels);

// Mean negative log-likelihood with probabilities clipped to
// [1e-7, 1 - 1e-7].
double logloss(const std::vector<double>& scores,
               const std::vector<double>& labels);

}  // namespace edk::metrics

#endif  // EDK_METRICS_HPP
