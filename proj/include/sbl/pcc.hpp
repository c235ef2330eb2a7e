#pragma once

#include <cmath>
#include <vector>

#include "sbl/errors.hpp"

namespace sbl::udgn {

struct PccEntry {
  double value = 0.0;
  bool defined = false;  // false when either column has zero variance
};

// Pearson correlation between each channel's probability on the gold edges
// (child-to-parent direction) and each binary dependency-type indicator.
// channel_probs: edges x channels; type_indicators: edges x types.
// Population covariance; zero-variance columns yield an undefined marker.
inline std::vector<std::vector<PccEntry>> channel_type_pcc(
    const std::vector<std::vector<double>>& channel_probs,
    const std::vector<std::vector<double>>& type_indicators) {
  size_t e = channel_probs.size();
  if (e < 2) throw ContractError("channel_type_pcc: need at least 2 edges");
  if (type_indicators.size() != e)
    throw ContractError("channel_type_pcc: edge counts differ between channels and types");
  size_t nk = channel_probs[0].size();
  size_t nl = type_indicators[0].size();

  auto column_stats = [e](const std::vector<std::vector<double>>& rows, size_t col, double& mean,
                          double& sd) {
    mean = 0.0;
    for (size_t i = 0; i < e; ++i) mean += rows[i][col];
    mean /= static_cast<double>(e);
    double var = 0.0;
    for (size_t i = 0; i < e; ++i) var += (rows[i][col] - mean) * (rows[i][col] - mean);
    var /= static_cast<double>(e);
    sd = std::sqrt(var);
  };

  std::vector<std::vector<PccEntry>> rho(nk, std::vector<PccEntry>(nl));
  for (size_t k = 0; k < nk; ++k) {
    double mk, sk;
    column_stats(channel_probs, k, mk, sk);
    for (size_t l = 0; l < nl; ++l) {
      double ml, sl;
      column_stats(type_indicators, l, ml, sl);
      if (sk == 0.0 || sl == 0.0) continue;  // stays undefined
      double cov = 0.0;
      for (size_t i = 0; i < e; ++i) cov += (channel_probs[i][k] - mk) * (type_indicators[i][l] - ml);
      cov /= static_cast<double>(e);
      rho[k][l] = PccEntry{cov / (sk * sl), true};
    }
  }
  return rho;
}

}  // namespace sbl::udgn
