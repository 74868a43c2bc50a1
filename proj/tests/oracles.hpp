#pragma once

// Test-only brute-force reference implementations. These deliberately follow
// the O(n^2) definitions and stay independent of the library code paths they
// check.

#include <cstdint>
#include <vector>

namespace nlb::testing {

// Pairwise Mann-Whitney AUC: wins + half-ties over pos x neg pairs.
inline double auc_bruteforce(const std::vector<double>& scores,
                             const std::vector<int>& labels) {
  double numer = 0.0;
  std::int64_t pos = 0, neg = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] > 0) {
      ++pos;
      for (std::size_t j = 0; j < labels.size(); ++j) {
        if (labels[j] > 0) continue;
        if (scores[i] > scores[j]) numer += 1.0;
        else if (scores[i] == scores[j]) numer += 0.5;
      }
    } else {
      ++neg;
    }
  }
  return numer / (static_cast<double>(pos) * static_cast<double>(neg));
}

// Average precision by repeated selection of the max (score, -index) item.
inline double ap_bruteforce(const std::vector<double>& scores,
                            const std::vector<int>& labels) {
  const std::size_t n = scores.size();
  std::vector<bool> used(n, false);
  double ap = 0.0;
  std::int64_t hits = 0, total_pos = 0;
  for (int l : labels) total_pos += l > 0;
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t best = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (used[i]) continue;
      if (best == n || scores[i] > scores[best] ||
          (scores[i] == scores[best] && i < best)) {
        best = i;
      }
    }
    used[best] = true;
    if (labels[best] > 0) {
      ++hits;
      ap += static_cast<double>(hits) / static_cast<double>(k + 1);
    }
  }
  return ap / static_cast<double>(total_pos);
}

// Mid-rank reciprocal rank by direct counting.
inline double rr_bruteforce(double pos, const std::vector<double>& negs) {
  double greater = 0.0, equal = 0.0;
  for (double s : negs) {
    if (s > pos) greater += 1.0;
    else if (s == pos) equal += 1.0;
  }
  return 1.0 / (1.0 + greater + equal / 2.0);
}

}  // namespace nlb::testing
