#include "nlb/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace nlb {

double auc_score(const std::vector<double>& scores,
                 const std::vector<int>& labels) {
  if (scores.size() != labels.size() || scores.empty()) {
    throw std::invalid_argument("auc: scores/labels size mismatch");
  }
  const std::int64_t n = static_cast<std::int64_t>(scores.size());
  std::vector<std::int64_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::int64_t a, std::int64_t b) {
    return scores[a] < scores[b];
  });

  std::int64_t pos = 0;
  for (int l : labels) pos += l > 0;
  const std::int64_t neg = n - pos;
  if (pos == 0 || neg == 0) {
    throw std::invalid_argument("auc needs both classes present");
  }

  // Sum of mid-ranks of positives; ties share the average rank of their run.
  double rank_sum = 0.0;
  std::int64_t i = 0;
  while (i < n) {
    std::int64_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double mid_rank = 0.5 * static_cast<double>(i + 1 + j);  // 1-based
    for (std::int64_t k = i; k < j; ++k) {
      if (labels[order[k]] > 0) rank_sum += mid_rank;
    }
    i = j;
  }
  const double p = static_cast<double>(pos);
  return (rank_sum - p * (p + 1.0) / 2.0) /
         (p * static_cast<double>(neg));
}

double average_precision(const std::vector<double>& scores,
                         const std::vector<int>& labels) {
  if (scores.size() != labels.size() || scores.empty()) {
    throw std::invalid_argument("ap: scores/labels size mismatch");
  }
  const std::int64_t n = static_cast<std::int64_t>(scores.size());
  std::vector<std::int64_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::int64_t a, std::int64_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  std::int64_t total_pos = 0;
  for (int l : labels) total_pos += l > 0;
  if (total_pos == 0) throw std::invalid_argument("ap needs a positive");

  double ap = 0.0;
  std::int64_t hits = 0;
  for (std::int64_t k = 0; k < n; ++k) {
    if (labels[order[k]] > 0) {
      ++hits;
      ap += static_cast<double>(hits) / static_cast<double>(k + 1);
    }
  }
  return ap / static_cast<double>(total_pos);
}

double reciprocal_rank(double pos_score, const std::vector<double>& neg_scores) {
  std::int64_t greater = 0, ties = 0;
  for (double s : neg_scores) {
    if (s > pos_score) ++greater;
    else if (s == pos_score) ++ties;
  }
  const double rank = 1.0 + static_cast<double>(greater) +
                      static_cast<double>(ties) / 2.0;
  return 1.0 / rank;
}

double mrr_score(const std::vector<double>& pos_scores,
                 const std::vector<std::vector<double>>& neg_scores) {
  if (pos_scores.size() != neg_scores.size() || pos_scores.empty()) {
    throw std::invalid_argument("mrr: query count mismatch");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < pos_scores.size(); ++i) {
    sum += reciprocal_rank(pos_scores[i], neg_scores[i]);
  }
  return sum / static_cast<double>(pos_scores.size());
}

double f1_micro(const std::vector<int>& predicted,
                const std::vector<int>& truth) {
  if (predicted.size() != truth.size() || predicted.empty()) {
    throw std::invalid_argument("f1: size mismatch");
  }
  // Single-label multiclass: every wrong prediction is one FP and one FN.
  std::int64_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (predicted[i] == truth[i]) {
      ++tp;
    } else {
      ++fp;
      ++fn;
    }
  }
  const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  const double recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

}  // namespace nlb
