#pragma once

#include <cstdint>
#include <vector>

namespace nlb {

// ROC AUC via the rank-sum identity with mid-ranks on ties. Throws when a
// class is missing.
double auc_score(const std::vector<double>& scores,
                 const std::vector<int>& labels);

// Average precision with deterministic ordering: score descending, original
// index ascending on ties.
double average_precision(const std::vector<double>& scores,
                         const std::vector<int>& labels);

// Rank of the positive among its negatives with mid-ranks on ties:
// 1 + #{neg > pos} + #{neg == pos}/2.
double reciprocal_rank(double pos_score, const std::vector<double>& neg_scores);

// Mean reciprocal rank over queries (one positive + its negatives each).
double mrr_score(const std::vector<double>& pos_scores,
                 const std::vector<std::vector<double>>& neg_scores);

// Micro-averaged F1 for single-label multiclass predictions.
double f1_micro(const std::vector<int>& predicted, const std::vector<int>& truth);

}  // namespace nlb
