#include <cmath>
#include <stdexcept>

#include "doctest.h"
#include "nlb/metrics.hpp"
#include "nlb/rng.hpp"
#include "oracles.hpp"

using namespace nlb;

TEST_CASE("perfect scores give AUC = AP = MRR = 1") {
  std::vector<double> scores = {1.0, 0.0, 0.0, 1.0, 0.0};
  std::vector<int> labels = {1, 0, 0, 1, 0};
  CHECK(auc_score(scores, labels) == 1.0);
  CHECK(average_precision(scores, labels) == 1.0);
  CHECK(mrr_score({1.0}, {{0.0, 0.0, 0.0}}) == 1.0);
}

TEST_CASE("degenerate label sets are rejected") {
  CHECK_THROWS_AS((auc_score({1.0, 2.0}, {1, 1})), std::invalid_argument);
  CHECK_THROWS_AS((average_precision({1.0, 2.0}, {0, 0})),
                  std::invalid_argument);
}

TEST_CASE("ties get mid-ranks") {
  // pos and neg tied: one pair worth 0.5 -> AUC 0.5.
  CHECK(auc_score({0.7, 0.7}, {1, 0}) == 0.5);
  // rank of positive among 3 equal negatives: 1 + 0 + 3/2 = 2.5.
  CHECK(reciprocal_rank(0.4, {0.4, 0.4, 0.4}) == doctest::Approx(1.0 / 2.5));
}

TEST_CASE("implementations agree exactly with brute-force definitions") {
  const int instances = 200;
  for (int inst = 0; inst < instances; ++inst) {
    StreamRng rng(counter_u64(2024, 0xabc, inst));
    const int n = 2 + static_cast<int>(rng.next_below(499));
    std::vector<double> scores(n);
    std::vector<int> labels(n);
    int pos = 0;
    for (int i = 0; i < n; ++i) {
      // Coarse grid so score ties actually occur.
      scores[i] = std::floor(rng.next_u01() * 32.0) / 32.0;
      labels[i] = rng.next_u01() < 0.3;
      pos += labels[i];
    }
    if (pos == 0) labels[0] = 1;
    if (pos == n) labels[0] = 0;

    CAPTURE(inst);
    CHECK(auc_score(scores, labels) == testing::auc_bruteforce(scores, labels));
    CHECK(average_precision(scores, labels) ==
          testing::ap_bruteforce(scores, labels));

    const int negs = 1 + static_cast<int>(rng.next_below(64));
    std::vector<double> neg_scores(negs);
    for (double& s : neg_scores) s = std::floor(rng.next_u01() * 16.0) / 16.0;
    double p = std::floor(rng.next_u01() * 16.0) / 16.0;
    CHECK(reciprocal_rank(p, neg_scores) ==
          testing::rr_bruteforce(p, neg_scores));
  }
}

TEST_CASE("random scores land near the null expectations") {
  StreamRng rng(55);
  const int queries = 2000;
  std::vector<double> pos(queries);
  std::vector<std::vector<double>> negs(queries);
  std::vector<double> scores;
  std::vector<int> labels;
  for (int q = 0; q < queries; ++q) {
    pos[q] = rng.next_u01();
    negs[q].resize(500);
    for (double& s : negs[q]) s = rng.next_u01();
    scores.push_back(pos[q]);
    labels.push_back(1);
    scores.push_back(negs[q][0]);
    labels.push_back(0);
  }
  CHECK(auc_score(scores, labels) == doctest::Approx(0.5).epsilon(0.04));
  // E[1/rank] over 501 uniform candidates = H_501 / 501 ~ 0.01356.
  CHECK(mrr_score(pos, negs) == doctest::Approx(0.01356).epsilon(0.37));
}

TEST_CASE("micro F1 equals accuracy for single-label predictions") {
  CHECK(f1_micro({0, 1, 2, 1}, {0, 1, 2, 2}) == doctest::Approx(0.75));
  CHECK(f1_micro({1, 1}, {1, 1}) == 1.0);
}
