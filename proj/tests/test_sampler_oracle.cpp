#include <algorithm>
#include <cmath>
#include <map>

#include "doctest.h"
#include "nlb/sampler_oracle.hpp"

using namespace nlb;

namespace {

HistoryStore single_node_history(const std::vector<std::pair<NodeId, Timestamp>>& entries) {
  HistoryStore store(1000);
  EventIdx idx = 0;
  for (auto [nbr, ts] : entries) store.add_link({0, nbr, ts, -1, idx++});
  return store;
}

}  // namespace

TEST_CASE("truncation keeps the latest entries") {
  SUBCASE("short history is returned whole") {
    HistoryStore store = single_node_history({{1, 1}, {2, 2}, {3, 3}});
    auto out = sample_truncation(store, 0, 10, 5);
    CHECK(out.size() == 3);
  }
  SUBCASE("long history keeps exactly the s latest") {
    std::vector<std::pair<NodeId, Timestamp>> entries;
    for (int i = 0; i < 10; ++i) entries.push_back({i + 1, i});
    HistoryStore store = single_node_history(entries);
    auto out = sample_truncation(store, 0, 100, 3);
    REQUIRE(out.size() == 3);
    CHECK(out[0].ts == 7);
    CHECK(out[2].ts == 9);
  }
  SUBCASE("repeat neighbor dominates the truncated window") {
    std::vector<std::pair<NodeId, Timestamp>> entries;
    for (int i = 0; i < 10; ++i) entries.push_back({42, i});
    HistoryStore store = single_node_history(entries);
    auto out = sample_truncation(store, 0, 100, 3);
    REQUIRE(out.size() == 3);
    for (const auto& e : out) CHECK(e.nbr == 42);
  }
  SUBCASE("strict causality: entries at or after t excluded") {
    HistoryStore store = single_node_history({{1, 5}, {2, 6}});
    auto out = sample_truncation(store, 0, 6, 10);
    REQUIRE(out.size() == 1);
    CHECK(out[0].ts == 5);
  }
}

TEST_CASE("uniform sampling") {
  SUBCASE("whole history when |N| = s") {
    HistoryStore store = single_node_history({{1, 1}, {2, 2}, {3, 3}});
    StreamRng rng(1);
    auto out = sample_uniform(store, 0, 10, 3, rng);
    CHECK(out.size() == 3);
  }
  SUBCASE("empty history yields empty sample") {
    HistoryStore store(10);
    StreamRng rng(1);
    CHECK(sample_uniform(store, 3, 10, 5, rng).empty());
  }
  SUBCASE("inclusion frequency matches s/|N|") {
    std::vector<std::pair<NodeId, Timestamp>> entries;
    for (int i = 0; i < 100; ++i) entries.push_back({i + 1, i});
    HistoryStore store = single_node_history(entries);
    StreamRng rng(7);
    std::vector<int> counts(100, 0);
    const int trials = 100000;
    for (int t = 0; t < trials; ++t) {
      for (const auto& e : sample_uniform(store, 0, 1000, 10, rng)) {
        ++counts[e.nbr - 1];
      }
    }
    for (int c : counts) {
      CHECK(static_cast<double>(c) / trials == doctest::Approx(0.10).epsilon(0.05));
    }
  }
}

TEST_CASE("recency-weighted sampling") {
  SUBCASE("c rejects negatives") {
    HistoryStore store = single_node_history({{1, 1}});
    StreamRng rng(1);
    CHECK_THROWS_AS(sample_recent(store, 0, 5, 1, -1.0, rng),
                    std::invalid_argument);
  }
  SUBCASE("newer of two entries wins with probability 2/3 at c = ln 2") {
    HistoryStore store = single_node_history({{1, 8}, {2, 9}});  // dt 2 and 1
    StreamRng rng(3);
    const int trials = 100000;
    int newer = 0;
    for (int t = 0; t < trials; ++t) {
      auto out = sample_recent(store, 0, 10, 1, std::log(2.0), rng);
      REQUIRE(out.size() == 1);
      newer += out[0].nbr == 2;
    }
    CHECK(static_cast<double>(newer) / trials ==
          doctest::Approx(2.0 / 3.0).epsilon(0.015));
  }
  SUBCASE("large c reduces to truncation") {
    std::vector<std::pair<NodeId, Timestamp>> entries;
    for (int i = 0; i < 50; ++i) entries.push_back({i, i});
    HistoryStore store = single_node_history(entries);
    StreamRng rng(9);
    auto out = sample_recent(store, 0, 100, 5, 1000.0, rng);
    REQUIRE(out.size() == 5);
    std::vector<NodeId> got;
    for (const auto& e : out) got.push_back(e.nbr);
    std::sort(got.begin(), got.end());
    CHECK(got == std::vector<NodeId>{45, 46, 47, 48, 49});
  }
  SUBCASE("c = 0 matches uniform inclusion statistically") {
    std::vector<std::pair<NodeId, Timestamp>> entries;
    for (int i = 0; i < 40; ++i) entries.push_back({i, i});
    HistoryStore store = single_node_history(entries);
    StreamRng rng(11);
    std::vector<int> counts(40, 0);
    const int trials = 40000;
    for (int t = 0; t < trials; ++t) {
      for (const auto& e : sample_recent(store, 0, 100, 4, 0.0, rng)) {
        ++counts[e.nbr];
      }
    }
    for (int c : counts) {
      CHECK(static_cast<double>(c) / trials == doctest::Approx(0.10).epsilon(0.12));
    }
  }
  SUBCASE("strict causality") {
    HistoryStore store = single_node_history({{1, 5}, {2, 6}, {3, 7}});
    StreamRng rng(2);
    for (int rep = 0; rep < 100; ++rep) {
      for (const auto& e : sample_recent(store, 0, 7, 3, 0.5, rng)) {
        CHECK(e.ts < 7);
      }
    }
  }
}

TEST_CASE("history store counts both directions") {
  HistoryStore store(5);
  store.add_link({0, 1, 1, -1, 0});
  store.add_link({1, 2, 2, -1, 1});
  CHECK(store.total_entries() == 4);
  CHECK(store.neighbors(1).size() == 2);
}
