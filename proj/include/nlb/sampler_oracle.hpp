#pragma once

#include <vector>

#include "nlb/common.hpp"
#include "nlb/rng.hpp"

namespace nlb {

struct HistoryEntry {
  NodeId nbr = 0;
  Timestamp ts = 0;
  std::int64_t edge_feat = -1;

  bool operator==(const HistoryEntry&) const = default;
};

// Full per-node interaction history in arrival order. Backward samplers over
// this store are the baselines and the brute-force oracles for validating
// the forward tables; their cost is deliberately linear in history size.
class HistoryStore {
 public:
  explicit HistoryStore(NodeId num_nodes) : lists_(num_nodes) {}

  // Records both directions (both endpoints gain the other).
  void add_link(const TemporalLink& link) {
    lists_[link.src].push_back({link.dst, link.ts, link.edge_feat});
    lists_[link.dst].push_back({link.src, link.ts, link.edge_feat});
  }

  const std::vector<HistoryEntry>& neighbors(NodeId u) const {
    return lists_.at(u);
  }
  std::int64_t total_entries() const {
    std::int64_t n = 0;
    for (const auto& l : lists_) n += static_cast<std::int64_t>(l.size());
    return n;
  }

 private:
  std::vector<std::vector<HistoryEntry>> lists_;
};

// The s most recent entries of u with ts < t, deterministic.
std::vector<HistoryEntry> sample_truncation(const HistoryStore& store, NodeId u,
                                            Timestamp t, std::int64_t s);

// s draws without replacement with equal probabilities (all, if fewer).
std::vector<HistoryEntry> sample_uniform(const HistoryStore& store, NodeId u,
                                         Timestamp t, std::int64_t s,
                                         StreamRng& rng);

// s draws without replacement with weight exp(c*(t_i - t)); c = 0 reduces to
// uniform, large c approaches truncation. Implemented as an exponential race
// with keys kept in log space, so large |c*dt| cannot underflow.
std::vector<HistoryEntry> sample_recent(const HistoryStore& store, NodeId u,
                                        Timestamp t, std::int64_t s, double c,
                                        StreamRng& rng);

}  // namespace nlb
