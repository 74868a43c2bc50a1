#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "nlb/common.hpp"
#include "nlb/rng.hpp"

namespace nlb {

// Key scheme for the per-node tables: EDGE hashes (neighbor id, timestamp),
// NODE hashes the neighbor id alone, so each neighbor owns a fixed slot.
enum class KeyScheme : std::int32_t { kEdge = 0, kNode = 1 };

struct SamplerConfig {
  KeyScheme scheme = KeyScheme::kEdge;
  std::int64_t slots = 20;  // s; 0 degenerates to "no neighbors ever"
  double alpha = 0.9;       // replacement probability on collision, in (0,1]
  std::uint64_t q1 = 1000000007ULL;
  std::uint64_t q2 = 998244353ULL;
  std::uint64_t seed = 0;

  void validate() const;
};

// Slot index of key (v, t): (q1*v + q2*t) mod s, in wrapping u64 arithmetic.
inline std::int64_t hash_edge_key(NodeId v, Timestamp t,
                                  const SamplerConfig& cfg) {
  if (cfg.slots <= 0) throw std::invalid_argument("hash_edge_key: s must be >= 1");
  std::uint64_t mixed = cfg.q1 * static_cast<std::uint64_t>(v) +
                        cfg.q2 * static_cast<std::uint64_t>(t);
  return static_cast<std::int64_t>(mixed % static_cast<std::uint64_t>(cfg.slots));
}

// Slot index of key v: (q1*v) mod s.
inline std::int64_t hash_node_key(NodeId v, const SamplerConfig& cfg) {
  if (cfg.slots <= 0) throw std::invalid_argument("hash_node_key: s must be >= 1");
  std::uint64_t mixed = cfg.q1 * static_cast<std::uint64_t>(v);
  return static_cast<std::int64_t>(mixed % static_cast<std::uint64_t>(cfg.slots));
}

// One down-sampled temporal neighbor. nbr < 0 marks an empty slot; the other
// fields are sentinels then and must not be read.
struct NeighborSlot {
  NodeId nbr = -1;
  Timestamp ts = 0;
  std::int64_t edge_feat = -1;

  bool occupied() const { return nbr >= 0; }
  bool operator==(const NeighborSlot&) const = default;
};

struct SnapshotEntry {
  std::int64_t slot = 0;
  NodeId nbr = 0;
  Timestamp ts = 0;
  std::int64_t edge_feat = -1;
};

// Per-node fixed-size tables, |V| x s slots flat-indexed, maintained forward
// in O(1) per event. Snapshot lookup never scans history.
class NeighborTable {
 public:
  NeighborTable(NodeId num_nodes, SamplerConfig cfg);

  const SamplerConfig& config() const { return cfg_; }
  NodeId num_nodes() const { return num_nodes_; }
  Timestamp last_ts() const { return last_ts_; }

  // Applies one link: each endpoint records the other. Touches exactly one
  // slot per endpoint (one total for self-loops). The replacement coin is a
  // pure function of (seed, event_idx, endpoint), so replays and batch
  // partitions reproduce the same table bit-for-bit.
  void update(const TemporalLink& link);

  // Equivalent to applying `update` sequentially in event order. Slot writes
  // are partitioned by node id across workers; same-node writes stay in
  // event order within their worker.
  void batch_update(std::span<const TemporalLink> batch, int workers = 1);

  // Occupied entries of node u in slot-index order. O(s) and mutation-free.
  std::vector<SnapshotEntry> snapshot(NodeId u) const;

  // Direct slot access for batched consumers (slot-major, s entries per node).
  const NeighborSlot* row(NodeId u) const {
    check_node(u);
    return slots_.data() + static_cast<std::size_t>(u) * cfg_.slots;
  }

  void save(const std::string& path) const;
  static NeighborTable load(const std::string& path);

  bool operator==(const NeighborTable& other) const {
    return num_nodes_ == other.num_nodes_ && slots_ == other.slots_;
  }

 private:
  void check_node(NodeId u) const;
  // The per-endpoint insert: owner's table gains (nbr, ts, feat).
  void apply_endpoint(NodeId owner, NodeId nbr, Timestamp ts,
                      std::int64_t feat, EventIdx event_idx, int endpoint);

  SamplerConfig cfg_;
  NodeId num_nodes_ = 0;
  Timestamp last_ts_ = 0;
  std::vector<NeighborSlot> slots_;

  friend class RetentionProbe;
};

// Test/harness hook: forces one entry into its slot unconditionally,
// realizing the "suppose the entry was inserted at t_i" conditioning of the
// retention analysis without consuming a replacement coin.
class RetentionProbe {
 public:
  static std::int64_t force_insert(NeighborTable& table, NodeId owner,
                                   NodeId nbr, Timestamp ts,
                                   std::int64_t feat = -1);
  static void apply_endpoint(NeighborTable& table, NodeId owner, NodeId nbr,
                             Timestamp ts, EventIdx event_idx, int endpoint) {
    table.apply_endpoint(owner, nbr, ts, -1, event_idx, endpoint);
  }
};

}  // namespace nlb
