#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace nlb {

using NodeId = std::int64_t;
using Timestamp = std::int64_t;
using EventIdx = std::int64_t;

// One timestamped interaction in a chronologically ordered stream.
// edge_feat indexes into the stream's EdgeFeatureStore, -1 when featureless.
struct TemporalLink {
  NodeId src = 0;
  NodeId dst = 0;
  Timestamp ts = 0;
  std::int64_t edge_feat = -1;
  EventIdx event_idx = 0;

  bool operator==(const TemporalLink&) const = default;
};

inline constexpr const char* kVersion = "0.1.0";

}  // namespace nlb
