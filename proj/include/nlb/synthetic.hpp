#pragma once

#include <cstdint>

#include "nlb/stream.hpp"

namespace nlb {

// Global Poisson(lambda) arrivals over [0, horizon) with uniform endpoint
// pairs; timestamps are quantized to integer units.
EventStream make_poisson_stream(NodeId nodes, double lambda, double horizon,
                                std::uint64_t seed);

// Recency benchmark: at each step a uniform source interacts with its most
// recently seen distinct neighbor with probability p_repeat, otherwise with
// a uniform other node. Timestamps are the event indices. Recent-neighbor
// information is sufficient to predict most destinations, which is exactly
// what the forward tables retain.
EventStream make_recency_stream(NodeId nodes, std::int64_t events,
                                double p_repeat, std::uint64_t seed);

}  // namespace nlb
