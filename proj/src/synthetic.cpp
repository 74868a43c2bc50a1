#include "nlb/synthetic.hpp"

#include <cmath>
#include <stdexcept>

#include "nlb/rng.hpp"
#include "nlb/stats.hpp"

namespace nlb {

EventStream make_poisson_stream(NodeId nodes, double lambda, double horizon,
                                std::uint64_t seed) {
  if (nodes < 2) throw std::invalid_argument("need at least 2 nodes");
  if (lambda <= 0 || horizon <= 0) {
    throw std::invalid_argument("lambda and horizon must be > 0");
  }
  EventStream stream;
  stream.num_nodes = nodes;
  stream.raw_ids.resize(nodes);
  for (NodeId i = 0; i < nodes; ++i) stream.raw_ids[i] = i;

  StreamRng rng(counter_u64(seed, 0x706f6973ULL));
  double t = 0.0;
  while (true) {
    t += -std::log(1.0 - rng.next_u01()) / lambda;
    if (t >= horizon) break;
    NodeId u = static_cast<NodeId>(rng.next_below(nodes));
    NodeId v = static_cast<NodeId>(rng.next_below(nodes - 1));
    if (v >= u) ++v;
    TemporalLink link;
    link.src = u;
    link.dst = v;
    link.ts = quantize_time(t);
    link.event_idx = stream.size();
    stream.links.push_back(link);
  }
  if (stream.links.empty()) throw std::runtime_error("horizon produced no events");
  return stream;
}

EventStream make_recency_stream(NodeId nodes, std::int64_t events,
                                double p_repeat, std::uint64_t seed) {
  if (nodes < 3) throw std::invalid_argument("need at least 3 nodes");
  if (events < 1) throw std::invalid_argument("need at least 1 event");
  if (p_repeat < 0 || p_repeat > 1) {
    throw std::invalid_argument("p_repeat must be in [0, 1]");
  }
  EventStream stream;
  stream.num_nodes = nodes;
  stream.raw_ids.resize(nodes);
  for (NodeId i = 0; i < nodes; ++i) stream.raw_ids[i] = i;
  stream.links.reserve(events);

  std::vector<NodeId> last_partner(nodes, -1);
  StreamRng rng(counter_u64(seed, 0x7265636eULL));
  for (std::int64_t i = 0; i < events; ++i) {
    NodeId u = static_cast<NodeId>(rng.next_below(nodes));
    NodeId v;
    if (last_partner[u] >= 0 && rng.next_u01() < p_repeat) {
      v = last_partner[u];
    } else {
      v = static_cast<NodeId>(rng.next_below(nodes - 1));
      if (v >= u) ++v;
    }
    last_partner[u] = v;
    last_partner[v] = u;
    TemporalLink link;
    link.src = u;
    link.dst = v;
    link.ts = i;
    link.event_idx = i;
    stream.links.push_back(link);
  }
  return stream;
}

}  // namespace nlb
