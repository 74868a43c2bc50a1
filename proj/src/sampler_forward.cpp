#include "nlb/sampler_forward.hpp"

#include <fstream>
#include <thread>

namespace nlb {

void SamplerConfig::validate() const {
  if (slots < 0) throw std::invalid_argument("s must be >= 0");
  if (!(alpha > 0.0 && alpha <= 1.0)) {
    throw std::invalid_argument("alpha must be in (0, 1]");
  }
  if (q1 == 0 || q2 == 0) throw std::invalid_argument("hash primes must be nonzero");
}

NeighborTable::NeighborTable(NodeId num_nodes, SamplerConfig cfg)
    : cfg_(cfg), num_nodes_(num_nodes) {
  cfg_.validate();
  if (num_nodes < 0) throw std::invalid_argument("negative node count");
  slots_.resize(static_cast<std::size_t>(num_nodes) * cfg_.slots);
}

void NeighborTable::check_node(NodeId u) const {
  if (u < 0 || u >= num_nodes_) {
    throw std::out_of_range("unknown node id " + std::to_string(u));
  }
}

void NeighborTable::apply_endpoint(NodeId owner, NodeId nbr, Timestamp ts,
                                   std::int64_t feat, EventIdx event_idx,
                                   int endpoint) {
  if (cfg_.slots == 0) return;
  std::int64_t slot = cfg_.scheme == KeyScheme::kEdge
                          ? hash_edge_key(nbr, ts, cfg_)
                          : hash_node_key(nbr, cfg_);
  NeighborSlot& cell =
      slots_[static_cast<std::size_t>(owner) * cfg_.slots + slot];
  if (cell.occupied()) {
    double coin = counter_u01(cfg_.seed, static_cast<std::uint64_t>(event_idx),
                              static_cast<std::uint64_t>(endpoint));
    if (coin >= cfg_.alpha) return;
  }
  cell = {nbr, ts, feat};
}

void NeighborTable::update(const TemporalLink& link) {
  check_node(link.src);
  check_node(link.dst);
  if (link.ts < last_ts_) {
    throw std::invalid_argument("update: timestamps must be non-decreasing");
  }
  apply_endpoint(link.src, link.dst, link.ts, link.edge_feat, link.event_idx, 0);
  if (link.dst != link.src) {
    apply_endpoint(link.dst, link.src, link.ts, link.edge_feat, link.event_idx, 1);
  }
  last_ts_ = link.ts;
}

void NeighborTable::batch_update(std::span<const TemporalLink> batch,
                                 int workers) {
  if (batch.empty()) return;
  if (batch.front().ts < last_ts_) {
    throw std::invalid_argument("batch_update: batch precedes applied events");
  }
  if (workers <= 1 || batch.size() < 1024) {
    for (const TemporalLink& link : batch) {
      apply_endpoint(link.src, link.dst, link.ts, link.edge_feat,
                     link.event_idx, 0);
      if (link.dst != link.src) {
        apply_endpoint(link.dst, link.src, link.ts, link.edge_feat,
                       link.event_idx, 1);
      }
    }
  } else {
    // Partition by owning node: every slot belongs to one node, so each
    // worker replays its nodes' inserts in event order and no write races.
    auto run = [&](int w) {
      for (const TemporalLink& link : batch) {
        if (link.src % workers == w) {
          apply_endpoint(link.src, link.dst, link.ts, link.edge_feat,
                         link.event_idx, 0);
        }
        if (link.dst != link.src && link.dst % workers == w) {
          apply_endpoint(link.dst, link.src, link.ts, link.edge_feat,
                         link.event_idx, 1);
        }
      }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    for (int w = 1; w < workers; ++w) pool.emplace_back(run, w);
    run(0);
    for (auto& t : pool) t.join();
  }
  last_ts_ = batch.back().ts;
}

std::vector<SnapshotEntry> NeighborTable::snapshot(NodeId u) const {
  check_node(u);
  std::vector<SnapshotEntry> out;
  const NeighborSlot* base =
      slots_.data() + static_cast<std::size_t>(u) * cfg_.slots;
  for (std::int64_t slot = 0; slot < cfg_.slots; ++slot) {
    if (base[slot].occupied()) {
      out.push_back({slot, base[slot].nbr, base[slot].ts, base[slot].edge_feat});
    }
  }
  return out;
}

namespace {
constexpr std::uint64_t kTableMagic = 0x4e4c42544142ULL;  // "NLBTAB"
}

void NeighborTable::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  auto put = [&](const auto& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
  };
  put(kTableMagic);
  put(num_nodes_);
  put(cfg_.slots);
  std::int32_t scheme = static_cast<std::int32_t>(cfg_.scheme);
  put(scheme);
  put(cfg_.alpha);
  put(cfg_.q1);
  put(cfg_.q2);
  put(cfg_.seed);
  put(last_ts_);
  out.write(reinterpret_cast<const char*>(slots_.data()),
            static_cast<std::streamsize>(slots_.size() * sizeof(NeighborSlot)));
}

NeighborTable NeighborTable::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  auto get = [&](auto& v) {
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!in) throw std::runtime_error(path + ": truncated table checkpoint");
  };
  std::uint64_t magic;
  get(magic);
  if (magic != kTableMagic) {
    throw std::runtime_error(path + ": not a table checkpoint");
  }
  NodeId num_nodes;
  SamplerConfig cfg;
  std::int32_t scheme;
  Timestamp last_ts;
  get(num_nodes);
  get(cfg.slots);
  get(scheme);
  cfg.scheme = static_cast<KeyScheme>(scheme);
  get(cfg.alpha);
  get(cfg.q1);
  get(cfg.q2);
  get(cfg.seed);
  get(last_ts);
  NeighborTable table(num_nodes, cfg);
  table.last_ts_ = last_ts;
  in.read(reinterpret_cast<char*>(table.slots_.data()),
          static_cast<std::streamsize>(table.slots_.size() *
                                       sizeof(NeighborSlot)));
  if (!in) throw std::runtime_error(path + ": truncated table checkpoint");
  return table;
}

std::int64_t RetentionProbe::force_insert(NeighborTable& table, NodeId owner,
                                          NodeId nbr, Timestamp ts,
                                          std::int64_t feat) {
  const SamplerConfig& cfg = table.cfg_;
  if (cfg.slots == 0) throw std::invalid_argument("force_insert: s must be >= 1");
  std::int64_t slot = cfg.scheme == KeyScheme::kEdge
                          ? hash_edge_key(nbr, ts, cfg)
                          : hash_node_key(nbr, cfg);
  table.slots_[static_cast<std::size_t>(owner) * cfg.slots + slot] = {nbr, ts,
                                                                      feat};
  if (ts > table.last_ts_) table.last_ts_ = ts;
  return slot;
}

}  // namespace nlb
