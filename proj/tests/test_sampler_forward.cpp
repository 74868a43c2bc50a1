#include <cstdio>
#include <filesystem>
#include <unordered_set>

#include "doctest.h"
#include "nlb/sampler_forward.hpp"
#include "nlb/synthetic.hpp"

using namespace nlb;

namespace {
SamplerConfig edge_cfg(std::int64_t s, double alpha = 0.9,
                       std::uint64_t seed = 1) {
  SamplerConfig cfg;
  cfg.scheme = KeyScheme::kEdge;
  cfg.slots = s;
  cfg.alpha = alpha;
  cfg.seed = seed;
  return cfg;
}
}  // namespace

TEST_CASE("edge hash matches modular arithmetic") {
  SamplerConfig cfg;
  SUBCASE("zero operands land in slot 0") {
    cfg.slots = 20;
    CHECK(hash_edge_key(0, 0, cfg) == 0);
  }
  SUBCASE("(5v + 11t) mod 7") {
    cfg.q1 = 5;
    cfg.q2 = 11;
    cfg.slots = 7;
    CHECK(hash_edge_key(3, 0, cfg) == 1);
  }
  SUBCASE("default primes, 11987710506 mod 20") {
    cfg.slots = 20;
    CHECK(hash_edge_key(5, 7, cfg) == 6);
  }
  SUBCASE("s = 0 is an error") {
    cfg.slots = 0;
    CHECK_THROWS_AS(hash_edge_key(1, 1, cfg), std::invalid_argument);
  }
}

TEST_CASE("node hash matches modular arithmetic") {
  SamplerConfig cfg;
  SUBCASE("v = 0 lands in slot 0") {
    cfg.slots = 5;
    CHECK(hash_node_key(0, cfg) == 0);
  }
  SUBCASE("28 mod 5") {
    cfg.q1 = 7;
    cfg.slots = 5;
    CHECK(hash_node_key(4, cfg) == 3);
  }
  SUBCASE("q1 = 1 maps congruent ids to the same slot") {
    cfg.q1 = 1;
    cfg.slots = 6;
    for (int k = 0; k < 4; ++k) {
      CHECK(hash_node_key(5 + 6 * k, cfg) == hash_node_key(5, cfg));
    }
  }
  SUBCASE("s = 0 is an error") {
    cfg.slots = 0;
    CHECK_THROWS_AS(hash_node_key(1, cfg), std::invalid_argument);
  }
}

TEST_CASE("config validation") {
  SamplerConfig cfg;
  cfg.alpha = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.alpha = 1.5;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.alpha = 1.0;
  CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("update inserts into empty slots unconditionally") {
  NeighborTable table(4, edge_cfg(8, 0.01));  // tiny alpha: replacement rare
  table.update({0, 1, 5, -1, 0});
  auto snap_u = table.snapshot(0);
  auto snap_v = table.snapshot(1);
  REQUIRE(snap_u.size() == 1);
  REQUIRE(snap_v.size() == 1);
  CHECK(snap_u[0].nbr == 1);
  CHECK(snap_u[0].ts == 5);
  CHECK(snap_v[0].nbr == 0);
  CHECK(snap_v[0].ts == 5);
}

TEST_CASE("alpha = 1 always replaces on collision") {
  SamplerConfig cfg = edge_cfg(1, 1.0);  // s = 1: every key collides
  NeighborTable table(3, cfg);
  table.update({0, 1, 1, -1, 0});
  table.update({0, 2, 2, -1, 1});
  auto snap = table.snapshot(0);
  REQUIRE(snap.size() == 1);
  CHECK(snap[0].nbr == 2);
  CHECK(snap[0].ts == 2);
}

TEST_CASE("replacement frequency follows the alpha coin") {
  // 100k occupied-slot collisions, each with a distinct event id.
  SamplerConfig cfg = edge_cfg(1, 0.9, 99);
  const int trials = 100000;
  int replaced = 0;
  for (int i = 0; i < trials; ++i) {
    NeighborTable table(2, cfg);
    table.update({0, 1, 0, -1, 2 * i});      // occupy the only slot
    table.update({0, 1, 1, -1, 2 * i + 1});  // collide
    auto snap = table.snapshot(0);
    replaced += snap[0].ts == 1;
  }
  double freq = static_cast<double>(replaced) / trials;
  CHECK(freq == doctest::Approx(0.9).epsilon(0.006));
}

TEST_CASE("s = 0 degenerates to no neighbors ever") {
  NeighborTable table(3, edge_cfg(0));
  table.update({0, 1, 1, -1, 0});
  CHECK(table.snapshot(0).empty());
  CHECK(table.snapshot(1).empty());
}

TEST_CASE("snapshot basics") {
  NeighborTable table(3, edge_cfg(10));
  SUBCASE("fresh table is empty") { CHECK(table.snapshot(0).empty()); }
  SUBCASE("unknown node id is an error") {
    CHECK_THROWS_AS(table.snapshot(17), std::out_of_range);
    CHECK_THROWS_AS(table.snapshot(-1), std::out_of_range);
  }
}

TEST_CASE("snapshot length is bounded by s under heavy traffic") {
  SamplerConfig cfg = edge_cfg(10, 0.9, 5);
  NeighborTable table(1001, cfg);
  StreamRng rng(3);
  for (std::int64_t i = 0; i < 10000; ++i) {
    NodeId v = 1 + static_cast<NodeId>(rng.next_below(1000));
    table.update({0, v, i, -1, i});
  }
  auto snap = table.snapshot(0);
  CHECK(snap.size() <= 10);
  CHECK(snap.size() == 10);  // all slots occupied after 10^4 events
}

TEST_CASE("slot-address determinism: re-hashing every occupied key yields its slot") {
  for (KeyScheme scheme : {KeyScheme::kEdge, KeyScheme::kNode}) {
    SamplerConfig cfg = edge_cfg(13, 0.8, 11);
    cfg.scheme = scheme;
    NeighborTable table(200, cfg);
    EventStream s = make_recency_stream(200, 5000, 0.6, 21);
    for (const auto& l : s.links) table.update(l);
    for (NodeId u = 0; u < 200; ++u) {
      for (const SnapshotEntry& e : table.snapshot(u)) {
        std::int64_t expect = scheme == KeyScheme::kEdge
                                  ? hash_edge_key(e.nbr, e.ts, cfg)
                                  : hash_node_key(e.nbr, cfg);
        CHECK(e.slot == expect);
        CHECK(e.ts <= table.last_ts());
      }
    }
  }
}

TEST_CASE("NODE scheme keeps occupied neighbor ids pairwise distinct") {
  SamplerConfig cfg = edge_cfg(7, 0.9, 2);
  cfg.scheme = KeyScheme::kNode;
  NeighborTable table(100, cfg);
  EventStream s = make_recency_stream(100, 4000, 0.7, 8);
  for (const auto& l : s.links) table.update(l);
  for (NodeId u = 0; u < 100; ++u) {
    std::unordered_set<NodeId> seen;
    for (const SnapshotEntry& e : table.snapshot(u)) {
      CHECK(seen.insert(e.nbr).second);
    }
  }
}

TEST_CASE("self-loops insert once") {
  NeighborTable table(2, edge_cfg(10));
  table.update({0, 0, 3, -1, 0});
  auto snap = table.snapshot(0);
  REQUIRE(snap.size() == 1);
  CHECK(snap[0].nbr == 0);
}

TEST_CASE("decreasing event time rejected") {
  NeighborTable table(3, edge_cfg(4));
  table.update({0, 1, 10, -1, 0});
  CHECK_THROWS_AS(table.update({1, 2, 9, -1, 1}), std::invalid_argument);
}

TEST_CASE("batch of one is equivalent to update") {
  SamplerConfig cfg = edge_cfg(6, 0.5, 77);
  NeighborTable a(10, cfg);
  NeighborTable b(10, cfg);
  TemporalLink link{2, 3, 4, -1, 0};
  a.update(link);
  b.batch_update(std::span<const TemporalLink>(&link, 1));
  CHECK(a == b);
}

TEST_CASE("batch partitions reproduce sequential state bit-for-bit") {
  EventStream s = make_recency_stream(60, 3000, 0.75, 13);
  for (KeyScheme scheme : {KeyScheme::kEdge, KeyScheme::kNode}) {
    SamplerConfig cfg = edge_cfg(9, 0.7, 31);
    cfg.scheme = scheme;
    NeighborTable sequential(60, cfg);
    for (const auto& l : s.links) sequential.update(l);
    for (int batch_size : {1, 7, 100}) {
      for (int workers : {1, 2, 4}) {
        NeighborTable batched(60, cfg);
        std::int64_t i = 0;
        while (i < s.size()) {
          std::int64_t n = std::min<std::int64_t>(batch_size, s.size() - i);
          batched.batch_update(
              std::span<const TemporalLink>(s.links.data() + i, n), workers);
          i += n;
        }
        CHECK(sequential == batched);
      }
    }
  }
}

TEST_CASE("same-slot events within one batch see prior occupancy") {
  // NODE scheme: the same neighbor id always targets one slot. With alpha=1
  // the second event must observe and replace the first insert.
  SamplerConfig cfg = edge_cfg(5, 1.0, 4);
  cfg.scheme = KeyScheme::kNode;
  NeighborTable table(3, cfg);
  std::vector<TemporalLink> batch = {{0, 1, 1, -1, 0}, {0, 1, 2, -1, 1}};
  table.batch_update(batch);
  auto snap = table.snapshot(0);
  REQUIRE(snap.size() == 1);
  CHECK(snap[0].ts == 2);
}

TEST_CASE("table checkpoint round trip") {
  SamplerConfig cfg = edge_cfg(8, 0.6, 19);
  NeighborTable table(40, cfg);
  EventStream s = make_recency_stream(40, 800, 0.8, 2);
  for (const auto& l : s.links) table.update(l);
  std::string path =
      (std::filesystem::temp_directory_path() / "nlb_table.bin").string();
  table.save(path);
  NeighborTable back = NeighborTable::load(path);
  CHECK(table == back);
  CHECK(back.last_ts() == table.last_ts());
  CHECK(back.config().alpha == cfg.alpha);
  std::remove(path.c_str());
}
