#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

#include "doctest.h"
#include "nlb/stats.hpp"

using namespace nlb;

namespace {
SamplerConfig make_cfg(KeyScheme scheme, std::int64_t s, double alpha,
                       std::uint64_t seed = 1) {
  SamplerConfig cfg;
  cfg.scheme = scheme;
  cfg.slots = s;
  cfg.alpha = alpha;
  cfg.seed = seed;
  return cfg;
}
}  // namespace

TEST_CASE("poisson stream: mean event count is lambda * horizon") {
  PoissonStreamSpec spec;
  spec.lambda = 2.0;
  spec.horizon = 50.0;
  double total = 0.0;
  const int streams = 10000;
  for (int i = 0; i < streams; ++i) {
    StreamRng rng(counter_u64(5, 0x1111, i));
    total += static_cast<double>(gen_poisson_stream(spec, rng).size());
  }
  CHECK(total / streams == doctest::Approx(100.0).epsilon(0.01));
}

TEST_CASE("poisson stream: zero horizon is empty") {
  PoissonStreamSpec spec;
  spec.horizon = 0.0;
  StreamRng rng(1);
  CHECK(gen_poisson_stream(spec, rng).empty());
}

TEST_CASE("poisson stream: superposition ratio") {
  PoissonStreamSpec spec;
  spec.horizon = 1e9;  // effectively unbounded; we cap by event count below
  spec.per_neighbor_lambdas = {{1, 1.0}, {2, 3.0}};
  spec.horizon = 25000.0;  // ~1e5 events at total rate 4
  StreamRng rng(17);
  auto events = gen_poisson_stream(spec, rng);
  REQUIRE(events.size() > 90000);
  std::int64_t nbr2 = 0;
  for (const auto& e : events) nbr2 += e.nbr == 2;
  CHECK(static_cast<double>(nbr2) / events.size() ==
        doctest::Approx(0.75).epsilon(0.015));
}

TEST_CASE("poisson stream: inter-arrival gaps are exponential") {
  PoissonStreamSpec spec;
  spec.lambda = 3.0;
  spec.horizon = 40000.0;
  StreamRng rng(23);
  auto events = gen_poisson_stream(spec, rng);
  double mean_gap = events.back().t / static_cast<double>(events.size());
  CHECK(mean_gap == doctest::Approx(1.0 / 3.0).epsilon(0.02));
  // Memorylessness probe: P(gap > 2/lambda) = e^-2.
  std::int64_t long_gaps = 0;
  for (std::size_t i = 1; i < events.size(); ++i) {
    long_gaps += (events[i].t - events[i - 1].t) > 2.0 / 3.0;
  }
  CHECK(static_cast<double>(long_gaps) / (events.size() - 1) ==
        doctest::Approx(std::exp(-2.0)).epsilon(0.05));
}

TEST_CASE("closed-form retention values") {
  SamplerConfig cfg = make_cfg(KeyScheme::kEdge, 10, 0.9);
  CHECK(theory_retention_edge(cfg, 2.0, 5.0) ==
        doctest::Approx(0.40657).epsilon(1e-4));
  CHECK(theory_retention_edge(cfg, 2.0, 0.0) == 1.0);

  SamplerConfig node_cfg = make_cfg(KeyScheme::kNode, 5, 0.8);
  // (0.8 + 0.2 e^{-1.6})^3 for three competitors at rate 1, dt = 2.
  double expect = std::pow(0.8 + 0.2 * std::exp(-1.6), 3.0);
  CHECK(theory_retention_node(node_cfg, {1.0, 1.0, 1.0}, 2.0) ==
        doctest::Approx(expect).epsilon(1e-12));
  CHECK(theory_retention_node(node_cfg, {}, 7.0) == 1.0);  // empty product
  SamplerConfig wide = make_cfg(KeyScheme::kNode, 1000000, 0.8);
  CHECK(theory_retention_node(wide, {1.0, 1.0, 1.0}, 2.0) ==
        doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("edge retention matches the survival law") {
  SamplerConfig cfg = make_cfg(KeyScheme::kEdge, 10, 0.9, 42);
  PoissonStreamSpec spec;
  spec.lambda = 2.0;
  RetentionCurve curve =
      measure_retention_edge(cfg, spec, 20000, {0.0, 1.0, 2.0, 5.0, 10.0}, 2);
  REQUIRE(curve.points.size() == 5);
  CHECK(curve.points[0].empirical == 1.0);  // dt = 0 survives exactly
  for (const auto& p : curve.points) {
    CAPTURE(p.delta_t);
    CHECK(std::abs(p.empirical - p.theory) < 0.03);
  }
  SUBCASE("empirical survival is monotone within 3 standard errors") {
    for (std::size_t i = 1; i < curve.points.size(); ++i) {
      double se = std::sqrt(curve.points[i].empirical *
                            (1.0 - curve.points[i].empirical) /
                            static_cast<double>(curve.points[i].trials));
      CHECK(curve.points[i].empirical <=
            curve.points[i - 1].empirical + 3.0 * se);
    }
  }
  SUBCASE("deterministic given seed and spec") {
    RetentionCurve again =
        measure_retention_edge(cfg, spec, 20000, {0.0, 1.0, 2.0, 5.0, 10.0}, 1);
    for (std::size_t i = 0; i < curve.points.size(); ++i) {
      CHECK(curve.points[i].empirical == again.points[i].empirical);
    }
  }
}

TEST_CASE("node retention with no competitors survives always") {
  SamplerConfig cfg = make_cfg(KeyScheme::kNode, 5, 0.8, 7);
  PoissonStreamSpec spec;
  spec.per_neighbor_lambdas = {};
  RetentionCurve curve = measure_retention_node(cfg, spec, 500, {1.0, 5.0});
  for (const auto& p : curve.points) {
    CHECK(p.empirical == 1.0);
    CHECK(p.theory == 1.0);
  }
}

TEST_CASE("node retention matches the product formula") {
  SamplerConfig cfg = make_cfg(KeyScheme::kNode, 5, 0.8, 11);
  PoissonStreamSpec spec;
  spec.per_neighbor_lambdas = {{1, 1.0}, {2, 1.0}, {3, 1.0}};
  RetentionCurve curve = measure_retention_node(cfg, spec, 30000, {2.0}, 2);
  REQUIRE(curve.points.size() == 1);
  CHECK(curve.points[0].theory ==
        doctest::Approx(std::pow(0.8 + 0.2 * std::exp(-1.6), 3.0)));
  CHECK(std::abs(curve.points[0].empirical - curve.points[0].theory) < 0.02);
}

TEST_CASE("alpha = 1 with a single slot dies on the first subsequent event") {
  SamplerConfig cfg = make_cfg(KeyScheme::kEdge, 1, 1.0, 3);
  NeighborTable table(1, cfg);
  std::int64_t slot = RetentionProbe::force_insert(table, 0, 42, 100);
  CHECK(slot == 0);
  RetentionProbe::apply_endpoint(table, 0, 43, 101, 1, 0);
  auto snap = table.snapshot(0);
  REQUIRE(snap.size() == 1);
  CHECK(snap[0].nbr == 43);  // the probe entry is gone, exactly
}

TEST_CASE("wilson interval brackets the point estimate") {
  auto [lo, hi] = wilson_interval(900, 1000);
  CHECK(lo < 0.9);
  CHECK(hi > 0.9);
  CHECK(hi - lo < 0.05);
  auto [lo0, hi0] = wilson_interval(0, 100);
  CHECK(lo0 == doctest::Approx(0.0));
  CHECK(hi0 > 0.0);
}

TEST_CASE("retention curve csv emit") {
  RetentionCurve curve;
  curve.points.push_back({1.0, 0.83, 0.835, 0.82, 0.84, 1000});
  std::string csv = "/tmp/nlb_curve_test.csv";
  std::string plot = "/tmp/nlb_curve_test.gp";
  curve.write_csv(csv);
  curve.write_plot_script(csv, plot);
  std::ifstream in(csv);
  std::string header;
  std::getline(in, header);
  CHECK(header == "delta_t,empirical,theory,ci_low,ci_high,trials");
  std::remove(csv.c_str());
  std::remove(plot.c_str());
}

TEST_CASE("update cost stays flat while oracle cost grows") {
  SamplerConfig cfg = make_cfg(KeyScheme::kEdge, 10, 0.9, 5);
  BenchReport report = bench_update_scaling(cfg, {10000, 100000}, 3);
  REQUIRE(report.rows.size() == 2);
  // Loose bounds for the unit suite; the acceptance run uses 10^4 vs 10^6.
  CHECK(report.rows[1].update_ns_mean <= 3.0 * report.rows[0].update_ns_mean);
  CHECK(report.rows[1].oracle_query_ns >= 3.0 * report.rows[0].oracle_query_ns);
}

TEST_CASE("doubling s leaves update cost unchanged within noise") {
  SamplerConfig cfg10 = make_cfg(KeyScheme::kEdge, 10, 0.9, 5);
  SamplerConfig cfg20 = make_cfg(KeyScheme::kEdge, 20, 0.9, 5);
  BenchReport a = bench_update_scaling(cfg10, {100000}, 3);
  BenchReport b = bench_update_scaling(cfg20, {100000}, 3);
  CHECK(b.rows[0].update_ns_mean <= 2.0 * a.rows[0].update_ns_mean);
}
