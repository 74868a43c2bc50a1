#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "nlb/rng.hpp"
#include "nlb/sampler_forward.hpp"

namespace nlb {

// Poisson arrival spec for one center node. When per_neighbor_lambdas is
// empty, events arrive at rate `lambda` with neighbor ids drawn uniformly
// from a pool of `neighbor_pool` ids; otherwise each listed neighbor follows
// its own independent process and the streams are merged by superposition.
struct PoissonStreamSpec {
  double lambda = 2.0;
  double horizon = 50.0;
  std::int64_t neighbor_pool = 10000;
  std::map<NodeId, double> per_neighbor_lambdas;

  void validate() const;
};

struct TimedArrival {
  double t = 0.0;
  NodeId nbr = 0;
};

// Simulation clocks are continuous for gap generation and quantized to
// integer timestamps at this resolution before hashing.
inline constexpr double kTimeQuantum = 1e-3;
inline Timestamp quantize_time(double t) {
  return static_cast<Timestamp>(t / kTimeQuantum);
}

std::vector<TimedArrival> gen_poisson_stream(const PoissonStreamSpec& spec,
                                             StreamRng& rng);

struct RetentionPoint {
  double delta_t = 0.0;
  double empirical = 0.0;
  double theory = 0.0;
  double ci_low = 0.0;   // Wilson interval bounds
  double ci_high = 0.0;
  std::int64_t trials = 0;
};

struct RetentionCurve {
  std::vector<RetentionPoint> points;

  double max_abs_error() const;
  // `delta_t,empirical,theory,ci_low,ci_high,trials` rows.
  void write_csv(const std::string& path) const;
  // Companion gnuplot script plotting empirical vs theory.
  void write_plot_script(const std::string& csv_path,
                         const std::string& script_path) const;
};

// Closed-form survival of an entry inserted dt ago, EDGE keys: under
// Poisson(lambda) arrivals the slot is hit at rate alpha*lambda/s.
double theory_retention_edge(const SamplerConfig& cfg, double lambda, double dt);

// NODE keys: product over competitors of (s-1)/s + (1/s)*exp(-alpha*l_j*dt).
double theory_retention_node(const SamplerConfig& cfg,
                             const std::vector<double>& competitor_lambdas,
                             double dt);

// Replays Poisson streams through a real table, force-inserts a probe entry
// mid-stream, and measures the fraction still present after each delta.
RetentionCurve measure_retention_edge(const SamplerConfig& cfg,
                                      const PoissonStreamSpec& spec,
                                      std::int64_t trials,
                                      const std::vector<double>& probe_deltas,
                                      int workers = 1);

// NODE-scheme variant. per_neighbor_lambdas lists the competing neighbors;
// the probe entry is the marked node's latest interaction, so its own
// process is silent after the insertion. Competitor ids are redrawn per
// trial so the 1/s hash-collision probability is realized across trials.
RetentionCurve measure_retention_node(const SamplerConfig& cfg,
                                      const PoissonStreamSpec& spec,
                                      std::int64_t trials,
                                      const std::vector<double>& probe_deltas,
                                      int workers = 1);

struct BenchRow {
  std::int64_t events = 0;
  double update_ns_mean = 0.0;
  double update_ns_stddev = 0.0;
  double oracle_query_ns = 0.0;  // uniform-oracle scan cost at this history size
};

struct BenchReport {
  std::vector<BenchRow> rows;
  void write_csv(const std::string& path) const;
};

// Times forward-table updates (after a warm-up pass) and the uniform oracle's
// per-query cost at matching history sizes.
BenchReport bench_update_scaling(const SamplerConfig& cfg,
                                 const std::vector<std::int64_t>& stream_lengths,
                                 int reps, std::uint64_t seed = 7);

// Wilson score interval for a binomial proportion.
std::pair<double, double> wilson_interval(std::int64_t successes,
                                          std::int64_t trials,
                                          double z = 1.959963984540054);

}  // namespace nlb
