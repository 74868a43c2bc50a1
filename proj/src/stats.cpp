#include "nlb/stats.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <thread>

#include "nlb/sampler_oracle.hpp"

namespace nlb {

void PoissonStreamSpec::validate() const {
  if (horizon < 0) throw std::invalid_argument("horizon must be >= 0");
  if (per_neighbor_lambdas.empty()) {
    if (lambda <= 0) throw std::invalid_argument("lambda must be > 0");
    if (neighbor_pool <= 0) throw std::invalid_argument("neighbor pool must be > 0");
  } else {
    for (const auto& [node, l] : per_neighbor_lambdas) {
      if (l <= 0) throw std::invalid_argument("per-neighbor lambda must be > 0");
    }
  }
}

std::vector<TimedArrival> gen_poisson_stream(const PoissonStreamSpec& spec,
                                             StreamRng& rng) {
  spec.validate();
  std::vector<TimedArrival> events;
  if (spec.per_neighbor_lambdas.empty()) {
    double t = 0.0;
    while (true) {
      t += -std::log(1.0 - rng.next_u01()) / spec.lambda;
      if (t >= spec.horizon) break;
      events.push_back({t, static_cast<NodeId>(rng.next_below(
                               static_cast<std::uint64_t>(spec.neighbor_pool)))});
    }
  } else {
    // Superposition: merged rate, neighbor picked proportionally to its rate.
    double total = 0.0;
    std::vector<std::pair<NodeId, double>> cum;
    for (const auto& [node, l] : spec.per_neighbor_lambdas) {
      total += l;
      cum.emplace_back(node, total);
    }
    double t = 0.0;
    while (true) {
      t += -std::log(1.0 - rng.next_u01()) / total;
      if (t >= spec.horizon) break;
      double pick = rng.next_u01() * total;
      auto it = std::lower_bound(
          cum.begin(), cum.end(), pick,
          [](const std::pair<NodeId, double>& a, double v) { return a.second < v; });
      events.push_back({t, it->first});
    }
  }
  return events;
}

double RetentionCurve::max_abs_error() const {
  double worst = 0.0;
  for (const RetentionPoint& p : points) {
    worst = std::max(worst, std::abs(p.empirical - p.theory));
  }
  return worst;
}

void RetentionCurve::write_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "delta_t,empirical,theory,ci_low,ci_high,trials\n";
  char buf[160];
  for (const RetentionPoint& p : points) {
    std::snprintf(buf, sizeof(buf), "%.6g,%.6f,%.6f,%.6f,%.6f,%lld\n", p.delta_t,
                  p.empirical, p.theory, p.ci_low, p.ci_high,
                  static_cast<long long>(p.trials));
    out << buf;
  }
}

void RetentionCurve::write_plot_script(const std::string& csv_path,
                                       const std::string& script_path) const {
  std::ofstream out(script_path);
  if (!out) throw std::runtime_error("cannot write " + script_path);
  out << "set datafile separator ','\n"
      << "set key autotitle columnhead\n"
      << "set xlabel 'delta t'\n"
      << "set ylabel 'retention probability'\n"
      << "plot '" << csv_path << "' using 1:2:4:5 with yerrorbars title 'empirical', \\\n"
      << "     '" << csv_path << "' using 1:3 with lines title 'theory'\n";
}

double theory_retention_edge(const SamplerConfig& cfg, double lambda, double dt) {
  if (cfg.slots <= 0) return 0.0;
  return std::exp(-cfg.alpha * lambda * dt / static_cast<double>(cfg.slots));
}

double theory_retention_node(const SamplerConfig& cfg,
                             const std::vector<double>& competitor_lambdas,
                             double dt) {
  if (cfg.slots <= 0) return 0.0;
  const double s = static_cast<double>(cfg.slots);
  double prob = 1.0;
  for (double l : competitor_lambdas) {
    prob *= (s - 1.0) / s + std::exp(-cfg.alpha * l * dt) / s;
  }
  return prob;
}

std::pair<double, double> wilson_interval(std::int64_t successes,
                                          std::int64_t trials, double z) {
  if (trials <= 0) return {0.0, 1.0};
  const double n = static_cast<double>(trials);
  const double p = static_cast<double>(successes) / n;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / n;
  const double center = (p + z2 / (2.0 * n)) / denom;
  const double half =
      z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
  return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

namespace {

struct SurvivalCounts {
  std::vector<std::int64_t> surviving;  // per probe delta

  explicit SurvivalCounts(std::size_t n) : surviving(n, 0) {}
  void merge(const SurvivalCounts& other) {
    for (std::size_t i = 0; i < surviving.size(); ++i) {
      surviving[i] += other.surviving[i];
    }
  }
};

// One EDGE-scheme trial: lead-in arrivals, forced probe insert at a random
// mid-stream time, then post arrivals up to the largest probe delta.
void run_edge_trial(const SamplerConfig& cfg, const PoissonStreamSpec& spec,
                    std::uint64_t trial, const std::vector<double>& deltas,
                    SurvivalCounts& counts) {
  StreamRng rng(counter_u64(cfg.seed, 0x65646765ULL, trial));
  NeighborTable table(1, cfg);
  const double max_delta = deltas.back();
  const double t_probe =
      spec.horizon * (0.3 + 0.4 * rng.next_u01());  // random mid-stream
  const auto pool = static_cast<std::uint64_t>(spec.neighbor_pool);
  EventIdx event_idx = static_cast<EventIdx>(trial) << 20;

  double t = 0.0;
  while (true) {
    t += -std::log(1.0 - rng.next_u01()) / spec.lambda;
    if (t >= t_probe) break;
    RetentionProbe::apply_endpoint(table, 0,
                                   static_cast<NodeId>(rng.next_below(pool)),
                                   quantize_time(t), event_idx++, 0);
  }

  const NodeId probe_nbr = static_cast<NodeId>(rng.next_below(pool));
  const Timestamp probe_ts = quantize_time(t_probe);
  const std::int64_t probe_slot =
      RetentionProbe::force_insert(table, 0, probe_nbr, probe_ts);
  const NeighborSlot* slot_row = table.row(0);

  std::size_t next_probe = 0;
  bool alive = true;
  t = t_probe;
  while (next_probe < deltas.size()) {
    t += -std::log(1.0 - rng.next_u01()) / spec.lambda;
    while (next_probe < deltas.size() && t > t_probe + deltas[next_probe]) {
      counts.surviving[next_probe] += alive ? 1 : 0;
      ++next_probe;
    }
    if (t > t_probe + max_delta) break;
    RetentionProbe::apply_endpoint(table, 0,
                                   static_cast<NodeId>(rng.next_below(pool)),
                                   quantize_time(t), event_idx++, 0);
    if (alive) {
      const NeighborSlot& cell = slot_row[probe_slot];
      alive = cell.nbr == probe_nbr && cell.ts == probe_ts;
    }
  }
}

// One NODE-scheme trial. The probe entry is the marked node's latest
// interaction, so only the competitors' processes run after the insertion.
// Ids are redrawn per trial from a wide range so hash collisions with the
// probe slot occur with probability 1/s across trials.
void run_node_trial(const SamplerConfig& cfg,
                    const std::vector<double>& competitor_lambdas,
                    std::uint64_t trial, const std::vector<double>& deltas,
                    SurvivalCounts& counts) {
  StreamRng rng(counter_u64(cfg.seed, 0x6e6f6465ULL, trial));
  NeighborTable table(1, cfg);
  constexpr std::uint64_t kIdRange = 1ULL << 40;

  const NodeId probe_nbr = static_cast<NodeId>(rng.next_below(kIdRange));
  std::vector<NodeId> competitors(competitor_lambdas.size());
  for (auto& id : competitors) {
    do {
      id = static_cast<NodeId>(rng.next_below(kIdRange));
    } while (id == probe_nbr);
  }

  const std::int64_t probe_slot =
      RetentionProbe::force_insert(table, 0, probe_nbr, 0);
  const NeighborSlot* slot_row = table.row(0);

  std::vector<TimedArrival> events;
  if (!competitors.empty()) {
    PoissonStreamSpec merged;
    merged.horizon = deltas.back();
    for (std::size_t j = 0; j < competitors.size(); ++j) {
      merged.per_neighbor_lambdas[competitors[j]] = competitor_lambdas[j];
    }
    events = gen_poisson_stream(merged, rng);
  }

  EventIdx event_idx = static_cast<EventIdx>(trial) << 20;
  std::size_t next_probe = 0;
  bool alive = true;
  for (const TimedArrival& ev : events) {
    while (next_probe < deltas.size() && ev.t > deltas[next_probe]) {
      counts.surviving[next_probe] += alive ? 1 : 0;
      ++next_probe;
    }
    RetentionProbe::apply_endpoint(table, 0, ev.nbr, quantize_time(ev.t),
                                   event_idx++, 0);
    if (alive) {
      const NeighborSlot& cell = slot_row[probe_slot];
      alive = cell.nbr == probe_nbr && cell.ts == 0;
    }
  }
  while (next_probe < deltas.size()) {
    counts.surviving[next_probe] += alive ? 1 : 0;
    ++next_probe;
  }
}

template <class TrialFn>
SurvivalCounts run_trials(std::int64_t trials, std::size_t n_deltas,
                          int workers, TrialFn&& fn) {
  if (workers <= 1) {
    SurvivalCounts counts(n_deltas);
    for (std::int64_t trial = 0; trial < trials; ++trial) {
      fn(static_cast<std::uint64_t>(trial), counts);
    }
    return counts;
  }
  std::vector<SurvivalCounts> partial(workers, SurvivalCounts(n_deltas));
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::int64_t trial = w; trial < trials; trial += workers) {
        fn(static_cast<std::uint64_t>(trial), partial[w]);
      }
    });
  }
  for (auto& th : pool) th.join();
  SurvivalCounts counts(n_deltas);
  for (const auto& p : partial) counts.merge(p);
  return counts;
}

RetentionCurve build_curve(const SurvivalCounts& counts,
                           const std::vector<double>& deltas,
                           std::int64_t trials,
                           const std::vector<double>& theory) {
  RetentionCurve curve;
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    RetentionPoint p;
    p.delta_t = deltas[i];
    p.trials = trials;
    p.empirical =
        static_cast<double>(counts.surviving[i]) / static_cast<double>(trials);
    p.theory = theory[i];
    std::tie(p.ci_low, p.ci_high) = wilson_interval(counts.surviving[i], trials);
    curve.points.push_back(p);
  }
  return curve;
}

std::vector<double> sorted_deltas(std::vector<double> deltas) {
  if (deltas.empty()) throw std::invalid_argument("probe_deltas must be non-empty");
  std::sort(deltas.begin(), deltas.end());
  if (deltas.front() < 0) throw std::invalid_argument("probe deltas must be >= 0");
  return deltas;
}

}  // namespace

RetentionCurve measure_retention_edge(const SamplerConfig& cfg,
                                      const PoissonStreamSpec& spec,
                                      std::int64_t trials,
                                      const std::vector<double>& probe_deltas,
                                      int workers) {
  if (cfg.scheme != KeyScheme::kEdge) {
    throw std::invalid_argument("measure_retention_edge requires EDGE keys");
  }
  cfg.validate();
  spec.validate();
  std::vector<double> deltas = sorted_deltas(probe_deltas);
  SurvivalCounts counts =
      run_trials(trials, deltas.size(), workers,
                 [&](std::uint64_t trial, SurvivalCounts& c) {
                   run_edge_trial(cfg, spec, trial, deltas, c);
                 });
  std::vector<double> theory(deltas.size());
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    theory[i] = theory_retention_edge(cfg, spec.lambda, deltas[i]);
  }
  return build_curve(counts, deltas, trials, theory);
}

RetentionCurve measure_retention_node(const SamplerConfig& cfg,
                                      const PoissonStreamSpec& spec,
                                      std::int64_t trials,
                                      const std::vector<double>& probe_deltas,
                                      int workers) {
  if (cfg.scheme != KeyScheme::kNode) {
    throw std::invalid_argument("measure_retention_node requires NODE keys");
  }
  cfg.validate();
  std::vector<double> deltas = sorted_deltas(probe_deltas);
  std::vector<double> lambdas;
  for (const auto& [node, l] : spec.per_neighbor_lambdas) {
    if (l <= 0) throw std::invalid_argument("per-neighbor lambda must be > 0");
    lambdas.push_back(l);
  }
  SurvivalCounts counts =
      run_trials(trials, deltas.size(), workers,
                 [&](std::uint64_t trial, SurvivalCounts& c) {
                   run_node_trial(cfg, lambdas, trial, deltas, c);
                 });
  std::vector<double> theory(deltas.size());
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    theory[i] = theory_retention_node(cfg, lambdas, deltas[i]);
  }
  return build_curve(counts, deltas, trials, theory);
}

void BenchReport::write_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "events,update_ns_mean,update_ns_stddev,oracle_query_ns\n";
  char buf[160];
  for (const BenchRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%lld,%.2f,%.2f,%.2f\n",
                  static_cast<long long>(r.events), r.update_ns_mean,
                  r.update_ns_stddev, r.oracle_query_ns);
    out << buf;
  }
}

BenchReport bench_update_scaling(const SamplerConfig& cfg,
                                 const std::vector<std::int64_t>& stream_lengths,
                                 int reps, std::uint64_t seed) {
  using Clock = std::chrono::steady_clock;
  cfg.validate();
  if (reps < 1) throw std::invalid_argument("reps must be >= 1");

  BenchReport report;
  constexpr NodeId kPool = 10000;
  for (std::int64_t n : stream_lengths) {
    // All events land on one center node: the densest case the O(1)
    // contract has to hold for.
    std::vector<TemporalLink> links(n);
    StreamRng rng(counter_u64(seed, 0xb3ccULL, static_cast<std::uint64_t>(n)));
    for (std::int64_t i = 0; i < n; ++i) {
      links[i] = {0, 1 + static_cast<NodeId>(rng.next_below(kPool)), i, -1, i};
    }

    std::vector<double> per_rep;
    for (int rep = 0; rep < reps; ++rep) {
      {
        NeighborTable warm(kPool + 1, cfg);
        std::span<const TemporalLink> head(
            links.data(), std::min<std::int64_t>(n, 10000));
        warm.batch_update(head);
      }
      NeighborTable table(kPool + 1, cfg);
      auto start = Clock::now();
      for (const TemporalLink& l : links) table.update(l);
      auto stop = Clock::now();
      per_rep.push_back(
          std::chrono::duration<double, std::nano>(stop - start).count() /
          static_cast<double>(n));
    }
    double mean = 0.0;
    for (double v : per_rep) mean += v;
    mean /= per_rep.size();
    double var = 0.0;
    for (double v : per_rep) var += (v - mean) * (v - mean);
    var = per_rep.size() > 1 ? var / (per_rep.size() - 1) : 0.0;

    // Uniform-oracle cost over the same histories: one query scans all
    // |N_u^t| entries, so this column grows linearly with n.
    HistoryStore store(kPool + 1);
    for (const TemporalLink& l : links) store.add_link(l);
    StreamRng qrng(counter_u64(seed, 0x9aedULL, static_cast<std::uint64_t>(n)));
    const int queries = 20;
    auto q_start = Clock::now();
    std::size_t sink = 0;
    for (int q = 0; q < queries; ++q) {
      sink += sample_uniform(store, 0, n + 1, 10, qrng).size();
    }
    auto q_stop = Clock::now();
    if (sink == 0) throw std::runtime_error("oracle returned nothing");
    double oracle_ns =
        std::chrono::duration<double, std::nano>(q_stop - q_start).count() /
        queries;

    report.rows.push_back({n, mean, std::sqrt(var), oracle_ns});
  }
  return report;
}

}  // namespace nlb
