// Python bindings for the forward-sampling core: hash functions, neighbor
// tables, backward oracles, retention harnesses, metrics, generators and the
// training pipeline.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "nlb/metrics.hpp"
#include "nlb/parallel.hpp"
#include "nlb/pipeline.hpp"
#include "nlb/sampler_oracle.hpp"
#include "nlb/stats.hpp"
#include "nlb/synthetic.hpp"

namespace py = pybind11;
using namespace nlb;

namespace {

EventStream stream_from_arrays(py::array_t<std::int64_t> src,
                               py::array_t<std::int64_t> dst,
                               py::array_t<std::int64_t> ts) {
  if (src.size() != dst.size() || src.size() != ts.size()) {
    throw std::invalid_argument("src/dst/ts must have equal length");
  }
  EventStream s;
  auto su = src.unchecked<1>();
  auto du = dst.unchecked<1>();
  auto tu = ts.unchecked<1>();
  NodeId max_node = -1;
  for (py::ssize_t i = 0; i < su.shape(0); ++i) {
    TemporalLink l;
    l.src = su(i);
    l.dst = du(i);
    l.ts = tu(i);
    l.event_idx = i;
    if (l.src < 0 || l.dst < 0) throw std::invalid_argument("negative node id");
    if (i > 0 && l.ts < s.links.back().ts) {
      throw std::invalid_argument("timestamps must be non-decreasing");
    }
    max_node = std::max({max_node, l.src, l.dst});
    s.links.push_back(l);
  }
  s.num_nodes = max_node + 1;
  s.raw_ids.resize(s.num_nodes);
  for (NodeId i = 0; i < s.num_nodes; ++i) s.raw_ids[i] = i;
  return s;
}

py::dict report_to_dict(const EvalReport& r) {
  py::dict d;
  d["auc"] = r.auc;
  d["ap"] = r.ap;
  d["mrr"] = r.mrr;
  d["f1"] = r.f1;
  d["positives"] = r.positives;
  d["train_epoch_seconds"] = r.train_epoch_seconds;
  d["test_seconds"] = r.test_seconds;
  d["inference_latency_seconds"] = r.inference_latency_seconds;
  return d;
}

py::dict curve_to_dict(const RetentionCurve& curve) {
  const py::ssize_t n = static_cast<py::ssize_t>(curve.points.size());
  py::array_t<double> deltas(n), empirical(n), theory(n), lo(n), hi(n);
  for (py::ssize_t i = 0; i < n; ++i) {
    const RetentionPoint& p = curve.points[i];
    deltas.mutable_at(i) = p.delta_t;
    empirical.mutable_at(i) = p.empirical;
    theory.mutable_at(i) = p.theory;
    lo.mutable_at(i) = p.ci_low;
    hi.mutable_at(i) = p.ci_high;
  }
  py::dict d;
  d["delta_t"] = deltas;
  d["empirical"] = empirical;
  d["theory"] = theory;
  d["ci_low"] = lo;
  d["ci_high"] = hi;
  return d;
}

SamplerConfig make_config(const std::string& scheme, std::int64_t s,
                          double alpha, std::uint64_t seed) {
  SamplerConfig cfg;
  if (scheme == "edge") cfg.scheme = KeyScheme::kEdge;
  else if (scheme == "node") cfg.scheme = KeyScheme::kNode;
  else throw std::invalid_argument("scheme must be 'edge' or 'node'");
  cfg.slots = s;
  cfg.alpha = alpha;
  cfg.seed = seed;
  cfg.validate();
  return cfg;
}

}  // namespace

PYBIND11_MODULE(nlb, m) {
  m.doc() = "Forward recent sampling for temporal graphs";

  m.def("set_threads", &set_thread_count, py::arg("n"));

  m.def(
      "hash_edge",
      [](std::int64_t v, std::int64_t t, std::int64_t s, std::uint64_t q1,
         std::uint64_t q2) {
        SamplerConfig cfg;
        cfg.slots = s;
        cfg.q1 = q1;
        cfg.q2 = q2;
        return hash_edge_key(v, t, cfg);
      },
      py::arg("v"), py::arg("t"), py::arg("s"),
      py::arg("q1") = 1000000007ULL, py::arg("q2") = 998244353ULL,
      "(q1*v + q2*t) mod s");
  m.def(
      "hash_node",
      [](std::int64_t v, std::int64_t s, std::uint64_t q1) {
        SamplerConfig cfg;
        cfg.slots = s;
        cfg.q1 = q1;
        return hash_node_key(v, cfg);
      },
      py::arg("v"), py::arg("s"), py::arg("q1") = 1000000007ULL,
      "(q1*v) mod s");

  py::class_<NeighborTable>(m, "NeighborTable",
                            "Per-node fixed-size forward-sampled neighbor tables")
      .def(py::init([](NodeId num_nodes, const std::string& scheme,
                       std::int64_t s, double alpha, std::uint64_t seed) {
             return NeighborTable(num_nodes, make_config(scheme, s, alpha, seed));
           }),
           py::arg("num_nodes"), py::arg("scheme") = "edge", py::arg("s") = 20,
           py::arg("alpha") = 0.9, py::arg("seed") = 0)
      .def("update",
           [](NeighborTable& t, NodeId src, NodeId dst, Timestamp ts,
              std::int64_t event_idx) {
             t.update({src, dst, ts, -1, event_idx});
           },
           py::arg("src"), py::arg("dst"), py::arg("ts"), py::arg("event_idx"))
      .def("batch_update",
           [](NeighborTable& t, py::array_t<std::int64_t> src,
              py::array_t<std::int64_t> dst, py::array_t<std::int64_t> ts,
              std::int64_t first_event_idx, int workers) {
             EventStream s = stream_from_arrays(src, dst, ts);
             for (auto& l : s.links) l.event_idx += first_event_idx;
             t.batch_update(std::span<const TemporalLink>(s.links), workers);
           },
           py::arg("src"), py::arg("dst"), py::arg("ts"),
           py::arg("first_event_idx") = 0, py::arg("workers") = 1)
      .def("snapshot",
           [](const NeighborTable& t, NodeId u) {
             auto entries = t.snapshot(u);
             const py::ssize_t n = static_cast<py::ssize_t>(entries.size());
             py::array_t<std::int64_t> slot(n), nbr(n), ts(n);
             for (py::ssize_t i = 0; i < n; ++i) {
               slot.mutable_at(i) = entries[i].slot;
               nbr.mutable_at(i) = entries[i].nbr;
               ts.mutable_at(i) = entries[i].ts;
             }
             py::dict d;
             d["slot"] = slot;
             d["nbr"] = nbr;
             d["ts"] = ts;
             return d;
           },
           py::arg("u"))
      .def("save", &NeighborTable::save, py::arg("path"))
      .def_static("load", &NeighborTable::load, py::arg("path"))
      .def("__eq__", [](const NeighborTable& a, const NeighborTable& b) {
        return a == b;
      });

  py::class_<HistoryStore>(m, "HistoryStore",
                           "Full backward history, the oracle side")
      .def(py::init<NodeId>(), py::arg("num_nodes"))
      .def("add_link",
           [](HistoryStore& h, NodeId src, NodeId dst, Timestamp ts) {
             h.add_link({src, dst, ts, -1, 0});
           },
           py::arg("src"), py::arg("dst"), py::arg("ts"))
      .def("sample_truncation",
           [](const HistoryStore& h, NodeId u, Timestamp t, std::int64_t s) {
             std::vector<std::pair<NodeId, Timestamp>> out;
             for (const auto& e : sample_truncation(h, u, t, s)) {
               out.emplace_back(e.nbr, e.ts);
             }
             return out;
           },
           py::arg("u"), py::arg("t"), py::arg("s"))
      .def("sample_uniform",
           [](const HistoryStore& h, NodeId u, Timestamp t, std::int64_t s,
              std::uint64_t seed) {
             StreamRng rng(seed);
             std::vector<std::pair<NodeId, Timestamp>> out;
             for (const auto& e : sample_uniform(h, u, t, s, rng)) {
               out.emplace_back(e.nbr, e.ts);
             }
             return out;
           },
           py::arg("u"), py::arg("t"), py::arg("s"), py::arg("seed") = 0)
      .def("sample_recent",
           [](const HistoryStore& h, NodeId u, Timestamp t, std::int64_t s,
              double c, std::uint64_t seed) {
             StreamRng rng(seed);
             std::vector<std::pair<NodeId, Timestamp>> out;
             for (const auto& e : sample_recent(h, u, t, s, c, rng)) {
               out.emplace_back(e.nbr, e.ts);
             }
             return out;
           },
           py::arg("u"), py::arg("t"), py::arg("s"), py::arg("c"),
           py::arg("seed") = 0);

  m.def(
      "retention_edge",
      [](double alpha, std::int64_t s, double lambda, std::int64_t trials,
         const std::vector<double>& deltas, std::int64_t pool,
         std::uint64_t seed, int workers) {
        SamplerConfig cfg = make_config("edge", s, alpha, seed);
        PoissonStreamSpec spec;
        spec.lambda = lambda;
        spec.neighbor_pool = pool;
        return curve_to_dict(
            measure_retention_edge(cfg, spec, trials, deltas, workers));
      },
      py::arg("alpha"), py::arg("s"), py::arg("lam"), py::arg("trials"),
      py::arg("deltas"), py::arg("pool") = 10000, py::arg("seed") = 0,
      py::arg("workers") = 1,
      "Monte-Carlo survival vs exp(-alpha*lam*dt/s)");
  m.def(
      "retention_node",
      [](double alpha, std::int64_t s,
         const std::vector<double>& competitor_lambdas, std::int64_t trials,
         const std::vector<double>& deltas, std::uint64_t seed, int workers) {
        SamplerConfig cfg = make_config("node", s, alpha, seed);
        PoissonStreamSpec spec;
        for (std::size_t i = 0; i < competitor_lambdas.size(); ++i) {
          spec.per_neighbor_lambdas[static_cast<NodeId>(i)] =
              competitor_lambdas[i];
        }
        return curve_to_dict(
            measure_retention_node(cfg, spec, trials, deltas, workers));
      },
      py::arg("alpha"), py::arg("s"), py::arg("competitor_lambdas"),
      py::arg("trials"), py::arg("deltas"), py::arg("seed") = 0,
      py::arg("workers") = 1,
      "Monte-Carlo survival vs the node-wise product form");

  m.def("auc", &auc_score, py::arg("scores"), py::arg("labels"));
  m.def("average_precision", &average_precision, py::arg("scores"),
        py::arg("labels"));
  m.def("mrr", &mrr_score, py::arg("pos_scores"), py::arg("neg_scores"));

  m.def(
      "gen_recency_stream",
      [](NodeId nodes, std::int64_t events, double p_repeat,
         std::uint64_t seed) {
        EventStream s = make_recency_stream(nodes, events, p_repeat, seed);
        const py::ssize_t n = static_cast<py::ssize_t>(s.size());
        py::array_t<std::int64_t> src(n), dst(n), ts(n);
        for (py::ssize_t i = 0; i < n; ++i) {
          src.mutable_at(i) = s.links[i].src;
          dst.mutable_at(i) = s.links[i].dst;
          ts.mutable_at(i) = s.links[i].ts;
        }
        return py::make_tuple(src, dst, ts);
      },
      py::arg("nodes"), py::arg("events"), py::arg("p_repeat") = 0.8,
      py::arg("seed") = 0);

  m.def(
      "train_link_model",
      [](py::array_t<std::int64_t> src, py::array_t<std::int64_t> dst,
         py::array_t<std::int64_t> ts, const std::string& scheme,
         std::int64_t s, double alpha, int epochs, std::int64_t batch,
         double lr, int eval_negatives, bool inductive, std::uint64_t seed,
         std::int64_t d_status, std::int64_t d_time, std::int64_t d_msg,
         std::int64_t d_hidden, std::int64_t d_out, int threads) {
        EventStream stream = stream_from_arrays(src, dst, ts);
        TrainConfig cfg;
        cfg.sampler = make_config(scheme, s, alpha, seed);
        cfg.epochs = epochs;
        cfg.batch_size = batch;
        cfg.lr = lr;
        cfg.eval_negatives = eval_negatives;
        cfg.seed = seed;
        cfg.threads = threads;
        cfg.dims.d_status = d_status;
        cfg.dims.d_time = d_time;
        cfg.dims.d_msg = d_msg;
        cfg.dims.d_hidden = d_hidden;
        cfg.dims.d_out = d_out;
        PipelineResult r = run_link_pipeline<float>(stream, cfg, inductive);
        py::dict out = report_to_dict(r.link_report);
        py::list losses;
        for (const auto& epoch : r.epoch_losses) {
          losses.append(py::cast(epoch));
        }
        out["epoch_losses"] = losses;
        return out;
      },
      py::arg("src"), py::arg("dst"), py::arg("ts"), py::arg("scheme") = "edge",
      py::arg("s") = 10, py::arg("alpha") = 0.9, py::arg("epochs") = 2,
      py::arg("batch") = 100, py::arg("lr") = 1e-3,
      py::arg("eval_negatives") = 10, py::arg("inductive") = false,
      py::arg("seed") = 0, py::arg("d_status") = 16, py::arg("d_time") = 4,
      py::arg("d_msg") = 16, py::arg("d_hidden") = 16, py::arg("d_out") = 16,
      py::arg("threads") = 1,
      "Self-supervised link prediction over (src, dst, ts) arrays");
}
