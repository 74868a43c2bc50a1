#include <cmath>
#include <limits>
#include <numeric>

#include "doctest.h"
#include "nlb/pipeline.hpp"
#include "nlb/report.hpp"
#include "nlb/synthetic.hpp"

using namespace nlb;
using F = float;

namespace {

TrainConfig small_cfg(std::uint64_t seed = 5) {
  TrainConfig cfg;
  cfg.dims.d_status = 16;
  cfg.dims.d_time = 4;
  cfg.dims.d_msg = 16;
  cfg.dims.d_hidden = 16;
  cfg.dims.d_out = 16;
  cfg.sampler.slots = 8;
  cfg.sampler.alpha = 0.9;
  cfg.sampler.seed = seed;
  cfg.seed = seed;
  cfg.batch_size = 50;
  cfg.epochs = 3;
  cfg.lr = 3e-3;
  cfg.eval_negatives = 20;
  return cfg;
}

// Two non-interacting communities with opposite edge features; labels follow
// community membership, so embeddings are linearly separable.
EventStream separable_stream(int labels_per_side) {
  EventStream s;
  const NodeId half = 10;
  s.num_nodes = 2 * half;
  s.raw_ids.resize(s.num_nodes);
  for (NodeId i = 0; i < s.num_nodes; ++i) s.raw_ids[i] = i;
  s.features.dim = 1;
  s.num_classes = 2;
  StreamRng rng(41);
  const std::int64_t events = 600;
  for (std::int64_t i = 0; i < events; ++i) {
    const bool side_b = i % 2 == 1;
    NodeId u = static_cast<NodeId>(rng.next_below(half));
    NodeId v = static_cast<NodeId>(rng.next_below(half - 1));
    if (v >= u) ++v;
    if (side_b) {
      u += half;
      v += half;
    }
    TemporalLink l;
    l.src = u;
    l.dst = v;
    l.ts = i;
    l.event_idx = i;
    l.edge_feat = i;
    s.links.push_back(l);
    s.features.rows.push_back(side_b ? -4.0f : 4.0f);
  }
  // Labels sprinkled over the whole stream so train and test both see them.
  for (int k = 0; k < labels_per_side; ++k) {
    Timestamp t = 1 + (events - 2) * static_cast<Timestamp>(k) /
                          std::max(labels_per_side - 1, 1);
    s.labels.push_back({static_cast<NodeId>(rng.next_below(half)), t, 0});
    s.labels.push_back(
        {static_cast<NodeId>(half + rng.next_below(half)), t, 1});
  }
  std::sort(s.labels.begin(), s.labels.end(),
            [](const NodeLabelEvent& a, const NodeLabelEvent& b) {
              return a.ts < b.ts;
            });
  return s;
}

}  // namespace

TEST_CASE("fresh parameters start near the uninformed loss") {
  EventStream s = make_recency_stream(100, 500, 0.8, 7);
  TrainConfig cfg = small_cfg();
  Trainer<F> trainer(s, cfg);
  SplitView split = chronological_split(s);
  std::vector<double> losses = trainer.train_epoch(split.inductive_train);
  CHECK(losses.front() == doctest::Approx(std::log(2.0)).epsilon(0.15));
}

TEST_CASE("training loss decreases on the recency task") {
  EventStream s = make_recency_stream(120, 3000, 0.8, 11);
  TrainConfig cfg = small_cfg(9);
  Trainer<F> trainer(s, cfg);
  SplitView split = chronological_split(s);
  std::vector<double> epoch_means;
  for (int e = 0; e < 4; ++e) {
    trainer.reset_runtime();
    std::vector<double> losses = trainer.train_epoch(split.inductive_train);
    epoch_means.push_back(std::accumulate(losses.begin(), losses.end(), 0.0) /
                          losses.size());
  }
  CHECK(epoch_means.back() < epoch_means.front());
  for (std::size_t e = 1; e < epoch_means.size(); ++e) {
    CHECK(epoch_means[e] < epoch_means[e - 1] + 0.02);
  }
}

TEST_CASE("identical seeds replay identical loss trajectories") {
  EventStream s = make_recency_stream(80, 1200, 0.8, 13);
  TrainConfig cfg = small_cfg(17);
  cfg.epochs = 2;
  auto run = [&]() {
    Trainer<F> trainer(s, cfg);
    SplitView split = chronological_split(s);
    std::vector<double> all;
    for (int e = 0; e < cfg.epochs; ++e) {
      trainer.reset_runtime();
      for (double l : trainer.train_epoch(split.inductive_train)) {
        all.push_back(l);
      }
    }
    return all;
  };
  CHECK(run() == run());
}

TEST_CASE("pipeline is deterministic given a seed") {
  EventStream s = make_recency_stream(60, 900, 0.8, 19);
  TrainConfig cfg = small_cfg(23);
  cfg.epochs = 1;
  cfg.eval_negatives = 5;
  PipelineResult a = run_link_pipeline<F>(s, cfg, false);
  PipelineResult b = run_link_pipeline<F>(s, cfg, false);
  CHECK(a.link_report.auc == b.link_report.auc);
  CHECK(a.link_report.ap == b.link_report.ap);
  CHECK(a.link_report.mrr == b.link_report.mrr);
  CHECK(a.epoch_losses == b.epoch_losses);
}

TEST_CASE("negative draws never hit the positive destination") {
  EventStream s = make_recency_stream(50, 800, 0.8, 29);
  TrainConfig cfg = small_cfg(31);
  cfg.epochs = 1;
  cfg.eval_negatives = 50;
  // The eval loop with 50 negatives per positive exercises the resampling
  // path; a collision would be a self-comparison producing score ties across
  // the board. We assert through the MRR: with an untrained model scores are
  // still distinct per node, so this is a smoke check plus the direct loop.
  Trainer<F> trainer(s, cfg);
  SplitView split = chronological_split(s);
  EvalReport r = trainer.evaluate_links(split.val_end, split.total);
  CHECK(r.positives == split.total - split.val_end);
  CHECK(std::isfinite(r.mrr));
}

TEST_CASE("inductive with p=0 tracks the transductive pipeline") {
  EventStream s = make_recency_stream(60, 1500, 0.8, 37);
  TrainConfig cfg = small_cfg(41);
  cfg.epochs = 2;
  cfg.eval_negatives = 5;
  cfg.inductive_p = 0.0;
  PipelineResult trans = run_link_pipeline<F>(s, cfg, false);
  PipelineResult ind = run_link_pipeline<F>(s, cfg, true);
  CHECK(ind.masked_nodes == 0);
  CHECK(std::abs(ind.link_report.auc - trans.link_report.auc) < 0.15);
}

TEST_CASE("masked nodes appear in test snapshots after the unmasked replay") {
  EventStream s = make_recency_stream(40, 2000, 0.8, 43);
  SplitView split = chronological_split(s);
  split = inductive_mask(s, split, 0.3, 43);
  REQUIRE(!split.masked_nodes.empty());

  TrainConfig cfg = small_cfg(43);
  Trainer<F> trainer(s, cfg);
  trainer.replay_forward(0, split.val_end);
  bool masked_seen = false;
  for (std::int64_t i = split.val_end; i < split.total && !masked_seen; ++i) {
    for (NodeId endpoint : {s.links[i].src, s.links[i].dst}) {
      for (const SnapshotEntry& e : trainer.table().snapshot(endpoint)) {
        masked_seen |= split.masked_nodes.count(e.nbr) > 0;
      }
    }
  }
  CHECK(masked_seen);
}

TEST_CASE("node classification separates a linearly separable toy") {
  EventStream s = separable_stream(60);
  TrainConfig cfg = small_cfg(47);
  cfg.epochs = 1;
  cfg.eval_negatives = 2;
  PipelineResult r = run_link_pipeline<F>(s, cfg, false, true);
  REQUIRE(r.node_report.has_value());
  CHECK(r.node_report->auc >= 0.99);
}

TEST_CASE("shuffled labels score near chance") {
  EventStream s = separable_stream(100);
  StreamRng rng(53);
  for (auto& l : s.labels) l.label = static_cast<int>(rng.next_below(2));
  TrainConfig cfg = small_cfg(53);
  cfg.epochs = 0;
  Trainer<F> trainer(s, cfg);
  SplitView split = chronological_split(s);
  EvalReport r = evaluate_nodes(trainer, s, split, nullptr);
  CHECK(r.auc == doctest::Approx(0.5).epsilon(0.25));
}

TEST_CASE("degenerate single-class training labels are rejected") {
  EventStream s = separable_stream(30);
  // Only class-0 labels inside the train range.
  std::vector<NodeLabelEvent> filtered;
  SplitView split = chronological_split(s);
  Timestamp train_last_ts = s.links[split.train_end - 1].ts;
  for (const auto& l : s.labels) {
    if (l.ts > train_last_ts || l.label == 0) filtered.push_back(l);
  }
  s.labels = filtered;
  TrainConfig cfg = small_cfg(59);
  cfg.epochs = 0;
  Trainer<F> trainer(s, cfg);
  CHECK_THROWS_AS(evaluate_nodes(trainer, s, split, nullptr),
                  std::invalid_argument);
}

TEST_CASE("sweep emits one deterministic row per value") {
  EventStream s = make_recency_stream(50, 600, 0.8, 61);
  TrainConfig cfg = small_cfg(61);
  cfg.epochs = 1;
  cfg.eval_negatives = 3;
  std::vector<double> alphas = {0.2, 0.6, 1.0};
  std::vector<SweepRow> rows = run_sweep<F>(s, cfg, SweepAxis::kAlpha, alphas);
  REQUIRE(rows.size() == 3);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].value == alphas[i]);
    CHECK(std::isfinite(rows[i].report.auc));
    CHECK(std::isfinite(rows[i].report.mrr));
  }
  std::vector<SweepRow> again =
      run_sweep<F>(s, cfg, SweepAxis::kAlpha, {0.6});
  CHECK(again[0].report.auc == rows[1].report.auc);
  CHECK(again[0].report.mrr == rows[1].report.mrr);

  std::vector<SweepRow> s_rows =
      run_sweep<F>(s, cfg, SweepAxis::kSlots, {0.0, 8.0});
  REQUIRE(s_rows.size() == 2);  // the s=0 row runs and reports
  CHECK(std::isfinite(s_rows[0].report.auc));
}

namespace nlb {
// Reaches into Trainer to exercise the negative-draw invariant directly.
class TrainerProbe {
 public:
  template <class R>
  static NodeId draw(Trainer<R>& t, const std::vector<NodeId>& pool,
                     NodeId positive, EventIdx event, std::uint64_t salt) {
    return t.draw_negative(pool, positive, event, salt);
  }
};
}  // namespace nlb

TEST_CASE("negative draws avoid the positive destination") {
  EventStream s = make_recency_stream(10, 50, 0.5, 71);
  Trainer<F> trainer(s, small_cfg(71));
  std::vector<NodeId> pool = {3, 4};
  for (int i = 0; i < 10000; ++i) {
    NodeId got = TrainerProbe::draw(trainer, pool, 4, i, 0xabc);
    CHECK(got == 3);
  }
  // A single-node pool cannot avoid the positive; it must still terminate.
  std::vector<NodeId> lone = {4};
  CHECK(TrainerProbe::draw(trainer, lone, 4, 0, 0xabc) == 4);
}

TEST_CASE("non-finite loss aborts with diagnostics") {
  EventStream s = make_recency_stream(30, 200, 0.8, 73);
  TrainConfig cfg = small_cfg(73);
  Trainer<F> trainer(s, cfg);
  trainer.model().params["link.2.w"][0] =
      std::numeric_limits<float>::quiet_NaN();
  SplitView split = chronological_split(s);
  CHECK_THROWS_WITH_AS(trainer.train_epoch(split.inductive_train),
                       doctest::Contains("non-finite"), std::runtime_error);
}

TEST_CASE("report csv carries the header metadata") {
  EvalReport r;
  r.auc = 0.9;
  r.positives = 10;
  std::string path = "/tmp/nlb_report_test.csv";
  write_report_csv(path, r, {{"seed", "7"}, {"dataset_sha1", "abc"}});
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "# seed=7");
  std::getline(in, line);
  CHECK(line == "# dataset_sha1=abc");
  std::getline(in, line);
  CHECK(line.substr(0, 4) == "auc,");
  std::remove(path.c_str());
}
