#pragma once

#include <algorithm>
#include <chrono>
#include <deque>
#include <cmath>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "nlb/metrics.hpp"
#include "nlb/model.hpp"
#include "nlb/sampler_forward.hpp"
#include "nlb/stream.hpp"

namespace nlb {

struct TrainConfig {
  std::int64_t batch_size = 100;
  int epochs = 5;
  double lr = 1e-4;
  double lr_decay = 1.0;      // per-epoch multiplier
  int warmup_steps = 0;       // linear lr ramp over the first optimizer steps
  double grad_clip = 0.0;     // global-norm clip; 0 disables
  int bptt_batches = 1;       // trailing batches re-derived in-tape per step
  // Frequency gradients scale with the raw time deltas; damping their step
  // size (< 1) stabilizes aggressive learning rates when needed.
  double omega_lr_scale = 1.0;
  int eval_negatives = 500;  // per positive, for MRR
  double dropout = 0.0;
  std::uint64_t seed = 0;
  int threads = 1;
  double inductive_p = 0.1;
  int node_head_steps = 300;
  double node_head_lr = 1e-2;
  SamplerConfig sampler;
  ModelDims dims;

  void validate() const {
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (eval_negatives < 1) {
      throw std::invalid_argument("eval_negatives must be >= 1");
    }
    if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
    if (bptt_batches < 1) {
      throw std::invalid_argument("bptt_batches must be >= 1");
    }
  }
};

struct EvalReport {
  double auc = 0.0;
  double ap = 0.0;
  double mrr = 0.0;
  double f1 = 0.0;
  double train_epoch_seconds = 0.0;
  double test_seconds = 0.0;
  double inference_latency_seconds = 0.0;
  std::int64_t positives = 0;
};

// Streaming trainer/evaluator: predictions for a batch always run against
// table and status state from strictly earlier batches, then the batch is
// applied (predict -> update phase order).
template <class R>
class Trainer {
 public:
  using Var = typename Tape<R>::Var;

  Trainer(const EventStream& stream, TrainConfig cfg)
      : stream_(stream),
        cfg_(finalize(cfg, stream)),
        model_(cfg_.dims, cfg_.seed),
        table_(stream.num_nodes, cfg_.sampler),
        state_(stream.num_nodes, cfg_.dims.d_status, first_ts()),
        adam_(cfg_.lr) {
    epoch_lr_ = cfg_.lr;
  }

  const TrainConfig& config() const { return cfg_; }
  NlbModel<R>& model() { return model_; }
  const NeighborTable& table() const { return table_; }
  const StateStore<R>& state() const { return state_; }

  void set_lr(double lr) {
    epoch_lr_ = lr;
    adam_.set_lr(lr);
  }

  // Drops table/status/pending state; parameters and optimizer are kept.
  void reset_runtime() {
    table_ = NeighborTable(stream_.num_nodes, cfg_.sampler);
    state_.reset(first_ts());
    pending_.clear();
  }

  // One pass over the view with learning. Returns per-batch losses.
  std::vector<double> train_epoch(const std::vector<EventIdx>& view) {
    std::vector<double> losses;
    const std::vector<NodeId> pool = node_pool(view);
    for (std::size_t off = 0; off < view.size(); off += cfg_.batch_size) {
      const std::size_t take =
          std::min<std::size_t>(cfg_.batch_size, view.size() - off);
      losses.push_back(train_batch(view.data() + off, take, pool));
    }
    return losses;
  }

  // Applies events without learning or predictions (forward sampling replay).
  void replay_forward(std::int64_t begin, std::int64_t end) {
    flush_pending();
    for (std::int64_t off = begin; off < end; off += cfg_.batch_size) {
      const std::int64_t take = std::min(cfg_.batch_size, end - off);
      std::vector<EventIdx> idx(take);
      for (std::int64_t i = 0; i < take; ++i) idx[i] = off + i;
      apply_events(idx);
      table_.batch_update(
          std::span<const TemporalLink>(stream_.links.data() + off, take),
          cfg_.threads);
    }
  }

  // Streaming evaluation over [begin, end): AUC/AP against one negative per
  // positive, MRR against cfg.eval_negatives; tables and status keep
  // updating after each scored batch. Inference latency counts only the
  // positive query path (table lookup + embed + head).
  EvalReport evaluate_links(std::int64_t begin, std::int64_t end) {
    using Clock = std::chrono::steady_clock;
    flush_pending();
    const std::vector<NodeId> pool = all_nodes();
    EvalReport report;
    std::vector<double> scores, pos_scores;
    std::vector<int> labels;
    std::vector<std::vector<double>> neg_scores;
    const auto t_begin = Clock::now();

    for (std::int64_t off = begin; off < end; off += cfg_.batch_size) {
      const std::int64_t take = std::min(cfg_.batch_size, end - off);
      std::vector<NodeId> src(take), dst(take);
      std::vector<Timestamp> times(take);
      for (std::int64_t i = 0; i < take; ++i) {
        const TemporalLink& l = stream_.links[off + i];
        src[i] = l.src;
        dst[i] = l.dst;
        times[i] = l.ts;
      }

      // Positive query path, timed.
      const auto t_query = Clock::now();
      Tape<R> tape;
      ModelVars<R> mv = register_params(tape, model_, false);
      StateView<R> sv(tape, state_);
      Var z_src = embed_nodes(tape, mv, sv, src, times);
      Var z_dst = embed_nodes(tape, mv, sv, dst, times);
      Var logits = link_logits(tape, mv, z_src, z_dst);
      Var probs = tape.sigmoid(logits);
      report.inference_latency_seconds +=
          std::chrono::duration<double>(Clock::now() - t_query).count();

      // Negatives, in row-bounded chunks with src re-embedded per chunk.
      std::vector<std::vector<double>> batch_negs(take);
      const int chunk =
          std::max<int>(1, static_cast<int>(8192 / std::max<std::int64_t>(take, 1)));
      for (int j0 = 0; j0 < cfg_.eval_negatives; j0 += chunk) {
        const int jn = std::min(chunk, cfg_.eval_negatives - j0);
        Tape<R> ntape;
        ModelVars<R> nmv = register_params(ntape, model_, false);
        StateView<R> nsv(ntape, state_);
        Var nz_src = embed_nodes(ntape, nmv, nsv, src, times);
        for (int j = j0; j < j0 + jn; ++j) {
          std::vector<NodeId> negs(take);
          for (std::int64_t i = 0; i < take; ++i) {
            negs[i] = draw_negative(pool, dst[i], off + i,
                                    0x65766c6eULL + static_cast<std::uint64_t>(j));
          }
          Var nz = embed_nodes(ntape, nmv, nsv, negs, times);
          Var nlogits = link_logits(ntape, nmv, nz_src, nz);
          Var nprobs = ntape.sigmoid(nlogits);
          for (std::int64_t i = 0; i < take; ++i) {
            batch_negs[i].push_back(static_cast<double>(ntape.value(nprobs)[i]));
          }
        }
      }

      for (std::int64_t i = 0; i < take; ++i) {
        const double p = static_cast<double>(tape.value(probs)[i]);
        scores.push_back(p);
        labels.push_back(1);
        scores.push_back(batch_negs[i][0]);
        labels.push_back(0);
        pos_scores.push_back(p);
        neg_scores.push_back(std::move(batch_negs[i]));
        ++report.positives;
      }

      // Update phase.
      std::vector<EventIdx> idx(take);
      for (std::int64_t i = 0; i < take; ++i) idx[i] = off + i;
      apply_events(idx);
      table_.batch_update(
          std::span<const TemporalLink>(stream_.links.data() + off, take),
          cfg_.threads);
    }

    report.test_seconds =
        std::chrono::duration<double>(Clock::now() - t_begin).count();
    report.auc = auc_score(scores, labels);
    report.ap = average_precision(scores, labels);
    report.mrr = mrr_score(pos_scores, neg_scores);
    return report;
  }

  // Positive-pair probabilities over a range under the streaming protocol
  // (predict, then update), without negatives or metrics.
  std::vector<double> score_events(std::int64_t begin, std::int64_t end) {
    flush_pending();
    std::vector<double> out;
    for (std::int64_t off = begin; off < end; off += cfg_.batch_size) {
      const std::int64_t take = std::min(cfg_.batch_size, end - off);
      std::vector<NodeId> src(take), dst(take);
      std::vector<Timestamp> times(take);
      for (std::int64_t i = 0; i < take; ++i) {
        const TemporalLink& l = stream_.links[off + i];
        src[i] = l.src;
        dst[i] = l.dst;
        times[i] = l.ts;
      }
      Tape<R> tape;
      ModelVars<R> mv = register_params(tape, model_, false);
      StateView<R> sv(tape, state_);
      Var probs = tape.sigmoid(link_logits(
          tape, mv, embed_nodes(tape, mv, sv, src, times),
          embed_nodes(tape, mv, sv, dst, times)));
      for (std::int64_t i = 0; i < take; ++i) {
        out.push_back(static_cast<double>(tape.value(probs)[i]));
      }
      std::vector<EventIdx> idx(take);
      for (std::int64_t i = 0; i < take; ++i) idx[i] = off + i;
      apply_events(idx);
      table_.batch_update(
          std::span<const TemporalLink>(stream_.links.data() + off, take),
          cfg_.threads);
    }
    return out;
  }

  // Records the representation of one endpoint of a link just before the
  // update phase, for every label assignment. Returns rows aligned with
  // `assignments`.
  std::vector<Tensor<R>> collect_label_embeddings(
      const std::vector<LabelAssignment>& assignments) {
    flush_pending();
    std::vector<Tensor<R>> rows;
    rows.reserve(assignments.size());
    std::size_t cursor = 0;
    const std::int64_t n = stream_.size();
    for (std::int64_t off = 0; off < n; off += cfg_.batch_size) {
      const std::int64_t take = std::min(cfg_.batch_size, n - off);
      std::vector<NodeId> nodes;
      std::vector<Timestamp> times;
      while (cursor < assignments.size() &&
             assignments[cursor].event_idx < off + take) {
        const LabelAssignment& a = assignments[cursor];
        const TemporalLink& l = stream_.links[a.event_idx];
        nodes.push_back(a.side == 0 ? l.src : l.dst);
        times.push_back(l.ts);
        ++cursor;
      }
      if (!nodes.empty()) {
        Tape<R> tape;
        ModelVars<R> mv = register_params(tape, model_, false);
        StateView<R> sv(tape, state_);
        Var z = embed_nodes(tape, mv, sv, nodes, times);
        const Tensor<R>& zt = tape.value(z);
        for (std::size_t i = 0; i < nodes.size(); ++i) {
          Tensor<R> row(1, zt.cols);
          for (std::int64_t j = 0; j < zt.cols; ++j) {
            row[j] = zt.at(static_cast<std::int64_t>(i), j);
          }
          rows.push_back(std::move(row));
        }
      }
      std::vector<EventIdx> idx(take);
      for (std::int64_t i = 0; i < take; ++i) idx[i] = off + i;
      apply_events(idx);
      table_.batch_update(
          std::span<const TemporalLink>(stream_.links.data() + off, take),
          cfg_.threads);
    }
    return rows;
  }

  // Convenience wrappers used by tests and probes.

  // Embedding of one node from the current runtime state; entries may be
  // given in any order, they are canonicalized by slot index.
  Tensor<R> embed_single(NodeId u, Timestamp t,
                         const std::vector<SnapshotEntry>& entries) {
    Tape<R> tape;
    ModelVars<R> mv = register_params(tape, model_, false);
    StateView<R> sv(tape, state_);
    SnapshotBatch snap;
    snap.batch = 1;
    snap.slots = cfg_.sampler.slots;
    snap.nbr_ids.assign(snap.total(), 0);
    snap.mask.assign(snap.total(), 0);
    snap.delta.assign(snap.total(), 0.0);
    snap.feat_idx.assign(snap.total(), -1);
    for (const SnapshotEntry& e : entries) {
      snap.nbr_ids[e.slot] = e.nbr;
      snap.mask[e.slot] = 1;
      snap.delta[e.slot] = static_cast<double>(t - e.ts);
      snap.feat_idx[e.slot] = e.edge_feat;
    }
    std::vector<NodeId> nbr_nodes(snap.nbr_ids.begin(), snap.nbr_ids.end());
    Var self_rows = sv.rows_for({u});
    Var nbr_rows = snap.total() > 0
                       ? sv.rows_for(nbr_nodes)
                       : tape.input(Tensor<R>(0, cfg_.dims.d_status), false);
    Var z = embed_batch(tape, mv, cfg_.dims, self_rows, nbr_rows, snap,
                        stream_.features);
    return tape.value(z);
  }

  void flush_pending() {
    if (pending_.empty()) return;
    Tape<R> tape;
    ModelVars<R> mv = register_params(tape, model_, false);
    StateView<R> sv(tape, state_);
    for (const auto& batch : pending_) {
      for (const PendingEvent& p : batch) {
        process_event_on_tape(tape, mv, cfg_.dims, sv, p.u, p.v, p.delta_u,
                              p.delta_v, feat_row(p.feat_idx));
      }
    }
    commit_overlay(tape, sv);
    pending_.clear();
  }

 private:
  struct PendingEvent {
    NodeId u, v;
    double delta_u, delta_v;
    std::int64_t feat_idx;
  };

  static TrainConfig finalize(TrainConfig cfg, const EventStream& stream) {
    cfg.validate();
    cfg.dims.edge_dim = stream.features.dim;
    if (stream.num_classes > 1) cfg.dims.classes = stream.num_classes;
    cfg.sampler.validate();
    return cfg;
  }

  Timestamp first_ts() const {
    return stream_.links.empty() ? 0 : stream_.links.front().ts;
  }

  std::vector<NodeId> node_pool(const std::vector<EventIdx>& view) const {
    std::unordered_set<NodeId> seen;
    for (EventIdx i : view) {
      seen.insert(stream_.links[i].src);
      seen.insert(stream_.links[i].dst);
    }
    std::vector<NodeId> pool(seen.begin(), seen.end());
    std::sort(pool.begin(), pool.end());
    return pool;
  }

  std::vector<NodeId> all_nodes() const {
    std::vector<NodeId> pool(stream_.num_nodes);
    for (NodeId i = 0; i < stream_.num_nodes; ++i) pool[i] = i;
    return pool;
  }

  NodeId draw_negative(const std::vector<NodeId>& pool, NodeId positive,
                       EventIdx event, std::uint64_t salt) const {
    for (std::uint64_t attempt = 0;; ++attempt) {
      const std::uint64_t r = counter_u64(cfg_.seed, salt,
                                          static_cast<std::uint64_t>(event),
                                          attempt);
      NodeId cand = pool[r % pool.size()];
      if (cand != positive || pool.size() == 1) return cand;
    }
  }

  const float* feat_row(std::int64_t idx) const {
    return idx >= 0 ? stream_.features.row(idx) : nullptr;
  }

  // Embeds a list of nodes at given times from the current table/state.
  Var embed_nodes(Tape<R>& tape, const ModelVars<R>& mv, StateView<R>& sv,
                  const std::vector<NodeId>& nodes,
                  const std::vector<Timestamp>& times, bool train = false) {
    SnapshotBatch snap = build_snapshot_batch(table_, nodes, times);
    Var self_rows = sv.rows_for(nodes);
    Var nbr_rows;
    if (snap.total() > 0) {
      std::vector<NodeId> nbr_nodes(snap.nbr_ids.begin(), snap.nbr_ids.end());
      nbr_rows = sv.rows_for(nbr_nodes);
    } else {
      nbr_rows = tape.input(Tensor<R>(0, cfg_.dims.d_status), false);
    }
    EmbedOptions<R> opt;
    opt.train = train;
    opt.dropout = cfg_.dropout;
    opt.drop_key = counter_u64(cfg_.seed, 0x64726f70ULL, drop_counter_++);
    return embed_batch(tape, mv, cfg_.dims, self_rows, nbr_rows, snap,
                       stream_.features, opt);
  }

  void commit_overlay(Tape<R>& tape, StateView<R>& sv) {
    for (const auto& [node, var] : sv.overlay()) {
      const Tensor<R>& row = tape.value(var);
      for (std::int64_t j = 0; j < state_.status.cols; ++j) {
        state_.status.at(node, j) = row[j];
      }
    }
  }

  // Applies events to the status store immediately (no learning).
  void apply_events(const std::vector<EventIdx>& idx) {
    if (idx.empty()) return;
    Tape<R> tape;
    ModelVars<R> mv = register_params(tape, model_, false);
    StateView<R> sv(tape, state_);
    for (EventIdx i : idx) {
      const TemporalLink& l = stream_.links[i];
      const double du = static_cast<double>(l.ts - state_.last_time[l.src]);
      state_.last_time[l.src] = l.ts;
      const double dv = static_cast<double>(l.ts - state_.last_time[l.dst]);
      state_.last_time[l.dst] = l.ts;
      process_event_on_tape(tape, mv, cfg_.dims, sv, l.src, l.dst, du, dv,
                            feat_row(l.edge_feat));
    }
    commit_overlay(tape, sv);
  }

  double train_batch(const EventIdx* events, std::size_t count,
                     const std::vector<NodeId>& pool) {
    Tape<R> tape;
    ModelVars<R> mv = register_params(tape, model_, true);
    StateView<R> sv(tape, state_);

    // Re-derive the trailing batches' status updates on this tape so the
    // recurrent cell receives gradients through the current predictions
    // (truncated backprop over cfg.bptt_batches batches). When the window is
    // full, the oldest batch's rows get committed to the buffer after the
    // step; capture them right after that batch is replayed.
    const bool window_full =
        pending_.size() >= static_cast<std::size_t>(cfg_.bptt_batches);
    std::unordered_map<NodeId, Var> to_commit;
    for (std::size_t b = 0; b < pending_.size(); ++b) {
      for (const PendingEvent& p : pending_[b]) {
        process_event_on_tape(tape, mv, cfg_.dims, sv, p.u, p.v, p.delta_u,
                              p.delta_v, feat_row(p.feat_idx));
      }
      if (b == 0 && window_full) to_commit = sv.overlay();
    }

    std::vector<NodeId> src(count), dst(count), neg(count);
    std::vector<Timestamp> times(count);
    for (std::size_t i = 0; i < count; ++i) {
      const TemporalLink& l = stream_.links[events[i]];
      src[i] = l.src;
      dst[i] = l.dst;
      neg[i] = draw_negative(pool, l.dst, events[i], 0x747278ULL);
      times[i] = l.ts;
    }

    Var z_src = embed_nodes(tape, mv, sv, src, times, true);
    Var z_dst = embed_nodes(tape, mv, sv, dst, times, true);
    Var z_neg = embed_nodes(tape, mv, sv, neg, times, true);
    EmbedOptions<R> opt;
    opt.train = true;
    opt.dropout = cfg_.dropout;
    opt.drop_key = counter_u64(cfg_.seed, 0x64726f70ULL, drop_counter_++);
    Var pos_logits = link_logits(tape, mv, z_src, z_dst, opt);
    Var neg_logits = link_logits(tape, mv, z_src, z_neg, opt);
    Var logits = tape.concat_rows({pos_logits, neg_logits});
    Tensor<R> targets(2 * static_cast<std::int64_t>(count), 1);
    for (std::size_t i = 0; i < count; ++i) targets[i] = R(1);
    Var loss = tape.bce_with_logits(logits, std::move(targets));

    const double loss_value = static_cast<double>(tape.value(loss)[0]);
    if (!std::isfinite(loss_value)) {
      throw std::runtime_error(
          "non-finite training loss at event " +
          std::to_string(events[0]) + " (batch of " + std::to_string(count) +
          ")");
    }

    tape.backward(loss);
    std::vector<Tensor<R>> grads;
    grads.reserve(model_.params.count());
    if (lr_scales_.empty()) {
      for (const auto& e : model_.params.entries()) {
        lr_scales_.push_back(e.name == "tenc.omega" ? cfg_.omega_lr_scale
                                                    : 1.0);
      }
    }
    for (const auto& e : model_.params.entries()) {
      grads.push_back(tape.grad(mv[e.name]));
    }
    if (cfg_.grad_clip > 0.0) {
      double norm_sq = 0.0;
      for (const auto& g : grads) {
        for (const R& x : g.v) {
          norm_sq += static_cast<double>(x) * static_cast<double>(x);
        }
      }
      const double norm = std::sqrt(norm_sq);
      if (norm > cfg_.grad_clip) {
        const R scale = static_cast<R>(cfg_.grad_clip / norm);
        for (auto& g : grads) {
          for (R& x : g.v) x *= scale;
        }
      }
    }
    ++step_count_;
    if (cfg_.warmup_steps > 0 && step_count_ <= cfg_.warmup_steps) {
      adam_.set_lr(epoch_lr_ * static_cast<double>(step_count_) /
                   static_cast<double>(cfg_.warmup_steps));
    }
    adam_.step(model_.params, grads, lr_scales_);

    // Advance the buffer past the oldest pending batch, then defer this
    // batch's status updates.
    if (window_full) {
      for (const auto& [node, var] : to_commit) {
        const Tensor<R>& row = tape.value(var);
        for (std::int64_t j = 0; j < state_.status.cols; ++j) {
          state_.status.at(node, j) = row[j];
        }
      }
      pending_.pop_front();
    }
    std::vector<TemporalLink> batch_links;
    std::vector<PendingEvent> batch_pending;
    batch_links.reserve(count);
    batch_pending.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
      const TemporalLink& l = stream_.links[events[i]];
      batch_links.push_back(l);
      PendingEvent p;
      p.u = l.src;
      p.v = l.dst;
      p.delta_u = static_cast<double>(l.ts - state_.last_time[l.src]);
      state_.last_time[l.src] = l.ts;
      p.delta_v = static_cast<double>(l.ts - state_.last_time[l.dst]);
      state_.last_time[l.dst] = l.ts;
      p.feat_idx = l.edge_feat;
      batch_pending.push_back(p);
    }
    pending_.push_back(std::move(batch_pending));
    table_.batch_update(std::span<const TemporalLink>(batch_links),
                        cfg_.threads);
    return loss_value;
  }

  const EventStream& stream_;
  TrainConfig cfg_;
  NlbModel<R> model_;
  NeighborTable table_;
  StateStore<R> state_;
  Adam<R> adam_;
  std::deque<std::vector<PendingEvent>> pending_;
  std::vector<double> lr_scales_;
  double epoch_lr_ = 1e-4;
  std::int64_t step_count_ = 0;
  std::uint64_t drop_counter_ = 0;

  friend class TrainerProbe;
};

}  // namespace nlb
