#pragma once

#include <chrono>
#include <optional>

#include "nlb/train_eval.hpp"

namespace nlb {

struct PipelineResult {
  EvalReport link_report;
  std::vector<std::vector<double>> epoch_losses;
  std::optional<EvalReport> node_report;
  std::string dataset_hash;
  std::int64_t masked_nodes = 0;
  std::int64_t dropped_labels = 0;
};

// Trains the node-classification head on train-split label embeddings and
// scores the test split: AUC for two classes, micro-F1 otherwise.
template <class R>
EvalReport evaluate_nodes(Trainer<R>& trainer, const EventStream& stream,
                          const SplitView& split, std::int64_t* dropped_out) {
  const TrainConfig& cfg = trainer.config();
  LabelAssignmentResult assigned = assign_labels_to_links(stream);
  if (dropped_out) *dropped_out = assigned.dropped;

  trainer.reset_runtime();
  std::vector<Tensor<R>> rows =
      trainer.collect_label_embeddings(assigned.assignments);

  std::vector<std::int64_t> train_idx, test_idx;
  for (std::size_t i = 0; i < assigned.assignments.size(); ++i) {
    const EventIdx e = assigned.assignments[i].event_idx;
    if (e < split.train_end) train_idx.push_back(i);
    else if (e >= split.val_end) test_idx.push_back(i);
  }
  std::unordered_set<int> train_classes;
  for (std::int64_t i : train_idx) {
    train_classes.insert(assigned.assignments[i].label);
  }
  if (train_classes.size() < 2) {
    throw std::invalid_argument(
        "node task needs at least 2 classes in the training labels");
  }
  if (test_idx.empty()) {
    throw std::invalid_argument("node task has no test-split labels");
  }

  const ModelDims& dims = trainer.config().dims;
  auto stack = [&](const std::vector<std::int64_t>& idx) {
    Tensor<R> m(static_cast<std::int64_t>(idx.size()), dims.d_out);
    std::vector<int> labels(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      for (std::int64_t j = 0; j < dims.d_out; ++j) {
        m.at(i, j) = rows[idx[i]][j];
      }
      labels[i] = assigned.assignments[idx[i]].label;
    }
    return std::pair{std::move(m), std::move(labels)};
  };
  auto [train_m, train_labels] = stack(train_idx);
  auto [test_m, test_labels] = stack(test_idx);

  // Fresh head, trained full-batch on the frozen embeddings.
  ParamStore<R> head;
  head.add("node.1.w", glorot<R>(dims.d_out, dims.d_hidden, cfg.seed, 0x70));
  head.add("node.1.b", Tensor<R>(1, dims.d_hidden));
  head.add("node.2.w", glorot<R>(dims.d_hidden, dims.classes, cfg.seed, 0x71));
  head.add("node.2.b", Tensor<R>(1, dims.classes));
  Adam<R> opt(cfg.node_head_lr);
  for (int step = 0; step < cfg.node_head_steps; ++step) {
    Tape<R> tape;
    typename Tape<R>::Var w1 = tape.input(head["node.1.w"], true);
    typename Tape<R>::Var b1 = tape.input(head["node.1.b"], true);
    typename Tape<R>::Var w2 = tape.input(head["node.2.w"], true);
    typename Tape<R>::Var b2 = tape.input(head["node.2.b"], true);
    typename Tape<R>::Var x = tape.input(train_m, false);
    typename Tape<R>::Var hidden =
        tape.relu(tape.add(tape.matmul(x, w1), b1));
    typename Tape<R>::Var logits = tape.add(tape.matmul(hidden, w2), b2);
    typename Tape<R>::Var loss = tape.softmax_ce(logits, train_labels);
    tape.backward(loss);
    opt.step(head, {tape.grad(w1), tape.grad(b1), tape.grad(w2), tape.grad(b2)});
  }
  // Keep the trained head in the model checkpoint.
  trainer.model().params["node.1.w"] = head["node.1.w"];
  trainer.model().params["node.1.b"] = head["node.1.b"];
  trainer.model().params["node.2.w"] = head["node.2.w"];
  trainer.model().params["node.2.b"] = head["node.2.b"];

  Tape<R> tape;
  typename Tape<R>::Var x = tape.input(test_m, false);
  typename Tape<R>::Var hidden = tape.relu(
      tape.add(tape.matmul(x, tape.input(head["node.1.w"], false)),
               tape.input(head["node.1.b"], false)));
  typename Tape<R>::Var logits =
      tape.add(tape.matmul(hidden, tape.input(head["node.2.w"], false)),
               tape.input(head["node.2.b"], false));
  typename Tape<R>::Var probs = tape.softmax_rows(logits);
  const Tensor<R>& p = tape.value(probs);

  EvalReport report;
  report.positives = static_cast<std::int64_t>(test_idx.size());
  if (dims.classes == 2) {
    std::vector<double> scores(test_labels.size());
    for (std::size_t i = 0; i < test_labels.size(); ++i) {
      scores[i] = static_cast<double>(p.at(i, 1));
    }
    report.auc = auc_score(scores, test_labels);
    report.f1 = report.auc;  // headline metric for the two-class task
  } else {
    std::vector<int> pred(test_labels.size());
    for (std::size_t i = 0; i < test_labels.size(); ++i) {
      int best = 0;
      for (std::int64_t c = 1; c < dims.classes; ++c) {
        if (p.at(i, c) > p.at(i, best)) best = static_cast<int>(c);
      }
      pred[i] = best;
    }
    report.f1 = f1_micro(pred, test_labels);
  }
  return report;
}

// Full self-supervised pipeline: chronological split, optional inductive
// masking, epoch training over the (possibly filtered) train view, forward
// replay to the test boundary, then streaming test evaluation.
template <class R>
PipelineResult run_link_pipeline(const EventStream& stream, TrainConfig cfg,
                                 bool inductive, bool node_task = false,
                                 ParamStore<R>* trained_params = nullptr) {
  using Clock = std::chrono::steady_clock;
  PipelineResult result;
  result.dataset_hash = stream.content_hash();

  SplitView split = chronological_split(stream);
  if (inductive) {
    split = inductive_mask(stream, split, cfg.inductive_p, cfg.seed);
    result.masked_nodes = static_cast<std::int64_t>(split.masked_nodes.size());
  }

  Trainer<R> trainer(stream, cfg);
  double epoch_seconds = 0.0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    trainer.reset_runtime();
    trainer.set_lr(cfg.lr * std::pow(cfg.lr_decay, epoch));
    const auto t0 = Clock::now();
    result.epoch_losses.push_back(trainer.train_epoch(split.inductive_train));
    epoch_seconds += std::chrono::duration<double>(Clock::now() - t0).count();
  }

  if (inductive) {
    // Forward-sampling replay over the full unmasked train+val stream before
    // touching the test split; no parameter updates happen here.
    trainer.reset_runtime();
    trainer.replay_forward(0, split.val_end);
  } else {
    trainer.flush_pending();
    trainer.replay_forward(split.train_end, split.val_end);
  }

  result.link_report = trainer.evaluate_links(split.val_end, split.total);
  result.link_report.train_epoch_seconds =
      cfg.epochs > 0 ? epoch_seconds / cfg.epochs : 0.0;

  if (node_task) {
    result.node_report =
        evaluate_nodes(trainer, stream, split, &result.dropped_labels);
  }
  if (trained_params) *trained_params = trainer.model().params;
  return result;
}

enum class SweepAxis { kAlpha, kSlots };

struct SweepRow {
  double value = 0.0;
  EvalReport report;
};

template <class R>
std::vector<SweepRow> run_sweep(const EventStream& stream,
                                const TrainConfig& base, SweepAxis axis,
                                const std::vector<double>& values,
                                bool inductive = false) {
  if (values.empty()) throw std::invalid_argument("sweep needs values");
  std::vector<SweepRow> rows;
  for (double v : values) {
    TrainConfig cfg = base;  // shared seed: only the swept knob differs
    if (axis == SweepAxis::kAlpha) {
      cfg.sampler.alpha = v;
    } else {
      cfg.sampler.slots = static_cast<std::int64_t>(v);
    }
    PipelineResult r = run_link_pipeline<R>(stream, cfg, inductive);
    rows.push_back({v, r.link_report});
  }
  return rows;
}

}  // namespace nlb
