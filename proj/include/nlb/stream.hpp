#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "nlb/common.hpp"

namespace nlb {

// Dense per-link feature rows. dim == 0 models featureless datasets; rows
// are stored flat, one row per link that carries a feature.
struct EdgeFeatureStore {
  int dim = 0;
  std::vector<float> rows;  // row_count() x dim, row-major

  std::int64_t row_count() const {
    return dim == 0 ? 0 : static_cast<std::int64_t>(rows.size()) / dim;
  }
  const float* row(std::int64_t i) const { return rows.data() + i * dim; }
};

struct NodeLabelEvent {
  NodeId node = 0;
  Timestamp ts = 0;
  int label = 0;
};

// An ingested dataset: chronologically ordered links plus side stores.
// Node ids are densified to 0..num_nodes-1; raw_ids maps back to the input.
struct EventStream {
  std::vector<TemporalLink> links;
  EdgeFeatureStore features;
  std::vector<NodeLabelEvent> labels;
  NodeId num_nodes = 0;
  int num_classes = 0;
  std::vector<std::int64_t> raw_ids;  // dense id -> raw id

  std::int64_t size() const { return static_cast<std::int64_t>(links.size()); }
  // SHA-1 over the packed (src, dst, ts) records; recorded in reports.
  std::string content_hash() const;
};

struct CsvSchema {
  bool has_header = false;  // auto-detected when the first line is not numeric
  double ts_scale = 1.0;    // fractional timestamps are scaled then truncated
  bool with_labels = true;  // treat column 4 as the source node's label
};

// Parses rows `src,dst,ts,label,f1,...,fk`. Enforces non-decreasing
// timestamps and rectangular feature rows; throws std::runtime_error with
// the offending line number otherwise.
EventStream ingest_csv(const std::string& path, const CsvSchema& schema = {});

// Emits the stream in the same CSV dialect ingest_csv reads.
void write_csv(const EventStream& stream, const std::string& path);

// Little-endian binary cache for fast re-runs.
void save_cache(const EventStream& stream, const std::string& path);
EventStream load_cache(const std::string& path);

// Two-column `raw_id,dense_id` CSV persisted beside the dataset.
void save_id_map(const EventStream& stream, const std::string& path);

// Chronological split boundaries as event index ranges:
// train = [0, train_end), val = [train_end, val_end), test = [val_end, n).
struct SplitView {
  std::int64_t train_end = 0;
  std::int64_t val_end = 0;
  std::int64_t total = 0;

  // Inductive masking state; empty when no mask was applied.
  std::unordered_set<NodeId> masked_nodes;
  // Train event indices with no masked endpoint (equals [0, train_end) when
  // no mask was applied).
  std::vector<EventIdx> inductive_train;
};

// Boundaries at floor(r1*n) and floor((r1+r2)*n). A non-empty stream always
// yields a non-empty training range, so n=1 degenerates to train={0}.
SplitView chronological_split(const EventStream& stream, double train_ratio = 0.70,
                              double val_ratio = 0.15);

// Masks each unique node appearing in val/test independently with
// probability p (keyed on (seed, node), so the mask is reproducible) and
// filters masked endpoints out of the inductive training view.
SplitView inductive_mask(const EventStream& stream, const SplitView& split,
                         double p, std::uint64_t seed);

// One node label resolved onto a link event. side: 0 = src slot, 1 = dst.
struct LabelAssignment {
  EventIdx event_idx = 0;
  int side = 0;
  int label = 0;
  Timestamp label_ts = 0;
};

struct LabelAssignmentResult {
  std::vector<LabelAssignment> assignments;  // ordered by (event_idx, label_ts)
  std::int64_t dropped = 0;                  // labels with no subsequent link
};

// Attaches each label event to the node's first link with link.ts >= label.ts.
LabelAssignmentResult assign_labels_to_links(const EventStream& stream);

}  // namespace nlb
