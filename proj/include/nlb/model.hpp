#pragma once

#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

#include "nlb/nn.hpp"
#include "nlb/sampler_forward.hpp"
#include "nlb/stream.hpp"
#include "nlb/tape.hpp"

namespace nlb {

struct ModelDims {
  std::int64_t d_status = 64;  // per-node status vector
  std::int64_t d_time = 64;    // frequency count; encoding emits 2*d_time
  std::int64_t d_msg = 64;     // per-neighbor message width
  std::int64_t d_hidden = 64;  // hidden width of all MLPs
  std::int64_t d_out = 64;     // node representation width
  std::int64_t edge_dim = 0;
  std::int64_t classes = 2;
  int heads = 2;

  std::int64_t gru_input() const {
    return 2 * d_status + 2 * d_time + edge_dim;
  }
  std::int64_t msg_input() const { return d_status + edge_dim + 2 * d_time; }
};

// Encoder parameters: learnable time-encoding frequencies, the status GRU,
// the attention aggregator and the two prediction heads. Construction order
// fixes the checkpoint blob layout.
template <class R>
struct NlbModel {
  ModelDims dims;
  ParamStore<R> params;

  NlbModel(ModelDims d, std::uint64_t seed) : dims(d) {
    // Frequencies geometrically spaced in [1e-5, 1] over dataset time units.
    Tensor<R> omega(1, d.d_time);
    for (std::int64_t i = 0; i < d.d_time; ++i) {
      const double frac =
          d.d_time > 1
              ? static_cast<double>(i) / static_cast<double>(d.d_time - 1)
              : 1.0;
      omega[i] = static_cast<R>(std::pow(10.0, -5.0 * (1.0 - frac)));
    }
    params.add("tenc.omega", std::move(omega));

    auto lin = [&](const std::string& name, std::int64_t in, std::int64_t out,
                   std::uint64_t salt) {
      params.add(name + ".w", glorot<R>(in, out, seed, salt));
      params.add(name + ".b", Tensor<R>(1, out));
    };
    const std::int64_t gin = d.gru_input();
    lin("gru.z", gin, d.d_status, 0x10);
    params.add("gru.z.u", glorot<R>(d.d_status, d.d_status, seed, 0x11));
    lin("gru.r", gin, d.d_status, 0x12);
    params.add("gru.r.u", glorot<R>(d.d_status, d.d_status, seed, 0x13));
    lin("gru.h", gin, d.d_status, 0x14);
    params.add("gru.h.u", glorot<R>(d.d_status, d.d_status, seed, 0x15));

    lin("msg.1", d.msg_input(), d.d_hidden, 0x20);
    lin("msg.2", d.d_hidden, d.d_msg, 0x21);
    for (int h = 0; h < d.heads; ++h) {
      params.add("attn.w" + std::to_string(h),
                 glorot<R>(d.d_msg, 1, seed, 0x30 + h));
    }
    lin("out.1", d.d_status + d.heads * d.d_msg, d.d_hidden, 0x40);
    lin("out.2", d.d_hidden, d.d_out, 0x41);
    lin("link.1", 2 * d.d_out, d.d_hidden, 0x50);
    lin("link.2", d.d_hidden, 1, 0x51);
    lin("node.1", d.d_out, d.d_hidden, 0x60);
    lin("node.2", d.d_hidden, d.classes, 0x61);
  }
};

// Model checkpoint: a fixed-size header (dims, key scheme, alpha, s, seed)
// followed by the parameter blob.
template <class R>
void save_model_checkpoint(const std::string& path, const NlbModel<R>& model,
                           const SamplerConfig& scfg) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  auto put = [&](const auto& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
  };
  const std::uint64_t magic = 0x4e4c42434b5054ULL;  // "NLBCKPT"
  put(magic);
  put(model.dims.d_status);
  put(model.dims.d_time);
  put(model.dims.d_msg);
  put(model.dims.d_hidden);
  put(model.dims.d_out);
  put(model.dims.edge_dim);
  put(model.dims.classes);
  std::int32_t heads = model.dims.heads;
  put(heads);
  std::int32_t scheme = static_cast<std::int32_t>(scfg.scheme);
  put(scheme);
  put(scfg.alpha);
  put(scfg.slots);
  put(scfg.q1);
  put(scfg.q2);
  put(scfg.seed);
  model.params.save_blob(out);
}

template <class R>
NlbModel<R> load_model_checkpoint(const std::string& path,
                                  SamplerConfig* scfg_out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  auto get = [&](auto& v) {
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!in) throw std::runtime_error(path + ": truncated model checkpoint");
  };
  std::uint64_t magic;
  get(magic);
  if (magic != 0x4e4c42434b5054ULL) {
    throw std::runtime_error(path + ": not a model checkpoint");
  }
  ModelDims dims;
  get(dims.d_status);
  get(dims.d_time);
  get(dims.d_msg);
  get(dims.d_hidden);
  get(dims.d_out);
  get(dims.edge_dim);
  get(dims.classes);
  std::int32_t heads, scheme;
  get(heads);
  dims.heads = heads;
  SamplerConfig scfg;
  get(scheme);
  scfg.scheme = static_cast<KeyScheme>(scheme);
  get(scfg.alpha);
  get(scfg.slots);
  get(scfg.q1);
  get(scfg.q2);
  get(scfg.seed);
  if (scfg_out) *scfg_out = scfg;
  NlbModel<R> model(dims, scfg.seed);
  model.params.load_blob(in);
  return model;
}

// Handles to the parameters registered on a tape for one forward pass.
template <class R>
struct ModelVars {
  using Var = typename Tape<R>::Var;
  std::unordered_map<std::string, Var> vars;
  Var operator[](const std::string& name) const { return vars.at(name); }
};

template <class R>
ModelVars<R> register_params(Tape<R>& tape, const NlbModel<R>& model,
                             bool needs_grad) {
  ModelVars<R> mv;
  for (const auto& e : model.params.entries()) {
    mv.vars[e.name] = tape.input(e.value, needs_grad);
  }
  return mv;
}

// Interleaved Fourier features [cos(w1 t), sin(w1 t), ..., cos(wd t), sin(wd t)].
template <class R>
typename Tape<R>::Var time_encode(Tape<R>& tape, const ModelVars<R>& mv,
                                  typename Tape<R>::Var delta_col) {
  auto phase = tape.matmul(delta_col, mv["tenc.omega"]);
  return tape.interleave_cols(tape.cos_op(phase), tape.sin_op(phase));
}

// One GRU step over row-stacked inputs; h and the result are B x d_status.
template <class R>
typename Tape<R>::Var gru_rows(Tape<R>& tape, const ModelVars<R>& mv,
                               typename Tape<R>::Var x,
                               typename Tape<R>::Var h) {
  auto gate = [&](const char* w, const char* u, const char* b,
                  typename Tape<R>::Var hh) {
    return tape.add(tape.add(tape.matmul(x, mv[w]), tape.matmul(hh, mv[u])),
                    mv[b]);
  };
  auto z = tape.sigmoid(gate("gru.z.w", "gru.z.u", "gru.z.b", h));
  auto r = tape.sigmoid(gate("gru.r.w", "gru.r.u", "gru.r.b", h));
  auto rh = tape.mul(r, h);
  auto cand = tape.tanh_op(
      tape.add(tape.add(tape.matmul(x, mv["gru.h.w"]), tape.matmul(rh, mv["gru.h.u"])),
               mv["gru.h.b"]));
  // h' = (1 - z) * h + z * cand
  auto keep = tape.mul(tape.affine(z, R(-1), R(1)), h);
  return tape.add(keep, tape.mul(z, cand));
}

// Slot-major snapshot data for a batch of queries: s entries per query, empty
// slots masked out. Plain numbers; status rows are wired in by the caller.
struct SnapshotBatch {
  std::int64_t batch = 0;
  std::int64_t slots = 0;
  std::vector<std::int64_t> nbr_ids;  // batch*slots, 0 where empty
  std::vector<std::uint8_t> mask;     // batch*slots
  std::vector<double> delta;          // query time - entry time, 0 where empty
  std::vector<std::int64_t> feat_idx; // feature row or -1

  std::int64_t total() const { return batch * slots; }
};

inline SnapshotBatch build_snapshot_batch(const NeighborTable& table,
                                          const std::vector<NodeId>& nodes,
                                          const std::vector<Timestamp>& times) {
  SnapshotBatch out;
  out.batch = static_cast<std::int64_t>(nodes.size());
  out.slots = table.config().slots;
  out.nbr_ids.assign(out.total(), 0);
  out.mask.assign(out.total(), 0);
  out.delta.assign(out.total(), 0.0);
  out.feat_idx.assign(out.total(), -1);
  for (std::int64_t b = 0; b < out.batch; ++b) {
    const NeighborSlot* row = out.slots > 0 ? table.row(nodes[b]) : nullptr;
    for (std::int64_t j = 0; j < out.slots; ++j) {
      if (!row[j].occupied()) continue;
      const std::int64_t k = b * out.slots + j;
      out.nbr_ids[k] = row[j].nbr;
      out.mask[k] = 1;
      out.delta[k] = static_cast<double>(times[b] - row[j].ts);
      out.feat_idx[k] = row[j].edge_feat;
    }
  }
  return out;
}

// Dropout keys: one salt per dropout site, combined with the caller's key.
enum class DropSite : std::uint64_t { kMsg = 1, kOut = 2, kLink = 3, kNode = 4 };

template <class R>
struct EmbedOptions {
  bool train = false;
  double dropout = 0.0;
  std::uint64_t drop_key = 0;
};

// Attention aggregation over snapshot entries, then the outer MLP. self_rows
// is B x d_status; nbr_rows is (B*s) x d_status aligned with `snap`. An empty
// snapshot contributes a zero vector through the masked softmax.
template <class R>
typename Tape<R>::Var embed_batch(Tape<R>& tape, const ModelVars<R>& mv,
                                  const ModelDims& dims,
                                  typename Tape<R>::Var self_rows,
                                  typename Tape<R>::Var nbr_rows,
                                  const SnapshotBatch& snap,
                                  const EdgeFeatureStore& features,
                                  const EmbedOptions<R>& opt = {}) {
  using Var = typename Tape<R>::Var;
  const std::int64_t B = snap.batch;
  Var pooled;
  if (snap.total() == 0) {
    pooled = tape.input(Tensor<R>(B, dims.heads * dims.d_msg), false);
  } else {
    Tensor<R> delta(snap.total(), 1);
    for (std::int64_t i = 0; i < snap.total(); ++i) {
      delta[i] = static_cast<R>(snap.delta[i]);
    }
    Var tenc = time_encode(tape, mv, tape.input(std::move(delta), false));
    std::vector<Var> parts;
    parts.push_back(nbr_rows);
    if (dims.edge_dim > 0) {
      Tensor<R> feat(snap.total(), dims.edge_dim);
      for (std::int64_t i = 0; i < snap.total(); ++i) {
        if (snap.feat_idx[i] < 0) continue;
        const float* row = features.row(snap.feat_idx[i]);
        for (std::int64_t j = 0; j < dims.edge_dim; ++j) {
          feat.at(i, j) = static_cast<R>(row[j]);
        }
      }
      parts.push_back(tape.input(std::move(feat), false));
    }
    parts.push_back(tenc);
    Var msg_in = tape.concat_cols(std::span<const Var>(parts));
    Var hidden = tape.relu(
        tape.add(tape.matmul(msg_in, mv["msg.1.w"]), mv["msg.1.b"]));
    hidden = tape.dropout(hidden, opt.dropout,
                          counter_u64(opt.drop_key,
                                      static_cast<std::uint64_t>(DropSite::kMsg)),
                          opt.train);
    Var messages =
        tape.add(tape.matmul(hidden, mv["msg.2.w"]), mv["msg.2.b"]);

    std::vector<Var> head_pools;
    for (int h = 0; h < dims.heads; ++h) {
      Var logits = tape.matmul(messages, mv["attn.w" + std::to_string(h)]);
      Var weights = tape.masked_softmax_rows(
          tape.reshape(logits, B, snap.slots), snap.mask);
      head_pools.push_back(tape.slot_weighted_sum(messages, weights));
    }
    pooled = dims.heads == 1 ? head_pools[0]
                             : tape.concat_cols(std::span<const Var>(head_pools));
  }
  Var out_in = tape.concat_cols({self_rows, pooled});
  Var hidden = tape.relu(
      tape.add(tape.matmul(out_in, mv["out.1.w"]), mv["out.1.b"]));
  hidden = tape.dropout(hidden, opt.dropout,
                        counter_u64(opt.drop_key,
                                    static_cast<std::uint64_t>(DropSite::kOut)),
                        opt.train);
  return tape.add(tape.matmul(hidden, mv["out.2.w"]), mv["out.2.b"]);
}

// Link head: one hidden ReLU layer over concat(z_u, z_v) to a single logit.
// Note the concat order makes this inherently asymmetric in (u, v).
template <class R>
typename Tape<R>::Var link_logits(Tape<R>& tape, const ModelVars<R>& mv,
                                  typename Tape<R>::Var z_u,
                                  typename Tape<R>::Var z_v,
                                  const EmbedOptions<R>& opt = {}) {
  auto joint = tape.concat_cols({z_u, z_v});
  auto hidden = tape.relu(
      tape.add(tape.matmul(joint, mv["link.1.w"]), mv["link.1.b"]));
  hidden = tape.dropout(hidden, opt.dropout,
                        counter_u64(opt.drop_key,
                                    static_cast<std::uint64_t>(DropSite::kLink)),
                        opt.train);
  return tape.add(tape.matmul(hidden, mv["link.2.w"]), mv["link.2.b"]);
}

template <class R>
typename Tape<R>::Var node_logits(Tape<R>& tape, const ModelVars<R>& mv,
                                  typename Tape<R>::Var z,
                                  const EmbedOptions<R>& opt = {}) {
  auto hidden = tape.relu(
      tape.add(tape.matmul(z, mv["node.1.w"]), mv["node.1.b"]));
  hidden = tape.dropout(hidden, opt.dropout,
                        counter_u64(opt.drop_key,
                                    static_cast<std::uint64_t>(DropSite::kNode)),
                        opt.train);
  return tape.add(tape.matmul(hidden, mv["node.2.w"]), mv["node.2.b"]);
}

// Numeric per-node status store. Rows start at zero; the elapsed-time input
// is measured from the node's previous event, initialized to the stream's
// first timestamp.
template <class R>
struct StateStore {
  Tensor<R> status;
  std::vector<Timestamp> last_time;

  StateStore(NodeId num_nodes, std::int64_t d_status, Timestamp first_ts)
      : status(num_nodes, d_status), last_time(num_nodes, first_ts) {}

  void reset(Timestamp first_ts) {
    for (R& x : status.v) x = R(0);
    last_time.assign(last_time.size(), first_ts);
  }
};

// Per-tape view of node status rows: overlay vars (already updated in-tape)
// shadow the numeric buffer.
template <class R>
class StateView {
 public:
  using Var = typename Tape<R>::Var;

  StateView(Tape<R>& tape, const StateStore<R>& store)
      : tape_(tape), store_(store) {}

  Var row(NodeId u) {
    auto it = overlay_.find(u);
    if (it != overlay_.end()) return it->second;
    auto cached = cache_.find(u);
    if (cached != cache_.end()) return cached->second;
    Tensor<R> r(1, store_.status.cols);
    for (std::int64_t j = 0; j < store_.status.cols; ++j) {
      r[j] = store_.status.at(u, j);
    }
    Var v = tape_.input(std::move(r), false);
    cache_.emplace(u, v);
    return v;
  }

  // B x d matrix of rows; one gather when no overlay is active.
  Var rows_for(const std::vector<NodeId>& ids) {
    if (overlay_.empty()) {
      if (!full_.valid()) full_ = tape_.input(store_.status, false);
      return tape_.gather_rows(full_, std::vector<std::int64_t>(ids.begin(),
                                                                ids.end()));
    }
    std::vector<Var> parts;
    parts.reserve(ids.size());
    for (NodeId u : ids) parts.push_back(row(u));
    return tape_.concat_rows(std::span<const Var>(parts));
  }

  void set_overlay(NodeId u, Var v) { overlay_[u] = v; }
  const std::unordered_map<NodeId, Var>& overlay() const { return overlay_; }

 private:
  Tape<R>& tape_;
  const StateStore<R>& store_;
  std::unordered_map<NodeId, Var> overlay_;
  std::unordered_map<NodeId, Var> cache_;
  Var full_{};
};

// One status update (both endpoints) expressed on the tape. Reads the
// pre-event rows of both endpoints, then overlays the new rows. deltas are
// the elapsed times since each endpoint's previous event.
template <class R>
void process_event_on_tape(Tape<R>& tape, const ModelVars<R>& mv,
                           const ModelDims& dims, StateView<R>& view,
                           NodeId u, NodeId v, double delta_u, double delta_v,
                           const float* feat_row) {
  using Var = typename Tape<R>::Var;
  Var h_u = view.row(u);
  Var h_v = view.row(v);
  auto build_x = [&](Var own, Var partner, double delta) {
    std::vector<Var> parts{own, partner};
    Tensor<R> d(1, 1);
    d[0] = static_cast<R>(delta);
    parts.push_back(time_encode(tape, mv, tape.input(std::move(d), false)));
    if (dims.edge_dim > 0) {
      Tensor<R> f(1, dims.edge_dim);
      if (feat_row) {
        for (std::int64_t j = 0; j < dims.edge_dim; ++j) {
          f[j] = static_cast<R>(feat_row[j]);
        }
      }
      parts.push_back(tape.input(std::move(f), false));
    }
    return tape.concat_cols(std::span<const Var>(parts));
  };
  Var new_u = gru_rows(tape, mv, build_x(h_u, h_v, delta_u), h_u);
  if (v == u) {
    view.set_overlay(u, new_u);
    return;
  }
  Var new_v = gru_rows(tape, mv, build_x(h_v, h_u, delta_v), h_v);
  view.set_overlay(u, new_u);
  view.set_overlay(v, new_v);
}

}  // namespace nlb
