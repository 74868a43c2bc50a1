#include "nlb/stream.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <unordered_map>

#include "nlb/rng.hpp"
#include "nlb/sha1.hpp"

namespace nlb {

namespace {

std::vector<std::string_view> split_fields(std::string_view line,
                                           std::vector<std::string_view>& out) {
  out.clear();
  std::size_t start = 0;
  while (true) {
    std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return out;
}

bool parse_i64(std::string_view s, std::int64_t& value) {
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  auto res = std::from_chars(begin, end, value);
  return res.ec == std::errc() && res.ptr == end;
}

bool parse_f64(std::string_view s, double& value) {
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  auto res = std::from_chars(begin, end, value);
  return res.ec == std::errc() && res.ptr == end;
}

[[noreturn]] void fail_line(const std::string& path, std::int64_t line_no,
                            const std::string& what) {
  throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + what);
}

template <class T>
void write_pod(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
void read_pod(std::ifstream& in, T& v) {
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("truncated cache file");
}

constexpr std::uint64_t kCacheMagic = 0x4e4c424341434845ULL;  // "NLBCACHE"

}  // namespace

std::string EventStream::content_hash() const {
  Sha1 h;
  for (const TemporalLink& l : links) {
    std::int64_t rec[3] = {l.src, l.dst, l.ts};
    h.update(rec, sizeof(rec));
  }
  return h.hex_digest();
}

EventStream ingest_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);

  EventStream stream;
  std::unordered_map<std::int64_t, NodeId> id_map;
  auto densify = [&](std::int64_t raw) {
    auto [it, inserted] = id_map.emplace(raw, stream.num_nodes);
    if (inserted) {
      stream.raw_ids.push_back(raw);
      ++stream.num_nodes;
    }
    return it->second;
  };

  std::string line;
  std::vector<std::string_view> fields;
  std::int64_t line_no = 0;
  int feat_dim = -1;
  Timestamp last_ts = 0;
  bool first_row = true;
  int max_label = -1;

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (first_row) {
      // JODIE-style files start with a `user_id,item_id,...` header line.
      std::int64_t probe;
      double probe_f;
      std::string_view head = split_fields(line, fields)[0];
      if (schema.has_header ||
          (!parse_i64(head, probe) && !parse_f64(head, probe_f))) {
        first_row = false;
        continue;
      }
    }
    first_row = false;

    split_fields(line, fields);
    if (fields.size() < 3) fail_line(path, line_no, "expected src,dst,ts");

    std::int64_t raw_src, raw_dst;
    if (!parse_i64(fields[0], raw_src) || !parse_i64(fields[1], raw_dst)) {
      fail_line(path, line_no, "unparseable node id");
    }
    if (raw_src < 0 || raw_dst < 0) fail_line(path, line_no, "negative node id");

    Timestamp ts;
    std::int64_t ts_i;
    double ts_f;
    if (parse_i64(fields[2], ts_i) && schema.ts_scale == 1.0) {
      ts = ts_i;
    } else if (parse_f64(fields[2], ts_f)) {
      ts = static_cast<Timestamp>(ts_f * schema.ts_scale);
    } else {
      fail_line(path, line_no, "unparseable timestamp");
    }
    if (!stream.links.empty() && ts < last_ts) {
      fail_line(path, line_no, "decreasing timestamp");
    }
    last_ts = ts;

    int k = static_cast<int>(fields.size()) - 4;
    if (fields.size() < 4) k = 0;
    if (feat_dim < 0) {
      feat_dim = k;
      stream.features.dim = k;
    } else if (k != feat_dim) {
      fail_line(path, line_no, "ragged feature row (expected " +
                                   std::to_string(feat_dim) + " values, got " +
                                   std::to_string(k) + ")");
    }

    TemporalLink link;
    link.src = densify(raw_src);
    link.dst = densify(raw_dst);
    link.ts = ts;
    link.event_idx = static_cast<EventIdx>(stream.links.size());
    if (feat_dim > 0) {
      link.edge_feat = stream.features.row_count();
      for (int i = 0; i < feat_dim; ++i) {
        double f;
        if (!parse_f64(fields[4 + i], f)) {
          fail_line(path, line_no, "unparseable feature value");
        }
        stream.features.rows.push_back(static_cast<float>(f));
      }
    }
    if (schema.with_labels && fields.size() >= 4) {
      std::int64_t label;
      if (!parse_i64(fields[3], label)) {
        fail_line(path, line_no, "unparseable label");
      }
      stream.labels.push_back(
          {link.src, ts, static_cast<int>(label)});
      max_label = std::max(max_label, static_cast<int>(label));
    }
    stream.links.push_back(link);
  }
  if (stream.links.empty()) throw std::runtime_error(path + ": empty stream");
  stream.num_classes = max_label + 1;
  return stream;
}

void write_csv(const EventStream& stream, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  char buf[64];
  // Labels were recorded per source row at ingest; re-emit them in place.
  std::size_t label_cursor = 0;
  for (const TemporalLink& l : stream.links) {
    out << l.src << ',' << l.dst << ',' << l.ts << ',';
    if (label_cursor < stream.labels.size() &&
        stream.labels[label_cursor].node == l.src &&
        stream.labels[label_cursor].ts == l.ts) {
      out << stream.labels[label_cursor].label;
      ++label_cursor;
    } else {
      out << 0;
    }
    if (l.edge_feat >= 0) {
      const float* row = stream.features.row(l.edge_feat);
      for (int i = 0; i < stream.features.dim; ++i) {
        std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(row[i]));
        out << ',' << buf;
      }
    }
    out << '\n';
  }
}

void save_cache(const EventStream& stream, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  write_pod(out, kCacheMagic);
  write_pod(out, static_cast<std::int64_t>(stream.links.size()));
  write_pod(out, stream.num_nodes);
  write_pod(out, static_cast<std::int64_t>(stream.features.dim));
  write_pod(out, static_cast<std::int64_t>(stream.labels.size()));
  write_pod(out, static_cast<std::int64_t>(stream.num_classes));
  for (const TemporalLink& l : stream.links) write_pod(out, l);
  out.write(reinterpret_cast<const char*>(stream.features.rows.data()),
            static_cast<std::streamsize>(stream.features.rows.size() *
                                         sizeof(float)));
  for (const NodeLabelEvent& e : stream.labels) write_pod(out, e);
  out.write(reinterpret_cast<const char*>(stream.raw_ids.data()),
            static_cast<std::streamsize>(stream.raw_ids.size() *
                                         sizeof(std::int64_t)));
}

EventStream load_cache(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::uint64_t magic;
  read_pod(in, magic);
  if (magic != kCacheMagic) throw std::runtime_error(path + ": not a cache file");
  std::int64_t n_links, feat_dim, n_labels, n_classes;
  EventStream stream;
  read_pod(in, n_links);
  read_pod(in, stream.num_nodes);
  read_pod(in, feat_dim);
  read_pod(in, n_labels);
  read_pod(in, n_classes);
  stream.num_classes = static_cast<int>(n_classes);
  stream.features.dim = static_cast<int>(feat_dim);
  stream.links.resize(n_links);
  for (auto& l : stream.links) read_pod(in, l);
  stream.features.rows.resize(n_links * feat_dim);
  if (feat_dim > 0) {
    in.read(reinterpret_cast<char*>(stream.features.rows.data()),
            static_cast<std::streamsize>(stream.features.rows.size() *
                                         sizeof(float)));
  }
  stream.labels.resize(n_labels);
  for (auto& e : stream.labels) read_pod(in, e);
  stream.raw_ids.resize(stream.num_nodes);
  in.read(reinterpret_cast<char*>(stream.raw_ids.data()),
          static_cast<std::streamsize>(stream.raw_ids.size() *
                                       sizeof(std::int64_t)));
  if (!in) throw std::runtime_error(path + ": truncated cache file");
  return stream;
}

void save_id_map(const EventStream& stream, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "raw_id,dense_id\n";
  for (NodeId dense = 0; dense < stream.num_nodes; ++dense) {
    out << stream.raw_ids[dense] << ',' << dense << '\n';
  }
}

SplitView chronological_split(const EventStream& stream, double train_ratio,
                              double val_ratio) {
  const std::int64_t n = stream.size();
  if (n == 0) throw std::invalid_argument("empty stream");
  SplitView view;
  view.total = n;
  view.train_end = static_cast<std::int64_t>(
      std::floor(train_ratio * static_cast<double>(n)));
  view.val_end = static_cast<std::int64_t>(
      std::floor((train_ratio + val_ratio) * static_cast<double>(n)));
  // A non-empty stream keeps at least one training event.
  if (view.train_end == 0) view.train_end = 1;
  if (view.val_end < view.train_end) view.val_end = view.train_end;
  view.inductive_train.resize(view.train_end);
  for (std::int64_t i = 0; i < view.train_end; ++i) view.inductive_train[i] = i;
  return view;
}

SplitView inductive_mask(const EventStream& stream, const SplitView& split,
                         double p, std::uint64_t seed) {
  SplitView view = split;
  view.masked_nodes.clear();
  std::unordered_set<NodeId> eval_nodes;
  for (std::int64_t i = split.train_end; i < split.total; ++i) {
    eval_nodes.insert(stream.links[i].src);
    eval_nodes.insert(stream.links[i].dst);
  }
  for (NodeId node : eval_nodes) {
    if (counter_u01(seed, 0x6d61736bULL, static_cast<std::uint64_t>(node)) < p) {
      view.masked_nodes.insert(node);
    }
  }
  view.inductive_train.clear();
  for (std::int64_t i = 0; i < split.train_end; ++i) {
    const TemporalLink& l = stream.links[i];
    if (view.masked_nodes.count(l.src) || view.masked_nodes.count(l.dst)) {
      continue;
    }
    view.inductive_train.push_back(i);
  }
  return view;
}

LabelAssignmentResult assign_labels_to_links(const EventStream& stream) {
  // Per-node list of incident link indices, in event order (hence ts order).
  std::unordered_map<NodeId, std::vector<EventIdx>> incident;
  for (const TemporalLink& l : stream.links) {
    incident[l.src].push_back(l.event_idx);
    if (l.dst != l.src) incident[l.dst].push_back(l.event_idx);
  }

  LabelAssignmentResult result;
  for (const NodeLabelEvent& label : stream.labels) {
    auto it = incident.find(label.node);
    if (it == incident.end()) {
      ++result.dropped;
      continue;
    }
    const std::vector<EventIdx>& events = it->second;
    auto pos = std::lower_bound(
        events.begin(), events.end(), label.ts,
        [&](EventIdx e, Timestamp t) { return stream.links[e].ts < t; });
    if (pos == events.end()) {
      ++result.dropped;
      continue;
    }
    const TemporalLink& link = stream.links[*pos];
    LabelAssignment a;
    a.event_idx = link.event_idx;
    a.side = (link.src == label.node) ? 0 : 1;
    a.label = label.label;
    a.label_ts = label.ts;
    result.assignments.push_back(a);
  }
  std::stable_sort(result.assignments.begin(), result.assignments.end(),
                   [](const LabelAssignment& a, const LabelAssignment& b) {
                     if (a.event_idx != b.event_idx)
                       return a.event_idx < b.event_idx;
                     return a.label_ts < b.label_ts;
                   });
  return result;
}

}  // namespace nlb
