#include "nlb/sampler_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace nlb {

namespace {

// Entries with ts < t form a prefix of the arrival-ordered list.
std::size_t causal_prefix(const std::vector<HistoryEntry>& list, Timestamp t) {
  auto it = std::lower_bound(
      list.begin(), list.end(), t,
      [](const HistoryEntry& e, Timestamp query) { return e.ts < query; });
  return static_cast<std::size_t>(it - list.begin());
}

}  // namespace

std::vector<HistoryEntry> sample_truncation(const HistoryStore& store, NodeId u,
                                            Timestamp t, std::int64_t s) {
  const auto& list = store.neighbors(u);
  std::size_t end = causal_prefix(list, t);
  std::size_t take = std::min<std::size_t>(end, s < 0 ? 0 : s);
  return {list.begin() + (end - take), list.begin() + end};
}

std::vector<HistoryEntry> sample_uniform(const HistoryStore& store, NodeId u,
                                         Timestamp t, std::int64_t s,
                                         StreamRng& rng) {
  const auto& list = store.neighbors(u);
  std::size_t end = causal_prefix(list, t);
  if (s <= 0 || end == 0) return {};
  std::size_t k = std::min<std::size_t>(end, s);
  // Reservoir scan (algorithm R): one pass, without replacement.
  std::vector<HistoryEntry> reservoir(list.begin(), list.begin() + k);
  for (std::size_t i = k; i < end; ++i) {
    std::uint64_t j = rng.next_below(i + 1);
    if (j < k) reservoir[j] = list[i];
  }
  return reservoir;
}

std::vector<HistoryEntry> sample_recent(const HistoryStore& store, NodeId u,
                                        Timestamp t, std::int64_t s, double c,
                                        StreamRng& rng) {
  if (c < 0) throw std::invalid_argument("sample_recent: c must be >= 0");
  const auto& list = store.neighbors(u);
  std::size_t end = causal_prefix(list, t);
  if (s <= 0 || end == 0) return {};
  std::size_t k = std::min<std::size_t>(end, s);

  // Exponential race: item i finishes at Exp(1)/w_i; the k earliest finishers
  // are a weighted sample without replacement. log key = log(e_i) - log w_i
  // with log w_i = c*(t_i - t), all additive, no exponentiation of c*dt.
  std::vector<std::pair<double, std::size_t>> keys(end);
  for (std::size_t i = 0; i < end; ++i) {
    double e = -std::log(1.0 - rng.next_u01());  // Exp(1), strictly positive
    double log_w = c * static_cast<double>(list[i].ts - t);
    keys[i] = {std::log(e) - log_w, i};
  }
  std::partial_sort(keys.begin(), keys.begin() + k, keys.end());
  std::vector<HistoryEntry> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.push_back(list[keys[i].second]);
  return out;
}

}  // namespace nlb
