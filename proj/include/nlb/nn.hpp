#pragma once

#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "nlb/rng.hpp"
#include "nlb/tape.hpp"
#include "nlb/tensor.hpp"

namespace nlb {

// Named parameter tensors with a stable order, serialized as a flat binary
// blob plus a name -> (offset, shape) index.
template <class R>
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor<R> value;
  };

  Tensor<R>& add(const std::string& name, Tensor<R> t) {
    if (index_.count(name)) throw std::invalid_argument("duplicate param " + name);
    index_[name] = entries_.size();
    entries_.push_back({name, std::move(t)});
    return entries_.back().value;
  }

  Tensor<R>& operator[](const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no param " + name);
    return entries_[it->second].value;
  }
  const Tensor<R>& operator[](const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no param " + name);
    return entries_[it->second].value;
  }

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t count() const { return entries_.size(); }
  std::int64_t total_size() const {
    std::int64_t n = 0;
    for (const Entry& e : entries_) n += e.value.size();
    return n;
  }

  void save_blob(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    save_blob(out);
  }

  void save_blob(std::ostream& out) const {
    const std::uint64_t magic = 0x4e4c42504152ULL;  // "NLBPAR"
    const std::uint32_t scalar_bytes = sizeof(R);
    const std::uint64_t n = entries_.size();
    out.write(reinterpret_cast<const char*>(&magic), sizeof(magic));
    out.write(reinterpret_cast<const char*>(&scalar_bytes), sizeof(scalar_bytes));
    out.write(reinterpret_cast<const char*>(&n), sizeof(n));
    std::int64_t offset = 0;
    for (const Entry& e : entries_) {
      std::uint32_t len = static_cast<std::uint32_t>(e.name.size());
      out.write(reinterpret_cast<const char*>(&len), sizeof(len));
      out.write(e.name.data(), len);
      out.write(reinterpret_cast<const char*>(&e.value.rows), sizeof(std::int64_t));
      out.write(reinterpret_cast<const char*>(&e.value.cols), sizeof(std::int64_t));
      out.write(reinterpret_cast<const char*>(&offset), sizeof(offset));
      offset += e.value.size();
    }
    for (const Entry& e : entries_) {
      out.write(reinterpret_cast<const char*>(e.value.data()),
                static_cast<std::streamsize>(e.value.size() * sizeof(R)));
    }
  }

  void load_blob(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    load_blob(in);
  }

  void load_blob(std::istream& in) {
    auto get = [&](auto& v) {
      in.read(reinterpret_cast<char*>(&v), sizeof(v));
      if (!in) throw std::runtime_error("truncated parameter checkpoint");
    };
    std::uint64_t magic;
    std::uint32_t scalar_bytes;
    std::uint64_t n;
    get(magic);
    if (magic != 0x4e4c42504152ULL) {
      throw std::runtime_error("not a parameter checkpoint");
    }
    get(scalar_bytes);
    if (scalar_bytes != sizeof(R)) {
      throw std::runtime_error("checkpoint precision mismatch");
    }
    get(n);
    entries_.clear();
    index_.clear();
    std::vector<std::int64_t> offsets;
    for (std::uint64_t i = 0; i < n; ++i) {
      std::uint32_t len;
      get(len);
      std::string name(len, '\0');
      in.read(name.data(), len);
      std::int64_t rows, cols, offset;
      get(rows);
      get(cols);
      get(offset);
      offsets.push_back(offset);
      add(name, Tensor<R>(rows, cols));
    }
    for (Entry& e : entries_) {
      in.read(reinterpret_cast<char*>(e.value.data()),
              static_cast<std::streamsize>(e.value.size() * sizeof(R)));
    }
    if (!in) throw std::runtime_error("truncated parameter checkpoint");
  }

 private:
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

// Glorot-uniform fill in +-sqrt(6/(fan_in+fan_out)).
template <class R>
Tensor<R> glorot(std::int64_t rows, std::int64_t cols, std::uint64_t seed,
                 std::uint64_t salt) {
  Tensor<R> t(rows, cols);
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  for (std::int64_t i = 0; i < t.size(); ++i) {
    t[i] = static_cast<R>(
        (2.0 * counter_u01(seed, salt, static_cast<std::uint64_t>(i)) - 1.0) *
        bound);
  }
  return t;
}

template <class R>
class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  // lr_scales, when given, multiplies the step size per entry (index-aligned
  // with the store).
  void step(ParamStore<R>& params, const std::vector<Tensor<R>>& grads,
            const std::vector<double>& lr_scales = {}) {
    auto& entries = params.entries();
    if (grads.size() != entries.size()) {
      throw std::invalid_argument("gradient count mismatch");
    }
    if (!lr_scales.empty() && lr_scales.size() != entries.size()) {
      throw std::invalid_argument("lr scale count mismatch");
    }
    if (m_.empty()) {
      for (const auto& e : entries) {
        m_.emplace_back(e.value.rows, e.value.cols);
        v_.emplace_back(e.value.rows, e.value.cols);
      }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    for (std::size_t p = 0; p < entries.size(); ++p) {
      Tensor<R>& w = entries[p].value;
      const Tensor<R>& g = grads[p];
      const double lr = lr_scales.empty() ? lr_ : lr_ * lr_scales[p];
      for (std::int64_t i = 0; i < w.size(); ++i) {
        const double gi = static_cast<double>(g[i]);
        double mi = beta1_ * static_cast<double>(m_[p][i]) + (1.0 - beta1_) * gi;
        double vi =
            beta2_ * static_cast<double>(v_[p][i]) + (1.0 - beta2_) * gi * gi;
        m_[p][i] = static_cast<R>(mi);
        v_[p][i] = static_cast<R>(vi);
        w[i] -= static_cast<R>(lr * (mi / bc1) /
                               (std::sqrt(vi / bc2) + eps_));
      }
    }
  }

  void set_lr(double lr) { lr_ = lr; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
  std::vector<Tensor<R>> m_, v_;
};

// Central-difference check of a scalar function of the parameters against
// the tape gradient. `loss_and_grads` evaluates the loss and fills analytic
// gradients; `loss_only` just evaluates. Returns the max relative error with
// denominator max(|a|, |b|, 1e-8).
template <class R, class LossGrad, class LossOnly>
double grad_check(ParamStore<R>& params, LossGrad&& loss_and_grads,
                  LossOnly&& loss_only, double h = 1e-6) {
  static_assert(sizeof(R) == 8, "gradient checks run in 64-bit mode");
  std::vector<Tensor<R>> grads;
  const double base = static_cast<double>(loss_and_grads(params, grads));
  if (!std::isfinite(base)) throw std::runtime_error("non-finite loss");

  double worst = 0.0;
  auto& entries = params.entries();
  for (std::size_t p = 0; p < entries.size(); ++p) {
    Tensor<R>& w = entries[p].value;
    for (std::int64_t i = 0; i < w.size(); ++i) {
      const R saved = w[i];
      w[i] = saved + static_cast<R>(h);
      const double up = static_cast<double>(loss_only(params));
      w[i] = saved - static_cast<R>(h);
      const double down = static_cast<double>(loss_only(params));
      w[i] = saved;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        throw std::runtime_error("non-finite loss during finite differences");
      }
      const double fd = (up - down) / (2.0 * h);
      const double an = static_cast<double>(grads[p][i]);
      const double denom = std::max({std::abs(fd), std::abs(an), 1e-8});
      worst = std::max(worst, std::abs(fd - an) / denom);
    }
  }
  return worst;
}

}  // namespace nlb
