#pragma once

// Top-k sparsification with local residual accumulation.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>

#include "blockdfl/bytes.hpp"
#include "blockdfl/common.hpp"

namespace blockdfl {

struct SparseUpdate {
  std::size_t dim = 0;
  std::vector<std::uint64_t> indices;  // strictly increasing, < dim
  std::vector<double> values;          // finite, nonzero
  double declared_sparsity = 0.0;

  void validate() const {
    require(indices.size() == values.size(), "sparse update: indices/values length mismatch");
    require(declared_sparsity >= 0.0 && declared_sparsity < 1.0, "sparse update: sparsity out of range");
    for (std::size_t i = 0; i < indices.size(); ++i) {
      require(indices[i] < dim, "sparse update: index out of range");
      require(i == 0 || indices[i - 1] < indices[i], "sparse update: indices not strictly increasing");
      require(std::isfinite(values[i]) && values[i] != 0.0, "sparse update: values must be finite and nonzero");
    }
  }

  void encode(ByteWriter& w) const {
    w.u64(dim);
    w.f64(declared_sparsity);
    w.u64_array(indices);
    w.f64_array(values);
  }

  friend bool operator==(const SparseUpdate&, const SparseUpdate&) = default;
};

/// Number of kept entries: round-half-up of (1 - s) * P.
inline std::size_t kept_count(std::size_t dim, double sparsity) {
  // The epsilon absorbs binary representation error of decimal sparsities
  // such as 0.925, so exact halves round up as intended.
  return static_cast<std::size_t>(std::floor((1.0 - sparsity) * static_cast<double>(dim) + 0.5 + 1e-9));
}

struct SparsifyResult {
  SparseUpdate sparse;
  ParameterVector residual;
};

/// Keeps the k entries of largest magnitude (lower index wins ties). Exact
/// zeros among them are not transmitted; they contribute nothing either way.
/// densify(sparse) + residual reproduces `d` exactly.
inline SparsifyResult top_k_sparsify(const ParameterVector& d, double sparsity) {
  require(sparsity >= 0.0 && sparsity < 1.0, "top_k_sparsify: sparsity must be in [0, 1)");
  require(all_finite(d), "top_k_sparsify: non-finite update");
  const std::size_t k = kept_count(d.size(), sparsity);
  require(k >= 1, "top_k_sparsify: sparsity too large for dimension (k = 0)");

  std::vector<std::size_t> order(d.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto before = [&d](std::size_t a, std::size_t b) {
    const double ma = std::abs(d[a]), mb = std::abs(d[b]);
    return ma != mb ? ma > mb : a < b;
  };
  if (k < order.size()) std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k - 1), order.end(), before);
  order.resize(k);
  std::sort(order.begin(), order.end());

  SparsifyResult out{SparseUpdate{d.size(), {}, {}, sparsity}, d};
  out.sparse.indices.reserve(k);
  out.sparse.values.reserve(k);
  for (auto i : order) {
    if (d[i] == 0.0) continue;
    out.sparse.indices.push_back(i);
    out.sparse.values.push_back(d[i]);
    out.residual[i] = 0.0;
  }
  return out;
}

inline ParameterVector densify(const SparseUpdate& u) {
  ParameterVector v(u.dim, 0.0);
  for (std::size_t i = 0; i < u.indices.size(); ++i) v[u.indices[i]] = u.values[i];
  return v;
}

/// residual + d_new, fed to the next sparsification.
inline ParameterVector accumulate(const ParameterVector& residual, const ParameterVector& d_new) {
  require(residual.size() == d_new.size(), "accumulate: length mismatch");
  return apply_update(residual, d_new);
}

/// Step function over rounds: entries are (start_round, sparsity), sorted by start.
class SparsitySchedule {
 public:
  using Step = std::pair<std::int64_t, double>;

  SparsitySchedule() : steps_{{0, 0.0}} {}
  explicit SparsitySchedule(std::vector<Step> steps) : steps_(std::move(steps)) {
    require(!steps_.empty(), "sparsity schedule: empty");
    for (std::size_t i = 0; i < steps_.size(); ++i) {
      require(steps_[i].second >= 0.0 && steps_[i].second < 1.0, "sparsity schedule: value out of [0, 1)");
      require(i == 0 || steps_[i - 1].first < steps_[i].first, "sparsity schedule: start rounds not increasing");
    }
  }

  /// Equal-length stages of `every` rounds starting at round 0.
  static SparsitySchedule every(std::int64_t every, const std::vector<double>& values) {
    require(every >= 1, "sparsity schedule: stage length must be >= 1");
    std::vector<Step> steps;
    for (std::size_t i = 0; i < values.size(); ++i) steps.emplace_back(static_cast<std::int64_t>(i) * every, values[i]);
    return SparsitySchedule(std::move(steps));
  }

  static SparsitySchedule mnist_default() { return every(50, {0.90, 0.925, 0.95, 0.975}); }
  static SparsitySchedule cifar_default() { return every(60, {0.85, 0.875, 0.90, 0.925, 0.95}); }

  double at(std::int64_t round) const {
    double s = steps_.front().second;
    for (const auto& [start, value] : steps_) {
      if (round < start) break;
      s = value;
    }
    return s;
  }

  const std::vector<Step>& steps() const { return steps_; }

 private:
  std::vector<Step> steps_;
};

inline double sparsity_for_round(std::int64_t round, const SparsitySchedule& schedule) { return schedule.at(round); }

}  // namespace blockdfl
