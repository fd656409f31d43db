#pragma once

// Independent reference computations used only by tests. Nothing here calls
// into the code paths it is used to check.

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "blockdfl/learner.hpp"

namespace oracle {

// Krum by brute force: full pairwise squared-distance matrix, then an explicit
// sort of (distance, id) pairs per candidate.
inline std::vector<double> krum(const std::vector<std::vector<double>>& g, const std::vector<std::uint64_t>& ids,
                                double f) {
  const long n = static_cast<long>(g.size());
  std::vector<std::vector<double>> d(n, std::vector<double>(n));
  for (long i = 0; i < n; ++i)
    for (long j = 0; j < n; ++j) {
      long double acc = 0;
      for (std::size_t k = 0; k < g[i].size(); ++k) {
        const long double diff = static_cast<long double>(g[i][k]) - g[j][k];
        acc += diff * diff;
      }
      d[i][j] = static_cast<double>(acc);
    }
  long m = static_cast<long>((1.0L - f) * n + 1e-12L) - 2;
  if (m < 1) m = 1;
  if (m > n - 1) m = n - 1;
  std::vector<double> out(n);
  for (long i = 0; i < n; ++i) {
    std::vector<std::pair<double, std::uint64_t>> row;
    for (long j = 0; j < n; ++j)
      if (j != i) row.emplace_back(d[i][j], ids[j]);
    std::sort(row.begin(), row.end());
    long double s = 0;
    for (long k = 0; k < m; ++k) s += row[k].first;
    out[i] = static_cast<double>(s);
  }
  return out;
}

// Vote rule by counting every ordered pair.
inline bool vote(std::size_t i, const std::vector<double>& scores) {
  int count = 0;
  for (std::size_t j = 0; j < scores.size(); ++j)
    if (j != i && scores[i] < scores[j]) ++count;
  return 3.0L * count >= 2.0L * scores.size();
}

// Top-k by sorting every index on (-|d|, index).
inline std::vector<std::size_t> top_k_indices(const std::vector<double>& d, std::size_t k) {
  std::vector<std::pair<double, std::size_t>> v;
  for (std::size_t i = 0; i < d.size(); ++i) v.emplace_back(-std::abs(d[i]), i);
  std::sort(v.begin(), v.end());
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < k; ++i) out.push_back(v[i].second);
  std::sort(out.begin(), out.end());
  return out;
}

// Mean in reverse summation order with long double accumulation.
inline std::vector<double> mean(const std::vector<std::vector<double>>& xs) {
  std::vector<long double> acc(xs.front().size(), 0.0L);
  for (auto it = xs.rbegin(); it != xs.rend(); ++it)
    for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += (*it)[k];
  std::vector<double> out(acc.size());
  for (std::size_t k = 0; k < acc.size(); ++k) out[k] = static_cast<double>(acc[k] / xs.size());
  return out;
}

// Central finite differences of the batch loss.
inline std::vector<double> numeric_gradient(const blockdfl::ModelSpec& spec, std::vector<double> w,
                                            const blockdfl::Dataset& data, const std::vector<std::size_t>& batch,
                                            double h = 1e-5) {
  std::vector<double> g(w.size());
  for (std::size_t k = 0; k < w.size(); ++k) {
    const double orig = w[k];
    w[k] = orig + h;
    const double up = blockdfl::batch_loss(spec, w, data, batch);
    w[k] = orig - h;
    const double down = blockdfl::batch_loss(spec, w, data, batch);
    w[k] = orig;
    g[k] = (up - down) / (2 * h);
  }
  return g;
}

// ||a - b|| / max(||a|| + ||b||, tiny)
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(diff) / std::max(std::sqrt(na) + std::sqrt(nb), 1e-300);
}

}  // namespace oracle
