#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace blockdfl {

using ParticipantId = std::uint64_t;
inline constexpr ParticipantId kNoParticipant = std::numeric_limits<ParticipantId>::max();

/// Flat model parameters or a dense model update.
using ParameterVector = std::vector<double>;

/// Raised on violated preconditions and malformed inputs.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw Error(what);
}

inline bool all_finite(const ParameterVector& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

/// d = w_new - w_old
inline ParameterVector compute_update(const ParameterVector& w_new, const ParameterVector& w_old) {
  require(w_new.size() == w_old.size(), "compute_update: length mismatch");
  ParameterVector d(w_new.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = w_new[i] - w_old[i];
  return d;
}

inline ParameterVector apply_update(const ParameterVector& w, const ParameterVector& d) {
  require(w.size() == d.size(), "apply_update: length mismatch");
  ParameterVector out(w.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = w[i] + d[i];
  return out;
}

inline double squared_distance(const ParameterVector& a, const ParameterVector& b) {
  require(a.size() == b.size(), "squared_distance: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    acc += diff * diff;
  }
  return acc;
}

}  // namespace blockdfl
