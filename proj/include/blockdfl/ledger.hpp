#pragma once

#include <numeric>

#include "blockdfl/common.hpp"

namespace blockdfl {

/// Integer stake per participant; ids are dense 0..n-1.
class StakeLedger {
 public:
  StakeLedger() = default;
  StakeLedger(std::size_t n, std::uint64_t initial) : stakes_(n, initial) {}
  explicit StakeLedger(std::vector<std::uint64_t> stakes) : stakes_(std::move(stakes)) {}

  std::size_t size() const { return stakes_.size(); }
  bool contains(ParticipantId id) const { return id < stakes_.size(); }

  std::uint64_t stake(ParticipantId id) const {
    require(contains(id), "stake ledger: unknown participant " + std::to_string(id));
    return stakes_[id];
  }

  std::uint64_t total() const { return std::accumulate(stakes_.begin(), stakes_.end(), std::uint64_t{0}); }

  void award(ParticipantId id, std::uint64_t amount) {
    require(contains(id), "stake ledger: unknown participant " + std::to_string(id));
    stakes_[id] += amount;
  }

  const std::vector<std::uint64_t>& stakes() const { return stakes_; }

  friend bool operator==(const StakeLedger&, const StakeLedger&) = default;

 private:
  std::vector<std::uint64_t> stakes_;
};

}  // namespace blockdfl
