#pragma once

// Stake-proportional role selection on a hash ring, redone every round from
// the hash of the chain tip.

#include <algorithm>
#include <set>

#include "blockdfl/crypto.hpp"
#include "blockdfl/ledger.hpp"

namespace blockdfl {

struct RoleAssignment {
  std::vector<ParticipantId> aggregators;  // in selection order
  std::vector<ParticipantId> verifiers;    // in selection order; front() is the leader
  std::vector<ParticipantId> providers;    // ascending id

  ParticipantId leader() const { return verifiers.empty() ? kNoParticipant : verifiers.front(); }

  bool is_aggregator(ParticipantId id) const {
    return std::find(aggregators.begin(), aggregators.end(), id) != aggregators.end();
  }
  bool is_verifier(ParticipantId id) const { return std::find(verifiers.begin(), verifiers.end(), id) != verifiers.end(); }
  bool is_provider(ParticipantId id) const { return std::binary_search(providers.begin(), providers.end(), id); }

  friend bool operator==(const RoleAssignment&, const RoleAssignment&) = default;
};

struct RingInterval {
  ParticipantId owner;
  std::uint64_t lo;  // inclusive
  std::uint64_t hi;  // exclusive
};

/// Consecutive stake intervals over [0, total) in ascending participant id.
class HashRing {
 public:
  explicit HashRing(const StakeLedger& ledger) {
    std::uint64_t pos = 0;
    for (ParticipantId id = 0; id < ledger.size(); ++id) {
      const auto s = ledger.stake(id);
      intervals_.push_back({id, pos, pos + s});
      pos += s;
    }
    total_ = pos;
    require(total_ > 0, "hash ring: total stake is zero");
  }

  std::uint64_t total_stake() const { return total_; }
  const std::vector<RingInterval>& intervals() const { return intervals_; }

  /// Owner of the interval containing point (point < total).
  ParticipantId owner_of(std::uint64_t point) const {
    const auto it = std::upper_bound(intervals_.begin(), intervals_.end(), point,
                                     [](std::uint64_t p, const RingInterval& iv) { return p < iv.hi; });
    return it->owner;
  }

  /// The 256-bit hash read as a big-endian integer, reduced mod total stake.
  std::uint64_t point_of(const Hash& h) const {
    unsigned __int128 r = 0;
    for (auto byte : h) r = ((r << 8) | byte) % total_;
    return static_cast<std::uint64_t>(r);
  }

 private:
  std::vector<RingInterval> intervals_;
  std::uint64_t total_ = 0;
};

inline HashRing build_ring(const StakeLedger& ledger) { return HashRing(ledger); }

/// Draws |A| aggregators then |V| verifiers. Each draw maps the current hash
/// onto the ring, then the hash advances to SHA-256(hash) whether the draw
/// hit a fresh participant or a duplicate.
inline RoleAssignment select_roles(const Hash& prev_hash, const HashRing& ring, std::size_t n_aggregators,
                                   std::size_t n_verifiers) {
  std::size_t eligible = 0;
  for (const auto& iv : ring.intervals())
    if (iv.hi > iv.lo) ++eligible;
  // <= rather than <: an empty provider set is allowed here; the simulator
  // config still demands at least one provider.
  require(n_aggregators + n_verifiers <= eligible,
          "select_roles: need |A| + |V| <= number of participants with positive stake");

  RoleAssignment roles;
  std::set<ParticipantId> chosen;
  Hash h = prev_hash;
  auto draw = [&](std::vector<ParticipantId>& into, std::size_t count) {
    while (into.size() < count) {
      const ParticipantId id = ring.owner_of(ring.point_of(h));
      h = sha256(h);
      if (chosen.insert(id).second) into.push_back(id);
    }
  };
  draw(roles.aggregators, n_aggregators);
  draw(roles.verifiers, n_verifiers);
  for (const auto& iv : ring.intervals())
    if (!chosen.contains(iv.owner)) roles.providers.push_back(iv.owner);
  return roles;
}

}  // namespace blockdfl
