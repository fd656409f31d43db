#pragma once

// Attack strategies per role: label-flipping providers, lowest-accuracy
// aggregators and contrarian verifiers.

#include <set>

#include "blockdfl/aggregation.hpp"

namespace blockdfl {

struct FlipPair {
  int source;
  int target;
  friend bool operator==(const FlipPair&, const FlipPair&) = default;
};

struct AdversaryConfig {
  double malicious_fraction = 0.0;
  std::vector<FlipPair> flip_pairs{{1, 7}};
  bool poison_providers = true;
  bool malicious_aggregators = true;
  bool contrarian_verifiers = true;
  bool malicious_leader = false;

  void validate(std::size_t classes) const {
    require(malicious_fraction >= 0.0 && malicious_fraction < 1.0, "adversary: fraction must be in [0, 1)");
    for (const auto& p : flip_pairs)
      require(p.source >= 0 && p.target >= 0 && static_cast<std::size_t>(p.source) < classes &&
                  static_cast<std::size_t>(p.target) < classes,
              "adversary: flip pair references an invalid class");
  }
};

/// Every label equal to a source becomes its target; features are untouched.
inline Dataset poison_dataset(Dataset data, std::span<const FlipPair> pairs) {
  for (auto& y : data.labels)
    for (const auto& p : pairs)
      if (y == p.source) {
        y = p.target;
        break;
      }
  return data;
}

/// floor(f * n) distinct ids, uniform per seed.
inline std::set<ParticipantId> assign_malicious(std::size_t n, double fraction, std::uint64_t seed) {
  require(fraction >= 0.0 && fraction < 1.0, "assign_malicious: fraction must be in [0, 1)");
  const auto k = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9));
  std::vector<ParticipantId> ids(n);
  std::iota(ids.begin(), ids.end(), ParticipantId{0});
  Rng rng(seed);
  rng.shuffle(ids);
  return std::set<ParticipantId>(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(k));
}

inline bool malicious_vote(bool honest_vote) { return !honest_vote; }

/// Uniform 3c sample (stake ignored), then the c lowest-accuracy updates
/// (ties by ascending provider id) averaged into a signed candidate.
inline CandidateGlobalUpdate malicious_aggregate(std::span<const LocalUpdateMsg> inbox, const ParameterVector& w,
                                                 const AggregatorContext& ctx, std::uint64_t seed,
                                                 AggregationTrace* trace = nullptr) {
  require(ctx.model && ctx.eval_subset && ctx.signer, "malicious_aggregate: incomplete context");
  const auto verified = verified_inbox(inbox, *ctx.signer, ctx.round);
  require(verified.size() >= 3 * ctx.c, "malicious_aggregate: fewer than 3c local updates");

  std::vector<const LocalUpdateMsg*> pool;
  for (const auto& m : verified) pool.push_back(&m);
  Rng rng(seed);
  rng.shuffle(pool);
  pool.resize(3 * ctx.c);

  auto scored = score_local_updates(*ctx.model, w, pool, *ctx.eval_subset);
  std::sort(scored.begin(), scored.end(), [](const ScoredUpdate& a, const ScoredUpdate& b) {
    return a.q != b.q ? a.q < b.q : a.provider() < b.provider();
  });
  scored.resize(ctx.c);
  auto cand = sign_candidate(ctx, aggregate(scored), scored);
  if (trace) {
    trace->sampled.clear();
    for (const auto* m : pool) trace->sampled.push_back(m->provider_id);
    trace->selected = provider_ids(scored);
  }
  return cand;
}

}  // namespace blockdfl
