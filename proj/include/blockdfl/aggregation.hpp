#pragma once

// Aggregator pipeline: stake-filtered sampling, median-based testing,
// softmax selection and averaging into one candidate global update.

#include <algorithm>
#include <cmath>

#include "blockdfl/compression.hpp"
#include "blockdfl/learner.hpp"
#include "blockdfl/ledger.hpp"
#include "blockdfl/messages.hpp"

namespace blockdfl {

struct ScoredUpdate {
  const LocalUpdateMsg* msg = nullptr;
  double q = 0.0;

  ParticipantId provider() const { return msg->provider_id; }
};

/// Draws 3c distinct updates without replacement, each draw proportional to
/// ln(1 + stake of the provider) over the updates still in the pool.
inline std::vector<const LocalUpdateMsg*> stake_filter_sample(std::span<const LocalUpdateMsg> received,
                                                              const StakeLedger& ledger, std::size_t c,
                                                              std::uint64_t seed) {
  require(c >= 1, "stake_filter_sample: c must be >= 1");
  const std::size_t want = 3 * c;
  require(received.size() >= want, "stake_filter_sample: fewer than 3c local updates");

  std::vector<const LocalUpdateMsg*> pool;
  std::vector<double> weight;
  for (const auto& m : received) {
    pool.push_back(&m);
    weight.push_back(std::log1p(static_cast<double>(ledger.stake(m.provider_id))));
  }
  if (pool.size() == want) return pool;

  Rng rng(seed);
  std::vector<const LocalUpdateMsg*> out;
  while (out.size() < want) {
    double total = 0.0;
    for (double w : weight) total += w;
    // Only zero-stake providers left: fall back to a uniform draw.
    const std::size_t pick = total > 0.0 ? rng.weighted(weight) : rng.below(pool.size());
    out.push_back(pool[pick]);
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick));
    weight.erase(weight.begin() + static_cast<std::ptrdiff_t>(pick));
  }
  return out;
}

/// q(d) = accuracy on `subset` of the base model with d applied.
inline std::vector<ScoredUpdate> score_local_updates(const ModelSpec& spec, const ParameterVector& w,
                                                     std::span<const LocalUpdateMsg* const> sample,
                                                     const Dataset& subset) {
  require(subset.size() > 0, "score_local_updates: empty evaluation subset");
  std::vector<ScoredUpdate> out;
  out.reserve(sample.size());
  ParameterVector probe;
  for (const auto* m : sample) {
    require(m->update.dim == w.size(), "score_local_updates: dimension mismatch");
    probe = w;
    for (std::size_t i = 0; i < m->update.indices.size(); ++i) probe[m->update.indices[i]] += m->update.values[i];
    out.push_back({m, evaluate(spec, probe, subset)});
  }
  return out;
}

/// Descending q (ties by ascending provider id); keeps ranks 0 .. floor(n/2) - 1.
inline std::vector<ScoredUpdate> median_partition(std::vector<ScoredUpdate> scored) {
  std::sort(scored.begin(), scored.end(), [](const ScoredUpdate& a, const ScoredUpdate& b) {
    return a.q != b.q ? a.q > b.q : a.provider() < b.provider();
  });
  scored.resize(scored.size() / 2);
  return scored;
}

/// Sequential draws without replacement; each draw picks i with probability
/// exp(q_i) / sum_j exp(q_j) over what remains.
inline std::vector<ScoredUpdate> softmax_select(std::vector<ScoredUpdate> pool, std::size_t c, std::uint64_t seed) {
  require(pool.size() >= c, "softmax_select: pool smaller than c");
  Rng rng(seed);
  std::vector<ScoredUpdate> out;
  while (out.size() < c) {
    double mx = -std::numeric_limits<double>::infinity();
    for (const auto& s : pool) mx = std::max(mx, s.q);
    std::vector<double> p;
    for (const auto& s : pool) p.push_back(std::exp(s.q - mx));
    const auto pick = rng.weighted(p);
    out.push_back(pool[pick]);
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick));
  }
  return out;
}

/// Elementwise mean of the densified updates.
inline ParameterVector aggregate(std::span<const SparseUpdate* const> updates) {
  require(!updates.empty(), "aggregate: no updates");
  const std::size_t dim = updates.front()->dim;
  ParameterVector g(dim, 0.0);
  for (const auto* u : updates) {
    require(u->dim == dim, "aggregate: dimension mismatch");
    for (std::size_t i = 0; i < u->indices.size(); ++i) g[u->indices[i]] += u->values[i];
  }
  const double inv = 1.0 / static_cast<double>(updates.size());
  for (auto& x : g) x *= inv;
  return g;
}

/// Sums in ascending provider order, so the result does not depend on the
/// order updates were drawn in.
inline ParameterVector aggregate(std::span<const ScoredUpdate> selected) {
  std::vector<ScoredUpdate> sorted(selected.begin(), selected.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const ScoredUpdate& a, const ScoredUpdate& b) { return a.provider() < b.provider(); });
  std::vector<const SparseUpdate*> u;
  for (const auto& s : sorted) u.push_back(&s.msg->update);
  return aggregate(u);
}

struct AggregatorContext {
  ParticipantId aggregator_id = kNoParticipant;
  std::int64_t round = 0;
  std::size_t c = 5;
  std::size_t min_local_updates = 0;  // 0 means 3c
  const ModelSpec* model = nullptr;
  const Dataset* eval_subset = nullptr;
  const Signer* signer = nullptr;

  std::size_t required_updates() const { return min_local_updates == 0 ? 3 * c : std::max(min_local_updates, 3 * c); }
};

/// Provider ids at every stage of one aggregation, for inspection.
struct AggregationTrace {
  std::vector<ParticipantId> verified;
  std::vector<ParticipantId> sampled;
  std::vector<ParticipantId> median_kept;
  std::vector<ParticipantId> selected;
};

inline std::vector<ParticipantId> provider_ids(std::span<const ScoredUpdate> s) {
  std::vector<ParticipantId> ids;
  for (const auto& x : s) ids.push_back(x.provider());
  return ids;
}

inline CandidateGlobalUpdate sign_candidate(const AggregatorContext& ctx, ParameterVector g,
                                            std::span<const ScoredUpdate> selected) {
  auto ids = provider_ids(selected);
  std::sort(ids.begin(), ids.end());
  CandidateGlobalUpdate cand{ctx.round, ctx.aggregator_id, std::move(g), std::move(ids), {}};
  cand.sign(*ctx.signer);
  return cand;
}

/// Messages whose signature verifies and which belong to this round; the rest
/// are dropped.
inline std::vector<LocalUpdateMsg> verified_inbox(std::span<const LocalUpdateMsg> inbox, const Signer& signer,
                                                  std::int64_t round) {
  std::vector<LocalUpdateMsg> out;
  for (const auto& m : inbox)
    if (m.round == round && m.verify(signer)) out.push_back(m);
  return out;
}

inline CandidateGlobalUpdate run_aggregator(std::span<const LocalUpdateMsg> inbox, const ParameterVector& w,
                                            const StakeLedger& ledger, const AggregatorContext& ctx,
                                            std::uint64_t seed, AggregationTrace* trace = nullptr) {
  require(ctx.model && ctx.eval_subset && ctx.signer, "run_aggregator: incomplete context");
  const auto verified = verified_inbox(inbox, *ctx.signer, ctx.round);
  require(verified.size() >= ctx.required_updates(), "run_aggregator: insufficient verified local updates");

  Rng seeds(seed);
  const auto sample = stake_filter_sample(verified, ledger, ctx.c, seeds.next());
  const auto scored = score_local_updates(*ctx.model, w, sample, *ctx.eval_subset);
  const auto kept = median_partition(scored);
  const auto selected = softmax_select(kept, ctx.c, seeds.next());
  auto cand = sign_candidate(ctx, aggregate(selected), selected);

  if (trace) {
    trace->verified.clear();
    for (const auto& m : verified) trace->verified.push_back(m.provider_id);
    trace->sampled.clear();
    for (const auto* m : sample) trace->sampled.push_back(m->provider_id);
    trace->median_kept = provider_ids(kept);
    trace->selected = provider_ids(selected);
  }
  return cand;
}

}  // namespace blockdfl
