#pragma once

// Verification and consensus: Krum scoring of candidate global updates, the
// two-thirds vote rule, and the leader-driven pre-prepare / prepare / commit
// exchange that yields exactly one (possibly empty) block per round.

#include <algorithm>
#include <functional>
#include <map>
#include <numeric>

#include "blockdfl/chain.hpp"

namespace blockdfl {

/// Size of the neighbourhood Krum sums over: floor((1 - f) n) - 2, clamped to [1, n - 1].
inline std::size_t krum_neighbours(std::size_t n, double f) {
  require(n >= 2, "krum: need at least two candidates");
  require(f >= 0.0 && f < 1.0, "krum: f must be in [0, 1)");
  const auto base = static_cast<std::int64_t>(std::floor((1.0 - f) * static_cast<double>(n) + 1e-9)) - 2;
  return static_cast<std::size_t>(std::clamp<std::int64_t>(base, 1, static_cast<std::int64_t>(n) - 1));
}

/// Krum score of every candidate: the sum of squared distances to its m
/// nearest other candidates, nearest first, ties by ascending id.
inline std::vector<double> krum_scores(std::span<const ParameterVector> candidates,
                                       std::span<const ParticipantId> ids, double f) {
  const std::size_t n = candidates.size();
  require(ids.size() == n, "krum: ids/candidates length mismatch");
  const std::size_t m = krum_neighbours(n, f);

  std::vector<double> dist(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) dist[i * n + j] = dist[j * n + i] = squared_distance(candidates[i], candidates[j]);

  std::vector<double> scores(n);
  std::vector<std::size_t> others;
  for (std::size_t i = 0; i < n; ++i) {
    others.clear();
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) others.push_back(j);
    std::sort(others.begin(), others.end(), [&](std::size_t a, std::size_t b) {
      const double da = dist[i * n + a], db = dist[i * n + b];
      return da != db ? da < db : ids[a] < ids[b];
    });
    double s = 0.0;
    for (std::size_t k = 0; k < m; ++k) s += dist[i * n + others[k]];
    scores[i] = s;
  }
  return scores;
}

inline double krum_score(std::size_t index, std::span<const ParameterVector> candidates,
                         std::span<const ParticipantId> ids, double f) {
  require(index < candidates.size(), "krum_score: index out of range");
  return krum_scores(candidates, ids, f)[index];
}

/// Affirmative iff candidate i scores strictly lower than at least 2/3 of |G|
/// other candidates (exact integer comparison).
inline bool vote(std::size_t index, std::span<const double> scores) {
  require(index < scores.size(), "vote: index out of range");
  std::size_t beaten = 0;
  for (std::size_t j = 0; j < scores.size(); ++j)
    if (j != index && scores[index] < scores[j]) ++beaten;
  return 3 * beaten >= 2 * scores.size();
}

/// Candidate indices ascending by score, ties by ascending aggregator id.
inline std::vector<std::size_t> leader_order(std::span<const double> scores, std::span<const ParticipantId> ids) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] != scores[b] ? scores[a] < scores[b] : ids[a] < ids[b];
  });
  return order;
}

/// The candidate set G of a round as every verifier holds it.
struct CandidateSet {
  std::vector<CandidateGlobalUpdate> candidates;

  /// G is a set of global updates: a candidate whose update is bitwise equal
  /// to one already held is dropped (the earlier aggregator keeps it). Returns
  /// whether the candidate was added.
  bool add(CandidateGlobalUpdate cand) {
    for (const auto& c : candidates)
      if (c.update == cand.update) return false;
    candidates.push_back(std::move(cand));
    return true;
  }

  std::vector<ParticipantId> ids() const {
    std::vector<ParticipantId> v;
    for (const auto& c : candidates) v.push_back(c.aggregator_id);
    return v;
  }
  std::vector<ParameterVector> updates() const {
    std::vector<ParameterVector> v;
    for (const auto& c : candidates) v.push_back(c.update);
    return v;
  }
  std::optional<std::size_t> find(ParticipantId aggregator) const {
    for (std::size_t i = 0; i < candidates.size(); ++i)
      if (candidates[i].aggregator_id == aggregator) return i;
    return std::nullopt;
  }
};

/// One verifier's side of the exchange. Krum scores are computed once, on the
/// first commit, and reused for every later candidate of the round.
class Verifier {
 public:
  Verifier(ParticipantId id, bool honest, const CandidateSet& set, double f, const Signer& signer)
      : id_(id), honest_(honest), set_(&set), f_(f), signer_(&signer) {}

  ParticipantId id() const { return id_; }
  bool honest() const { return honest_; }
  std::size_t score_computations() const { return score_computations_; }

  const std::vector<double>& scores() {
    if (!scores_) {
      const auto n = set_->candidates.size();
      if (n >= 2) {
        scores_ = krum_scores(set_->updates(), set_->ids(), f_);
      } else {
        scores_ = std::vector<double>(n, 0.0);  // vote() can never pass with |G| < 2
      }
      score_computations_ += n;
    }
    return *scores_;
  }

  /// The vote this verifier casts on a candidate; a dishonest verifier casts the opposite.
  bool decide(std::size_t index) {
    const auto& s = scores();
    const bool honest_vote = s.size() >= 2 && vote(index, s);
    return honest_ ? honest_vote : !honest_vote;
  }

  ConsensusMsg on_pre_prepare(const ConsensusMsg& pre) const {
    require(pre.stage == Stage::pre_prepare, "verifier: expected pre-prepare");
    locate(pre);
    return make(Stage::prepare, pre, std::nullopt);
  }

  /// Commit once more than 2/3 of |V| valid prepares for the candidate arrived.
  std::optional<ConsensusMsg> on_prepares(const ConsensusMsg& pre, std::span<const ConsensusMsg> prepares,
                                          std::size_t n_verifiers) {
    const std::size_t index = locate(pre);
    std::size_t valid = 0;
    for (const auto& p : prepares)
      if (p.stage == Stage::prepare && p.candidate_id == pre.candidate_id && p.candidate_digest == pre.candidate_digest &&
          p.verify(*signer_))
        ++valid;
    if (!exceeds_two_thirds(valid, n_verifiers)) return std::nullopt;
    return make(Stage::commit, pre, decide(index));
  }

 private:
  std::size_t locate(const ConsensusMsg& m) const {
    const auto idx = set_->find(m.candidate_id);
    if (!idx) throw Error("verifier: unknown candidate id " + std::to_string(m.candidate_id));
    return *idx;
  }

  ConsensusMsg make(Stage stage, const ConsensusMsg& pre, std::optional<bool> v) const {
    ConsensusMsg msg{stage, pre.round, pre.candidate_id, pre.candidate_digest, v, id_, {}};
    msg.sign(*signer_);
    return msg;
  }

  ParticipantId id_;
  bool honest_;
  const CandidateSet* set_;
  double f_;
  const Signer* signer_;
  std::optional<std::vector<double>> scores_;
  std::size_t score_computations_ = 0;
};

/// Per-verifier behaviour flag; `voter_honest(id)` false means contrarian.
struct ConsensusContext {
  std::int64_t round = 0;
  std::vector<ParticipantId> verifiers;  // front() is the leader
  double f = 0.0;
  const Signer* signer = nullptr;
  std::function<bool(ParticipantId)> voter_honest = [](ParticipantId) { return true; };
};

struct RoundOutcome {
  std::optional<std::size_t> approved;  // index into the candidate set
  std::vector<ConsensusMsg> commits;    // commit messages on the approved candidate
  std::vector<ParticipantId> supporting_verifier_ids;
  std::size_t candidates_examined = 0;
  std::size_t score_computations = 0;  // summed over verifiers

  bool empty() const { return !approved.has_value(); }
};

/// Leader-driven verification. Candidates are examined in leader_order of the
/// leader's own scores. A candidate is approved once affirmative commits
/// exceed 2/3 |V|, and dropped once negative commits exceed 1/3 |V| (or all
/// commits are in without either threshold). Messages are delivered in
/// sender-id order; neither threshold outcome depends on that order since the
/// two cannot both be crossed.
inline RoundOutcome run_leader(const CandidateSet& set, const ConsensusContext& ctx) {
  require(!ctx.verifiers.empty(), "run_leader: no verifiers");
  require(ctx.signer != nullptr, "run_leader: signer required");
  RoundOutcome out;
  if (set.candidates.empty()) return out;

  std::vector<ParticipantId> by_id = ctx.verifiers;
  std::sort(by_id.begin(), by_id.end());
  std::map<ParticipantId, Verifier> verifiers;
  for (auto id : by_id) verifiers.emplace(id, Verifier(id, ctx.voter_honest(id), set, ctx.f, *ctx.signer));
  const std::size_t nv = ctx.verifiers.size();

  Verifier& leader = verifiers.at(ctx.verifiers.front());
  const auto ids = set.ids();
  const auto order = leader_order(leader.scores(), ids);

  for (auto index : order) {
    ++out.candidates_examined;
    const auto& cand = set.candidates[index];
    ConsensusMsg pre{Stage::pre_prepare, ctx.round, cand.aggregator_id, cand.digest(), std::nullopt, leader.id(), {}};
    pre.sign(*ctx.signer);

    std::vector<ConsensusMsg> prepares;
    for (auto id : by_id) prepares.push_back(verifiers.at(id).on_pre_prepare(pre));

    std::vector<ConsensusMsg> commits;
    std::size_t yes = 0, no = 0;
    for (auto id : by_id) {
      auto c = verifiers.at(id).on_prepares(pre, prepares, nv);
      if (!c || !c->verify(*ctx.signer)) continue;
      (*c->vote ? yes : no) += 1;
      commits.push_back(std::move(*c));
    }
    if (exceeds_two_thirds(yes, nv)) {
      out.approved = index;
      for (const auto& c : commits)
        if (*c.vote) out.supporting_verifier_ids.push_back(c.sender_id);
      out.commits = std::move(commits);
      break;
    }
    // Otherwise negatives exceed |V|/3 or the votes split exactly at the
    // thresholds; either way the leader moves on.
  }
  for (auto& [id, v] : verifiers) out.score_computations += v.score_computations();
  return out;
}

/// A malicious leader discards whatever was approved and emits an empty block.
inline RoundOutcome malicious_leader_behavior(RoundOutcome outcome) {
  outcome.approved.reset();
  outcome.commits.clear();
  outcome.supporting_verifier_ids.clear();
  return outcome;
}

/// Leader-signed block for the round outcome.
inline Block make_block(const Chain& chain, ParticipantId leader, const CandidateSet& set, const RoundOutcome& outcome,
                        const Signer& signer) {
  Block b;
  b.round = chain.next_round();
  b.prev_hash = chain.tip_hash();
  b.creator_id = leader;
  if (outcome.approved) {
    const auto& cand = set.candidates[*outcome.approved];
    b.payload = ApprovedUpdate{cand.aggregator_id, cand.provider_ids, cand.update, cand.signature};
    b.votes = outcome.commits;
    b.stake_increments = expected_increments(b, chain.params().stake_increment);
  }
  sign_block(b, signer);
  return b;
}

}  // namespace blockdfl
