#include <gtest/gtest.h>

#include "blockdfl/consensus.hpp"
#include "oracles.hpp"

using namespace blockdfl;

namespace {

const auto kSigner = std::make_shared<HmacSigner>(3, 30);

CandidateSet set_of(const std::vector<ParameterVector>& updates, ParticipantId first_id = 0) {
  CandidateSet set;
  for (std::size_t i = 0; i < updates.size(); ++i) {
    CandidateGlobalUpdate c{0, first_id + i, updates[i], {}, {}};
    c.sign(*kSigner);
    set.candidates.push_back(c);
  }
  return set;
}

ConsensusContext context(std::vector<ParticipantId> verifiers, std::set<ParticipantId> contrarian = {}) {
  ConsensusContext ctx;
  ctx.verifiers = std::move(verifiers);
  ctx.f = 0.0;
  ctx.signer = kSigner.get();
  ctx.voter_honest = [contrarian](ParticipantId id) { return !contrarian.contains(id); };
  return ctx;
}

// Candidate 0 near the cluster, candidate 3 an outlier.
const std::vector<ParameterVector> kFixture{{0, 0}, {1, 0}, {0, 1}, {5, 5}};

}  // namespace

TEST(Krum, WorkedExample) {
  const std::vector<ParticipantId> ids{0, 1, 2, 3};
  EXPECT_EQ(krum_neighbours(4, 0.0), 2u);
  const auto s = krum_scores(kFixture, ids, 0.0);
  EXPECT_EQ(s[0], 2.0);
  EXPECT_EQ(s[3], 82.0);
  EXPECT_EQ(krum_score(3, kFixture, ids, 0.0), 82.0);
}

TEST(Krum, IdenticalCandidatesScoreZero) {
  const std::vector<ParameterVector> g(3, ParameterVector{1.5, -2, 3});
  for (double s : krum_scores(g, std::vector<ParticipantId>{0, 1, 2}, 0.2)) EXPECT_EQ(s, 0.0);
}

TEST(Krum, ScalingIsQuadratic) {
  Rng rng(4);
  const std::vector<ParticipantId> ids{0, 1, 2, 3, 4};
  for (int t = 0; t < 50; ++t) {
    std::vector<ParameterVector> g(5, ParameterVector(6));
    for (auto& v : g)
      for (auto& x : v) x = rng.normal();
    const double lambda = 0.5 + 3 * rng.uniform();
    auto scaled = g;
    for (auto& v : scaled)
      for (auto& x : v) x *= lambda;
    const auto a = krum_scores(g, ids, 0.2), b = krum_scores(scaled, ids, 0.2);
    for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(b[i], lambda * lambda * a[i], 1e-9 * b[i]);
    EXPECT_EQ(std::min_element(a.begin(), a.end()) - a.begin(), std::min_element(b.begin(), b.end()) - b.begin());
  }
}

TEST(Krum, NeighbourClamp) {
  EXPECT_EQ(krum_neighbours(3, 0.0), 1u);
  EXPECT_EQ(krum_neighbours(3, 0.4), 1u);
  EXPECT_EQ(krum_neighbours(10, 0.2), 6u);
  EXPECT_EQ(krum_neighbours(10, 0.0), 8u);
  EXPECT_EQ(krum_neighbours(2, 0.0), 1u);
  EXPECT_THROW(krum_neighbours(1, 0.0), Error);
}

TEST(Krum, MatchesBruteForceOracle) {
  Rng rng(2025);
  const double fs[] = {0.0, 0.2, 0.4};
  double worst = 0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 3 + rng.below(8), dim = 2 + rng.below(99);
    std::vector<ParameterVector> g(n, ParameterVector(dim));
    for (auto& v : g)
      for (auto& x : v) x = rng.normal();
    std::vector<ParticipantId> ids(n);
    std::iota(ids.begin(), ids.end(), ParticipantId{0});
    rng.shuffle(ids);
    const double f = fs[t % 3];
    const auto got = krum_scores(g, ids, f);
    const auto ref = oracle::krum(g, ids, f);
    for (std::size_t i = 0; i < n; ++i) worst = std::max(worst, std::abs(got[i] - ref[i]) / std::abs(ref[i]));
    for (std::size_t i = 0; i < n; ++i) ASSERT_EQ(vote(i, got), oracle::vote(i, ref));
  }
  EXPECT_LE(worst, 1e-9);
}

TEST(Vote, ThreeCandidates) {
  const std::vector<double> s{1, 2, 3};
  EXPECT_TRUE(vote(0, s));
  EXPECT_FALSE(vote(1, s));
  EXPECT_FALSE(vote(2, s));
}

TEST(Vote, AllEqualNeverPasses) {
  const std::vector<double> s(6, 4.2);
  for (std::size_t i = 0; i < s.size(); ++i) EXPECT_FALSE(vote(i, s));
}

TEST(Vote, TwoCandidatesDegenerate) {
  // best possible count is 1, and 3 * 1 < 2 * 2
  EXPECT_FALSE(vote(0, std::vector<double>{0.0, 100.0}));
  EXPECT_FALSE(vote(1, std::vector<double>{100.0, 0.0}));
}

TEST(Vote, ThreeCandidatesNeverApproved) {
  // m = 1: the closest pair shares the minimum score, so nobody beats two others
  Rng rng(31);
  for (int t = 0; t < 500; ++t) {
    std::vector<ParameterVector> g(3, ParameterVector(4));
    for (auto& v : g)
      for (auto& x : v) x = rng.normal();
    const auto s = krum_scores(g, std::vector<ParticipantId>{0, 1, 2}, 0.2);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_FALSE(vote(i, s));
  }
}

TEST(LeaderOrder, SortsByScoreThenId) {
  EXPECT_EQ(leader_order(std::vector<double>{5, 1, 3}, std::vector<ParticipantId>{10, 11, 12}),
            (std::vector<std::size_t>{1, 2, 0}));
  EXPECT_EQ(leader_order(std::vector<double>{2, 2, 1}, std::vector<ParticipantId>{9, 4, 7}),
            (std::vector<std::size_t>{2, 1, 0}));
  EXPECT_EQ(leader_order(std::vector<double>{7}, std::vector<ParticipantId>{3}), (std::vector<std::size_t>{0}));
}

TEST(CandidateSet, DropsBitwiseDuplicates) {
  CandidateSet set;
  EXPECT_TRUE(set.add({0, 1, {1, 2}, {}, {}}));
  EXPECT_FALSE(set.add({0, 2, {1, 2}, {}, {}}));
  EXPECT_TRUE(set.add({0, 3, {1, 2.0000001}, {}, {}}));
  EXPECT_EQ(set.ids(), (std::vector<ParticipantId>{1, 3}));
  EXPECT_EQ(set.find(3), std::optional<std::size_t>(1));
  EXPECT_FALSE(set.find(2).has_value());
}

TEST(Verifier, HonestMatchesVoteContrarianInverts) {
  const auto set = set_of(kFixture);
  Verifier honest(20, true, set, 0.0, *kSigner), bad(21, false, set, 0.0, *kSigner);
  const auto scores = krum_scores(set.updates(), set.ids(), 0.0);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(honest.decide(i), vote(i, scores));
    EXPECT_EQ(bad.decide(i), !vote(i, scores));
  }
  EXPECT_EQ(honest.score_computations(), 4u);
}

TEST(Verifier, UnknownCandidateThrows) {
  const auto set = set_of(kFixture);
  Verifier v(20, true, set, 0.0, *kSigner);
  ConsensusMsg pre{Stage::pre_prepare, 0, 99, {}, std::nullopt, 20, {}};
  pre.sign(*kSigner);
  EXPECT_THROW(v.on_pre_prepare(pre), Error);
}

TEST(RunLeader, FiveOfSevenApprovesFirstCandidate) {
  const auto set = set_of(kFixture);
  // two contrarians -> 5 affirmative on the best candidate
  const auto out = run_leader(set, context({20, 21, 22, 23, 24, 25, 26}, {25, 26}));
  ASSERT_TRUE(out.approved.has_value());
  EXPECT_EQ(*out.approved, 0u);
  EXPECT_EQ(out.candidates_examined, 1u);
  EXPECT_EQ(out.supporting_verifier_ids.size(), 5u);
  EXPECT_EQ(out.commits.size(), 7u);
  // every verifier scored the set once: 7 * |G|
  EXPECT_EQ(out.score_computations, 7u * 4u);
}

TEST(RunLeader, ThreeNegativesEverywhereGivesEmptyBlock) {
  const auto set = set_of(kFixture);
  const auto out = run_leader(set, context({20, 21, 22, 23, 24, 25, 26}, {24, 25, 26}));
  EXPECT_TRUE(out.empty());
  EXPECT_EQ(out.candidates_examined, 4u);
  EXPECT_EQ(out.score_computations, 7u * 4u);
}

TEST(RunLeader, NoCandidates) {
  const auto out = run_leader(CandidateSet{}, context({1, 2, 3}));
  EXPECT_TRUE(out.empty());
  EXPECT_EQ(out.candidates_examined, 0u);
}

TEST(RunLeader, TwoCandidatesNeverApproved) {
  const auto out = run_leader(set_of({{0, 0}, {9, 9}}), context({1, 2, 3, 4}));
  EXPECT_TRUE(out.empty());
}

TEST(RunLeader, MatchesHonestOutcomeUnderMinorityContrarians) {
  Rng rng(77);
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 3 + rng.below(6), nv = 4 + rng.below(10);
    std::vector<ParameterVector> g(n, ParameterVector(5));
    for (auto& v : g)
      for (auto& x : v) x = rng.normal() * (1 + rng.below(3));
    const auto set = set_of(g);
    std::vector<ParticipantId> verifiers(nv);
    std::iota(verifiers.begin(), verifiers.end(), ParticipantId{10});
    rng.shuffle(verifiers);
    std::set<ParticipantId> contrarian;
    std::vector<ParticipantId> pool(verifiers.begin() + 1, verifiers.end());  // leader stays honest
    rng.shuffle(pool);
    const std::size_t k = rng.below((nv - 1) / 3 + 1);
    for (std::size_t i = 0; i < k && 3 * (i + 1) < nv; ++i) contrarian.insert(pool[i]);
    ASSERT_LT(3 * contrarian.size(), nv);

    const auto honest = run_leader(set, context(verifiers));
    const auto mixed = run_leader(set, context(verifiers, contrarian));
    EXPECT_EQ(honest.approved, mixed.approved);
    // the honest outcome is the best-scoring candidate if it passes the vote rule
    const auto scores = oracle::krum(g, set.ids(), 0.0);
    std::size_t best = 0;
    for (std::size_t i = 1; i < n; ++i)
      if (scores[i] < scores[best]) best = i;
    if (oracle::vote(best, scores)) {
      ASSERT_TRUE(mixed.approved.has_value());
      EXPECT_EQ(*mixed.approved, best);
    } else {
      EXPECT_TRUE(mixed.empty());
    }
  }
}

namespace {

struct ChainFixture {
  ChainParams params{4, 7, 1, 5};
  Chain chain{params, StakeLedger(14, 10), kSigner, 4};
  RoleAssignment roles = chain.next_roles();

  CandidateSet candidates() const {
    CandidateSet set;
    for (std::size_t i = 0; i < 4; ++i) {
      CandidateGlobalUpdate c{0, roles.aggregators[i], kFixture[i], {roles.providers[i % 3]}, {}};
      c.sign(*kSigner);
      set.add(c);
    }
    return set;
  }
  ConsensusContext ctx() const { return context(roles.verifiers); }
};

}  // namespace

TEST(MakeBlock, HonestOutcomeIsAccepted) {
  ChainFixture fx;
  const auto set = fx.candidates();
  const auto out = run_leader(set, fx.ctx());
  ASSERT_FALSE(out.empty());
  const auto block = make_block(fx.chain, fx.roles.leader(), set, out, *kSigner);
  EXPECT_EQ(fx.chain.validate(block), Verdict::accepted);
}

TEST(MaliciousLeader, EmptyBlockIsAccepted) {
  ChainFixture fx;
  const auto set = fx.candidates();
  const auto out = malicious_leader_behavior(run_leader(set, fx.ctx()));
  EXPECT_TRUE(out.empty());
  const auto block = make_block(fx.chain, fx.roles.leader(), set, out, *kSigner);
  EXPECT_TRUE(block.empty());
  EXPECT_EQ(fx.chain.validate(block), Verdict::accepted);
}

TEST(MaliciousLeader, ForgedBlockWithTwoVotesRejected) {
  ChainFixture fx;
  const auto set = fx.candidates();
  auto out = run_leader(set, fx.ctx());
  out.commits.resize(2);
  auto block = make_block(fx.chain, fx.roles.leader(), set, out, *kSigner);
  EXPECT_EQ(fx.chain.validate(block), Verdict::insufficient_votes);

  // pushing the outlier with the votes cast on the real winner fails too
  out = run_leader(set, fx.ctx());
  out.approved = 3;
  block = make_block(fx.chain, fx.roles.leader(), set, out, *kSigner);
  EXPECT_EQ(fx.chain.validate(block), Verdict::bad_vote);
}

TEST(MaliciousLeader, CannotAlterSignedVotes) {
  ChainFixture fx;
  const auto set = fx.candidates();
  auto out = run_leader(set, fx.ctx());
  for (auto& c : out.commits) c.vote = true;
  out.commits[3].vote = false;
  out.commits[4].vote = false;
  out.commits[5].vote = false;
  const auto block = make_block(fx.chain, fx.roles.leader(), set, out, *kSigner);
  EXPECT_EQ(fx.chain.validate(block), Verdict::bad_vote_signature);
}
