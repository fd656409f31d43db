#include <gtest/gtest.h>

#include "blockdfl/rng.hpp"
#include "blockdfl/roles.hpp"

using namespace blockdfl;

namespace {

// h mod t via a table of 256^k mod t, least significant byte first.
std::uint64_t mod_oracle(const Hash& h, std::uint64_t t) {
  std::uint64_t pow = 1 % t, acc = 0;
  for (int i = 31; i >= 0; --i) {
    acc = (acc + h[i] % t * pow) % t;
    pow = pow * (256 % t) % t;
  }
  return acc;
}

Hash fixture_hash() { return sha256(std::string_view("role-fixture")); }

Hash random_hash(Rng& rng) {
  Hash h;
  for (auto& b : h) b = static_cast<std::uint8_t>(rng.below(256));
  return h;
}

}  // namespace

TEST(Ring, IntervalsFollowStakeInIdOrder) {
  const HashRing ring(StakeLedger(std::vector<std::uint64_t>{10, 10}));
  ASSERT_EQ(ring.intervals().size(), 2u);
  EXPECT_EQ(ring.intervals()[0].lo, 0u);
  EXPECT_EQ(ring.intervals()[0].hi, 10u);
  EXPECT_EQ(ring.intervals()[1].lo, 10u);
  EXPECT_EQ(ring.intervals()[1].hi, 20u);
  EXPECT_EQ(ring.total_stake(), 20u);

  const HashRing doubled(StakeLedger(std::vector<std::uint64_t>{20, 10}));
  const auto& iv = doubled.intervals();
  EXPECT_EQ(iv[0].hi - iv[0].lo, 2 * (ring.intervals()[0].hi - ring.intervals()[0].lo));
  EXPECT_THROW(HashRing(StakeLedger(3, 0)), Error);
}

TEST(Ring, PointMatchesModOracle) {
  Rng rng(8);
  for (int i = 0; i < 500; ++i) {
    const std::uint64_t t = 1 + rng.below(1'000'000'007ULL);
    StakeLedger ledger(std::vector<std::uint64_t>{t});
    const auto h = random_hash(rng);
    EXPECT_EQ(HashRing(ledger).point_of(h), mod_oracle(h, t));
  }
}

TEST(Select, TwoParticipantFixture) {
  const HashRing ring(StakeLedger(std::vector<std::uint64_t>{10, 10}));
  const auto h = fixture_hash();
  const auto point = mod_oracle(h, 20);
  EXPECT_EQ(point, 15u);
  const auto roles = select_roles(h, ring, 1, 1);
  EXPECT_EQ(roles.aggregators, (std::vector<ParticipantId>{point < 10 ? 0u : 1u}));
  EXPECT_EQ(roles.verifiers, (std::vector<ParticipantId>{point < 10 ? 1u : 0u}));
  EXPECT_TRUE(roles.providers.empty());
}

TEST(Select, ZeroStakeSkippedByRehash) {
  // Takes twelve draws: duplicates of participant 2 are rejected until a
  // point lands in participant 0's interval.
  const HashRing ring(StakeLedger(std::vector<std::uint64_t>{5, 0, 15}));
  const auto roles = select_roles(fixture_hash(), ring, 1, 1);
  EXPECT_EQ(roles.aggregators, (std::vector<ParticipantId>{2}));
  EXPECT_EQ(roles.verifiers, (std::vector<ParticipantId>{0}));
  EXPECT_EQ(roles.providers, (std::vector<ParticipantId>{1}));
}

TEST(Select, UniformFiveParticipants) {
  const HashRing ring(StakeLedger(5, 10));
  const auto roles = select_roles(fixture_hash(), ring, 2, 2);
  EXPECT_EQ(roles.aggregators, (std::vector<ParticipantId>{3, 2}));
  EXPECT_EQ(roles.verifiers, (std::vector<ParticipantId>{1, 0}));
  EXPECT_EQ(roles.leader(), 1u);
  EXPECT_EQ(roles.providers, (std::vector<ParticipantId>{4}));
}

TEST(Select, PreconditionAndPartition) {
  const HashRing ring(StakeLedger(std::vector<std::uint64_t>{1, 0, 1, 1}));
  EXPECT_THROW(select_roles(fixture_hash(), ring, 2, 2), Error);
  const auto roles = select_roles(fixture_hash(), ring, 1, 1);
  std::set<ParticipantId> all(roles.aggregators.begin(), roles.aggregators.end());
  all.insert(roles.verifiers.begin(), roles.verifiers.end());
  all.insert(roles.providers.begin(), roles.providers.end());
  EXPECT_EQ(all.size(), 4u);
  EXPECT_EQ(roles.aggregators.size() + roles.verifiers.size() + roles.providers.size(), 4u);
  EXPECT_TRUE(roles.is_provider(1));
}

TEST(Select, Deterministic) {
  const HashRing ring(StakeLedger(std::vector<std::uint64_t>{3, 9, 1, 4, 4, 7, 2}));
  Rng rng(1);
  for (int i = 0; i < 50; ++i) {
    const auto h = random_hash(rng);
    EXPECT_EQ(select_roles(h, ring, 2, 3), select_roles(h, ring, 2, 3));
  }
}

TEST(Select, ChiSquareProportionalToStake) {
  const std::vector<std::uint64_t> stakes{10, 20, 30, 0, 40, 10, 10, 30};
  const HashRing ring{StakeLedger(stakes)};
  const double total = 150;
  const int trials = 10'000;
  std::vector<int> counts(stakes.size(), 0);
  Rng rng(2024);
  for (int i = 0; i < trials; ++i) ++counts[select_roles(random_hash(rng), ring, 1, 1).aggregators.front()];
  EXPECT_EQ(counts[3], 0);
  double chi2 = 0;
  int df = -1;
  for (std::size_t i = 0; i < stakes.size(); ++i) {
    if (stakes[i] == 0) continue;
    const double e = trials * stakes[i] / total;
    chi2 += (counts[i] - e) * (counts[i] - e) / e;
    ++df;
  }
  EXPECT_LT(chi2, df + 3 * std::sqrt(2.0 * df));
}

TEST(Select, ZeroStakeNeverChosen) {
  const HashRing ring(StakeLedger(std::vector<std::uint64_t>{0, 5, 0, 5, 5, 5, 0}));
  Rng rng(6);
  for (int i = 0; i < 2000; ++i) {
    const auto r = select_roles(random_hash(rng), ring, 2, 2);
    for (ParticipantId z : {0u, 2u, 6u}) {
      EXPECT_FALSE(r.is_aggregator(z));
      EXPECT_FALSE(r.is_verifier(z));
    }
  }
}
