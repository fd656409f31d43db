#include <gtest/gtest.h>

#include "blockdfl/compression.hpp"
#include "blockdfl/rng.hpp"
#include "oracles.hpp"

using namespace blockdfl;

TEST(TopK, WorkedExample) {
  const auto r = top_k_sparsify({3, -1, 0.5, 2}, 0.5);
  EXPECT_EQ(r.sparse.indices, (std::vector<std::uint64_t>{0, 3}));
  EXPECT_EQ(r.sparse.values, (std::vector<double>{3, 2}));
  EXPECT_EQ(r.residual, (ParameterVector{0, -1, 0.5, 0}));
  EXPECT_EQ(r.sparse.dim, 4u);
  r.sparse.validate();
}

TEST(TopK, ZeroSparsityKeepsAllNonzero) {
  const ParameterVector d{0, 1.5, 0, -2};
  const auto r = top_k_sparsify(d, 0.0);
  EXPECT_EQ(r.sparse.indices, (std::vector<std::uint64_t>{1, 3}));
  EXPECT_EQ(r.residual, (ParameterVector{0, 0, 0, 0}));
  EXPECT_EQ(densify(r.sparse), d);
}

TEST(TopK, TieGoesToLowerIndex) {
  EXPECT_EQ(top_k_sparsify({1, -1}, 0.5).sparse.indices, (std::vector<std::uint64_t>{0}));
  EXPECT_EQ(top_k_sparsify({-2, 2, 2, -2}, 0.5).sparse.indices, (std::vector<std::uint64_t>{0, 1}));
}

TEST(TopK, RejectsBadInput) {
  EXPECT_THROW(top_k_sparsify({1, 2}, 1.0), Error);
  EXPECT_THROW(top_k_sparsify({1, 2}, -0.1), Error);
  EXPECT_THROW(top_k_sparsify({1, 2, 3}, 0.9), Error);  // k = 0
  EXPECT_THROW(top_k_sparsify({1, std::nan("")}, 0.0), Error);
}

TEST(TopK, KeptCountRoundsHalfUp) {
  EXPECT_EQ(kept_count(4, 0.5), 2u);
  EXPECT_EQ(kept_count(10, 0.95), 1u);   // 0.5 -> 1
  EXPECT_EQ(kept_count(40, 0.925), 3u);  // 3.0
  EXPECT_EQ(kept_count(20, 0.925), 2u);  // 1.5 -> 2
  EXPECT_EQ(kept_count(7, 0.0), 7u);
}

TEST(TopK, MatchesSortOracleAndConserves) {
  Rng rng(12);
  const double levels[] = {0.0, 0.5, 0.9, 0.95};
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t P = 20 + rng.below(200);
    ParameterVector d(P);
    for (auto& x : d) x = rng.normal();
    const double s = levels[trial % 4];
    const auto r = top_k_sparsify(d, s);
    const auto k = static_cast<std::size_t>(std::floor((1 - s) * P + 0.5 + 1e-9));
    ASSERT_EQ(r.sparse.indices.size(), k);
    std::vector<std::size_t> got(r.sparse.indices.begin(), r.sparse.indices.end());
    ASSERT_EQ(got, oracle::top_k_indices(d, k));
    const auto dense = densify(r.sparse);
    for (std::size_t i = 0; i < P; ++i) ASSERT_EQ(dense[i] + r.residual[i], d[i]);
  }
}

TEST(Accumulate, Identities) {
  const ParameterVector a{1, -2, 3}, b{0.5, 0.5, -1}, z(3, 0.0);
  EXPECT_EQ(accumulate(z, a), a);
  EXPECT_EQ(accumulate(accumulate(z, a), b), (ParameterVector{1.5, -1.5, 2}));
  EXPECT_THROW(accumulate(a, {1}), Error);
}

TEST(Accumulate, TwoRoundConservation) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    ParameterVector d1(50), d2(50);
    // dyadic values keep every sum exact
    for (auto& x : d1) x = static_cast<double>(static_cast<int>(rng.below(64)) - 32) / 8.0;
    for (auto& x : d2) x = static_cast<double>(static_cast<int>(rng.below(64)) - 32) / 8.0;
    const auto r1 = top_k_sparsify(d1, 0.9);
    const auto r2 = top_k_sparsify(accumulate(r1.residual, d2), 0.9);
    const auto t1 = densify(r1.sparse), t2 = densify(r2.sparse);
    for (std::size_t i = 0; i < 50; ++i) EXPECT_EQ(t1[i] + t2[i] + r2.residual[i], d1[i] + d2[i]);
  }
}

TEST(Densify, PreservesValuesAtIndices) {
  SparseUpdate u{5, {1, 4}, {2.5, -1}, 0.6};
  EXPECT_EQ(densify(u), (ParameterVector{0, 2.5, 0, 0, -1}));
}

TEST(SparseUpdate, ValidateRejectsBrokenInvariants) {
  EXPECT_THROW((SparseUpdate{3, {2, 1}, {1, 1}, 0.3}.validate()), Error);
  EXPECT_THROW((SparseUpdate{3, {3}, {1}, 0.3}.validate()), Error);
  EXPECT_THROW((SparseUpdate{3, {0}, {0.0}, 0.3}.validate()), Error);
  EXPECT_THROW((SparseUpdate{3, {0}, {1, 2}, 0.3}.validate()), Error);
  EXPECT_NO_THROW((SparseUpdate{3, {0, 2}, {1, 2}, 0.3}.validate()));
}

TEST(Schedule, DefaultStages) {
  EXPECT_DOUBLE_EQ(SparsitySchedule::mnist_default().at(0), 0.90);
  EXPECT_DOUBLE_EQ(SparsitySchedule::mnist_default().at(49), 0.90);
  EXPECT_DOUBLE_EQ(SparsitySchedule::mnist_default().at(50), 0.925);
  EXPECT_DOUBLE_EQ(SparsitySchedule::mnist_default().at(1000), 0.975);
  EXPECT_DOUBLE_EQ(SparsitySchedule::cifar_default().at(120), 0.90);
  EXPECT_DOUBLE_EQ(SparsitySchedule::cifar_default().at(119), 0.875);
}

TEST(Schedule, SingleEntryIsConstant) {
  SparsitySchedule s({{0, 0.7}});
  for (std::int64_t t : {0, 5, 500}) EXPECT_DOUBLE_EQ(sparsity_for_round(t, s), 0.7);
  EXPECT_THROW(SparsitySchedule(std::vector<SparsitySchedule::Step>{}), Error);
  EXPECT_THROW(SparsitySchedule({{0, 1.0}}), Error);
  EXPECT_THROW(SparsitySchedule({{5, 0.1}, {5, 0.2}}), Error);
}
