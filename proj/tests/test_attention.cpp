// Copyright 2026 The osp-kit Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "oracles.h"
#include "osp/attention.h"

namespace osp {
namespace {

AttentionInputs random_inputs(std::size_t b, std::size_t s, std::size_t c, std::uint64_t seed) {
    return {random_tensor(b, s, c, seed), random_tensor(b, s, c, seed + 1),
            random_tensor(b, s, c, seed + 2), std::nullopt};
}

TEST(DenseAttention, SingleKeyReturnsValue) {
    const auto in = random_inputs(3, 1, 4, 1);
    EXPECT_EQ(dense_attention(in), in.v);
}

TEST(DenseAttention, UniformScoresAverageValues) {
    AttentionInputs in{SequenceTensor(1, 3, 2), random_tensor(1, 3, 2, 5), random_tensor(1, 3, 2, 6),
                       std::nullopt};
    // q = 0 makes every score 0.
    const auto out = dense_attention(in);
    for (std::size_t c = 0; c < 2; ++c) {
        const double mean = (in.v.at(0, 0, c) + in.v.at(0, 1, c) + in.v.at(0, 2, c)) / 3.0;
        for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(out.at(0, i, c), mean, 1e-15);
    }
}

TEST(DenseAttention, MatchesNaiveOracle) {
    const auto in = random_inputs(1, 4, 2, 10);
    const auto ref = oracle::naive_attention(in.q, in.k, in.v, [](auto, auto, auto) { return true; });
    EXPECT_LE(max_abs_diff(dense_attention(in), ref), 1e-12);
    const auto big = random_inputs(3, 17, 5, 20);
    const auto ref_big =
        oracle::naive_attention(big.q, big.k, big.v, [](auto, auto, auto) { return true; });
    EXPECT_LE(max_abs_diff(dense_attention(big), ref_big), 1e-12);
}

TEST(DenseAttention, KeyMaskExcludesKeysAndZeroesEmptyRows) {
    auto in = random_inputs(2, 5, 3, 30);
    in.key_mask = std::vector<std::uint8_t>{1, 0, 1, 0, 1, 0, 0, 0, 0, 0};
    const auto out = dense_attention(in);
    const auto ref = oracle::naive_attention(in.q, in.k, in.v, [&](auto b, auto, auto j) {
        return (*in.key_mask)[b * 5 + j] != 0;
    });
    EXPECT_LE(max_abs_diff(out, ref), 1e-12);
    for (std::size_t s = 0; s < 5; ++s) {
        for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(out.at(1, s, c), 0.0);
    }
}

TEST(DenseAttention, RowsSumToOneOverUnmaskedKeys) {
    auto in = random_inputs(1, 9, 4, 40);
    in.key_mask = std::vector<std::uint8_t>{1, 1, 0, 1, 0, 1, 1, 1, 0};
    const auto w = attention_weights(in, 0);
    for (std::size_t i = 0; i < 9; ++i) {
        double sum = 0;
        for (std::size_t j = 0; j < 9; ++j) {
            if ((*in.key_mask)[j] == 0) {
                EXPECT_EQ(w[i * 9 + j], 0.0);
            }
            sum += w[i * 9 + j];
        }
        EXPECT_NEAR(sum, 1.0, 1e-14);
    }
}

TEST(DenseAttention, Validation) {
    AttentionInputs bad{SequenceTensor(1, 2, 2), SequenceTensor(1, 3, 2), SequenceTensor(1, 2, 2),
                        std::nullopt};
    EXPECT_THROW(dense_attention(bad), ShapeError);
    auto in = random_inputs(1, 2, 2, 0);
    in.key_mask = std::vector<std::uint8_t>{1};
    EXPECT_THROW(dense_attention(in), ShapeError);
}

// Dense attention over the padded grid where (i, j) interact iff both are real
// and share a pattern class, with classes taken from coordinates.
SequenceTensor class_mask_oracle(const SequenceTensor& x, const PaddedGrid& pg, SparsePattern p,
                                 const Projections& proj) {
    const auto in = proj.project(x);
    const GridShape& g = pg.padded;
    auto cls = [&](std::size_t i) {
        const GridCoord c = unflatten_index(g, i);
        if (p == SparsePattern::Original) return std::size_t{0};
        return p == SparsePattern::TokenWise ? oracle::tsa_class(c.h, c.w, g.k)
                                             : oracle::gsa_class(c.h, c.w, g.k);
    };
    return oracle::naive_attention(in.q, in.k, in.v, [&](auto, auto i, auto j) {
        return pg.is_real(i) && pg.is_real(j) && cls(i) == cls(j);
    });
}

TEST(SkiparseAttention, OriginalEqualsDense) {
    const GridShape g(1, 4, 4, 2);
    const auto x = random_tensor(2, 16, 3, 1);
    const auto proj = Projections::random(3, 2);
    EXPECT_LE(max_abs_diff(skiparse_attention(x, g, SparsePattern::Original, proj),
                           dense_attention(proj.project(x))),
              1e-15);
}

TEST(SkiparseAttention, EqualsMaskOraclesOnAllGrids) {
    const std::vector<GridShape> grids = {GridShape(1, 4, 4, 2), GridShape(2, 4, 4, 2),
                                          GridShape(1, 8, 8, 2), GridShape(1, 9, 9, 3),
                                          GridShape(1, 5, 6, 2)};
    const auto proj = Projections::random(4, 77);
    for (const auto& g : grids) {
        const auto pg = pad_grid(g);
        const auto x = pad_tensor(random_tensor(2, g.seq_len(), 4, 5), pg);
        for (auto p : {SparsePattern::TokenWise, SparsePattern::GroupWise}) {
            const auto got = skiparse_attention(x, pg, p, proj);
            EXPECT_LE(max_abs_diff(got, class_mask_oracle(x, pg, p, proj)), 1e-10) << g.to_string();
            EXPECT_LE(max_abs_diff(got, reference::pattern_attention(x, pg, p, proj)), 1e-10);
            if (pg.trivial()) {
                EXPECT_LE(max_abs_diff(got, skiparse_attention(x, g, p, proj)), 0.0);
            }
        }
    }
}

TEST(SkiparseAttention, TokenWiseNeedsOnlyK) {
    const GridShape g(1, 6, 6, 2);
    const auto x = random_tensor(1, 36, 2, 3);
    const auto proj = Projections::identity(2);
    const auto got = skiparse_attention(x, g, SparsePattern::TokenWise, proj);
    EXPECT_LE(max_abs_diff(got, class_mask_oracle(x, unpadded(g), SparsePattern::TokenWise, proj)),
              1e-10);
    EXPECT_THROW(skiparse_attention(x, g, SparsePattern::GroupWise, proj), PatternError);
}

TEST(SkiparseAttention, PermutationWithinSubsequenceIsEquivariant) {
    const GridShape g(1, 4, 4, 2);
    const auto x = random_tensor(1, 16, 3, 8);
    const auto proj = Projections::random(3, 9);
    // Swap tokens 0 and 10: both in TSA class (0, 0).
    std::vector<Address> e;
    for (std::size_t s = 0; s < 16; ++s) e.push_back({0, s});
    std::swap(e[0], e[10]);
    const IndexMap swap(1, 16, 1, 16, e);
    const auto out = skiparse_attention(x, g, SparsePattern::TokenWise, proj);
    const auto out_perm =
        skiparse_attention(apply_index_map(x, swap), g, SparsePattern::TokenWise, proj);
    EXPECT_LE(max_abs_diff(apply_index_map(out, swap), out_perm), 1e-14);
}

TEST(FlopReport, Ratios) {
    EXPECT_DOUBLE_EQ(flop_report(GridShape(1, 4, 4, 1), SparsePattern::TokenWise).ratio, 1.0);
    const auto r2 = flop_report(GridShape(1, 8, 8, 2), SparsePattern::TokenWise);
    EXPECT_DOUBLE_EQ(r2.ratio, 0.25);
    EXPECT_DOUBLE_EQ(r2.one_over_k2, 0.25);
    EXPECT_DOUBLE_EQ(r2.one_over_k, 0.5);
    EXPECT_EQ(r2.full_flops, 2u * 64 * 64);
    EXPECT_EQ(r2.sparse_flops, 4u * 2 * 16 * 16);
    EXPECT_DOUBLE_EQ(flop_report(GridShape(1, 9, 9, 3), SparsePattern::GroupWise).ratio, 1.0 / 9);
    EXPECT_DOUBLE_EQ(flop_report(GridShape(1, 8, 8, 2), SparsePattern::Original).ratio, 1.0);
}

TEST(Projections, RandomIsSeededAndBounded) {
    const auto x = random_tensor(1, 3, 4, 1);
    EXPECT_EQ(Projections::random(4, 5).project(x).q, Projections::random(4, 5).project(x).q);
    EXPECT_NE(Projections::random(4, 5).project(x).q, Projections::random(4, 6).project(x).q);
    const auto id = Projections::identity(4).project(x);
    EXPECT_EQ(id.q, x);
    EXPECT_EQ(id.v, x);
}

}  // namespace
}  // namespace osp
