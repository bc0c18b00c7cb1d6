// Copyright 2026 The osp-kit Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "oracles.h"
#include "osp/hif8.h"

namespace osp {
namespace {

const Hif8Spec& spec() { return Hif8Spec::default_spec(); }

TEST(Hif8Format, AllCodesDistinct) {
    std::set<double> values;
    for (const auto& [code, v] : enumerate_values(spec())) values.insert(v);
    EXPECT_EQ(values.size(), 256u);
    const auto& sorted = spec().sorted_values();
    for (std::size_t i = 1; i < sorted.size(); ++i) EXPECT_LT(sorted[i - 1], sorted[i]);
}

TEST(Hif8Format, ValuesMatchIndependentOracle) {
    const auto mags = oracle::hif8_magnitudes();
    ASSERT_EQ(mags.size(), 128u);
    std::multiset<double> expected;
    for (double m : mags) {
        expected.insert(m);
        expected.insert(-m);
    }
    // The smallest negative magnitude is traded for zero.
    expected.erase(expected.find(-std::ldexp(1.0, -22)));
    expected.insert(0.0);
    std::multiset<double> got;
    for (const auto& p : spec().points()) got.insert(p.value);
    EXPECT_EQ(got, expected);
}

TEST(Hif8Format, ExponentRangeAndTaper) {
    std::set<int> exps;
    for (const auto& p : spec().points()) {
        if (!p.zero) exps.insert(p.exponent);
    }
    EXPECT_EQ(exps.size(), 38u);
    EXPECT_EQ(*exps.begin(), -22);
    EXPECT_EQ(*exps.rbegin(), 15);
    for (int e = -3; e <= 3; ++e) EXPECT_EQ(spec().mantissa_bits(e), 3);
    EXPECT_EQ(spec().mantissa_bits(-22), 1);
    EXPECT_EQ(spec().mantissa_bits(15), 1);
    for (int e = 4; e <= 15; ++e) EXPECT_LE(spec().mantissa_bits(e), spec().mantissa_bits(e - 1));
    for (int e = -22; e <= -4; ++e) {
        EXPECT_LE(spec().mantissa_bits(e), spec().mantissa_bits(e + 1));
    }
    EXPECT_THROW(spec().mantissa_bits(16), SpecError);
    EXPECT_DOUBLE_EQ(spec().max_value(), 49152.0);
    EXPECT_DOUBLE_EQ(spec().min_value(), -49152.0);
}

TEST(Hif8Format, CodeLayout) {
    EXPECT_EQ(spec().zero_code(), 0x80);
    EXPECT_EQ(spec().decode(0x80), 0.0);
    EXPECT_EQ(spec().decode(0x00), std::ldexp(1.0, -22));
    EXPECT_EQ(spec().decode(0x7f), 49152.0);
    EXPECT_EQ(spec().decode(0xff), -49152.0);
    for (int c = 1; c < 128; ++c) {
        EXPECT_EQ(spec().decode(static_cast<std::uint8_t>(c | 0x80)),
                  -spec().decode(static_cast<std::uint8_t>(c)));
    }
}

TEST(Hif8Format, SpecValidation) {
    EXPECT_THROW(Hif8Spec({}), SpecError);
    EXPECT_THROW(Hif8Spec({{0, 6}}), SpecError);
    EXPECT_NO_THROW(Hif8Spec({{0, 7}}));
    EXPECT_THROW(Hif8Spec({{0, 6}, {2, 6}}), SpecError);
    EXPECT_NO_THROW(Hif8Spec({{0, 6}, {1, 6}}));
    EXPECT_THROW(Hif8Spec({{0, 8}}), SpecError);
    const Hif8Spec pos({{0, 6}, {1, 6}}, ZeroPolicy::ReplaceSmallestPositive);
    EXPECT_EQ(pos.zero_code(), 0x00);
    EXPECT_EQ(pos.decode(0x80), -1.0);
}

TEST(Hif8Encode, SimpleValues) {
    EXPECT_EQ(spec().encode(0.0), spec().zero_code());
    EXPECT_EQ(spec().encode(-0.0), spec().zero_code());
    const auto one = spec().point(spec().encode(1.0));
    EXPECT_EQ(one.value, 1.0);
    EXPECT_EQ(one.exponent, 0);
    EXPECT_EQ(one.mantissa, 0u);
}

TEST(Hif8Encode, FixpointOnAllCodes) {
    for (int c = 0; c < 256; ++c) {
        const auto code = static_cast<std::uint8_t>(c);
        EXPECT_EQ(spec().encode(spec().decode(code)), code);
    }
}

TEST(Hif8Encode, TiesGoToEvenMantissa) {
    EXPECT_EQ(spec().decode(spec().encode(1.0625)), 1.0);
    EXPECT_EQ(spec().decode(spec().encode(1.1875)), 1.25);
    EXPECT_EQ(spec().decode(spec().encode(-1.1875)), -1.25);
    EXPECT_EQ(spec().decode(spec().encode(15.5)), 16.0);
    // Zero and +2^-22 are both even; the smaller magnitude wins.
    EXPECT_EQ(spec().decode(spec().encode(std::ldexp(1.0, -23))), 0.0);
    // Zero against -1.5 * 2^-22 (odd mantissa).
    EXPECT_EQ(spec().decode(spec().encode(-0.75 * std::ldexp(1.0, -22))), 0.0);
}

TEST(Hif8Encode, SaturatesAndRejectsNonFinite) {
    EXPECT_EQ(spec().decode(spec().encode(1e9)), 49152.0);
    EXPECT_EQ(spec().decode(spec().encode(-1e9)), -49152.0);
    EXPECT_THROW(spec().encode(std::nan("")), EncodeError);
    EXPECT_THROW(spec().encode(INFINITY), EncodeError);
    EXPECT_THROW(spec().encode(-INFINITY), EncodeError);
}

TEST(Hif8Encode, NearestMatchesLinearScan) {
    std::vector<double> values(spec().sorted_values());
    Rng rng(5);
    for (int i = 0; i < 20000; ++i) {
        const double e = rng.uniform(-24.0, 16.0);
        const double x = (rng.uniform() < 0.5 ? -1.0 : 1.0) * std::exp2(e);
        const double got = spec().decode(spec().encode(x));
        const double ref = oracle::nearest_linear(values, x);
        ASSERT_EQ(std::abs(got - x), std::abs(ref - x)) << x;
    }
}

TEST(Hif8Encode, WithinHalfGapEverywhere) {
    const auto& v = spec().sorted_values();
    Rng rng(6);
    for (int i = 0; i < 200000; ++i) {
        const double x = rng.uniform(v.front(), v.back());
        const auto hi = std::upper_bound(v.begin(), v.end(), x);
        const double gap = *hi - *(hi - 1);
        const double q = spec().decode(spec().encode(x));
        ASSERT_LE(std::abs(q - x), 0.5 * gap) << x;
    }
}

// Every binade is complete except the negative e = -22 one, whose lower
// endpoint became zero. There only the half-gap rule applies.
TEST(Hif8Encode, PerBinadeRelativeErrorBound) {
    Rng rng(7);
    const int points_per_binade = 1000000 / (38 * 2) + 1;
    for (int e = -22; e <= 15; ++e) {
        const double lo = std::ldexp(1.0, e);
        const double hi = std::min(std::ldexp(1.0, e + 1), spec().max_value());
        const double bound = spec().relative_error_bound(e);
        for (double sign : {1.0, -1.0}) {
            if (sign < 0 && e == -22) continue;
            double worst = 0.0;
            for (int i = 0; i < points_per_binade; ++i) {
                const double x = sign * (i == 0 ? lo : rng.uniform(lo, hi));
                const double q = spec().decode(spec().encode(x));
                worst = std::max(worst, std::abs(q - x) / std::abs(x));
            }
            EXPECT_LE(worst, bound) << "e=" << e << " sign=" << sign;
        }
    }
    EXPECT_DOUBLE_EQ(spec().relative_error_bound(0), 1.0 / 16);
}

TEST(Hif8Encode, IncompleteNegativeBinadeExceedsNominalBound) {
    const double x = -std::ldexp(1.0, -22);
    const double q = spec().decode(spec().encode(x));
    EXPECT_DOUBLE_EQ(q, -1.5 * std::ldexp(1.0, -22));
    EXPECT_GT(std::abs(q - x) / std::abs(x), spec().relative_error_bound(-22));
}

SequenceTensor with_amax(double amax, std::uint64_t seed) {
    auto x = random_tensor(1, 50, 2, seed, -amax / 2, amax / 2);
    x.data()[17] = -amax;
    return x;
}

TEST(Quantizer, ScalesFollowModeTargets) {
    EXPECT_EQ(hif8_target_max(QuantMode::Forward), 15.0);
    EXPECT_EQ(hif8_target_max(QuantMode::Backward), 224.0);
    for (double a : {30.0, 448.0}) {
        const auto f = quantize_tensor(with_amax(a, 1), QuantMode::Forward);
        const auto b = quantize_tensor(with_amax(a, 1), QuantMode::Backward);
        EXPECT_EQ(f.amax, a);
        EXPECT_NEAR(f.scale, 15.0 / (a + 1e-12), 1e-12);
        EXPECT_NEAR(b.scale, 224.0 / (a + 1e-12), 1e-12);
    }
    EXPECT_NEAR(quantize_tensor(with_amax(30, 2), QuantMode::Forward).scale, 0.5, 1e-12);
    EXPECT_NEAR(quantize_tensor(with_amax(448, 2), QuantMode::Backward).scale, 0.5, 1e-12);
}

TEST(Quantizer, ZerosStayZero) {
    const SequenceTensor z(2, 3, 4);
    const auto q = quantize_tensor(z, QuantMode::Forward);
    EXPECT_DOUBLE_EQ(q.scale, 15.0 / 1e-12);
    for (auto c : q.codes.data()) EXPECT_EQ(c, spec().zero_code());
    EXPECT_EQ(dequantize(q), z);
}

TEST(Quantizer, ElementErrorWithinBinadeBound) {
    const auto x = random_tensor(1, 4000, 8, 3, -30.0, 30.0);
    const auto q = quantize_tensor(x, QuantMode::Forward);
    const auto dq = dequantize(q);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double v = x.data()[i];
        if (std::abs(v) < q.amax * std::ldexp(1.0, -22)) continue;
        const int e = std::ilogb(v * q.scale);
        EXPECT_LE(std::abs(dq.data()[i] - v) / std::abs(v), spec().relative_error_bound(e));
    }
}

TEST(Quantizer, RepresentableInputsRoundTripExactly) {
    // An epsilon below the ulp of A_max makes the scale exactly 1/2.
    std::vector<double> data;
    for (double v : spec().sorted_values()) {
        if (std::abs(v) <= 15.0) data.push_back(2.0 * v);
    }
    const SequenceTensor x(1, data.size(), 1, data);
    const auto q = quantize_tensor(x, QuantMode::Forward, spec(), 1e-300);
    ASSERT_EQ(q.scale, 0.5);
    EXPECT_EQ(dequantize(q), x);
}

TEST(Quantizer, ScaleIsRecomputedPerCall) {
    const auto a = quantize_tensor(random_tensor(1, 10, 2, 1), QuantMode::Forward);
    const auto b = quantize_tensor(random_tensor(1, 10, 2, 2), QuantMode::Forward);
    EXPECT_NE(a.scale, b.scale);
    EXPECT_THROW(quantize_tensor(random_tensor(1, 1, 1, 1), QuantMode::Forward, spec(), 0.0), Error);
    SequenceTensor bad(1, 1, 1, std::nan(""));
    EXPECT_THROW(quantize_tensor(bad, QuantMode::Forward), EncodeError);
}

TEST(Quantizer, ModeNames) {
    EXPECT_EQ(parse_quant_mode(to_string(QuantMode::Forward)), QuantMode::Forward);
    EXPECT_EQ(parse_quant_mode(to_string(QuantMode::Backward)), QuantMode::Backward);
    EXPECT_THROW(parse_quant_mode("sideways"), Error);
}

TEST(Probe, ZeroTensorHasZeroError) {
    const auto pg = pad_grid(GridShape(1, 8, 8, 2));
    const auto r = quantized_attention_probe(SequenceTensor(1, 64, 4), pg, SparsePattern::TokenWise,
                                             Projections::random(4, 1));
    EXPECT_EQ(r.output.max_abs, 0.0);
    EXPECT_EQ(r.input.max_abs, 0.0);
}

TEST(Probe, InputErrorIndependentOfPattern) {
    const auto pg = pad_grid(GridShape(1, 8, 8, 2));
    const auto x = random_tensor(1, 64, 4, 9);
    const auto proj = Projections::random(4, 2);
    const auto o = quantized_attention_probe(x, pg, SparsePattern::Original, proj);
    const auto t = quantized_attention_probe(x, pg, SparsePattern::TokenWise, proj);
    const auto g = quantized_attention_probe(x, pg, SparsePattern::GroupWise, proj);
    EXPECT_EQ(o.scale, t.scale);
    EXPECT_EQ(o.input.max_rel, t.input.max_rel);
    EXPECT_EQ(o.input.mean_abs, g.input.mean_abs);
    // Scaled inputs lie in [-15, 15]; the loosest binade there has m = 1.
    EXPECT_LE(t.input.max_rel, 0.25);
    EXPECT_GT(t.output.max_abs, 0.0);
    EXPECT_TRUE(std::isfinite(t.output.max_rel));
}

}  // namespace
}  // namespace osp
