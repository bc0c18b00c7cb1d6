// Copyright 2026 The osp-kit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Table-driven HiF8 codec.
//
// A taper table assigns each exponent e a mantissa width m(e); the binade of e
// contributes the magnitudes (1 + f / 2^m(e)) * 2^e for f in [0, 2^m(e)). The
// table must yield exactly 128 magnitudes so that both signs fill the 256
// codes. Codes are sign-magnitude: bit 7 is the sign, the low 7 bits index the
// magnitudes in ascending order. One code is repurposed as exact zero
// (ZeroPolicy), so every code decodes to a distinct value.
//
// The default table has m = 3 on [-3, 3], m = 2 on {-5, -4, 4, 5, 6} and
// m = 1 on the remaining exponents of [-22, 15]. The published properties of
// the format (exponent range, central width, taper, uniqueness) hold for it;
// the field-level bit layout of the hardware format is not reproduced.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "osp/anyres.h"
#include "osp/attention.h"
#include "osp/gridseq.h"
#include "osp/skiparse.h"

namespace osp {

struct TaperEntry {
    int exponent = 0;
    int mantissa_bits = 0;
};

enum class ZeroPolicy {
    /// Code 0x80 (would be -2^emin) decodes to 0.
    ReplaceSmallestNegative,
    /// Code 0x00 (would be +2^emin) decodes to 0.
    ReplaceSmallestPositive,
};

struct CodePoint {
    std::uint8_t code = 0;
    bool zero = false;
    bool negative = false;
    int exponent = 0;
    int mantissa_bits = 0;
    std::uint32_t mantissa = 0;
    double value = 0.0;
};

class Hif8Spec {
public:
    /// Throws SpecError unless the exponents are contiguous, each width is in
    /// [0, 7], and the widths give exactly 128 magnitudes.
    explicit Hif8Spec(std::vector<TaperEntry> taper,
                      ZeroPolicy zero = ZeroPolicy::ReplaceSmallestNegative);

    static const Hif8Spec& default_spec();

    const std::vector<TaperEntry>& taper() const { return taper_; }
    ZeroPolicy zero_policy() const { return zero_; }
    int min_exponent() const { return taper_.front().exponent; }
    int max_exponent() const { return taper_.back().exponent; }
    /// Throws SpecError for exponents outside the table.
    int mantissa_bits(int exponent) const;
    /// 2^-(m(e)+1): worst relative rounding error inside a complete binade.
    double relative_error_bound(int exponent) const;

    double max_value() const { return sorted_values_.back(); }
    double min_value() const { return sorted_values_.front(); }
    std::uint8_t zero_code() const { return zero_code_; }

    double decode(std::uint8_t code) const { return points_[code].value; }
    const CodePoint& point(std::uint8_t code) const { return points_[code]; }
    const std::array<CodePoint, 256>& points() const { return points_; }

    /// Nearest code, ties to the even mantissa (zero counts as even; two even
    /// candidates resolve to the smaller magnitude). Saturates beyond the
    /// extreme values. Throws EncodeError for NaN or infinity.
    std::uint8_t encode(double x) const;

    /// Every decoded value in ascending order.
    const std::vector<double>& sorted_values() const { return sorted_values_; }

private:
    std::vector<TaperEntry> taper_;
    ZeroPolicy zero_;
    std::array<CodePoint, 256> points_{};
    std::vector<double> sorted_values_;
    std::vector<std::uint8_t> sorted_codes_;
    std::uint8_t zero_code_ = 0;
};

/// (code, value) for all 256 codes, in code order.
std::vector<std::pair<std::uint8_t, double>> enumerate_values(const Hif8Spec& spec);

enum class QuantMode { Forward, Backward };

std::string to_string(QuantMode mode);
QuantMode parse_quant_mode(const std::string& s);

/// Target maximum of the scaled tensor: 15 forward, 224 backward.
double hif8_target_max(QuantMode mode);

inline constexpr double kDefaultScaleEpsilon = 1e-12;

struct QuantizedTensor {
    CodeTensor codes;
    double scale = 1.0;
    QuantMode mode = QuantMode::Forward;
    double amax = 0.0;
};

/// Per-tensor current scaling: scale = target_max / (max|x| + eps), recomputed
/// from x on every call; codes = encode(x * scale).
QuantizedTensor quantize_tensor(const SequenceTensor& x, QuantMode mode,
                                const Hif8Spec& spec = Hif8Spec::default_spec(),
                                double epsilon = kDefaultScaleEpsilon);

SequenceTensor dequantize(const QuantizedTensor& q,
                          const Hif8Spec& spec = Hif8Spec::default_spec());

struct ErrorStats {
    double max_abs = 0.0;
    double mean_abs = 0.0;
    double max_rel = 0.0;
    double mean_rel = 0.0;
};

/// Relative errors skip reference entries that are exactly zero.
ErrorStats error_stats(const SequenceTensor& reference, const SequenceTensor& approx);

struct ProbeReport {
    double scale = 0.0;
    double amax = 0.0;
    ErrorStats input;
    ErrorStats output;
};

/// Skiparse attention on dequantize(quantize(x)) against attention on x.
ProbeReport quantized_attention_probe(const SequenceTensor& x, const PaddedGrid& pg,
                                      SparsePattern p, const Projections& proj,
                                      QuantMode mode = QuantMode::Forward,
                                      const Hif8Spec& spec = Hif8Spec::default_spec());

}  // namespace osp
