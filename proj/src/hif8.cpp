// Copyright 2026 The osp-kit Authors
// SPDX-License-Identifier: Apache-2.0

#include "osp/hif8.h"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace osp {
namespace {

constexpr std::size_t kMagnitudes = 128;

std::vector<TaperEntry> default_taper() {
    std::vector<TaperEntry> t;
    for (int e = -22; e <= 15; ++e) {
        int m = 1;
        if (e >= -3 && e <= 3) {
            m = 3;
        } else if (e == -5 || e == -4 || (e >= 4 && e <= 6)) {
            m = 2;
        }
        t.push_back({e, m});
    }
    return t;
}

bool even_mantissa(const CodePoint& p) { return p.zero || p.mantissa % 2 == 0; }

}  // namespace

Hif8Spec::Hif8Spec(std::vector<TaperEntry> taper, ZeroPolicy zero)
    : taper_(std::move(taper)), zero_(zero) {
    if (taper_.empty()) throw SpecError("taper table is empty");
    std::size_t magnitudes = 0;
    for (std::size_t i = 0; i < taper_.size(); ++i) {
        if (i > 0 && taper_[i].exponent != taper_[i - 1].exponent + 1) {
            throw SpecError("taper exponents must be contiguous and ascending");
        }
        if (taper_[i].mantissa_bits < 0 || taper_[i].mantissa_bits > 7) {
            throw SpecError("mantissa width must be in [0, 7]");
        }
        magnitudes += std::size_t{1} << taper_[i].mantissa_bits;
    }
    if (magnitudes != kMagnitudes) {
        throw SpecError("taper table yields " + std::to_string(magnitudes) +
                        " magnitudes per sign, need 128");
    }

    std::size_t idx = 0;
    for (const TaperEntry& t : taper_) {
        const std::uint32_t steps = 1u << t.mantissa_bits;
        for (std::uint32_t f = 0; f < steps; ++f, ++idx) {
            const double mag =
                std::ldexp(1.0 + static_cast<double>(f) / static_cast<double>(steps), t.exponent);
            for (int sign = 0; sign < 2; ++sign) {
                const auto code = static_cast<std::uint8_t>((sign << 7) | idx);
                points_[code] = {code, false, sign == 1, t.exponent, t.mantissa_bits, f,
                                 sign == 1 ? -mag : mag};
            }
        }
    }
    zero_code_ = zero_ == ZeroPolicy::ReplaceSmallestNegative ? 0x80 : 0x00;
    points_[zero_code_] = {zero_code_, true, false, 0, 0, 0, 0.0};

    std::vector<std::uint8_t> order(256);
    std::iota(order.begin(), order.end(), std::uint8_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::uint8_t a, std::uint8_t b) { return points_[a].value < points_[b].value; });
    sorted_codes_ = order;
    sorted_values_.reserve(256);
    for (std::uint8_t c : order) sorted_values_.push_back(points_[c].value);
    for (std::size_t i = 1; i < sorted_values_.size(); ++i) {
        if (!(sorted_values_[i - 1] < sorted_values_[i])) {
            throw SpecError("taper table produces duplicate values");
        }
    }
}

const Hif8Spec& Hif8Spec::default_spec() {
    static const Hif8Spec spec(default_taper());
    return spec;
}

int Hif8Spec::mantissa_bits(int exponent) const {
    if (exponent < min_exponent() || exponent > max_exponent()) {
        throw SpecError("exponent " + std::to_string(exponent) + " outside the taper table");
    }
    return taper_[static_cast<std::size_t>(exponent - min_exponent())].mantissa_bits;
}

double Hif8Spec::relative_error_bound(int exponent) const {
    return std::ldexp(1.0, -(mantissa_bits(exponent) + 1));
}

std::uint8_t Hif8Spec::encode(double x) const {
    if (!std::isfinite(x)) throw EncodeError("cannot encode a non-finite value");
    if (x >= sorted_values_.back()) return sorted_codes_.back();
    if (x <= sorted_values_.front()) return sorted_codes_.front();
    const auto hi_it = std::upper_bound(sorted_values_.begin(), sorted_values_.end(), x);
    const auto hi = static_cast<std::size_t>(hi_it - sorted_values_.begin());
    const std::size_t lo = hi - 1;
    const double d_lo = x - sorted_values_[lo];
    const double d_hi = sorted_values_[hi] - x;
    if (d_lo < d_hi) return sorted_codes_[lo];
    if (d_hi < d_lo) return sorted_codes_[hi];
    const CodePoint& a = points_[sorted_codes_[lo]];
    const CodePoint& b = points_[sorted_codes_[hi]];
    const bool a_even = even_mantissa(a);
    const bool b_even = even_mantissa(b);
    if (a_even != b_even) return a_even ? a.code : b.code;
    return std::abs(a.value) <= std::abs(b.value) ? a.code : b.code;
}

std::vector<std::pair<std::uint8_t, double>> enumerate_values(const Hif8Spec& spec) {
    std::vector<std::pair<std::uint8_t, double>> out;
    out.reserve(256);
    for (const CodePoint& p : spec.points()) out.emplace_back(p.code, p.value);
    return out;
}

std::string to_string(QuantMode mode) {
    return mode == QuantMode::Forward ? "forward" : "backward";
}

QuantMode parse_quant_mode(const std::string& s) {
    if (s == "forward") return QuantMode::Forward;
    if (s == "backward") return QuantMode::Backward;
    throw Error("unknown quantization mode '" + s + "' (forward|backward)");
}

double hif8_target_max(QuantMode mode) { return mode == QuantMode::Forward ? 15.0 : 224.0; }

QuantizedTensor quantize_tensor(const SequenceTensor& x, QuantMode mode, const Hif8Spec& spec,
                                double epsilon) {
    if (!(epsilon > 0.0)) throw Error("scale epsilon must be positive");
    double amax = 0.0;
    for (double v : x.data()) {
        if (!std::isfinite(v)) throw EncodeError("cannot quantize a tensor with non-finite values");
        amax = std::max(amax, std::abs(v));
    }
    const double target = hif8_target_max(mode);
    QuantizedTensor q;
    q.mode = mode;
    q.amax = amax;
    q.scale = target / (amax + epsilon);
    q.codes = CodeTensor(x.batch(), x.seq(), x.chan());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double scaled = x.data()[i] * q.scale;
        // amax * target / (amax + eps) < target, so this cannot saturate.
        if (std::abs(scaled) > target || std::abs(scaled) > spec.max_value()) {
            throw EncodeError("scaled value exceeds the quantization target");
        }
        q.codes.data()[i] = spec.encode(scaled);
    }
    return q;
}

SequenceTensor dequantize(const QuantizedTensor& q, const Hif8Spec& spec) {
    if (!(q.scale > 0.0)) throw Error("dequantize needs a positive scale");
    SequenceTensor out(q.codes.batch(), q.codes.seq(), q.codes.chan());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out.data()[i] = spec.decode(q.codes.data()[i]) / q.scale;
    }
    return out;
}

ErrorStats error_stats(const SequenceTensor& reference, const SequenceTensor& approx) {
    if (!reference.same_shape(approx)) throw ShapeError("error_stats: shapes differ");
    ErrorStats s;
    std::size_t rel_count = 0;
    double abs_sum = 0.0;
    double rel_sum = 0.0;
    for (std::size_t i = 0; i < reference.size(); ++i) {
        const double r = reference.data()[i];
        const double e = std::abs(approx.data()[i] - r);
        s.max_abs = std::max(s.max_abs, e);
        abs_sum += e;
        if (r != 0.0) {
            const double rel = e / std::abs(r);
            s.max_rel = std::max(s.max_rel, rel);
            rel_sum += rel;
            ++rel_count;
        }
    }
    if (reference.size() > 0) s.mean_abs = abs_sum / static_cast<double>(reference.size());
    if (rel_count > 0) s.mean_rel = rel_sum / static_cast<double>(rel_count);
    return s;
}

ProbeReport quantized_attention_probe(const SequenceTensor& x, const PaddedGrid& pg,
                                      SparsePattern p, const Projections& proj, QuantMode mode,
                                      const Hif8Spec& spec) {
    const QuantizedTensor q = quantize_tensor(x, mode, spec);
    const SequenceTensor xq = dequantize(q, spec);
    ProbeReport r;
    r.scale = q.scale;
    r.amax = q.amax;
    r.input = error_stats(x, xq);
    r.output = error_stats(skiparse_attention(x, pg, p, proj), skiparse_attention(xq, pg, p, proj));
    return r;
}

}  // namespace osp
