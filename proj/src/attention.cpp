// Copyright 2026 The osp-kit Authors
// SPDX-License-Identifier: Apache-2.0

#include "osp/attention.h"

#include <algorithm>
#include <cmath>
#include <limits>

namespace osp {

void AttentionInputs::validate() const {
    if (!q.same_shape(k) || !q.same_shape(v)) {
        throw ShapeError("attention q, k, v shapes differ");
    }
    if (q.chan() == 0) throw ShapeError("attention needs at least one channel");
    if (key_mask && key_mask->size() != q.batch() * q.seq()) {
        throw ShapeError("attention key mask has " + std::to_string(key_mask->size()) +
                         " flags for " + std::to_string(q.batch() * q.seq()) + " keys");
    }
}

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

// Normalized softmax weights of one query row, written into `weights`.
// Returns false when no key is allowed.
template <typename Allowed>
bool softmax_row(const AttentionInputs& in, std::size_t b, std::size_t i, Allowed&& allowed,
                 std::vector<double>& weights) {
    const std::size_t n = in.q.seq();
    const double temperature = 1.0 / std::sqrt(static_cast<double>(in.q.chan()));
    weights.assign(n, 0.0);
    double row_max = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (std::size_t j = 0; j < n; ++j) {
        if (!allowed(j)) continue;
        weights[j] = dot(in.q.row(b, i), in.k.row(b, j)) * temperature;
        row_max = std::max(row_max, weights[j]);
        any = true;
    }
    if (!any) return false;
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        if (!allowed(j)) continue;
        weights[j] = std::exp(weights[j] - row_max);
        total += weights[j];
    }
    for (double& w : weights) w /= total;
    return true;
}

template <typename AllowedFactory>
SequenceTensor attend(const AttentionInputs& in, AllowedFactory&& allowed_for) {
    SequenceTensor out(in.q.batch(), in.q.seq(), in.q.chan());
    std::vector<double> weights;
    for (std::size_t b = 0; b < in.q.batch(); ++b) {
        for (std::size_t i = 0; i < in.q.seq(); ++i) {
            if (!softmax_row(in, b, i, allowed_for(b, i), weights)) continue;
            auto o = out.row(b, i);
            for (std::size_t j = 0; j < in.q.seq(); ++j) {
                if (weights[j] == 0.0) continue;
                auto vj = in.v.row(b, j);
                for (std::size_t c = 0; c < o.size(); ++c) o[c] += weights[j] * vj[c];
            }
        }
    }
    return out;
}

auto key_mask_predicate(const AttentionInputs& in) {
    return [&in](std::size_t b, std::size_t) {
        return [&in, b](std::size_t j) {
            return !in.key_mask || (*in.key_mask)[b * in.q.seq() + j] != 0;
        };
    };
}

}  // namespace

SequenceTensor dense_attention(const AttentionInputs& in) {
    in.validate();
    return attend(in, key_mask_predicate(in));
}

std::vector<double> attention_weights(const AttentionInputs& in, std::size_t batch) {
    in.validate();
    if (batch >= in.q.batch()) throw ShapeError("attention_weights: batch index out of range");
    const std::size_t n = in.q.seq();
    std::vector<double> all(n * n, 0.0);
    std::vector<double> row;
    auto allowed = key_mask_predicate(in);
    for (std::size_t i = 0; i < n; ++i) {
        if (softmax_row(in, batch, i, allowed(batch, i), row)) {
            std::copy(row.begin(), row.end(), all.begin() + static_cast<std::ptrdiff_t>(i * n));
        }
    }
    return all;
}

Projections::Projections(std::size_t chan, std::vector<double> wq, std::vector<double> wk,
                         std::vector<double> wv)
    : chan_(chan), wq_(std::move(wq)), wk_(std::move(wk)), wv_(std::move(wv)) {}

Projections Projections::identity(std::size_t chan) {
    std::vector<double> eye(chan * chan, 0.0);
    for (std::size_t i = 0; i < chan; ++i) eye[i * chan + i] = 1.0;
    return Projections(chan, eye, eye, eye);
}

Projections Projections::random(std::size_t chan, std::uint64_t seed) {
    Rng rng(seed);
    const double scale = 1.0 / std::sqrt(static_cast<double>(chan));
    auto draw = [&] {
        std::vector<double> w(chan * chan);
        for (double& x : w) x = rng.uniform(-1.0, 1.0) * scale;
        return w;
    };
    auto wq = draw();
    auto wk = draw();
    auto wv = draw();
    return Projections(chan, std::move(wq), std::move(wk), std::move(wv));
}

SequenceTensor Projections::apply(const SequenceTensor& x, const std::vector<double>& w,
                                  std::size_t chan) {
    SequenceTensor out(x.batch(), x.seq(), chan);
    for (std::size_t b = 0; b < x.batch(); ++b) {
        for (std::size_t s = 0; s < x.seq(); ++s) {
            auto in = x.row(b, s);
            auto o = out.row(b, s);
            for (std::size_t r = 0; r < chan; ++r) {
                double acc = 0.0;
                for (std::size_t c = 0; c < chan; ++c) acc += w[r * chan + c] * in[c];
                o[r] = acc;
            }
        }
    }
    return out;
}

AttentionInputs Projections::project(const SequenceTensor& x) const {
    if (x.chan() != chan_) {
        throw ShapeError("projection expects " + std::to_string(chan_) + " channels, got " +
                         std::to_string(x.chan()));
    }
    return {apply(x, wq_, chan_), apply(x, wk_, chan_), apply(x, wv_, chan_), std::nullopt};
}

SequenceTensor skiparse_attention(const SequenceTensor& x, const GridShape& g, SparsePattern p,
                                  const Projections& proj) {
    return skiparse_attention(x, unpadded(g), p, proj);
}

SequenceTensor skiparse_attention(const SequenceTensor& x, const PaddedGrid& pg, SparsePattern p,
                                  const Projections& proj) {
    const GridShape& g = pg.padded;
    if (x.seq() != g.seq_len()) {
        throw ShapeError("skiparse_attention: tensor seq " + std::to_string(x.seq()) +
                         " does not match grid " + g.to_string());
    }
    if (p != SparsePattern::Original) require_pattern(g, p);
    const IndexMap to_pattern = pattern_map(g, p, x.batch());
    const IndexMap back = to_pattern.inverse();

    AttentionInputs in = proj.project(apply_index_map(x, to_pattern));
    if (!pg.trivial()) in.key_mask = batched_key_mask(pg, p, x.batch());
    SequenceTensor out = apply_index_map(dense_attention(in), back);

    if (!pg.trivial()) {
        for (std::size_t b = 0; b < out.batch(); ++b) {
            for (std::size_t s = 0; s < out.seq(); ++s) {
                if (!pg.is_real(s)) std::ranges::fill(out.row(b, s), 0.0);
            }
        }
    }
    return out;
}

namespace reference {

SequenceTensor masked_attention(const AttentionInputs& in, const PairMask& allowed) {
    in.validate();
    return attend(in, [&allowed](std::size_t, std::size_t i) {
        return [&allowed, i](std::size_t j) { return allowed(i, j); };
    });
}

SequenceTensor pattern_attention(const SequenceTensor& x, const PaddedGrid& pg, SparsePattern p,
                                 const Projections& proj) {
    const GridShape& g = pg.padded;
    std::vector<std::size_t> group(g.seq_len());
    for (std::size_t i = 0; i < g.seq_len(); ++i) {
        group[i] = slot_of(g, p, unflatten_index(g, i)).subsequence;
    }
    const auto real = pg.flags();
    return masked_attention(proj.project(x), [&](std::size_t u, std::size_t v) {
        return real[u] != 0 && real[v] != 0 && group[u] == group[v];
    });
}

}  // namespace reference

FlopReport flop_report(const GridShape& g, SparsePattern p, std::size_t chan) {
    const PatternAssignment a = assignment_of(g, p);
    std::vector<std::size_t> lengths(a.num_subsequences, 0);
    for (const Slot& s : a.slots) ++lengths[s.subsequence];

    FlopReport r;
    const std::size_t n = g.seq_len();
    r.full_flops = 2 * n * n * chan;
    for (std::size_t len : lengths) r.sparse_flops += 2 * len * len * chan;
    r.ratio = static_cast<double>(r.sparse_flops) / static_cast<double>(r.full_flops);
    if (p != SparsePattern::Original) {
        r.one_over_k = 1.0 / static_cast<double>(g.k);
        r.one_over_k2 = 1.0 / static_cast<double>(g.k2());
    }
    return r;
}

double max_abs_diff(const SequenceTensor& a, const SequenceTensor& b) {
    if (!a.same_shape(b)) throw ShapeError("max_abs_diff: shapes differ");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
    return m;
}

}  // namespace osp
