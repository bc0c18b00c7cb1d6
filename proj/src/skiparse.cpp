// Copyright 2026 The osp-kit Authors
// SPDX-License-Identifier: Apache-2.0

#include "osp/skiparse.h"

#include <algorithm>

#include "osp/rearrange.h"

namespace osp {

std::string_view to_string(SparsePattern p) {
    switch (p) {
        case SparsePattern::Original: return "orig";
        case SparsePattern::TokenWise: return "tsa";
        case SparsePattern::GroupWise: return "gsa";
    }
    return "?";
}

SparsePattern parse_pattern(std::string_view s) {
    if (s == "orig" || s == "original") return SparsePattern::Original;
    if (s == "tsa" || s == "token") return SparsePattern::TokenWise;
    if (s == "gsa" || s == "group") return SparsePattern::GroupWise;
    throw PatternError("unknown sparse pattern '" + std::string(s) + "'");
}

bool pattern_valid(const GridShape& g, SparsePattern p) {
    switch (p) {
        case SparsePattern::Original: return true;
        case SparsePattern::TokenWise: return g.divisible_by_k();
        case SparsePattern::GroupWise: return g.divisible_by_k2();
    }
    return false;
}

void require_pattern(const GridShape& g, SparsePattern p) {
    if (!pattern_valid(g, p)) {
        const std::string need = p == SparsePattern::TokenWise ? "k" : "k^2";
        throw PatternError(std::string(to_string(p)) + " on grid " + g.to_string() +
                           " needs H and W divisible by " + need + "; pad the grid first");
    }
}

namespace {

void require_k2(const GridShape& g, std::string_view what) {
    if (!g.divisible_by_k2()) {
        throw PatternError(std::string(what) + " on grid " + g.to_string() +
                           " needs H and W divisible by k^2; pad the grid first");
    }
}

AxisSizes tsa_sizes(const GridShape& g) {
    return {{"p", g.k}, {"q", g.k}, {"h", g.h / g.k}, {"w", g.w / g.k}};
}

AxisSizes gsa_sizes(const GridShape& g) {
    return {{"p1", g.k}, {"q1", g.k}, {"p2", g.k}, {"q2", g.k}, {"w", g.w / g.k2()}};
}

AxisSizes conversion_sizes(const GridShape& g) {
    return {{"p1", g.k}, {"q1", g.k}, {"p2", g.k}, {"q2", g.k}, {"w_q1", g.w / g.k2()}};
}

IndexMap build(std::string_view pattern, std::size_t in_batch, std::size_t in_seq,
               const AxisSizes& sizes) {
    return RearrangePattern(pattern).index_map(in_batch, in_seq, sizes);
}

}  // namespace

IndexMap orig_to_tsa(const GridShape& g, std::size_t batch) {
    require_pattern(g, SparsePattern::TokenWise);
    return build(patterns::kOrigToTsa, batch, g.seq_len(), tsa_sizes(g));
}

IndexMap tsa_to_orig(const GridShape& g, std::size_t batch) {
    require_pattern(g, SparsePattern::TokenWise);
    return build(patterns::kTsaToOrig, batch * g.k2(), g.seq_len() / g.k2(), tsa_sizes(g));
}

IndexMap orig_to_gsa(const GridShape& g, std::size_t batch) {
    require_k2(g, "orig_to_gsa");
    return build(patterns::kOrigToGsa, batch, g.seq_len(), gsa_sizes(g));
}

IndexMap gsa_to_orig(const GridShape& g, std::size_t batch) {
    require_k2(g, "gsa_to_orig");
    return build(patterns::kGsaToOrig, batch * g.k2(), g.seq_len() / g.k2(), gsa_sizes(g));
}

IndexMap tsa_to_gsa(const GridShape& g, std::size_t batch) {
    require_k2(g, "tsa_to_gsa");
    return build(patterns::kTsaToGsa, batch * g.k2(), g.seq_len() / g.k2(),
                 conversion_sizes(g));
}

IndexMap gsa_to_tsa(const GridShape& g, std::size_t batch) {
    require_k2(g, "gsa_to_tsa");
    return build(patterns::kGsaToTsa, batch * g.k2(), g.seq_len() / g.k2(),
                 conversion_sizes(g));
}

IndexMap pattern_map(const GridShape& g, SparsePattern p, std::size_t batch) {
    switch (p) {
        case SparsePattern::Original: return IndexMap::identity(batch, g.seq_len());
        case SparsePattern::TokenWise: return orig_to_tsa(g, batch);
        case SparsePattern::GroupWise: return orig_to_gsa(g, batch);
    }
    throw PatternError("unknown sparse pattern");
}

Slot slot_of(const GridShape& g, SparsePattern p, const GridCoord& coord) {
    require_pattern(g, p);
    const std::size_t k = g.k;
    const std::size_t sub_w = g.w / k;
    const std::size_t sub_h = g.h / k;
    switch (p) {
        case SparsePattern::Original:
            return {0, flatten_index(g, coord.t, coord.h, coord.w)};
        case SparsePattern::TokenWise:
            return {(coord.h % k) * k + coord.w % k,
                    (coord.t * sub_h + coord.h / k) * sub_w + coord.w / k};
        case SparsePattern::GroupWise: {
            const std::size_t k2 = g.k2();
            const std::size_t row = (coord.h / k2) * k + coord.h % k;
            const std::size_t col = (coord.w / k2) * k + coord.w % k;
            return {((coord.h / k) % k) * k + (coord.w / k) % k,
                    (coord.t * sub_h + row) * sub_w + col};
        }
    }
    throw PatternError("unknown sparse pattern");
}

std::vector<std::vector<std::size_t>> PatternAssignment::members() const {
    std::vector<std::vector<std::size_t>> out(num_subsequences,
                                              std::vector<std::size_t>(subseq_len));
    for (std::size_t token = 0; token < slots.size(); ++token) {
        out[slots[token].subsequence][slots[token].position] = token;
    }
    return out;
}

PatternAssignment assignment_of(const GridShape& g, SparsePattern p) {
    const IndexMap m = pattern_map(g, p, 1);
    PatternAssignment a;
    a.num_subsequences = m.out_batch();
    a.subseq_len = m.out_seq();
    a.slots.resize(g.seq_len());
    for (std::size_t b = 0; b < m.out_batch(); ++b) {
        for (std::size_t s = 0; s < m.out_seq(); ++s) {
            a.slots[m.source(b, s).seq] = {b, s};
        }
    }
    return a;
}

std::size_t reachability_hops(const GridShape& g) {
    require_k2(g, "reachability_hops");
    const auto tsa = assignment_of(g, SparsePattern::TokenWise);
    const auto gsa = assignment_of(g, SparsePattern::GroupWise);
    const std::size_t n = g.seq_len();
    auto tsa_edge = [&](std::size_t u, std::size_t v) {
        return tsa.slots[u].subsequence == tsa.slots[v].subsequence;
    };
    auto gsa_edge = [&](std::size_t u, std::size_t v) {
        return gsa.slots[u].subsequence == gsa.slots[v].subsequence;
    };

    std::size_t worst = 0;
    for (std::size_t u = 0; u < n; ++u) {
        for (std::size_t v = 0; v < n; ++v) {
            std::size_t hops = kUnreachable;
            if (tsa_edge(u, v) || gsa_edge(u, v)) {
                hops = 1;
            } else {
                for (std::size_t m = 0; m < n; ++m) {
                    if ((tsa_edge(u, m) && gsa_edge(m, v)) || (gsa_edge(u, m) && tsa_edge(m, v))) {
                        hops = 2;
                        break;
                    }
                }
            }
            worst = std::max(worst, hops);
            if (worst == kUnreachable) return worst;
        }
    }
    return worst;
}

bool local_equivalence_holds(const GridShape& g, SparsePattern p) {
    if (p == SparsePattern::Original) return true;
    require_k2(g, "local_equivalence_holds");
    const std::size_t k = g.k;
    const std::size_t k2 = g.k2();
    const GridShape unit(1, k2, k2, k);
    const GridShape sub_grid(g.t, g.h / k, g.w / k, 1);
    const GridShape unit_sub(1, k, k, 1);
    const auto global = assignment_of(g, p);
    const auto local = assignment_of(unit, p);

    for (std::size_t token = 0; token < g.seq_len(); ++token) {
        const GridCoord c = unflatten_index(g, token);
        const std::size_t bi = c.h / k2;
        const std::size_t bj = c.w / k2;
        const Slot gs = global.slots[token];
        const Slot ls = local.slots[flatten_index(unit, 0, c.h % k2, c.w % k2)];
        if (gs.subsequence != ls.subsequence) return false;
        const GridCoord gpos = unflatten_index(sub_grid, gs.position);
        const GridCoord lpos = unflatten_index(unit_sub, ls.position);
        if (gpos.t != c.t || gpos.h != bi * k + lpos.h || gpos.w != bj * k + lpos.w) return false;
    }
    return true;
}

std::string_view to_string(LayerKind kind) {
    switch (kind) {
        case LayerKind::Full: return "full";
        case LayerKind::TokenWise: return "tsa";
        case LayerKind::GroupWise: return "gsa";
    }
    return "?";
}

LayerSchedule build_layer_schedule(std::size_t num_layers, std::size_t n_full) {
    if (n_full % 2 != 0) {
        throw ScheduleError("n_full must be even, got " + std::to_string(n_full));
    }
    if (n_full > num_layers) {
        throw ScheduleError("n_full " + std::to_string(n_full) + " exceeds " +
                            std::to_string(num_layers) + " layers");
    }
    LayerSchedule s;
    s.layers.reserve(num_layers);
    const std::size_t head = n_full / 2;
    for (std::size_t i = 0; i < num_layers; ++i) {
        if (i < head || i >= num_layers - head) {
            s.layers.push_back(LayerKind::Full);
        } else {
            s.layers.push_back((i - head) % 2 == 0 ? LayerKind::TokenWise : LayerKind::GroupWise);
        }
    }
    return s;
}

}  // namespace osp
