// Copyright 2026 The osp-kit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Skiparse-2D rearranges. A grid (T, H, W) with sparse ratio k is split into
// k*k subsequences per batch item, stacked along the batch axis in
// (p q b) order. Every subsequence is itself a (T, H/k, W/k) grid in
// row-major order.
//
//   token-wise (TSA):  row r, col c -> subsequence (r mod k, c mod k)
//   group-wise (GSA):  row r, col c -> subsequence ((r/k) mod k, (c/k) mod k)

#pragma once

#include <cstddef>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "osp/gridseq.h"

namespace osp {

enum class SparsePattern { Original, TokenWise, GroupWise };

std::string_view to_string(SparsePattern p);
/// Accepts "orig"/"original", "tsa"/"token", "gsa"/"group".
SparsePattern parse_pattern(std::string_view s);

namespace patterns {
inline constexpr std::string_view kOrigToTsa = "b (t h p w q) c -> (p q b) (t h w) c";
inline constexpr std::string_view kTsaToOrig = "(p q b) (t h w) c -> b (t h p w q) c";
inline constexpr std::string_view kOrigToGsa =
    "b (txh p1 p2 w q1 q2) c -> (p1 q1 b) (txh p2 w q2) c";
inline constexpr std::string_view kGsaToOrig =
    "(p1 q1 b) (txh p2 w q2) c -> b (txh p1 p2 w q1 q2) c";
inline constexpr std::string_view kTsaToGsa =
    "(p2 q2 b) (txh_p1 p1 w_q1 q1) c -> (p1 q1 b) (txh_p1 p2 w_q1 q2) c";
inline constexpr std::string_view kGsaToTsa =
    "(p1 q1 b) (txh_p1 p2 w_q1 q2) c -> (p2 q2 b) (txh_p1 p1 w_q1 q1) c";
}  // namespace patterns

/// Whether `p` can be applied to `g` without padding. Token-wise needs H, W
/// divisible by k; group-wise (and any TSA/GSA stack) needs k*k.
bool pattern_valid(const GridShape& g, SparsePattern p);
void require_pattern(const GridShape& g, SparsePattern p);

IndexMap orig_to_tsa(const GridShape& g, std::size_t batch = 1);
IndexMap tsa_to_orig(const GridShape& g, std::size_t batch = 1);
IndexMap orig_to_gsa(const GridShape& g, std::size_t batch = 1);
IndexMap gsa_to_orig(const GridShape& g, std::size_t batch = 1);
IndexMap tsa_to_gsa(const GridShape& g, std::size_t batch = 1);
IndexMap gsa_to_tsa(const GridShape& g, std::size_t batch = 1);

/// orig -> pattern layout. Original yields the identity map.
IndexMap pattern_map(const GridShape& g, SparsePattern p, std::size_t batch = 1);

/// Where one token lands: subsequence id within its batch item's k*k block,
/// and its position inside that subsequence.
struct Slot {
    std::size_t subsequence = 0;
    std::size_t position = 0;

    friend bool operator==(const Slot&, const Slot&) = default;
};

/// Closed-form slot of the token at `coord`, computed from coordinates alone.
Slot slot_of(const GridShape& g, SparsePattern p, const GridCoord& coord);

struct PatternAssignment {
    std::size_t num_subsequences = 1;
    std::size_t subseq_len = 0;
    /// Indexed by flat token index of a single batch item.
    std::vector<Slot> slots;

    /// Members of every subsequence, ordered by position.
    std::vector<std::vector<std::size_t>> members() const;
};

/// Assignment read off the pattern's IndexMap.
PatternAssignment assignment_of(const GridShape& g, SparsePattern p);

inline constexpr std::size_t kUnreachable = std::numeric_limits<std::size_t>::max();

/// Max over ordered token pairs of the fewest alternating TSA/GSA attention
/// hops that connect them; kUnreachable if some pair needs more than two.
std::size_t reachability_hops(const GridShape& g);

/// True when the global rearrange, restricted to each k^2 x k^2 subfigure,
/// matches the rearrange of that subfigure alone placed at its block offset.
bool local_equivalence_holds(const GridShape& g, SparsePattern p);

enum class LayerKind { Full, TokenWise, GroupWise };

std::string_view to_string(LayerKind kind);

struct LayerSchedule {
    std::vector<LayerKind> layers;
};

/// Full attention for the first and last n_full/2 layers; the middle
/// alternates TSA, GSA, TSA, ...
LayerSchedule build_layer_schedule(std::size_t num_layers, std::size_t n_full);

}  // namespace osp
