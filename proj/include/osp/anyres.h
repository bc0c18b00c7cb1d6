// Copyright 2026 The osp-kit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Any-resolution support: H and W are padded at their ends up to the next
// multiple of k^2, which keeps every k^2 x k^2 subfigure intact. Padding is
// tracked with a 1-D validity mask over the flattened padded sequence.

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "osp/gridseq.h"
#include "osp/skiparse.h"

namespace osp {

struct PaddedGrid {
    GridShape original;
    GridShape padded;
    /// One flag per padded token (1 real, 0 pad). Empty when no padding was
    /// needed.
    std::optional<std::vector<std::uint8_t>> mask;
    /// Flat padded index of every real token, in original order.
    std::vector<std::size_t> embedding;

    bool trivial() const { return !mask.has_value(); }
    bool is_real(std::size_t padded_index) const { return trivial() || (*mask)[padded_index] != 0; }
    std::size_t real_count() const { return original.seq_len(); }
    /// Dense 0/1 flags, materialized even when the mask is trivial.
    std::vector<std::uint8_t> flags() const;
};

PaddedGrid pad_grid(const GridShape& g);

/// Trivial PaddedGrid over g as-is, whatever its divisibility.
PaddedGrid unpadded(const GridShape& g);

/// Places an original-layout tensor into the padded layout; pads get `fill`.
SequenceTensor pad_tensor(const SequenceTensor& x, const PaddedGrid& pg, double fill = 0.0);

/// Inverse of pad_tensor: real tokens only, in original order.
SequenceTensor strip_padding(const SequenceTensor& x, const PaddedGrid& pg);

/// Validity of every (subsequence, position) slot after applying a pattern.
struct SubsequenceMask {
    std::size_t num_subsequences = 1;
    std::size_t subseq_len = 0;
    std::vector<std::uint8_t> valid;

    bool at(std::size_t subsequence, std::size_t position) const {
        return valid[subsequence * subseq_len + position] != 0;
    }
    std::size_t valid_count() const;
    std::size_t valid_count(std::size_t subsequence) const;
};

SubsequenceMask subsequence_mask(const PaddedGrid& pg, SparsePattern p);

/// Key-validity flags for a batched pattern-layout tensor: `batch` original
/// items, so k^2 * batch rows of subseq_len flags in (p q b) order.
std::vector<std::uint8_t> batched_key_mask(const PaddedGrid& pg, SparsePattern p,
                                           std::size_t batch);

/// u32 LE t, h, w, k of the padded grid, then one byte per padded token.
std::vector<std::uint8_t> serialize_mask(const PaddedGrid& pg);

struct MaskDump {
    GridShape padded;
    std::vector<std::uint8_t> flags;
};

MaskDump deserialize_mask(std::span<const std::uint8_t> bytes);

}  // namespace osp
