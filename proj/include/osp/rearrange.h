// Copyright 2026 The osp-kit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Axis-factorization rearranges on (batch, seq, chan) tensors, written in the
// einops notation, e.g. "b (t h p w q) c -> (p q b) (t h w) c".
//
// Each side has exactly three top-level terms: the batch group, the sequence
// group, and the channel axis. Groups are row-major products of named axes.
// The channel axis must be the same single name on both sides, so a
// rearrange only ever permutes (batch, seq) addresses.

#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "osp/gridseq.h"

namespace osp {

using AxisSizes = std::map<std::string, std::size_t, std::less<>>;

class RearrangePattern {
public:
    /// Parses and validates the pattern; throws PatternError on bad syntax.
    explicit RearrangePattern(std::string_view pattern);

    const std::string& text() const { return text_; }

    /// Builds the gather map for an input of (in_batch, in_seq) addresses.
    /// At most one axis per input group may be left out of `sizes`; it is
    /// inferred from the group's extent.
    IndexMap index_map(std::size_t in_batch, std::size_t in_seq, const AxisSizes& sizes) const;

    template <typename T>
    BasicSequenceTensor<T> apply(const BasicSequenceTensor<T>& x, const AxisSizes& sizes) const {
        return apply_index_map(x, index_map(x.batch(), x.seq(), sizes));
    }

private:
    using Group = std::vector<std::string>;

    std::string text_;
    Group in_batch_;
    Group in_seq_;
    Group out_batch_;
    Group out_seq_;
};

template <typename T>
BasicSequenceTensor<T> rearrange(const BasicSequenceTensor<T>& x, std::string_view pattern,
                                 const AxisSizes& sizes) {
    return RearrangePattern(pattern).apply(x, sizes);
}

}  // namespace osp
