// Copyright 2026 The osp-kit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "osp/anyres.h"
#include "osp/gridseq.h"
#include "osp/skiparse.h"

namespace osp {

/// Scaled dot-product attention inputs, softmax temperature 1/sqrt(chan).
struct AttentionInputs {
    SequenceTensor q;
    SequenceTensor k;
    SequenceTensor v;
    /// Optional per (batch, seq) key validity, 1 = attend.
    std::optional<std::vector<std::uint8_t>> key_mask;

    void validate() const;
};

/// softmax(q k^T / sqrt(chan)) v per batch item. Masked keys are dropped
/// from the normalization; a query whose keys are all masked outputs zeros.
SequenceTensor dense_attention(const AttentionInputs& in);

/// Row-stochastic (seq x seq) weights of one batch item, row-major.
std::vector<double> attention_weights(const AttentionInputs& in, std::size_t batch);

/// Three fixed linear maps producing q, k, v from one input.
class Projections {
public:
    static Projections identity(std::size_t chan);
    /// Entries uniform in [-1, 1) / sqrt(chan), drawn from Rng(seed).
    static Projections random(std::size_t chan, std::uint64_t seed);

    std::size_t chan() const { return chan_; }
    AttentionInputs project(const SequenceTensor& x) const;

private:
    Projections(std::size_t chan, std::vector<double> wq, std::vector<double> wk,
                std::vector<double> wv);
    static SequenceTensor apply(const SequenceTensor& x, const std::vector<double>& w,
                                std::size_t chan);

    std::size_t chan_ = 0;
    std::vector<double> wq_;
    std::vector<double> wk_;
    std::vector<double> wv_;
};

/// Rearranges x into the pattern layout, runs dense attention on each
/// subsequence independently, and rearranges back. x is laid out over g.
SequenceTensor skiparse_attention(const SequenceTensor& x, const GridShape& g, SparsePattern p,
                                  const Projections& proj);

/// Padded variant: x is laid out over pg.padded. Only the 1-D subsequence
/// key mask is consumed. Outputs at pad queries are zero.
SequenceTensor skiparse_attention(const SequenceTensor& x, const PaddedGrid& pg, SparsePattern p,
                                  const Projections& proj);

namespace reference {

using PairMask = std::function<bool(std::size_t query, std::size_t key)>;

/// Dense attention under an arbitrary 2-D mask. Rows with no allowed key
/// output zeros.
SequenceTensor masked_attention(const AttentionInputs& in, const PairMask& allowed);

/// Dense attention under "both real and in the same subsequence", with
/// subsequences taken from the closed-form slot_of. Never builds an IndexMap.
SequenceTensor pattern_attention(const SequenceTensor& x, const PaddedGrid& pg, SparsePattern p,
                                 const Projections& proj);

}  // namespace reference

struct FlopReport {
    std::size_t full_flops = 0;
    std::size_t sparse_flops = 0;
    double ratio = 1.0;
    /// The two candidate closed forms, reported next to the measured ratio.
    double one_over_k = 1.0;
    double one_over_k2 = 1.0;
};

/// Multiply-accumulates of the score and value matmuls per batch item. The
/// sparse count sums len^2 over the subsequences the pattern actually builds.
FlopReport flop_report(const GridShape& g, SparsePattern p, std::size_t chan = 1);

double max_abs_diff(const SequenceTensor& a, const SequenceTensor& b);

}  // namespace osp
