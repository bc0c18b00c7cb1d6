// Copyright 2026 The osp-kit Authors
// SPDX-License-Identifier: Apache-2.0

#include "osp/anyres.h"

#include <algorithm>
#include <numeric>

namespace osp {
namespace {

std::size_t round_up(std::size_t v, std::size_t unit) { return (v + unit - 1) / unit * unit; }

}  // namespace

std::vector<std::uint8_t> PaddedGrid::flags() const {
    if (mask) return *mask;
    return std::vector<std::uint8_t>(padded.seq_len(), 1);
}

PaddedGrid pad_grid(const GridShape& g) {
    PaddedGrid pg;
    pg.original = g;
    pg.padded = GridShape(g.t, round_up(g.h, g.k2()), round_up(g.w, g.k2()), g.k);
    pg.embedding.reserve(g.seq_len());
    for (std::size_t t = 0; t < g.t; ++t) {
        for (std::size_t h = 0; h < g.h; ++h) {
            for (std::size_t w = 0; w < g.w; ++w) {
                pg.embedding.push_back(flatten_index(pg.padded, t, h, w));
            }
        }
    }
    if (pg.padded != g) {
        std::vector<std::uint8_t> mask(pg.padded.seq_len(), 0);
        for (std::size_t i : pg.embedding) mask[i] = 1;
        pg.mask = std::move(mask);
    }
    return pg;
}

PaddedGrid unpadded(const GridShape& g) {
    PaddedGrid pg;
    pg.original = g;
    pg.padded = g;
    pg.embedding.resize(g.seq_len());
    std::iota(pg.embedding.begin(), pg.embedding.end(), std::size_t{0});
    return pg;
}

SequenceTensor pad_tensor(const SequenceTensor& x, const PaddedGrid& pg, double fill) {
    if (x.seq() != pg.original.seq_len()) {
        throw ShapeError("pad_tensor: tensor seq " + std::to_string(x.seq()) +
                         " does not match grid " + pg.original.to_string());
    }
    SequenceTensor out(x.batch(), pg.padded.seq_len(), x.chan(), fill);
    for (std::size_t b = 0; b < x.batch(); ++b) {
        for (std::size_t i = 0; i < pg.embedding.size(); ++i) {
            auto from = x.row(b, i);
            std::copy(from.begin(), from.end(), out.row(b, pg.embedding[i]).begin());
        }
    }
    return out;
}

SequenceTensor strip_padding(const SequenceTensor& x, const PaddedGrid& pg) {
    if (x.seq() != pg.padded.seq_len()) {
        throw ShapeError("strip_padding: tensor seq " + std::to_string(x.seq()) +
                         " does not match padded grid " + pg.padded.to_string());
    }
    SequenceTensor out(x.batch(), pg.original.seq_len(), x.chan());
    for (std::size_t b = 0; b < x.batch(); ++b) {
        for (std::size_t i = 0; i < pg.embedding.size(); ++i) {
            auto from = x.row(b, pg.embedding[i]);
            std::copy(from.begin(), from.end(), out.row(b, i).begin());
        }
    }
    return out;
}

std::size_t SubsequenceMask::valid_count() const {
    return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), std::uint8_t{1}));
}

std::size_t SubsequenceMask::valid_count(std::size_t subsequence) const {
    const auto first = valid.begin() + static_cast<std::ptrdiff_t>(subsequence * subseq_len);
    return static_cast<std::size_t>(
        std::count(first, first + static_cast<std::ptrdiff_t>(subseq_len), std::uint8_t{1}));
}

SubsequenceMask subsequence_mask(const PaddedGrid& pg, SparsePattern p) {
    const IndexMap m = pattern_map(pg.padded, p, 1);
    SubsequenceMask out;
    out.num_subsequences = m.out_batch();
    out.subseq_len = m.out_seq();
    out.valid.resize(m.size());
    for (std::size_t b = 0; b < m.out_batch(); ++b) {
        for (std::size_t s = 0; s < m.out_seq(); ++s) {
            out.valid[b * out.subseq_len + s] = pg.is_real(m.source(b, s).seq) ? 1 : 0;
        }
    }
    return out;
}

std::vector<std::uint8_t> batched_key_mask(const PaddedGrid& pg, SparsePattern p,
                                           std::size_t batch) {
    const SubsequenceMask sm = subsequence_mask(pg, p);
    std::vector<std::uint8_t> out;
    out.reserve(sm.valid.size() * batch);
    // Pattern batch index is sub * batch + b, so each subsequence row repeats
    // once per batch item.
    for (std::size_t sub = 0; sub < sm.num_subsequences; ++sub) {
        for (std::size_t b = 0; b < batch; ++b) {
            const auto first = sm.valid.begin() + static_cast<std::ptrdiff_t>(sub * sm.subseq_len);
            out.insert(out.end(), first, first + static_cast<std::ptrdiff_t>(sm.subseq_len));
        }
    }
    return out;
}

std::vector<std::uint8_t> serialize_mask(const PaddedGrid& pg) {
    std::vector<std::uint8_t> out;
    for (std::size_t v : {pg.padded.t, pg.padded.h, pg.padded.w, pg.padded.k}) {
        if (v > 0xffffffffULL) throw FormatError("grid dimension exceeds u32 range");
        for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    const auto f = pg.flags();
    out.insert(out.end(), f.begin(), f.end());
    return out;
}

MaskDump deserialize_mask(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 16) throw FormatError("mask dump shorter than its header");
    std::size_t dims[4];
    for (int d = 0; d < 4; ++d) {
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[4 * d + i]) << (8 * i);
        dims[d] = v;
    }
    MaskDump dump{GridShape(dims[0], dims[1], dims[2], dims[3]), {}};
    if (bytes.size() != 16 + dump.padded.seq_len()) {
        throw FormatError("mask dump length does not match its grid");
    }
    dump.flags.assign(bytes.begin() + 16, bytes.end());
    for (std::uint8_t f : dump.flags) {
        if (f > 1) throw FormatError("mask flags must be 0 or 1");
    }
    return dump;
}

}  // namespace osp
