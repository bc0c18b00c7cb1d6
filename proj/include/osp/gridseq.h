// Copyright 2026 The osp-kit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense (batch, seq, chan) arrays over a latent video grid, and the
// gather-by-index-map permutation engine every rearrange runs through.

#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "osp/errors.h"

namespace osp {

/// Latent video grid (frames, rows, cols) plus the sparse ratio k.
struct GridShape {
    std::size_t t = 1;
    std::size_t h = 1;
    std::size_t w = 1;
    std::size_t k = 1;

    GridShape() = default;
    GridShape(std::size_t t_, std::size_t h_, std::size_t w_, std::size_t k_ = 1);

    std::size_t seq_len() const { return t * h * w; }
    std::size_t k2() const { return k * k; }
    bool divisible_by_k() const { return h % k == 0 && w % k == 0; }
    bool divisible_by_k2() const { return h % k2() == 0 && w % k2() == 0; }

    std::string to_string() const;

    friend bool operator==(const GridShape&, const GridShape&) = default;
};

struct GridCoord {
    std::size_t t = 0;
    std::size_t h = 0;
    std::size_t w = 0;

    friend bool operator==(const GridCoord&, const GridCoord&) = default;
};

/// Row-major flattening: t outermost, then h, then w.
std::size_t flatten_index(const GridShape& g, std::size_t t, std::size_t h, std::size_t w);
GridCoord unflatten_index(const GridShape& g, std::size_t index);

/// A (batch, seq) address. Channel vectors always move whole.
struct Address {
    std::size_t batch = 0;
    std::size_t seq = 0;

    friend bool operator==(const Address&, const Address&) = default;
};

/// For every output (batch, seq) address, the source address it gathers from.
class IndexMap {
public:
    IndexMap() = default;
    IndexMap(std::size_t in_batch, std::size_t in_seq, std::size_t out_batch, std::size_t out_seq,
             std::vector<Address> entries);

    static IndexMap identity(std::size_t batch, std::size_t seq);

    std::size_t in_batch() const { return in_batch_; }
    std::size_t in_seq() const { return in_seq_; }
    std::size_t out_batch() const { return out_batch_; }
    std::size_t out_seq() const { return out_seq_; }
    std::size_t size() const { return entries_.size(); }

    const Address& source(std::size_t out_b, std::size_t out_s) const {
        return entries_[out_b * out_seq_ + out_s];
    }
    const std::vector<Address>& entries() const { return entries_; }

    /// True when every input address is consumed exactly once.
    bool is_bijection() const;

    /// Map that undoes this one. Requires a bijection.
    IndexMap inverse() const;

    /// Map equivalent to applying `first`, then `second`.
    friend IndexMap compose(const IndexMap& first, const IndexMap& second);

    friend bool operator==(const IndexMap&, const IndexMap&) = default;

private:
    std::size_t in_batch_ = 0;
    std::size_t in_seq_ = 0;
    std::size_t out_batch_ = 0;
    std::size_t out_seq_ = 0;
    std::vector<Address> entries_;
};

enum class ScalarKind : std::uint8_t { Real, Hif8Code };

template <typename T>
struct ScalarKindOf;
template <>
struct ScalarKindOf<double> {
    static constexpr ScalarKind value = ScalarKind::Real;
};
template <>
struct ScalarKindOf<std::uint8_t> {
    static constexpr ScalarKind value = ScalarKind::Hif8Code;
};

/// (batch, seq, chan) row-major array.
template <typename T>
class BasicSequenceTensor {
public:
    using value_type = T;
    static constexpr ScalarKind kind = ScalarKindOf<T>::value;

    BasicSequenceTensor() = default;
    BasicSequenceTensor(std::size_t batch, std::size_t seq, std::size_t chan, T fill = T{})
        : batch_(batch), seq_(seq), chan_(chan), data_(batch * seq * chan, fill) {}
    BasicSequenceTensor(std::size_t batch, std::size_t seq, std::size_t chan, std::vector<T> data)
        : batch_(batch), seq_(seq), chan_(chan), data_(std::move(data)) {
        if (data_.size() != batch_ * seq_ * chan_) {
            throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                             " does not match shape");
        }
    }

    std::size_t batch() const { return batch_; }
    std::size_t seq() const { return seq_; }
    std::size_t chan() const { return chan_; }
    std::size_t size() const { return data_.size(); }

    T& at(std::size_t b, std::size_t s, std::size_t c) { return data_[(b * seq_ + s) * chan_ + c]; }
    const T& at(std::size_t b, std::size_t s, std::size_t c) const {
        return data_[(b * seq_ + s) * chan_ + c];
    }

    std::span<T> row(std::size_t b, std::size_t s) {
        return {data_.data() + (b * seq_ + s) * chan_, chan_};
    }
    std::span<const T> row(std::size_t b, std::size_t s) const {
        return {data_.data() + (b * seq_ + s) * chan_, chan_};
    }

    const std::vector<T>& data() const { return data_; }
    std::vector<T>& data() { return data_; }

    bool same_shape(const BasicSequenceTensor& o) const {
        return batch_ == o.batch_ && seq_ == o.seq_ && chan_ == o.chan_;
    }

    friend bool operator==(const BasicSequenceTensor&, const BasicSequenceTensor&) = default;

private:
    std::size_t batch_ = 0;
    std::size_t seq_ = 0;
    std::size_t chan_ = 0;
    std::vector<T> data_;
};

using SequenceTensor = BasicSequenceTensor<double>;
using CodeTensor = BasicSequenceTensor<std::uint8_t>;

template <typename T>
BasicSequenceTensor<T> apply_index_map(const BasicSequenceTensor<T>& x, const IndexMap& m) {
    if (x.batch() != m.in_batch() || x.seq() != m.in_seq()) {
        throw ShapeError("index map expects (" + std::to_string(m.in_batch()) + ", " +
                         std::to_string(m.in_seq()) + ") addresses, tensor has (" +
                         std::to_string(x.batch()) + ", " + std::to_string(x.seq()) + ")");
    }
    BasicSequenceTensor<T> out(m.out_batch(), m.out_seq(), x.chan());
    for (std::size_t b = 0; b < m.out_batch(); ++b) {
        for (std::size_t s = 0; s < m.out_seq(); ++s) {
            const Address& src = m.source(b, s);
            auto from = x.row(src.batch, src.seq);
            auto to = out.row(b, s);
            std::copy(from.begin(), from.end(), to.begin());
        }
    }
    return out;
}

/// Reproducible generator: std::mt19937_64 (fully specified by the C++
/// standard), converted to doubles with the top 53 bits, and to normals with
/// the Box-Muller transform. Unlike std::uniform_real_distribution and
/// std::normal_distribution, the output is identical across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }
    /// Uniform in [0, 1).
    double uniform();
    /// Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    double normal();

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// SplitMix64 finalizer; derives independent child seeds from a master seed.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream);

SequenceTensor random_tensor(std::size_t batch, std::size_t seq, std::size_t chan,
                             std::uint64_t seed, double lo = -1.0, double hi = 1.0);

/// Binary "OSPT" v1 container: magic, version byte, u32 LE batch/seq/chan,
/// then f64 LE data in storage order.
std::vector<std::uint8_t> serialize_tensor(const SequenceTensor& x);
SequenceTensor deserialize_tensor(std::span<const std::uint8_t> bytes);
void write_tensor_file(const std::string& path, const SequenceTensor& x);
SequenceTensor read_tensor_file(const std::string& path);

}  // namespace osp
