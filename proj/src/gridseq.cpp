// Copyright 2026 The osp-kit Authors
// SPDX-License-Identifier: Apache-2.0

#include "osp/gridseq.h"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>

namespace osp {

GridShape::GridShape(std::size_t t_, std::size_t h_, std::size_t w_, std::size_t k_)
    : t(t_), h(h_), w(w_), k(k_) {
    if (t == 0 || h == 0 || w == 0 || k == 0) {
        throw ShapeError("grid dimensions and k must be positive, got " + to_string());
    }
}

std::string GridShape::to_string() const {
    return "(" + std::to_string(t) + "," + std::to_string(h) + "," + std::to_string(w) +
           ",k=" + std::to_string(k) + ")";
}

std::size_t flatten_index(const GridShape& g, std::size_t t, std::size_t h, std::size_t w) {
    if (t >= g.t || h >= g.h || w >= g.w) {
        throw CoordinateError("coordinate (" + std::to_string(t) + "," + std::to_string(h) + "," +
                              std::to_string(w) + ") outside grid " + g.to_string());
    }
    return (t * g.h + h) * g.w + w;
}

GridCoord unflatten_index(const GridShape& g, std::size_t index) {
    if (index >= g.seq_len()) {
        throw CoordinateError("flat index " + std::to_string(index) + " outside grid " +
                              g.to_string());
    }
    return {index / (g.h * g.w), (index / g.w) % g.h, index % g.w};
}

IndexMap::IndexMap(std::size_t in_batch, std::size_t in_seq, std::size_t out_batch,
                   std::size_t out_seq, std::vector<Address> entries)
    : in_batch_(in_batch),
      in_seq_(in_seq),
      out_batch_(out_batch),
      out_seq_(out_seq),
      entries_(std::move(entries)) {
    if (entries_.size() != out_batch_ * out_seq_) {
        throw ShapeError("index map has " + std::to_string(entries_.size()) +
                         " entries for an output of " + std::to_string(out_batch_ * out_seq_));
    }
    for (const Address& a : entries_) {
        if (a.batch >= in_batch_ || a.seq >= in_seq_) {
            throw ShapeError("index map entry addresses outside the input");
        }
    }
}

IndexMap IndexMap::identity(std::size_t batch, std::size_t seq) {
    std::vector<Address> e;
    e.reserve(batch * seq);
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t s = 0; s < seq; ++s) e.push_back({b, s});
    }
    return IndexMap(batch, seq, batch, seq, std::move(e));
}

bool IndexMap::is_bijection() const {
    if (in_batch_ * in_seq_ != entries_.size()) return false;
    std::vector<bool> seen(entries_.size(), false);
    for (const Address& a : entries_) {
        const std::size_t flat = a.batch * in_seq_ + a.seq;
        if (seen[flat]) return false;
        seen[flat] = true;
    }
    return true;
}

IndexMap IndexMap::inverse() const {
    if (!is_bijection()) throw ShapeError("only a bijective index map can be inverted");
    std::vector<Address> inv(entries_.size());
    for (std::size_t b = 0; b < out_batch_; ++b) {
        for (std::size_t s = 0; s < out_seq_; ++s) {
            const Address& src = source(b, s);
            inv[src.batch * in_seq_ + src.seq] = {b, s};
        }
    }
    return IndexMap(out_batch_, out_seq_, in_batch_, in_seq_, std::move(inv));
}

IndexMap compose(const IndexMap& first, const IndexMap& second) {
    if (second.in_batch_ != first.out_batch_ || second.in_seq_ != first.out_seq_) {
        throw ShapeError("cannot compose index maps with mismatched intermediate shapes");
    }
    std::vector<Address> e;
    e.reserve(second.entries_.size());
    for (const Address& mid : second.entries_) e.push_back(first.source(mid.batch, mid.seq));
    return IndexMap(first.in_batch_, first.in_seq_, second.out_batch_, second.out_seq_,
                    std::move(e));
}

double Rng::uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    // 1 - u keeps the log argument in (0, 1].
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
    std::uint64_t z = master + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

SequenceTensor random_tensor(std::size_t batch, std::size_t seq, std::size_t chan,
                             std::uint64_t seed, double lo, double hi) {
    Rng rng(seed);
    SequenceTensor x(batch, seq, chan);
    for (double& v : x.data()) v = rng.uniform(lo, hi);
    return x;
}

namespace {

constexpr char kMagic[4] = {'O', 'S', 'P', 'T'};
constexpr std::uint8_t kVersion = 1;
constexpr std::size_t kHeaderBytes = 4 + 1 + 3 * 4;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_le(std::span<const std::uint8_t> bytes, std::size_t offset, int width) {
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(bytes[offset + i]) << (8 * i);
    return v;
}

std::uint32_t checked_u32(std::size_t v) {
    if (v > 0xffffffffULL) throw FormatError("tensor dimension exceeds u32 range");
    return static_cast<std::uint32_t>(v);
}

}  // namespace

std::vector<std::uint8_t> serialize_tensor(const SequenceTensor& x) {
    std::vector<std::uint8_t> out;
    out.reserve(kHeaderBytes + 8 * x.size());
    out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
    out.push_back(kVersion);
    put_u32(out, checked_u32(x.batch()));
    put_u32(out, checked_u32(x.seq()));
    put_u32(out, checked_u32(x.chan()));
    for (double v : x.data()) put_u64(out, std::bit_cast<std::uint64_t>(v));
    return out;
}

SequenceTensor deserialize_tensor(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < kHeaderBytes || std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw FormatError("not an OSPT tensor file");
    }
    if (bytes[4] != kVersion) {
        throw FormatError("unsupported OSPT version " + std::to_string(bytes[4]));
    }
    const std::size_t batch = get_le(bytes, 5, 4);
    const std::size_t seq = get_le(bytes, 9, 4);
    const std::size_t chan = get_le(bytes, 13, 4);
    const std::size_t n = batch * seq * chan;
    if (bytes.size() != kHeaderBytes + 8 * n) {
        throw FormatError("OSPT payload length does not match header shape");
    }
    std::vector<double> data(n);
    for (std::size_t i = 0; i < n; ++i) {
        data[i] = std::bit_cast<double>(get_le(bytes, kHeaderBytes + 8 * i, 8));
    }
    return SequenceTensor(batch, seq, chan, std::move(data));
}

void write_tensor_file(const std::string& path, const SequenceTensor& x) {
    const auto bytes = serialize_tensor(x);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open " + path + " for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw FormatError("short write to " + path);
}

SequenceTensor read_tensor_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                    std::istreambuf_iterator<char>());
    return deserialize_tensor(bytes);
}

}  // namespace osp
