// Copyright 2026 The osp-kit Authors
// SPDX-License-Identifier: Apache-2.0

#include "osp/ssp.h"

#include <algorithm>
#include <exception>
#include <numeric>
#include <thread>

#include "osp/rearrange.h"

namespace osp {

std::string_view to_string(Collective c) {
    switch (c) {
        case Collective::AllToAll: return "all_to_all";
        case Collective::AllGather: return "all_gather";
    }
    return "?";
}

std::size_t CommEvent::global_traffic() const {
    switch (kind) {
        // N ranks each keep 1/N of their buffer: N * (N-1)/N * S.
        case Collective::AllToAll: return (group_size - 1) * payload_per_rank;
        case Collective::AllGather: return group_size * payload_per_rank;
    }
    return 0;
}

void CommLog::append(const CommLog& other) {
    events_.insert(events_.end(), other.events_.begin(), other.events_.end());
}

std::size_t CommLog::count(Collective kind) const {
    return static_cast<std::size_t>(std::count_if(
        events_.begin(), events_.end(), [kind](const CommEvent& e) { return e.kind == kind; }));
}

std::size_t CommLog::total_payload_per_rank() const {
    std::size_t s = 0;
    for (const auto& e : events_) s += e.payload_per_rank;
    return s;
}

std::size_t CommLog::total_global_traffic() const {
    std::size_t s = 0;
    for (const auto& e : events_) s += e.global_traffic();
    return s;
}

std::size_t ProcessGroup::balanced_elements() const {
    if (ranks.size() != group_size) {
        throw ProtocolError("process group of size " + std::to_string(group_size) + " holds " +
                            std::to_string(ranks.size()) + " shards");
    }
    const std::size_t n = ranks.empty() ? 0 : ranks.front().local.size();
    for (const auto& r : ranks) {
        if (r.local.size() != n) {
            throw ProtocolError("rank " + std::to_string(r.rank) + " holds " +
                                std::to_string(r.local.size()) + " elements, rank 0 holds " +
                                std::to_string(n));
        }
    }
    return n;
}

namespace {

std::size_t subsequences_per_rank(const GridShape& g, std::size_t group_size) {
    if (group_size == 0 || g.k2() % group_size != 0) {
        throw ShardingError("k^2 = " + std::to_string(g.k2()) + " is not divisible by group size " +
                            std::to_string(group_size));
    }
    return g.k2() / group_size;
}

SequenceTensor slice_batch(const SequenceTensor& x, std::size_t first, std::size_t count) {
    const std::size_t row = x.seq() * x.chan();
    std::vector<double> data(x.data().begin() + static_cast<std::ptrdiff_t>(first * row),
                             x.data().begin() + static_cast<std::ptrdiff_t>((first + count) * row));
    return SequenceTensor(count, x.seq(), x.chan(), std::move(data));
}

SequenceTensor concat_batch(const std::vector<SequenceTensor>& parts) {
    if (parts.empty()) return {};
    std::size_t batch = 0;
    for (const auto& p : parts) {
        if (p.seq() != parts.front().seq() || p.chan() != parts.front().chan()) {
            throw ShapeError("cannot concatenate tensors with different (seq, chan)");
        }
        batch += p.batch();
    }
    std::vector<double> data;
    data.reserve(batch * parts.front().seq() * parts.front().chan());
    for (const auto& p : parts) data.insert(data.end(), p.data().begin(), p.data().end());
    return SequenceTensor(batch, parts.front().seq(), parts.front().chan(), std::move(data));
}

template <typename Fn>
void for_each_rank(std::size_t n, const SspOptions& options, Fn&& fn) {
    std::vector<std::size_t> order = options.rank_order;
    if (order.empty()) {
        order.resize(n);
        std::iota(order.begin(), order.end(), std::size_t{0});
    }
    std::vector<std::size_t> sorted = order;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        if (sorted.size() != n || sorted[i] != i) {
            throw ProtocolError("rank_order must be a permutation of the group's ranks");
        }
    }
    if (options.threaded) {
        std::vector<std::thread> workers;
        std::vector<std::exception_ptr> errors(n);
        workers.reserve(n);
        for (std::size_t r : order) {
            workers.emplace_back([&, r] {
                try {
                    fn(r);
                } catch (...) {
                    errors[r] = std::current_exception();
                }
            });
        }
        // Rendezvous: every rank finishes its local step before the collective.
        for (auto& w : workers) w.join();
        for (auto& e : errors) {
            if (e) std::rethrow_exception(e);
        }
    } else {
        for (std::size_t r : order) fn(r);
    }
}

}  // namespace

ProcessGroup shard_pattern_layout(const SequenceTensor& x_pattern, const GridShape& g,
                                  std::size_t group_size) {
    subsequences_per_rank(g, group_size);
    if (x_pattern.batch() % g.k2() != 0) {
        throw ShardingError("pattern-layout batch " + std::to_string(x_pattern.batch()) +
                            " is not a multiple of k^2 = " + std::to_string(g.k2()));
    }
    const std::size_t per_rank = x_pattern.batch() / group_size;
    ProcessGroup group;
    group.group_size = group_size;
    for (std::size_t r = 0; r < group_size; ++r) {
        group.ranks.push_back({r, slice_batch(x_pattern, r * per_rank, per_rank)});
    }
    group.balanced_elements();
    return group;
}

SequenceTensor gather_shards(const ProcessGroup& group) {
    std::vector<SequenceTensor> parts;
    parts.reserve(group.ranks.size());
    for (const auto& r : group.ranks) parts.push_back(r.local);
    return concat_batch(parts);
}

std::vector<SequenceTensor> all_to_all(const std::vector<SequenceTensor>& send, CommLog& log,
                                       std::string_view step) {
    const std::size_t n = send.size();
    if (n == 0) throw CollectiveError("all_to_all on an empty group");
    for (const auto& buf : send) {
        if (!buf.same_shape(send.front())) {
            throw CollectiveError("all_to_all send buffers differ in shape across ranks");
        }
        if (buf.batch() % n != 0) {
            throw CollectiveError("all_to_all buffer batch " + std::to_string(buf.batch()) +
                                  " does not split into " + std::to_string(n) + " equal chunks");
        }
    }
    const std::size_t chunk = send.front().batch() / n;
    std::vector<SequenceTensor> recv;
    recv.reserve(n);
    for (std::size_t r = 0; r < n; ++r) {
        std::vector<SequenceTensor> parts;
        parts.reserve(n);
        for (std::size_t j = 0; j < n; ++j) parts.push_back(slice_batch(send[j], r * chunk, chunk));
        recv.push_back(concat_batch(parts));
    }
    log.record({Collective::AllToAll, n, send.front().size(), std::string(step)});
    return recv;
}

ProcessGroup ssp_pattern_switch(const ProcessGroup& group, const GridShape& g, SparsePattern from,
                                CommLog& log, const SspOptions& options) {
    if (from == SparsePattern::Original) {
        throw ProtocolError("ssp_pattern_switch needs shards in a token-wise or group-wise layout");
    }
    if (!g.divisible_by_k2()) {
        throw PatternError("ssp_pattern_switch on grid " + g.to_string() +
                           " needs H and W divisible by k^2");
    }
    const std::size_t n = group.group_size;
    const std::size_t sub_per_rank = subsequences_per_rank(g, n);
    group.balanced_elements();
    const SequenceTensor& first = group.ranks.front().local;
    const std::size_t local_batch = first.batch();
    if (first.seq() != g.seq_len() / g.k2()) {
        throw ProtocolError("shard sequence length " + std::to_string(first.seq()) +
                            " does not match subsequence length " +
                            std::to_string(g.seq_len() / g.k2()));
    }
    if (local_batch % sub_per_rank != 0) {
        throw ProtocolError("shard batch " + std::to_string(local_batch) +
                            " is not a multiple of G = " + std::to_string(sub_per_rank));
    }
    for (const auto& r : group.ranks) {
        if (!r.local.same_shape(first)) throw ProtocolError("shards differ in shape");
    }

    const std::size_t k = g.k;
    // Local rearranges treat each subsequence as a (T, H/k, W/k) grid.
    const AxisSizes local_tsa{{"p", k}, {"q", k}, {"h", g.h / g.k2()}, {"w", g.w / g.k2()}};
    static const RearrangePattern to_tsa(patterns::kOrigToTsa);
    static const RearrangePattern from_tsa(patterns::kTsaToOrig);
    static const RearrangePattern regroup("(s g2 g1 b) n c -> (s g1 g2 b) n c");
    const AxisSizes regroup_sizes{{"s", n}, {"g1", sub_per_rank}, {"g2", sub_per_rank}};

    // 1. Local rearrangement.
    std::vector<SequenceTensor> send(n);
    for_each_rank(n, options, [&](std::size_t r) {
        send[r] = to_tsa.apply(group.ranks[r].local, local_tsa);
    });
    // 2. Distributed all-to-all transpose.
    const std::string label = std::string(to_string(from)) + "->" +
                              std::string(to_string(from == SparsePattern::TokenWise
                                                        ? SparsePattern::GroupWise
                                                        : SparsePattern::TokenWise));
    const std::vector<SequenceTensor> recv = all_to_all(send, log, label);
    // 3. Local permutation, 4. reverse local rearrangement.
    ProcessGroup out;
    out.group_size = n;
    out.ranks.resize(n);
    for_each_rank(n, options, [&](std::size_t r) {
        const SequenceTensor permuted = regroup.apply(recv[r], regroup_sizes);
        out.ranks[r] = {r, from_tsa.apply(permuted, local_tsa)};
    });
    out.balanced_elements();
    return out;
}

namespace reference {

ProcessGroup switch_by_gather(const ProcessGroup& group, const GridShape& g, SparsePattern from) {
    const SequenceTensor all = gather_shards(group);
    const std::size_t batch = all.batch() / g.k2();
    const IndexMap convert = from == SparsePattern::TokenWise ? tsa_to_gsa(g, batch)
                                                              : gsa_to_tsa(g, batch);
    return shard_pattern_layout(apply_index_map(all, convert), g, group.group_size);
}

}  // namespace reference

CommLog ulysses_block_comm(std::size_t group_size, std::size_t per_rank_elements) {
    CommLog log;
    for (const char* step : {"query", "key", "value", "attention_output"}) {
        log.record({Collective::AllToAll, group_size, per_rank_elements, step});
    }
    return log;
}

CommLog naive_switch_comm(std::size_t group_size, std::size_t per_rank_elements) {
    CommLog log;
    const std::size_t others = group_size == 0 ? 0 : group_size - 1;
    log.record({Collective::AllGather, group_size, others * per_rank_elements, "gather"});
    return log;
}

CommComparison comm_comparison(std::size_t group_size, std::size_t per_rank_elements,
                               const std::vector<std::size_t>& growth_sizes) {
    if (per_rank_elements == 0) throw Error("comm_comparison needs a non-empty per-rank payload");
    CommLog ssp;
    ssp.record({Collective::AllToAll, group_size, per_rank_elements, "pattern_switch"});
    const CommLog ulysses = ulysses_block_comm(group_size, per_rank_elements);

    CommComparison c;
    c.group_size = group_size;
    c.per_rank_elements = per_rank_elements;
    c.ssp_events = ssp.events().size();
    c.ulysses_events = ulysses.events().size();
    c.ssp_total = ssp.total_payload_per_rank();
    c.ulysses_total = ulysses.total_payload_per_rank();
    c.volume_ratio = static_cast<double>(c.ssp_total) / static_cast<double>(c.ulysses_total);
    c.volume_reduction = 1.0 - c.volume_ratio;
    for (std::size_t n : growth_sizes) {
        TrafficRow row;
        row.group_size = n;
        row.naive_global = naive_switch_comm(n, per_rank_elements).total_global_traffic();
        CommLog one;
        one.record({Collective::AllToAll, n, per_rank_elements, "pattern_switch"});
        row.ssp_global = one.total_global_traffic();
        row.naive_over_ssp = row.ssp_global == 0 ? 0.0
                                                 : static_cast<double>(row.naive_global) /
                                                       static_cast<double>(row.ssp_global);
        c.growth.push_back(row);
    }
    return c;
}

}  // namespace osp
