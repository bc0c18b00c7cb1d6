// Copyright 2026 The osp-kit Authors
// SPDX-License-Identifier: Apache-2.0
//
// In-process simulator of sparse sequence parallelism. Ranks are plain
// buffers; collectives are explicit buffer exchanges that every rank reaches
// before any proceeds. Communication is counted in scalar elements.

#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "osp/gridseq.h"
#include "osp/skiparse.h"

namespace osp {

enum class Collective { AllToAll, AllGather };

std::string_view to_string(Collective c);

struct CommEvent {
    Collective kind = Collective::AllToAll;
    std::size_t group_size = 1;
    /// Elements each rank hands to (AllToAll) or receives from (AllGather)
    /// the collective.
    std::size_t payload_per_rank = 0;
    std::string step;

    /// Elements that cross a rank boundary, summed over the group.
    std::size_t global_traffic() const;
};

class CommLog {
public:
    void record(CommEvent e) { events_.push_back(std::move(e)); }
    void append(const CommLog& other);

    const std::vector<CommEvent>& events() const { return events_; }
    std::size_t count(Collective kind) const;
    std::size_t total_payload_per_rank() const;
    std::size_t total_global_traffic() const;

private:
    std::vector<CommEvent> events_;
};

struct RankShard {
    std::size_t rank = 0;
    SequenceTensor local;
};

struct ProcessGroup {
    std::size_t group_size = 1;
    std::vector<RankShard> ranks;

    /// Element count every rank holds; throws ProtocolError if unbalanced.
    std::size_t balanced_elements() const;
};

/// Splits a pattern-layout tensor (batch k^2 * b) into contiguous runs of
/// G * b subsequences, G = k^2 / N.
ProcessGroup shard_pattern_layout(const SequenceTensor& x_pattern, const GridShape& g,
                                  std::size_t group_size);

/// Concatenation of all shards in rank order.
SequenceTensor gather_shards(const ProcessGroup& group);

/// all_to_all_single: each send buffer splits into N equal chunks along its
/// batch axis; receiver r's chunk j is sender j's chunk r. Logs one event.
std::vector<SequenceTensor> all_to_all(const std::vector<SequenceTensor>& send, CommLog& log,
                                       std::string_view step = "all_to_all");

struct SspOptions {
    /// Order rank-local work is executed in; empty means 0..N-1.
    std::vector<std::size_t> rank_order;
    /// Run rank-local work on one thread per rank.
    bool threaded = false;
};

/// Switches the shards between the token-wise and group-wise layouts with a
/// local rearrange, one All-to-All, a local permutation and the reverse local
/// rearrange. The same routine serves both directions; `from` only labels the
/// logged step.
ProcessGroup ssp_pattern_switch(const ProcessGroup& group, const GridShape& g, SparsePattern from,
                                CommLog& log, const SspOptions& options = {});

namespace reference {

/// Gather every shard, convert with the single-process map, reshard.
ProcessGroup switch_by_gather(const ProcessGroup& group, const GridShape& g, SparsePattern from);

}  // namespace reference

/// Per block: All-to-All for query, key, value and attention output.
CommLog ulysses_block_comm(std::size_t group_size, std::size_t per_rank_elements);

/// All-Gather, rearrange, reshard: one AllGather receiving (N-1) * S per rank.
CommLog naive_switch_comm(std::size_t group_size, std::size_t per_rank_elements);

struct TrafficRow {
    std::size_t group_size = 0;
    std::size_t naive_global = 0;
    std::size_t ssp_global = 0;
    double naive_over_ssp = 0.0;
};

struct CommComparison {
    std::size_t group_size = 0;
    std::size_t per_rank_elements = 0;
    std::size_t ssp_events = 0;
    std::size_t ulysses_events = 0;
    std::size_t ssp_total = 0;
    std::size_t ulysses_total = 0;
    double volume_ratio = 0.0;
    double volume_reduction = 0.0;
    std::vector<TrafficRow> growth;
};

/// One block of SSP versus Ulysses SP at group size N, S elements per rank,
/// plus naive-versus-SSP global traffic for each size in `growth_sizes`.
CommComparison comm_comparison(std::size_t group_size, std::size_t per_rank_elements,
                               const std::vector<std::size_t>& growth_sizes = {2, 4, 8});

}  // namespace osp
