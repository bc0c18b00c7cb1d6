// Copyright 2026 The osp-kit Authors
// SPDX-License-Identifier: Apache-2.0

#include "cli.h"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "osp/anyres.h"
#include "osp/attention.h"
#include "osp/hif8.h"
#include "osp/mixflow.h"
#include "osp/skiparse.h"
#include "osp/ssp.h"

namespace osp::cli {
namespace {

/// Invalid option combinations; reported as a single line with exit 2.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

constexpr double kAttnTolerance = 1e-10;
constexpr std::size_t kBytesPerElement = 2;

/// Accumulates named invariant checks for one report.
class Checks {
public:
    bool expect(bool ok, const std::string& name) {
        if (!ok) failed_.push_back(name);
        return ok;
    }
    void merge(const Checks& other) {
        failed_.insert(failed_.end(), other.failed_.begin(), other.failed_.end());
    }
    bool pass() const { return failed_.empty(); }
    const std::vector<std::string>& failed() const { return failed_; }

private:
    std::vector<std::string> failed_;
};

struct RunConfig {
    std::vector<std::string> grid = {"1", "8", "8"};
    std::size_t k = 2;
    std::size_t group_size = 4;
    std::uint64_t seed = 7;
    std::string format;
    std::string out;
    std::size_t batch = 1;
    std::size_t chan = 4;
    std::string pattern = "both";
    std::string mode = "forward";
    std::size_t threads = 1;

    GridShape shape() const;
};

std::vector<std::size_t> parse_list(const std::string& text, const std::string& what) {
    std::vector<std::size_t> v;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty() || item.find_first_not_of("0123456789") != std::string::npos) {
            throw UsageError(what + " must be comma-separated non-negative integers, got '" + text +
                             "'");
        }
        v.push_back(std::stoull(item));
    }
    return v;
}

GridShape RunConfig::shape() const {
    std::string text;
    for (const auto& part : grid) text += (text.empty() ? "" : ",") + part;
    const auto v = parse_list(text, "--grid");
    if (v.size() != 3) throw UsageError("--grid needs T,H,W, got '" + text + "'");
    if (k == 0) throw UsageError("--k must be positive");
    for (std::size_t d : v) {
        if (d == 0) throw UsageError("--grid dimensions must be positive");
    }
    return GridShape(v[0], v[1], v[2], k);
}

Json grid_json(const GridShape& g) { return Json::array({g.t, g.h, g.w}); }

Json slot_json(const Slot& s) { return Json::array({s.subsequence, s.position}); }

std::vector<SparsePattern> patterns_from(const std::string& name) {
    if (name == "both") return {SparsePattern::TokenWise, SparsePattern::GroupWise};
    try {
        return {parse_pattern(name)};
    } catch (const Error& e) {
        throw UsageError(e.what());
    }
}

void finish(Json& j, const Checks& c) {
    j["pass"] = c.pass();
    j["failed"] = c.failed();
}

// --- reports -----------------------------------------------------------------

Json rearrange_report(const GridShape& g, std::size_t batch, std::uint64_t seed,
                      bool with_assignments, Checks& checks) {
    if (!g.divisible_by_k2()) {
        throw UsageError("rearrange-check needs H and W divisible by k^2 on grid " + g.to_string());
    }
    Json j;
    j["grid"] = grid_json(g);
    j["k"] = g.k;
    j["batch"] = batch;
    Json c;
    const auto to_tsa = orig_to_tsa(g, batch);
    const auto to_gsa = orig_to_gsa(g, batch);
    const auto t2g = tsa_to_gsa(g, batch);
    const auto g2t = gsa_to_tsa(g, batch);
    bool bij = true;
    for (const auto& m : {to_tsa, tsa_to_orig(g, batch), to_gsa, gsa_to_orig(g, batch), t2g, g2t}) {
        bij = bij && m.is_bijection();
    }
    const std::string where = " on " + g.to_string();
    c["bijections"] = checks.expect(bij, "bijection" + where);

    const auto x = random_tensor(batch, g.seq_len(), 2, seed);
    const auto xt = apply_index_map(x, to_tsa);
    const auto xg = apply_index_map(x, to_gsa);
    c["tsa_round_trip"] =
        checks.expect(apply_index_map(xt, tsa_to_orig(g, batch)) == x, "tsa round trip" + where);
    c["gsa_round_trip"] =
        checks.expect(apply_index_map(xg, gsa_to_orig(g, batch)) == x, "gsa round trip" + where);
    c["tsa_gsa_round_trip"] = checks.expect(apply_index_map(apply_index_map(xt, t2g), g2t) == xt,
                                            "tsa->gsa->tsa round trip" + where);
    c["tsa_to_gsa_coherence"] =
        checks.expect(compose(to_tsa, t2g) == to_gsa && apply_index_map(xt, t2g) == xg,
                      "tsa_to_gsa after orig_to_tsa equals orig_to_gsa" + where);
    c["gsa_to_tsa_coherence"] = checks.expect(compose(to_gsa, g2t) == to_tsa,
                                              "gsa_to_tsa after orig_to_gsa equals orig_to_tsa" + where);

    const auto at = assignment_of(g, SparsePattern::TokenWise);
    const auto ag = assignment_of(g, SparsePattern::GroupWise);
    bool closed = true;
    bool equal_len = true;
    for (const auto* a : {&at, &ag}) {
        for (const auto& m : a->members()) equal_len = equal_len && m.size() == a->subseq_len;
    }
    for (std::size_t i = 0; i < g.seq_len(); ++i) {
        const GridCoord cc = unflatten_index(g, i);
        closed = closed && at.slots[i] == slot_of(g, SparsePattern::TokenWise, cc) &&
                 ag.slots[i] == slot_of(g, SparsePattern::GroupWise, cc);
    }
    c["closed_form_slots"] = checks.expect(closed, "closed-form slots" + where);
    c["equal_length_subsequences"] = checks.expect(equal_len, "equal-length subsequences" + where);
    c["local_equivalence_tsa"] = checks.expect(local_equivalence_holds(g, SparsePattern::TokenWise),
                                               "local equivalence tsa" + where);
    c["local_equivalence_gsa"] = checks.expect(local_equivalence_holds(g, SparsePattern::GroupWise),
                                               "local equivalence gsa" + where);
    j["checks"] = c;
    j["num_subsequences"] = at.num_subsequences;
    j["subseq_len"] = at.subseq_len;
    if (with_assignments) {
        Json rows = Json::array();
        for (std::size_t i = 0; i < g.seq_len(); ++i) {
            const GridCoord cc = unflatten_index(g, i);
            rows.push_back({{"token", i},
                            {"coord", Json::array({cc.t, cc.h, cc.w})},
                            {"tsa", slot_json(at.slots[i])},
                            {"gsa", slot_json(ag.slots[i])}});
        }
        j["assignments"] = rows;
    }
    return j;
}

Json reach_report(const GridShape& g, Checks& checks) {
    if (!g.divisible_by_k2()) {
        throw UsageError("reach needs H and W divisible by k^2 on grid " + g.to_string());
    }
    const std::size_t hops = reachability_hops(g);
    Json j;
    j["grid"] = grid_json(g);
    j["k"] = g.k;
    j["max_hops"] = hops == kUnreachable ? Json(nullptr) : Json(hops);
    checks.expect(hops <= 2, "two-hop reachability on " + g.to_string());
    return j;
}

Json mask_report(const PaddedGrid& pg, Checks& checks) {
    Json j;
    j["original"] = grid_json(pg.original);
    j["padded"] = grid_json(pg.padded);
    j["k"] = pg.padded.k;
    j["trivial"] = pg.trivial();
    const auto flags = pg.flags();
    const auto real = static_cast<std::size_t>(std::count(flags.begin(), flags.end(), 1));
    j["real_tokens"] = real;
    j["pad_tokens"] = flags.size() - real;
    checks.expect(real == pg.original.seq_len(), "mask marks every real token");
    Json sub;
    for (auto p : {SparsePattern::TokenWise, SparsePattern::GroupWise}) {
        const auto m = subsequence_mask(pg, p);
        Json counts = Json::array();
        for (std::size_t s = 0; s < m.num_subsequences; ++s) counts.push_back(m.valid_count(s));
        checks.expect(m.valid_count() == real && m.num_subsequences == pg.padded.k2(),
                      std::string(to_string(p)) + " subsequence mask count");
        sub[std::string(to_string(p))] = counts;
    }
    j["subsequence_valid"] = sub;
    return j;
}

Json attn_record(const GridShape& g, SparsePattern p, std::size_t batch, std::size_t chan,
                 std::uint64_t seed, Checks& checks) {
    const PaddedGrid pg = pad_grid(g);
    const auto proj = Projections::random(chan, derive_seed(seed, 1));
    const auto x = pad_tensor(random_tensor(batch, g.seq_len(), chan, derive_seed(seed, 2)), pg);
    const auto got = skiparse_attention(x, pg, p, proj);
    const double err = max_abs_diff(got, reference::pattern_attention(x, pg, p, proj));

    auto noisy = x;
    Rng rng(derive_seed(seed, 3));
    for (std::size_t b = 0; b < noisy.batch(); ++b) {
        for (std::size_t s = 0; s < noisy.seq(); ++s) {
            if (pg.is_real(s)) continue;
            for (double& v : noisy.row(b, s)) v = rng.uniform(-1e3, 1e3);
        }
    }
    const bool invariant =
        strip_padding(skiparse_attention(noisy, pg, p, proj), pg) == strip_padding(got, pg);
    const FlopReport f = flop_report(pg.padded, p, chan);

    const std::string where = std::string(to_string(p)) + " attention on " + g.to_string();
    checks.expect(err <= kAttnTolerance, where + " matches the mask oracle");
    checks.expect(invariant, where + " ignores pad contents");
    Json j;
    j["grid"] = grid_json(g);
    j["padded"] = grid_json(pg.padded);
    j["k"] = g.k;
    j["pattern"] = std::string(to_string(p));
    j["max_abs_err"] = err;
    j["tolerance"] = kAttnTolerance;
    j["pad_invariant"] = invariant;
    j["flop_ratio"] = f.ratio;
    j["one_over_k"] = f.one_over_k;
    j["one_over_k2"] = f.one_over_k2;
    return j;
}

Json flop_json(const GridShape& g, Checks& checks) {
    const FlopReport f = flop_report(g, SparsePattern::TokenWise);
    checks.expect(f.ratio == f.one_over_k2 && f.sparse_flops * g.k2() == f.full_flops,
                  "flop ratio 1/k^2 on " + g.to_string());
    return {{"grid", grid_json(g)},         {"k", g.k},
            {"full_flops", f.full_flops},   {"sparse_flops", f.sparse_flops},
            {"measured_ratio", f.ratio},    {"one_over_k", f.one_over_k},
            {"one_over_k2", f.one_over_k2}};
}

struct CommSim {
    Json report;
    std::vector<std::vector<std::string>> csv;
};

Json event_json(const CommEvent& e) {
    return {{"collective", std::string(to_string(e.kind))},
            {"step", e.step},
            {"group_size", e.group_size},
            {"payload_per_rank", e.payload_per_rank},
            {"global_traffic", e.global_traffic()}};
}

CommSim comm_sim(const GridShape& g, std::size_t n, std::size_t blocks, std::size_t batch,
                 std::size_t chan, std::uint64_t seed, std::size_t threads, Checks& checks) {
    if (!g.divisible_by_k2()) {
        throw UsageError("comm-sim needs H and W divisible by k^2 on grid " + g.to_string());
    }
    if (n == 0 || g.k2() % n != 0) {
        throw UsageError("comm-sim needs k^2 = " + std::to_string(g.k2()) +
                         " divisible by --group-size " + std::to_string(n));
    }
    if (blocks == 0) throw UsageError("--blocks must be positive");
    const auto x = random_tensor(batch, g.seq_len(), chan, seed);
    ProcessGroup group = shard_pattern_layout(apply_index_map(x, orig_to_tsa(g, batch)), g, n);
    const std::size_t per_rank = group.balanced_elements();
    SparsePattern layout = SparsePattern::TokenWise;
    const SspOptions options{{}, threads > 1};

    CommSim sim;
    sim.csv.push_back({"block", "method", "collective", "step", "group_size", "payload_per_rank",
                       "global_traffic"});
    CommLog ssp_all;
    CommLog ulysses_all;
    CommLog naive_all;
    Json per_block = Json::array();
    bool oracle_ok = true;
    bool one_per_block = true;
    for (std::size_t b = 0; b < blocks; ++b) {
        CommLog log;
        const ProcessGroup ref = reference::switch_by_gather(group, g, layout);
        group = ssp_pattern_switch(group, g, layout, log, options);
        for (std::size_t r = 0; r < n; ++r) {
            oracle_ok = oracle_ok && group.ranks[r].local == ref.ranks[r].local;
        }
        one_per_block = one_per_block && log.count(Collective::AllToAll) == 1 &&
                        log.count(Collective::AllGather) == 0;
        group.balanced_elements();
        layout = layout == SparsePattern::TokenWise ? SparsePattern::GroupWise
                                                    : SparsePattern::TokenWise;
        const CommLog uly = ulysses_block_comm(n, per_rank);
        const CommLog naive = naive_switch_comm(n, per_rank);
        Json events = Json::array();
        auto add = [&](const char* method, const CommLog& l) {
            for (const auto& e : l.events()) {
                events.push_back(event_json(e));
                events.back()["method"] = method;
                sim.csv.push_back({std::to_string(b), method, std::string(to_string(e.kind)),
                                   e.step, std::to_string(e.group_size),
                                   std::to_string(e.payload_per_rank),
                                   std::to_string(e.global_traffic())});
            }
        };
        add("ssp", log);
        add("ulysses", uly);
        add("naive", naive);
        per_block.push_back({{"block", b}, {"events", events}});
        ssp_all.append(log);
        ulysses_all.append(uly);
        naive_all.append(naive);
    }
    checks.expect(oracle_ok, "ssp switch equals the gather oracle");
    checks.expect(one_per_block, "one all-to-all and no all-gather per ssp switch");

    const CommComparison cmp = comm_comparison(n, per_rank);
    const std::size_t ssp_events = ssp_all.events().size();
    const std::size_t uly_events = ulysses_all.events().size();
    const double ratio = static_cast<double>(ssp_all.total_payload_per_rank()) /
                         static_cast<double>(ulysses_all.total_payload_per_rank());
    checks.expect(ssp_events == blocks && uly_events == 4 * blocks, "1 vs 4 collectives per block");
    checks.expect(ssp_all.total_payload_per_rank() * 4 == ulysses_all.total_payload_per_rank(),
                  "ssp volume is a quarter of ulysses");
    checks.expect(naive_all.total_global_traffic() == blocks * n * (n - 1) * per_rank,
                  "naive traffic N(N-1)S");
    checks.expect(ssp_all.total_global_traffic() == blocks * (n - 1) * per_rank,
                  "ssp traffic (N-1)S");

    Json growth = Json::array();
    for (const auto& row : cmp.growth) {
        growth.push_back({{"group_size", row.group_size},
                          {"naive_global", row.naive_global},
                          {"ssp_global", row.ssp_global},
                          {"naive_over_ssp", row.naive_over_ssp}});
    }
    Json& j = sim.report;
    j["grid"] = grid_json(g);
    j["k"] = g.k;
    j["group_size"] = n;
    j["blocks"] = blocks;
    j["batch"] = batch;
    j["chan"] = chan;
    j["per_rank_elements"] = per_rank;
    j["bytes_per_element"] = kBytesPerElement;
    j["ssp_events"] = ssp_events;
    j["ulysses_events"] = uly_events;
    j["ssp_all_gather_events"] = ssp_all.count(Collective::AllGather);
    j["ssp_payload_per_rank"] = ssp_all.total_payload_per_rank();
    j["ulysses_payload_per_rank"] = ulysses_all.total_payload_per_rank();
    j["ssp_bytes_per_rank"] = ssp_all.total_payload_per_rank() * kBytesPerElement;
    j["ulysses_bytes_per_rank"] = ulysses_all.total_payload_per_rank() * kBytesPerElement;
    j["volume_ratio"] = ratio;
    j["volume_reduction"] = 1.0 - ratio;
    j["ssp_global_traffic"] = ssp_all.total_global_traffic();
    j["ulysses_global_traffic"] = ulysses_all.total_global_traffic();
    j["naive_global_traffic"] = naive_all.total_global_traffic();
    j["growth"] = growth;
    j["per_block"] = per_block;
    return sim;
}

std::string hex_code(std::uint8_t c) {
    static const char* digits = "0123456789abcdef";
    return std::string("0x") + digits[c >> 4] + digits[c & 15];
}

Json hif8_summary(Checks& checks) {
    const Hif8Spec& spec = Hif8Spec::default_spec();
    std::set<double> values;
    std::set<int> exps;
    bool fixpoint = true;
    for (const CodePoint& p : spec.points()) {
        values.insert(p.value);
        if (!p.zero) exps.insert(p.exponent);
        fixpoint = fixpoint && spec.encode(p.value) == p.code;
    }
    bool central = true;
    for (int e = -3; e <= 3; ++e) central = central && spec.mantissa_bits(e) == 3;
    checks.expect(values.size() == 256, "256 distinct hif8 values");
    checks.expect(exps.size() == 38 && *exps.begin() == -22 && *exps.rbegin() == 15,
                  "hif8 exponents cover [-22, 15]");
    checks.expect(central, "hif8 m(e) = 3 on [-3, 3]");
    checks.expect(spec.mantissa_bits(-22) == 1 && spec.mantissa_bits(15) == 1,
                  "hif8 m(e) = 1 at the extremes");
    checks.expect(fixpoint, "hif8 encode(decode(c)) = c");
    Json taper = Json::array();
    for (const auto& t : spec.taper()) taper.push_back(Json::array({t.exponent, t.mantissa_bits}));
    return {{"distinct_values", values.size()},
            {"distinct_exponents", exps.size()},
            {"min_exponent", *exps.begin()},
            {"max_exponent", *exps.rbegin()},
            {"max_value", spec.max_value()},
            {"zero_code", hex_code(spec.zero_code())},
            {"fixpoint", fixpoint},
            {"taper", taper}};
}

Json quantizer_scales(Checks& checks) {
    Json rows = Json::array();
    for (double amax : {30.0, 448.0}) {
        for (QuantMode mode : {QuantMode::Forward, QuantMode::Backward}) {
            SequenceTensor x(1, 3, 1, std::vector<double>{amax / 2, -amax, amax / 4});
            const auto q = quantize_tensor(x, mode);
            const double expected = hif8_target_max(mode) / (amax + kDefaultScaleEpsilon);
            checks.expect(std::abs(q.scale - expected) <= 1e-12,
                          "quantizer scale for amax " + format_real(amax) + " " + to_string(mode));
            rows.push_back({{"amax", amax},
                            {"mode", to_string(mode)},
                            {"target_max", hif8_target_max(mode)},
                            {"scale", q.scale},
                            {"expected", expected}});
        }
    }
    return rows;
}

Json error_json(const ErrorStats& s) {
    return {{"max_abs", s.max_abs}, {"mean_abs", s.mean_abs}, {"max_rel", s.max_rel},
            {"mean_rel", s.mean_rel}};
}

Json probe_report(std::uint64_t seed, Checks& checks) {
    const GridShape g(1, 8, 8, 2);
    const auto pg = pad_grid(g);
    const auto x = random_tensor(1, g.seq_len(), 4, derive_seed(seed, 10));
    const auto proj = Projections::random(4, derive_seed(seed, 11));
    const auto r = quantized_attention_probe(x, pg, SparsePattern::TokenWise, proj);
    // Scaled inputs stay within [-15, 15] where the loosest binade has m = 1.
    checks.expect(r.input.max_rel <= 0.25, "probe input error within the binade bound");
    return {{"grid", grid_json(g)}, {"pattern", "tsa"},   {"mode", "forward"},
            {"scale", r.scale},     {"amax", r.amax},     {"input", error_json(r.input)},
            {"output", error_json(r.output)}};
}

struct SamplerRun {
    Json verdict;
    std::vector<MomentCheckRow> rows;
};

SamplerRun sampler_run(std::size_t steps, std::size_t sde_steps, std::size_t ensemble,
                       std::uint64_t seed, std::size_t threads, Checks& checks) {
    if (steps == 0) throw UsageError("--steps must be positive");
    if (sde_steps > steps) throw UsageError("--sde-steps exceeds --steps");
    if (ensemble < 2) throw UsageError("--ensemble must be at least 2");
    const FlowProcess proc = ou_toy();
    const auto x0 = sample_marginal(proc, 1.0, ensemble, derive_seed(seed, 0));
    const auto sched = first_steps_sde(steps, sde_steps);
    const auto mixed = mixed_rollout(x0, sched, proc, derive_seed(seed, 1), threads);
    const auto check = check_marginals(mixed, proc, ensemble);

    const auto empty = mixed_rollout(x0, make_schedule(steps, {}), proc, derive_seed(seed, 1));
    const auto ode = ode_rollout(x0, make_schedule(steps, {}), proc);
    const bool bitwise = empty.final_states == ode.final_states && empty.normal_draws == 0;
    const std::size_t expected_draws = sde_steps * proc.dim * ensemble;

    checks.expect(check.pass, "mixed sampler marginals within 4 standard errors");
    checks.expect(bitwise, "empty SDE set equals the ODE rollout bitwise");
    checks.expect(mixed.normal_draws == expected_draws, "normal draws equal |S| * dim * ensemble");

    SamplerRun run;
    run.rows = check.rows;
    run.verdict = {{"process", "ou beta=1 N(0,I) dim=2"},
                   {"steps", steps},
                   {"sde_steps", sde_steps},
                   {"ensemble", ensemble},
                   {"seed", seed},
                   {"tolerance_se", check.tolerance_se},
                   {"comparisons", check.rows.size() * 2},
                   {"correction", "none; tolerance is per moment per step"},
                   {"max_mean_z", check.max_mean_z},
                   {"max_var_z", check.max_var_z},
                   {"normal_draws", mixed.normal_draws},
                   {"expected_normal_draws", expected_draws},
                   {"empty_set_matches_ode", bitwise},
                   {"marginals_pass", check.pass}};
    return run;
}

// --- output ------------------------------------------------------------------

std::string csv_line(const std::vector<std::string>& cells) {
    std::string s;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) s += ",";
        s += cells[i];
    }
    return s + "\n";
}

std::string sampler_csv(const std::vector<MomentCheckRow>& rows) {
    std::string s = csv_line({"step", "t", "dim", "mean", "var", "analytic_mean", "analytic_var",
                              "mean_z", "var_z"});
    for (const auto& r : rows) {
        s += csv_line({std::to_string(r.step), format_real(r.t), std::to_string(r.dim),
                       format_real(r.mean), format_real(r.var), format_real(r.analytic_mean),
                       format_real(r.analytic_var), format_real(r.mean_z), format_real(r.var_z)});
    }
    return s;
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw UsageError("cannot open '" + path + "' for writing");
    f << text;
    if (!f) throw UsageError("failed writing '" + path + "'");
}

void emit(const RunConfig& cfg, std::ostream& out, const std::string& text) {
    if (cfg.out.empty()) {
        out << text;
    } else {
        write_file(cfg.out, text);
    }
}

std::string format_or(const RunConfig& cfg, const std::string& fallback) {
    const std::string f = cfg.format.empty() ? fallback : cfg.format;
    if (f != "json" && f != "csv") throw UsageError("--format must be json or csv");
    return f;
}

int conclude(const Checks& checks, std::ostream& err) {
    for (const auto& f : checks.failed()) err << "assertion failed: " << f << "\n";
    return checks.pass() ? kExitPass : kExitAssertion;
}

}  // namespace

Json report_all(std::uint64_t seed) {
    Checks checks;
    const std::vector<GridShape> grids = {GridShape(1, 4, 4, 2), GridShape(2, 4, 4, 2),
                                          GridShape(1, 8, 8, 2), GridShape(2, 8, 8, 2),
                                          GridShape(1, 9, 9, 3)};
    Json j;
    j["seed"] = seed;
    Json rearr = Json::array();
    Json reach = Json::array();
    for (std::size_t i = 0; i < grids.size(); ++i) {
        rearr.push_back(rearrange_report(grids[i], 2, derive_seed(seed, 100 + i), false, checks));
        reach.push_back(reach_report(grids[i], checks));
    }
    j["rearrange"] = rearr;
    j["reach"] = reach;
    j["anyres"] = mask_report(pad_grid(GridShape(1, 5, 6, 2)), checks);
    Json attn = Json::array();
    std::vector<GridShape> attn_grids = grids;
    attn_grids.push_back(GridShape(1, 5, 6, 2));
    for (std::size_t i = 0; i < attn_grids.size(); ++i) {
        for (auto p : {SparsePattern::TokenWise, SparsePattern::GroupWise}) {
            attn.push_back(attn_record(attn_grids[i], p, 1, 4, derive_seed(seed, 200 + i), checks));
        }
    }
    j["attention"] = attn;
    j["flops"] = Json::array({flop_json(GridShape(1, 8, 8, 2), checks),
                              flop_json(GridShape(1, 9, 9, 3), checks)});
    Json comm = Json::array();
    for (const auto& [g, n] : std::vector<std::pair<GridShape, std::size_t>>{
             {GridShape(1, 4, 4, 2), 4}, {GridShape(1, 8, 8, 2), 2}, {GridShape(1, 8, 8, 2), 4}}) {
        Json r = comm_sim(g, n, 3, 1, 4, derive_seed(seed, 300 + n), 1, checks).report;
        r.erase("per_block");
        comm.push_back(r);
    }
    j["comm"] = comm;
    j["hif8"] = hif8_summary(checks);
    j["quantizer"] = quantizer_scales(checks);
    j["probe"] = probe_report(seed, checks);
    j["sampler"] = sampler_run(25, 10, 10000, derive_seed(seed, 400), 1, checks).verdict;
    finish(j, checks);
    return j;
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Skiparse / SSP / HiF8 / mixed-sampler verification tool", "osp"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_config("--config", "", "Flat key=value file mirroring the flags; flags win");

    RunConfig cfg;
    // Config files hand "1,8,8" over as an array, so split on commas either way.
    app.add_option("--grid", cfg.grid, "Grid T,H,W")->delimiter(',')->default_str("1,8,8");
    app.add_option("--k", cfg.k, "Sparse ratio")->capture_default_str();
    app.add_option("--group-size", cfg.group_size, "Sequence-parallel group size N")
        ->capture_default_str();
    app.add_option("--seed", cfg.seed, "Master seed (OSP_SEED overrides)")->capture_default_str();
    app.add_option("--format", cfg.format, "json or csv");
    app.add_option("--out", cfg.out, "Write the report here instead of stdout");
    app.add_option("--batch", cfg.batch, "Batch items")->capture_default_str();
    app.add_option("--chan", cfg.chan, "Channels")->capture_default_str();
    app.add_option("--pattern", cfg.pattern, "tsa, gsa or both")->capture_default_str();
    app.add_option("--mode", cfg.mode, "Quantizer mode: forward or backward")->capture_default_str();
    app.add_option("--threads", cfg.threads, "Workers for rank-local or per-member work")
        ->capture_default_str();

    bool assignments = false;
    auto* rc = app.add_subcommand("rearrange-check", "Round trips, coherence and bijections");
    rc->add_flag("--assignments", assignments, "Include the token -> slot table");

    app.add_subcommand("reach", "Maximum alternating-hop count over all token pairs");

    std::string bin_path;
    auto* md = app.add_subcommand("mask-dump", "Padded grid and validity mask");
    md->add_option("--bin", bin_path, "Write the binary mask dump here");

    app.add_subcommand("attn-verify", "Skiparse attention against the masked dense oracle");

    std::size_t blocks = 1;
    auto* cs = app.add_subcommand("comm-sim", "Simulated SSP switches and communication ledger");
    cs->add_option("--blocks", blocks, "Blocks, one pattern switch each")->capture_default_str();

    auto* hif8 = app.add_subcommand("hif8", "HiF8 codec");
    hif8->require_subcommand(1);
    auto* h_enum = hif8->add_subcommand("enum", "Full code/value table");
    std::vector<double> values;
    auto* h_encode = hif8->add_subcommand("encode", "Encode reals");
    h_encode->add_option("--value", values, "Value to encode (repeatable)")->required();
    std::string in_path;
    std::string dequant_path;
    double rand_amax = 30.0;
    auto* h_quant = hif8->add_subcommand("quantize", "Per-tensor current-scaling quantizer");
    h_quant->add_option("--in", in_path, "Input OSPT tensor (random when absent)");
    h_quant->add_option("--amax", rand_amax, "Range of the random input")->capture_default_str();
    h_quant->add_option("--dequant", dequant_path, "Write the dequantized OSPT tensor here");

    std::size_t steps = 25;
    std::size_t sde_steps = 10;
    std::size_t ensemble = 10000;
    std::string csv_path;
    auto* sm = app.add_subcommand("sampler", "Mixed ODE/SDE sampler on the OU toy");
    sm->add_option("--steps", steps)->capture_default_str();
    sm->add_option("--sde-steps", sde_steps, "Leading steps that use the SDE")->capture_default_str();
    sm->add_option("--ensemble", ensemble)->capture_default_str();
    sm->add_option("--csv", csv_path, "Also write the per-step CSV here");

    auto* ra = app.add_subcommand("report-all", "Every verification in one deterministic report");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitPass;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitPass;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << "\n" << app.help();
        return kExitUsage;
    }

    try {
        if (const char* env = std::getenv("OSP_SEED")) {
            const std::string s(env);
            if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) {
                throw UsageError("OSP_SEED must be a non-negative integer");
            }
            cfg.seed = std::stoull(s);
        }
        if (cfg.threads == 0) throw UsageError("--threads must be positive");
        if (cfg.chan == 0 || cfg.batch == 0) throw UsageError("--chan and --batch must be positive");

        Checks checks;
        if (rc->parsed()) {
            Json j = rearrange_report(cfg.shape(), cfg.batch, cfg.seed, assignments, checks);
            finish(j, checks);
            emit(cfg, out, dump_json(j));
        } else if (app.got_subcommand("reach")) {
            Json j = reach_report(cfg.shape(), checks);
            finish(j, checks);
            emit(cfg, out, dump_json(j));
        } else if (md->parsed()) {
            const PaddedGrid pg = pad_grid(cfg.shape());
            Json j = mask_report(pg, checks);
            if (!bin_path.empty()) {
                const auto bytes = serialize_mask(pg);
                write_file(bin_path, std::string(bytes.begin(), bytes.end()));
                j["bin"] = bin_path;
            }
            finish(j, checks);
            emit(cfg, out, dump_json(j));
        } else if (app.got_subcommand("attn-verify")) {
            const GridShape g = cfg.shape();
            Json records = Json::array();
            for (auto p : patterns_from(cfg.pattern)) {
                if (p == SparsePattern::Original) continue;
                records.push_back(attn_record(g, p, cfg.batch, cfg.chan, cfg.seed, checks));
            }
            Json j;
            j["records"] = records;
            finish(j, checks);
            emit(cfg, out, dump_json(j));
        } else if (cs->parsed()) {
            CommSim sim = comm_sim(cfg.shape(), cfg.group_size, blocks, cfg.batch, cfg.chan,
                                   cfg.seed, cfg.threads, checks);
            if (format_or(cfg, "json") == "csv") {
                std::string text;
                for (const auto& row : sim.csv) text += csv_line(row);
                emit(cfg, out, text);
            } else {
                finish(sim.report, checks);
                emit(cfg, out, dump_json(sim.report));
            }
        } else if (h_enum->parsed()) {
            Json summary = hif8_summary(checks);
            const Hif8Spec& spec = Hif8Spec::default_spec();
            if (format_or(cfg, "csv") == "csv") {
                std::string text = csv_line(
                    {"code", "sign", "exponent", "mantissa_bits", "mantissa", "value"});
                for (const CodePoint& p : spec.points()) {
                    text += csv_line({hex_code(p.code), p.negative ? "-" : "+",
                                      p.zero ? "" : std::to_string(p.exponent),
                                      std::to_string(p.mantissa_bits), std::to_string(p.mantissa),
                                      format_real(p.value)});
                }
                emit(cfg, out, text);
            } else {
                Json rows = Json::array();
                for (const CodePoint& p : spec.points()) {
                    rows.push_back({{"code", hex_code(p.code)},
                                    {"sign", p.negative ? "-" : "+"},
                                    {"exponent", p.zero ? Json(nullptr) : Json(p.exponent)},
                                    {"mantissa_bits", p.mantissa_bits},
                                    {"mantissa", p.mantissa},
                                    {"value", p.value}});
                }
                summary["codes"] = rows;
                finish(summary, checks);
                emit(cfg, out, dump_json(summary));
            }
        } else if (h_encode->parsed()) {
            const Hif8Spec& spec = Hif8Spec::default_spec();
            Json rows = Json::array();
            for (double v : values) {
                std::uint8_t code = 0;
                try {
                    code = spec.encode(v);
                } catch (const EncodeError& e) {
                    throw UsageError(e.what());
                }
                const CodePoint& p = spec.point(code);
                rows.push_back({{"input", v},
                                {"code", hex_code(code)},
                                {"value", p.value},
                                {"exponent", p.zero ? Json(nullptr) : Json(p.exponent)},
                                {"mantissa_bits", p.mantissa_bits},
                                {"abs_error", std::abs(p.value - v)}});
            }
            Json j;
            j["encoded"] = rows;
            emit(cfg, out, dump_json(j));
        } else if (h_quant->parsed()) {
            QuantMode mode;
            try {
                mode = parse_quant_mode(cfg.mode);
            } catch (const Error& e) {
                throw UsageError(e.what());
            }
            const GridShape g = cfg.shape();
            const SequenceTensor x = in_path.empty()
                                         ? random_tensor(cfg.batch, g.seq_len(), cfg.chan,
                                                         cfg.seed, -rand_amax, rand_amax)
                                         : read_tensor_file(in_path);
            const auto q = quantize_tensor(x, mode);
            const auto dq = dequantize(q);
            const double expected = hif8_target_max(mode) / (q.amax + kDefaultScaleEpsilon);
            checks.expect(std::abs(q.scale - expected) <= 1e-12 * expected,
                          "scale = target / (amax + eps)");
            Json sidecar = {{"scale", q.scale}, {"mode", to_string(mode)}, {"amax", q.amax}};
            if (!cfg.out.empty()) {
                // Codes are stored as integer-valued reals in the OSPT container.
                SequenceTensor codes(x.batch(), x.seq(), x.chan());
                for (std::size_t i = 0; i < codes.size(); ++i) codes.data()[i] = q.codes.data()[i];
                write_tensor_file(cfg.out, codes);
                write_file(cfg.out + ".json", dump_json(sidecar));
            }
            if (!dequant_path.empty()) write_tensor_file(dequant_path, dq);
            Json j = sidecar;
            j["epsilon"] = kDefaultScaleEpsilon;
            j["target_max"] = hif8_target_max(mode);
            j["shape"] = Json::array({x.batch(), x.seq(), x.chan()});
            j["error"] = error_json(error_stats(x, dq));
            finish(j, checks);
            out << dump_json(j);
        } else if (sm->parsed()) {
            SamplerRun run = sampler_run(steps, sde_steps, ensemble, cfg.seed, cfg.threads, checks);
            if (!csv_path.empty()) write_file(csv_path, sampler_csv(run.rows));
            if (format_or(cfg, "json") == "csv") {
                emit(cfg, out, sampler_csv(run.rows));
            } else {
                finish(run.verdict, checks);
                emit(cfg, out, dump_json(run.verdict));
            }
        } else if (ra->parsed()) {
            const Json j = report_all(cfg.seed);
            emit(cfg, out, dump_json(j));
            for (const auto& f : j["failed"]) err << "assertion failed: " << f.get<std::string>() << "\n";
            return j["pass"].get<bool>() ? kExitPass : kExitAssertion;
        }
        return conclude(checks, err);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    }
}

int run_main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return dispatch(args, std::cout, std::cerr);
}

}  // namespace osp::cli
