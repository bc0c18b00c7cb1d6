// Copyright 2026 The osp-kit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Acceptance runner: one PASS/FAIL line per criterion, each with its runtime
// limit. Library results are compared against the loop oracles in
// tests/oracles.h wherever an oracle exists.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "../oracles.h"
#include "cli.h"
#include "osp/anyres.h"
#include "osp/attention.h"
#include "osp/hif8.h"
#include "osp/mixflow.h"
#include "osp/skiparse.h"
#include "osp/ssp.h"

namespace {

using namespace osp;

struct Outcome {
    bool ok = true;
    std::string detail;

    void require(bool cond, const std::string& what) {
        if (!cond) {
            ok = false;
            if (!detail.empty()) detail += "; ";
            detail += "failed: " + what;
        }
    }
    void note(const std::string& s) {
        if (!detail.empty()) detail += "; ";
        detail += s;
    }
};

const std::vector<GridShape>& suite_grids() {
    static const std::vector<GridShape> g = {GridShape(1, 4, 4, 2), GridShape(2, 4, 4, 2),
                                             GridShape(1, 8, 8, 2), GridShape(2, 8, 8, 2),
                                             GridShape(1, 9, 9, 3)};
    return g;
}

Outcome rearrange_suite() {
    Outcome o;
    for (const GridShape& g : suite_grids()) {
        for (std::size_t batch : {1u, 2u}) {
            const std::string at = g.to_string() + " b=" + std::to_string(batch);
            const auto x = random_tensor(batch, g.seq_len(), 3, 1000 + g.seq_len() + batch);
            const auto xt = apply_index_map(x, orig_to_tsa(g, batch));
            const auto xg = apply_index_map(x, orig_to_gsa(g, batch));
            o.require(xt == oracle::tsa_layout(x, g.t, g.h, g.w, g.k), "tsa layout oracle " + at);
            o.require(xg == oracle::gsa_layout(x, g.t, g.h, g.w, g.k), "gsa layout oracle " + at);
            o.require(apply_index_map(xt, tsa_to_orig(g, batch)) == x, "tsa round trip " + at);
            o.require(apply_index_map(xg, gsa_to_orig(g, batch)) == x, "gsa round trip " + at);
            o.require(apply_index_map(apply_index_map(xt, tsa_to_gsa(g, batch)),
                                      gsa_to_tsa(g, batch)) == xt,
                      "tsa->gsa->tsa " + at);
            o.require(apply_index_map(xt, tsa_to_gsa(g, batch)) == xg,
                      "tsa_to_gsa o orig_to_tsa = orig_to_gsa " + at);
            o.require(compose(orig_to_tsa(g, batch), tsa_to_gsa(g, batch)) == orig_to_gsa(g, batch),
                      "composed map equality " + at);
        }
    }
    o.note(std::to_string(suite_grids().size()) + " grids x batch {1,2}");
    return o;
}

Outcome reachability() {
    Outcome o;
    std::string hops;
    for (const GridShape& g : suite_grids()) {
        const std::size_t lib = reachability_hops(g);
        const std::size_t ref = oracle::reach_by_classes(g.t, g.h, g.w, g.k);
        o.require(lib <= 2, "hops <= 2 on " + g.to_string());
        o.require(lib == ref, "hops match the class-intersection oracle on " + g.to_string());
        hops += (hops.empty() ? "" : ",") + std::to_string(lib);
    }
    o.note("max hops per grid = " + hops);
    return o;
}

Outcome local_equivalence() {
    Outcome o;
    for (const GridShape& g : {GridShape(1, 8, 8, 2), GridShape(1, 9, 9, 3)}) {
        o.require(local_equivalence_holds(g, SparsePattern::TokenWise), "tsa " + g.to_string());
        o.require(local_equivalence_holds(g, SparsePattern::GroupWise), "gsa " + g.to_string());
    }
    return o;
}

Outcome any_resolution() {
    Outcome o;
    const GridShape g(1, 5, 6, 2);
    const PaddedGrid pg = pad_grid(g);
    const std::size_t chan = 4;
    const auto proj = Projections::random(chan, 21);
    const auto x = pad_tensor(random_tensor(1, g.seq_len(), chan, 22), pg);
    const auto in = proj.project(x);
    double worst = 0.0;
    for (auto p : {SparsePattern::TokenWise, SparsePattern::GroupWise}) {
        const auto got = skiparse_attention(x, pg, p, proj);
        // 2-D pair mask from first principles: both tokens real and in the
        // same class of the padded grid.
        const std::size_t W = pg.padded.w;
        const std::size_t H = pg.padded.h;
        const std::size_t k = pg.padded.k;
        auto cls = [&](std::size_t i) {
            const std::size_t r = (i / W) % H;
            const std::size_t c = i % W;
            return p == SparsePattern::TokenWise ? oracle::tsa_class(r, c, k)
                                                 : oracle::gsa_class(r, c, k);
        };
        const auto ref = oracle::naive_attention(
            in.q, in.k, in.v, [&](std::size_t, std::size_t i, std::size_t j) {
                return pg.is_real(i) && pg.is_real(j) && cls(i) == cls(j);
            });
        const double err = max_abs_diff(strip_padding(got, pg), strip_padding(ref, pg));
        worst = std::max(worst, err);
        o.require(err <= 1e-10, std::string(to_string(p)) + " matches the 2-D mask oracle");

        auto noisy = x;
        Rng rng(23);
        for (std::size_t s = 0; s < noisy.seq(); ++s) {
            if (pg.is_real(s)) continue;
            for (double& v : noisy.row(0, s)) v = rng.uniform(-1e3, 1e3);
        }
        o.require(strip_padding(skiparse_attention(noisy, pg, p, proj), pg) ==
                      strip_padding(got, pg),
                  std::string(to_string(p)) + " invariant to pad contents");
    }
    char buf[64];
    std::snprintf(buf, sizeof buf, "max |err| = %.3g", worst);
    o.note(buf);
    return o;
}

Outcome ssp_protocol() {
    Outcome o;
    const std::vector<std::pair<GridShape, std::size_t>> cases = {
        {GridShape(1, 4, 4, 2), 4}, {GridShape(1, 8, 8, 2), 2}, {GridShape(1, 8, 8, 2), 4}};
    for (const auto& [g, n] : cases) {
        const std::string at = g.to_string() + " N=" + std::to_string(n);
        const auto x = random_tensor(1, g.seq_len(), 3, 31 + n);
        const auto xt = oracle::tsa_layout(x, g.t, g.h, g.w, g.k);
        const auto xg = oracle::gsa_layout(x, g.t, g.h, g.w, g.k);
        for (auto from : {SparsePattern::TokenWise, SparsePattern::GroupWise}) {
            const auto& src = from == SparsePattern::TokenWise ? xt : xg;
            const auto& dst = from == SparsePattern::TokenWise ? xg : xt;
            const ProcessGroup group = shard_pattern_layout(src, g, n);
            CommLog log;
            const ProcessGroup got = ssp_pattern_switch(group, g, from, log);
            const ProcessGroup ref = reference::switch_by_gather(group, g, from);
            bool same = true;
            bool balanced = true;
            for (std::size_t r = 0; r < n; ++r) {
                same = same && got.ranks[r].local == ref.ranks[r].local;
                balanced = balanced && got.ranks[r].local.size() == got.ranks[0].local.size();
            }
            const std::string dir = std::string(to_string(from)) + " " + at;
            o.require(same, "equals gather oracle " + dir);
            o.require(gather_shards(got) == dst, "equals loop layout oracle " + dir);
            o.require(log.count(Collective::AllToAll) == 1, "one all-to-all " + dir);
            o.require(log.count(Collective::AllGather) == 0, "no all-gather " + dir);
            o.require(balanced, "equal shards " + dir);
        }
    }
    return o;
}

Outcome comm_accounting() {
    Outcome o;
    for (std::size_t n : {1u, 2u, 4u, 8u, 16u}) {
        const std::size_t s = 1024;
        const CommComparison c = comm_comparison(n, s);
        const std::string at = "N=" + std::to_string(n);
        o.require(c.ssp_events == 1 && c.ulysses_events == 4, "1 vs 4 collectives " + at);
        o.require(c.ssp_total * 4 == c.ulysses_total, "volume ratio 1/4 " + at);
        o.require(c.volume_ratio == 0.25, "reported ratio 0.25 " + at);
        o.require(naive_switch_comm(n, s).total_global_traffic() == n * (n - 1) * s,
                  "naive N(N-1)S " + at);
        CommLog log;
        std::vector<SequenceTensor> send(n, SequenceTensor(n, s / n, 1));
        all_to_all(send, log);
        o.require(log.total_global_traffic() == (n - 1) * s, "ssp (N-1)S " + at);
    }
    for (const auto& row : comm_comparison(4, 1024).growth) {
        o.require(row.naive_global == row.group_size * row.ssp_global,
                  "naive/ssp growth = N at N=" + std::to_string(row.group_size));
    }
    return o;
}

Outcome hif8_format() {
    Outcome o;
    const Hif8Spec& spec = Hif8Spec::default_spec();
    std::set<double> values;
    std::set<int> exps;
    bool fixpoint = true;
    for (const CodePoint& p : spec.points()) {
        values.insert(p.value);
        if (!p.zero) exps.insert(p.exponent);
        fixpoint = fixpoint && spec.encode(p.value) == p.code;
    }
    o.require(values.size() == 256, "256 distinct values");
    std::set<int> want;
    for (int e = -22; e <= 15; ++e) want.insert(e);
    o.require(exps == want, "exponent set [-22, 15]");
    for (int e = -3; e <= 3; ++e) o.require(spec.mantissa_bits(e) == 3, "m(e) = 3 at " + std::to_string(e));
    o.require(spec.mantissa_bits(-22) == 1 && spec.mantissa_bits(15) == 1, "m(e) = 1 at extremes");
    o.require(fixpoint, "encode(decode(c)) = c");

    // Dense sweep: 76 signed binades, 13158 points each (top binade clipped
    // to the max value). A binade's width is the number of codes that land in
    // it; it equals m(e) everywhere except the negative e = -22 binade, which
    // keeps one code after the zero remap.
    const int per_binade = 13158;
    std::size_t points = 0;
    std::size_t violations = 0;
    double nominal_worst = 0.0;
    for (int e = -22; e <= 15; ++e) {
        for (int sign : {1, -1}) {
            int codes_in_binade = 0;
            for (const CodePoint& p : spec.points()) {
                if (!p.zero && p.exponent == e && (p.negative ? -1 : 1) == sign) ++codes_in_binade;
            }
            const double eff_bits = std::log2(static_cast<double>(codes_in_binade));
            const double bound = std::ldexp(1.0, -1) * std::pow(2.0, -eff_bits);
            const double lo = std::ldexp(1.0, e);
            const double hi = std::min(std::ldexp(1.0, e + 1), spec.max_value());
            for (int i = 0; i < per_binade; ++i) {
                const double mag = lo + (hi - lo) * i / per_binade;
                const double x = sign * mag;
                const double rel = std::abs(spec.decode(spec.encode(x)) - x) / mag;
                ++points;
                if (rel > bound) ++violations;
                if (codes_in_binade == (1 << spec.mantissa_bits(e))) {
                    nominal_worst = std::max(nominal_worst, rel / spec.relative_error_bound(e));
                }
            }
        }
    }
    o.require(points >= 1000000, "at least 10^6 sweep points");
    o.require(violations == 0, "per-binade bound, " + std::to_string(violations) + " violations");
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "%zu sweep points; worst err/bound %.4f over the 75 full binades; "
                  "negative e=-22 binade holds 1 code, bound 2^-1 applied there",
                  points, nominal_worst);
    o.note(buf);
    return o;
}

Outcome quantizer() {
    Outcome o;
    for (double amax : {30.0, 448.0}) {
        for (QuantMode mode : {QuantMode::Forward, QuantMode::Backward}) {
            SequenceTensor x(1, 2, 1, std::vector<double>{-amax, amax / 3});
            const double want = (mode == QuantMode::Forward ? 15.0 : 224.0) / (amax + kDefaultScaleEpsilon);
            const double got = quantize_tensor(x, mode).scale;
            o.require(std::abs(got - want) <= 1e-12,
                      "scale amax=" + std::to_string(amax) + " " + to_string(mode));
        }
    }
    return o;
}

Outcome mixed_sampler() {
    Outcome o;
    const FlowProcess proc = ou_toy();
    const std::size_t n = 10000;
    const std::uint64_t seed = 7;
    const auto x0 = sample_marginal(proc, 1.0, n, derive_seed(seed, 0));
    const auto mixed = mixed_rollout(x0, first_steps_sde(25, 10), proc, derive_seed(seed, 1));

    // Moments against the closed-form OU marginal N(0, I), recomputed here.
    double worst_mean = 0.0;
    double worst_var = 0.0;
    for (const StepMoments& m : mixed.moments) {
        for (std::size_t d = 0; d < 2; ++d) {
            worst_mean = std::max(worst_mean, std::abs(m.mean[d]) / std::sqrt(1.0 / n));
            worst_var = std::max(worst_var, std::abs(m.var[d] - 1.0) / std::sqrt(2.0 / (n - 1.0)));
        }
    }
    o.require(mixed.moments.size() == 26, "26 recorded times");
    o.require(worst_mean <= 4.0, "means within 4 SE");
    o.require(worst_var <= 4.0, "variances within 4 SE");
    const auto sched = make_schedule(25, {});
    const auto empty = mixed_rollout(x0, sched, proc, derive_seed(seed, 1));
    const auto ode = ode_rollout(x0, sched, proc);
    o.require(empty.final_states == ode.final_states, "S = {} bitwise equals ODE");
    for (std::size_t k = 0; k < ode.moments.size(); ++k) {
        o.require(empty.moments[k].mean == ode.moments[k].mean, "S = {} moments equal ODE");
    }
    char buf[96];
    std::snprintf(buf, sizeof buf, "max z: mean %.2f, var %.2f", worst_mean, worst_var);
    o.note(buf);
    return o;
}

Outcome flop_report_check() {
    Outcome o;
    for (const GridShape& g : {GridShape(1, 8, 8, 2), GridShape(1, 9, 9, 3)}) {
        for (auto p : {SparsePattern::TokenWise, SparsePattern::GroupWise}) {
            const FlopReport f = flop_report(g, p, 4);
            const std::size_t n = g.seq_len();
            o.require(f.full_flops == 2 * n * n * 4, "full flops 2 n^2 C");
            o.require(f.sparse_flops * g.k2() == f.full_flops, "sparse = full / k^2");
            o.require(f.ratio == 1.0 / static_cast<double>(g.k2()), "ratio 1/k^2");
            char buf[96];
            std::snprintf(buf, sizeof buf, "k=%zu %s measured %.6f vs 1/k %.6f", g.k,
                          std::string(to_string(p)).c_str(), f.ratio, f.one_over_k);
            if (p == SparsePattern::TokenWise) o.note(buf);
        }
    }
    return o;
}

Outcome determinism() {
    Outcome o;
    std::ostringstream a, b, ea, eb;
    const int ra = osp::cli::dispatch({"report-all", "--seed", "7"}, a, ea);
    const int rb = osp::cli::dispatch({"report-all", "--seed", "7"}, b, eb);
    o.require(ra == 0 && rb == 0, "report-all exits 0");
    o.require(!a.str().empty() && a.str() == b.str(), "byte-identical output");
    o.note(std::to_string(a.str().size()) + " bytes");
    return o;
}

struct Criterion {
    const char* name;
    double limit_s;
    std::function<Outcome()> run;
};

}  // namespace

int main() {
    const std::vector<Criterion> criteria = {
        {"rearrange oracle suite", 5, rearrange_suite},
        {"two-hop reachability", 30, reachability},
        {"local equivalence", 5, local_equivalence},
        {"any-resolution correctness", 5, any_resolution},
        {"ssp protocol", 5, ssp_protocol},
        {"communication accounting", 1, comm_accounting},
        {"hif8 format", 10, hif8_format},
        {"quantizer scales", 1, quantizer},
        {"mixed sampler marginals", 60, mixed_sampler},
        {"flop report", 1, flop_report_check},
        // No stated limit; report-all includes the sampler run, so the sampler
        // limit is reused for two runs.
        {"determinism", 120, determinism},
    };
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const auto& c = criteria[i];
        const auto t0 = std::chrono::steady_clock::now();
        Outcome out;
        try {
            out = c.run();
        } catch (const std::exception& e) {
            out.require(false, std::string("exception: ") + e.what());
        }
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (secs >= c.limit_s) {
            out.require(false, "runtime limit");
        }
        if (!out.ok) ++failures;
        std::printf("%s %2zu %-28s %8.3fs (limit %gs)  %s\n", out.ok ? "PASS" : "FAIL", i + 1,
                    c.name, secs, c.limit_s, out.detail.c_str());
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures,
                criteria.size());
    return failures == 0 ? 0 : 1;
}
