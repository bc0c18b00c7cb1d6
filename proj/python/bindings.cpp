// Copyright 2026 The osp-kit Authors
// SPDX-License-Identifier: Apache-2.0

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "osp/anyres.h"
#include "osp/attention.h"
#include "osp/hif8.h"
#include "osp/mixflow.h"
#include "osp/rearrange.h"
#include "osp/skiparse.h"
#include "osp/ssp.h"

namespace py = pybind11;
using namespace osp;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

SequenceTensor to_tensor(const Array& a) {
    if (a.ndim() != 3) throw py::value_error("expected a (batch, seq, chan) array");
    const auto* p = a.data();
    return SequenceTensor(a.shape(0), a.shape(1), a.shape(2),
                          std::vector<double>(p, p + a.size()));
}

Array to_array(const SequenceTensor& x) {
    Array a({x.batch(), x.seq(), x.chan()});
    std::copy(x.data().begin(), x.data().end(), a.mutable_data());
    return a;
}

GridShape grid(std::size_t t, std::size_t h, std::size_t w, std::size_t k) {
    return GridShape(t, h, w, k);
}

IndexMap named_map(const std::string& name, const GridShape& g, std::size_t batch) {
    if (name == "orig_to_tsa") return orig_to_tsa(g, batch);
    if (name == "tsa_to_orig") return tsa_to_orig(g, batch);
    if (name == "orig_to_gsa") return orig_to_gsa(g, batch);
    if (name == "gsa_to_orig") return gsa_to_orig(g, batch);
    if (name == "tsa_to_gsa") return tsa_to_gsa(g, batch);
    if (name == "gsa_to_tsa") return gsa_to_tsa(g, batch);
    throw py::value_error("unknown rearrange '" + name + "'");
}

}  // namespace

PYBIND11_MODULE(_ospkit, m) {
    m.doc() = "Skiparse rearranges, sparse sequence parallel simulation, HiF8 codec, mixed sampler";
    m.attr("__version__") = "0.1.0";

    py::register_exception<Error>(m, "OspError", PyExc_ValueError);

    m.def(
        "rearrange",
        [](const Array& x, const std::string& name, std::size_t t, std::size_t h, std::size_t w,
           std::size_t k) {
            const SequenceTensor in = to_tensor(x);
            const GridShape g(t, h, w, k);
            const bool from_pattern = name.rfind("orig_", 0) != 0;
            const std::size_t batch = from_pattern ? in.batch() / g.k2() : in.batch();
            return to_array(apply_index_map(in, named_map(name, g, batch)));
        },
        py::arg("x"), py::arg("name"), py::arg("t"), py::arg("h"), py::arg("w"), py::arg("k"),
        "Apply one of the six skiparse rearranges to a (batch, seq, chan) array.");

    m.def(
        "einops_rearrange",
        [](const Array& x, const std::string& pattern,
           const std::map<std::string, std::size_t>& sizes) {
            const AxisSizes axes(sizes.begin(), sizes.end());
            return to_array(rearrange(to_tensor(x), pattern, axes));
        },
        py::arg("x"), py::arg("pattern"), py::arg("sizes") = std::map<std::string, std::size_t>{},
        "Apply an einops-style rearrange over the (batch, seq, chan) axes.");

    m.def(
        "reachability_hops",
        [](std::size_t t, std::size_t h, std::size_t w, std::size_t k) {
            return reachability_hops(grid(t, h, w, k));
        },
        py::arg("t"), py::arg("h"), py::arg("w"), py::arg("k"));

    m.def(
        "skiparse_attention",
        [](const Array& x, std::size_t t, std::size_t h, std::size_t w, std::size_t k,
           const std::string& pattern, std::uint64_t seed) {
            const SequenceTensor in = to_tensor(x);
            const PaddedGrid pg = pad_grid(grid(t, h, w, k));
            const auto proj = Projections::random(in.chan(), seed);
            const auto out = skiparse_attention(pad_tensor(in, pg), pg, parse_pattern(pattern), proj);
            return to_array(strip_padding(out, pg));
        },
        py::arg("x"), py::arg("t"), py::arg("h"), py::arg("w"), py::arg("k"), py::arg("pattern"),
        py::arg("seed") = 0,
        "Skiparse attention on an unpadded grid; padding is applied and stripped internally.");

    m.def(
        "flop_ratio",
        [](std::size_t t, std::size_t h, std::size_t w, std::size_t k) {
            return flop_report(grid(t, h, w, k), SparsePattern::TokenWise).ratio;
        },
        py::arg("t"), py::arg("h"), py::arg("w"), py::arg("k"));

    m.def(
        "comm_comparison",
        [](std::size_t n, std::size_t s) {
            const CommComparison c = comm_comparison(n, s);
            py::dict d;
            d["ssp_events"] = c.ssp_events;
            d["ulysses_events"] = c.ulysses_events;
            d["ssp_total"] = c.ssp_total;
            d["ulysses_total"] = c.ulysses_total;
            d["volume_ratio"] = c.volume_ratio;
            return d;
        },
        py::arg("group_size"), py::arg("per_rank_elements"));

    m.def("hif8_values", [] {
        std::vector<double> v;
        for (const auto& p : Hif8Spec::default_spec().points()) v.push_back(p.value);
        return v;
    });
    m.def("hif8_encode", [](double x) { return Hif8Spec::default_spec().encode(x); });
    m.def("hif8_decode", [](std::uint8_t c) { return Hif8Spec::default_spec().decode(c); });
    m.def(
        "quantize_scale",
        [](const Array& x, const std::string& mode) {
            return quantize_tensor(to_tensor(x), parse_quant_mode(mode)).scale;
        },
        py::arg("x"), py::arg("mode") = "forward");

    m.def(
        "sampler_check",
        [](std::size_t steps, std::size_t sde_steps, std::size_t ensemble, std::uint64_t seed) {
            const FlowProcess proc = ou_toy();
            const auto x0 = sample_marginal(proc, 1.0, ensemble, derive_seed(seed, 0));
            const auto r =
                mixed_rollout(x0, first_steps_sde(steps, sde_steps), proc, derive_seed(seed, 1));
            const auto c = check_marginals(r, proc, ensemble);
            py::dict d;
            d["pass"] = c.pass;
            d["max_mean_z"] = c.max_mean_z;
            d["max_var_z"] = c.max_var_z;
            d["normal_draws"] = r.normal_draws;
            return d;
        },
        py::arg("steps") = 25, py::arg("sde_steps") = 10, py::arg("ensemble") = 10000,
        py::arg("seed") = 7);
}
