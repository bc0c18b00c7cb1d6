// Copyright 2026 The osp-kit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Reverse-time samplers for a diffusion process dx = f(x,t) dt + g(t) dw:
//
//   probability-flow ODE   dx = [f - 1/2 g^2 s] dt
//   equivalent SDE         dx = [f - g^2 s] dt + g dw
//
// with s = grad log q_t. The mixed sampler takes SDE steps on a chosen set of
// step indices and ODE steps elsewhere. Integration is explicit Euler /
// Euler-Maruyama on a uniform grid running from t_start down to t_end.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "osp/gridseq.h"

namespace osp {

/// Diagonal Gaussian marginal.
struct GaussianMarginal {
    std::vector<double> mean;
    std::vector<double> var;
};

struct FlowProcess {
    using Field = std::function<void(std::span<const double> x, double t, std::span<double> out)>;

    std::size_t dim = 0;
    Field drift;
    std::function<double(double t)> diffusion;
    Field score;
    /// Closed-form marginal q_t, when known.
    std::function<GaussianMarginal(double t)> marginal;
};

/// Variance-preserving Ornstein-Uhlenbeck process dx = -beta/2 x dt + sqrt(beta) dw
/// started from N(data_mean, diag(data_var)); marginals and score are exact.
FlowProcess ou_process(double beta, std::vector<double> data_mean, std::vector<double> data_var);

/// Two-dimensional OU toy with beta = 1 and N(0, I) data.
FlowProcess ou_toy();

struct SamplerSchedule {
    /// num_steps + 1 decreasing times.
    std::vector<double> times;
    /// One flag per step index; true selects the SDE update.
    std::vector<bool> sde;

    std::size_t num_steps() const { return sde.size(); }
    std::size_t sde_count() const;
};

/// Uniform grid from t_start to t_end; SDE on the step indices in `sde_steps`.
SamplerSchedule make_schedule(std::size_t num_steps, const std::vector<std::size_t>& sde_steps,
                              double t_start = 1.0, double t_end = 0.0);

/// Schedule whose first `sde_prefix` steps use the SDE.
SamplerSchedule first_steps_sde(std::size_t num_steps, std::size_t sde_prefix,
                                double t_start = 1.0, double t_end = 0.0);

std::vector<double> ode_step(std::span<const double> x, double t, double dt,
                             const FlowProcess& proc);

/// Euler-Maruyama update with caller-supplied standard normals `xi`.
std::vector<double> sde_step_with_noise(std::span<const double> x, double t, double dt,
                                        const FlowProcess& proc, std::span<const double> xi);

/// Draws dim standard normals from rng.
std::vector<double> sde_step(std::span<const double> x, double t, double dt,
                             const FlowProcess& proc, Rng& rng);

/// n x dim ensemble, row-major.
struct Ensemble {
    std::size_t size = 0;
    std::size_t dim = 0;
    std::vector<double> states;

    std::span<const double> member(std::size_t i) const { return {states.data() + i * dim, dim}; }
    std::span<double> member(std::size_t i) { return {states.data() + i * dim, dim}; }

    friend bool operator==(const Ensemble&, const Ensemble&) = default;
};

/// n draws from proc.marginal(t).
Ensemble sample_marginal(const FlowProcess& proc, double t, std::size_t n, std::uint64_t seed);

struct StepMoments {
    double t = 0.0;
    std::vector<double> mean;
    std::vector<double> var;
};

/// Sample mean and unbiased variance per dimension.
StepMoments ensemble_moments(const Ensemble& e, double t);

struct Rollout {
    Ensemble final_states;
    /// Moments at every grid time, including the start.
    std::vector<StepMoments> moments;
    std::size_t normal_draws = 0;
};

/// Member i uses Rng(derive_seed(master_seed, i)), so results do not depend on
/// the order members are processed in.
Rollout mixed_rollout(const Ensemble& x0, const SamplerSchedule& sched, const FlowProcess& proc,
                      std::uint64_t master_seed, std::size_t threads = 1);

/// ODE-only rollout.
Rollout ode_rollout(const Ensemble& x0, const SamplerSchedule& sched, const FlowProcess& proc);

/// SDE-only rollout with the same per-member seeding as mixed_rollout.
Rollout sde_rollout(const Ensemble& x0, const SamplerSchedule& sched, const FlowProcess& proc,
                    std::uint64_t master_seed);

struct MomentCheckRow {
    std::size_t step = 0;
    double t = 0.0;
    std::size_t dim = 0;
    double mean = 0.0;
    double var = 0.0;
    double analytic_mean = 0.0;
    double analytic_var = 0.0;
    /// Deviations in standard errors.
    double mean_z = 0.0;
    double var_z = 0.0;
};

struct MomentCheck {
    std::vector<MomentCheckRow> rows;
    double max_mean_z = 0.0;
    double max_var_z = 0.0;
    double tolerance_se = 4.0;
    bool pass = false;
};

/// Compares every recorded step against proc.marginal with standard errors
/// sqrt(var/n) for the mean and var * sqrt(2/(n-1)) for the variance.
MomentCheck check_marginals(const Rollout& r, const FlowProcess& proc, std::size_t ensemble_size,
                            double tolerance_se = 4.0);

}  // namespace osp
