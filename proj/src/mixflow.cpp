// Copyright 2026 The osp-kit Authors
// SPDX-License-Identifier: Apache-2.0

#include "osp/mixflow.h"

#include <algorithm>
#include <cmath>
#include <thread>

namespace osp {

FlowProcess ou_process(double beta, std::vector<double> data_mean, std::vector<double> data_var) {
    if (data_mean.size() != data_var.size() || data_mean.empty()) {
        throw ShapeError("ou_process needs matching, non-empty mean and variance");
    }
    if (!(beta > 0.0)) throw Error("ou_process needs beta > 0");
    for (double v : data_var) {
        if (!(v > 0.0)) throw Error("ou_process needs positive data variances");
    }
    auto marginal = [beta, data_mean, data_var](double t) {
        GaussianMarginal m;
        const double decay = std::exp(-0.5 * beta * t);
        for (std::size_t i = 0; i < data_mean.size(); ++i) {
            m.mean.push_back(data_mean[i] * decay);
            m.var.push_back(data_var[i] * decay * decay + 1.0 - decay * decay);
        }
        return m;
    };

    FlowProcess p;
    p.dim = data_mean.size();
    p.drift = [beta](std::span<const double> x, double, std::span<double> out) {
        for (std::size_t i = 0; i < x.size(); ++i) out[i] = -0.5 * beta * x[i];
    };
    p.diffusion = [beta](double) { return std::sqrt(beta); };
    p.score = [marginal](std::span<const double> x, double t, std::span<double> out) {
        const GaussianMarginal m = marginal(t);
        for (std::size_t i = 0; i < x.size(); ++i) out[i] = -(x[i] - m.mean[i]) / m.var[i];
    };
    p.marginal = marginal;
    return p;
}

FlowProcess ou_toy() { return ou_process(1.0, {0.0, 0.0}, {1.0, 1.0}); }

std::size_t SamplerSchedule::sde_count() const {
    return static_cast<std::size_t>(std::count(sde.begin(), sde.end(), true));
}

SamplerSchedule make_schedule(std::size_t num_steps, const std::vector<std::size_t>& sde_steps,
                              double t_start, double t_end) {
    if (num_steps == 0) throw ScheduleError("sampler needs at least one step");
    if (!(t_start > t_end)) throw ScheduleError("sampler times must decrease");
    SamplerSchedule s;
    s.times.resize(num_steps + 1);
    for (std::size_t i = 0; i <= num_steps; ++i) {
        s.times[i] = t_start + (t_end - t_start) * static_cast<double>(i) /
                                   static_cast<double>(num_steps);
    }
    s.sde.assign(num_steps, false);
    for (std::size_t i : sde_steps) {
        if (i >= num_steps) {
            throw ScheduleError("SDE step index " + std::to_string(i) + " outside " +
                                std::to_string(num_steps) + " steps");
        }
        s.sde[i] = true;
    }
    return s;
}

SamplerSchedule first_steps_sde(std::size_t num_steps, std::size_t sde_prefix, double t_start,
                                double t_end) {
    if (sde_prefix > num_steps) {
        throw ScheduleError("more SDE steps than sampler steps");
    }
    std::vector<std::size_t> idx(sde_prefix);
    for (std::size_t i = 0; i < sde_prefix; ++i) idx[i] = i;
    return make_schedule(num_steps, idx, t_start, t_end);
}

std::vector<double> ode_step(std::span<const double> x, double t, double dt,
                             const FlowProcess& proc) {
    std::vector<double> f(x.size());
    std::vector<double> s(x.size());
    proc.drift(x, t, f);
    proc.score(x, t, s);
    const double g = proc.diffusion(t);
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + (f[i] - 0.5 * g * g * s[i]) * dt;
    return out;
}

std::vector<double> sde_step_with_noise(std::span<const double> x, double t, double dt,
                                        const FlowProcess& proc, std::span<const double> xi) {
    if (xi.size() != x.size()) throw ShapeError("sde_step: noise dimension mismatch");
    std::vector<double> f(x.size());
    std::vector<double> s(x.size());
    proc.drift(x, t, f);
    proc.score(x, t, s);
    const double g = proc.diffusion(t);
    const double noise_scale = g * std::sqrt(std::abs(dt));
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = x[i] + (f[i] - g * g * s[i]) * dt + noise_scale * xi[i];
    }
    return out;
}

std::vector<double> sde_step(std::span<const double> x, double t, double dt,
                             const FlowProcess& proc, Rng& rng) {
    std::vector<double> xi(x.size());
    for (double& v : xi) v = rng.normal();
    return sde_step_with_noise(x, t, dt, proc, xi);
}

Ensemble sample_marginal(const FlowProcess& proc, double t, std::size_t n, std::uint64_t seed) {
    if (!proc.marginal) throw Error("process has no closed-form marginal");
    const GaussianMarginal m = proc.marginal(t);
    Rng rng(seed);
    Ensemble e{n, proc.dim, std::vector<double>(n * proc.dim)};
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t d = 0; d < proc.dim; ++d) {
            e.states[i * proc.dim + d] = m.mean[d] + std::sqrt(m.var[d]) * rng.normal();
        }
    }
    return e;
}

StepMoments ensemble_moments(const Ensemble& e, double t) {
    StepMoments m{t, std::vector<double>(e.dim, 0.0), std::vector<double>(e.dim, 0.0)};
    if (e.size == 0) return m;
    for (std::size_t i = 0; i < e.size; ++i) {
        for (std::size_t d = 0; d < e.dim; ++d) m.mean[d] += e.states[i * e.dim + d];
    }
    for (double& v : m.mean) v /= static_cast<double>(e.size);
    for (std::size_t i = 0; i < e.size; ++i) {
        for (std::size_t d = 0; d < e.dim; ++d) {
            const double c = e.states[i * e.dim + d] - m.mean[d];
            m.var[d] += c * c;
        }
    }
    const double denom = e.size > 1 ? static_cast<double>(e.size - 1) : 1.0;
    for (double& v : m.var) v /= denom;
    return m;
}

namespace {

void check_ensemble(const Ensemble& x0, const FlowProcess& proc) {
    if (x0.dim != proc.dim || x0.states.size() != x0.size * x0.dim) {
        throw ShapeError("ensemble does not match the process dimension");
    }
}

// Runs one member through the schedule, writing its state at every grid time
// into trajectory[step].
template <typename StepFn>
void run_member(const Ensemble& x0, std::size_t i, const SamplerSchedule& sched,
                std::vector<Ensemble>& trajectory, StepFn&& step) {
    std::vector<double> x(x0.member(i).begin(), x0.member(i).end());
    std::copy(x.begin(), x.end(), trajectory[0].member(i).begin());
    for (std::size_t k = 0; k < sched.num_steps(); ++k) {
        const double t = sched.times[k];
        const double dt = sched.times[k + 1] - t;
        x = step(k, x, t, dt);
        std::copy(x.begin(), x.end(), trajectory[k + 1].member(i).begin());
    }
}

Rollout finish(std::vector<Ensemble> trajectory, const SamplerSchedule& sched, std::size_t draws) {
    Rollout r;
    r.normal_draws = draws;
    for (std::size_t k = 0; k < trajectory.size(); ++k) {
        r.moments.push_back(ensemble_moments(trajectory[k], sched.times[k]));
    }
    r.final_states = std::move(trajectory.back());
    return r;
}

std::vector<Ensemble> empty_trajectory(const Ensemble& x0, const SamplerSchedule& sched) {
    return std::vector<Ensemble>(sched.num_steps() + 1,
                                 Ensemble{x0.size, x0.dim, std::vector<double>(x0.states.size())});
}

}  // namespace

Rollout mixed_rollout(const Ensemble& x0, const SamplerSchedule& sched, const FlowProcess& proc,
                      std::uint64_t master_seed, std::size_t threads) {
    check_ensemble(x0, proc);
    auto trajectory = empty_trajectory(x0, sched);
    std::vector<std::size_t> draws(x0.size, 0);

    auto member = [&](std::size_t i) {
        Rng rng(derive_seed(master_seed, i));
        run_member(x0, i, sched, trajectory,
                   [&](std::size_t k, const std::vector<double>& x, double t, double dt) {
                       if (sched.sde[k]) {
                           draws[i] += x.size();
                           return sde_step(x, t, dt, proc, rng);
                       }
                       return ode_step(x, t, dt, proc);
                   });
    };

    threads = std::max<std::size_t>(1, std::min(threads, x0.size));
    if (threads == 1) {
        for (std::size_t i = 0; i < x0.size; ++i) member(i);
    } else {
        // Members write disjoint slots, so any partition gives the same result.
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < threads; ++w) {
            pool.emplace_back([&, w] {
                for (std::size_t i = w; i < x0.size; i += threads) member(i);
            });
        }
        for (auto& th : pool) th.join();
    }
    std::size_t total = 0;
    for (std::size_t d : draws) total += d;
    return finish(std::move(trajectory), sched, total);
}

Rollout ode_rollout(const Ensemble& x0, const SamplerSchedule& sched, const FlowProcess& proc) {
    check_ensemble(x0, proc);
    auto trajectory = empty_trajectory(x0, sched);
    for (std::size_t i = 0; i < x0.size; ++i) {
        run_member(x0, i, sched, trajectory,
                   [&](std::size_t, const std::vector<double>& x, double t, double dt) {
                       return ode_step(x, t, dt, proc);
                   });
    }
    return finish(std::move(trajectory), sched, 0);
}

Rollout sde_rollout(const Ensemble& x0, const SamplerSchedule& sched, const FlowProcess& proc,
                    std::uint64_t master_seed) {
    check_ensemble(x0, proc);
    auto trajectory = empty_trajectory(x0, sched);
    std::size_t draws = 0;
    for (std::size_t i = 0; i < x0.size; ++i) {
        Rng rng(derive_seed(master_seed, i));
        run_member(x0, i, sched, trajectory,
                   [&](std::size_t, const std::vector<double>& x, double t, double dt) {
                       draws += x.size();
                       return sde_step(x, t, dt, proc, rng);
                   });
    }
    return finish(std::move(trajectory), sched, draws);
}

MomentCheck check_marginals(const Rollout& r, const FlowProcess& proc, std::size_t ensemble_size,
                            double tolerance_se) {
    if (!proc.marginal) throw Error("process has no closed-form marginal");
    if (ensemble_size < 2) throw Error("moment check needs at least two members");
    MomentCheck c;
    c.tolerance_se = tolerance_se;
    const double n = static_cast<double>(ensemble_size);
    for (std::size_t k = 0; k < r.moments.size(); ++k) {
        const StepMoments& m = r.moments[k];
        const GaussianMarginal a = proc.marginal(m.t);
        for (std::size_t d = 0; d < m.mean.size(); ++d) {
            MomentCheckRow row{k, m.t, d, m.mean[d], m.var[d], a.mean[d], a.var[d], 0.0, 0.0};
            row.mean_z = std::abs(m.mean[d] - a.mean[d]) / std::sqrt(a.var[d] / n);
            row.var_z = std::abs(m.var[d] - a.var[d]) / (a.var[d] * std::sqrt(2.0 / (n - 1.0)));
            c.max_mean_z = std::max(c.max_mean_z, row.mean_z);
            c.max_var_z = std::max(c.max_var_z, row.var_z);
            c.rows.push_back(row);
        }
    }
    c.pass = c.max_mean_z <= tolerance_se && c.max_var_z <= tolerance_se;
    return c;
}

}  // namespace osp
