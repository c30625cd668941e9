#include "droopcert/pipelines.hpp"

#include "droopcert/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace droopcert {

namespace {

IntegrateOptions integrate_options(const Scenario& sc) {
    IntegrateOptions o;
    o.rel_tol = sc.solver.rel_tol;
    o.abs_tol = sc.solver.abs_tol;
    o.output_dt = sc.solver.output_dt;
    o.monitor = sc.domain;
    return o;
}

SystemState flat_start(std::size_t n) {
    return {Vec::Zero(static_cast<Eigen::Index>(n)), Vec::Ones(static_cast<Eigen::Index>(n))};
}

// x_c + R^T w for a transverse displacement w
SystemState displaced(const Projection& proj, const SystemState& x_c, const Vec& w) {
    return SystemState::from_stacked(x_c.stacked() + proj.r_full.transpose() * w);
}

Vec unit_direction(std::mt19937_64& rng, Eigen::Index d) {
    std::normal_distribution<double> g(0.0, 1.0);
    Vec w(d);
    do {
        for (Eigen::Index j = 0; j < d; ++j) w[j] = g(rng);
    } while (w.norm() == 0.0);
    return w / w.norm();
}

// uniform point of the radius-r ball in R^d
Vec ball_point(std::mt19937_64& rng, Eigen::Index d, double r) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const Vec w = unit_direction(rng, d);
    return w * (r * std::pow(u(rng), 1.0 / static_cast<double>(d)));
}

std::vector<Trajectory> integrate_all(const Scenario& sc, const std::vector<SystemState>& starts,
                                      const Disturbance& u, double t_end, std::size_t jobs) {
    std::vector<Trajectory> out(starts.size());
    const auto opts = integrate_options(sc);
    parallel_chunks(starts.size(), jobs, [&](std::size_t b, std::size_t e, std::size_t) {
        for (std::size_t i = b; i < e; ++i)
            out[i] = integrate(sc.net, sc.params, starts[i], u, 0.0, t_end, opts);
    });
    return out;
}

}  // namespace

ContractionCertificate certify_scenario(const Scenario& sc, std::size_t jobs) {
    auto opts = sc.solver.search;
    opts.jobs = jobs;
    return certificate(sc.net, sc.params, sc.domain, opts, sc.solver.declared_rate);
}

InputBox slow_input_box(const Disturbance& u, double t_end) {
    std::vector<double> times{0.0, t_end};
    for (double b : u.breakpoints(0.0, t_end)) times.push_back(b);
    InputBox box{Vec::Zero(static_cast<Eigen::Index>(u.dim())),
                 Vec::Zero(static_cast<Eigen::Index>(u.dim()))};
    bool first = true;
    for (double t : times) {
        // slow parts are piecewise linear, so extremes sit on breakpoints
        for (double s : {t, std::max(0.0, std::nextafter(t, -1.0))}) {
            const Vec v = u.slow(s);
            if (first) {
                box.lower = v;
                box.upper = v;
                first = false;
            }
            box.lower = box.lower.cwiseMin(v);
            box.upper = box.upper.cwiseMax(v);
        }
    }
    return box;
}

double disturbance_onset(const DisturbanceSpec& spec) {
    double t = std::numeric_limits<double>::infinity();
    for (const auto& s : spec.steps) t = std::min(t, s.time);
    for (const auto& r : spec.ramps) t = std::min(t, r.start);
    for (const auto& f : spec.fast) t = std::min(t, f.start);
    return std::isfinite(t) ? std::max(0.0, t) : 0.0;
}

AutonomousRun run_autonomous(const Scenario& sc, double rate, const RunOptions& opts) {
    const auto n = sc.net.size();
    const auto proj = make_projection(n);
    const Vec zero = Vec::Zero(static_cast<Eigen::Index>(2 * n));
    const SystemState x_c =
        sc.reference ? *sc.reference : solve_equilibrium(sc.net, sc.params, zero, flat_start(n)).x;

    AutonomousRun run;
    run.tube = autonomous_tube(rate, sc.net, sc.params, sc.domain, x_c);
    if (opts.rho0) run.tube.rho0 = *opts.rho0;
    run.equilibrium = solve_equilibrium(sc.net, sc.params, zero, x_c).x;
    run.equilibrium_distance = seminorm_distance(proj, run.equilibrium, x_c);

    const double r = run.tube.rho0;
    const auto d = proj.r_full.rows();
    for (Eigen::Index j = 0; j < d; ++j)
        for (double sgn : {1.0, -1.0}) run.starts.push_back(displaced(proj, x_c, sgn * r * Vec::Unit(d, j)));
    std::mt19937_64 rng(opts.seed);
    for (std::size_t k = 0; k < opts.boundary_random; ++k)
        run.starts.push_back(displaced(proj, x_c, r * unit_direction(rng, d)));

    DisturbanceSpec quiet;
    quiet.n_buses = n;
    const Disturbance none(quiet);
    run.trajectories = integrate_all(sc, run.starts, none, sc.solver.t_end, opts.jobs);

    run.worst_invariance_margin = std::numeric_limits<double>::infinity();
    run.worst_comparison_margin = std::numeric_limits<double>::infinity();
    for (const auto& tr : run.trajectories) {
        for (std::size_t k = 0; k < tr.size(); ++k) {
            const double dist = seminorm_distance(proj, tr.states[k], x_c);
            run.worst_invariance_margin = std::min(run.worst_invariance_margin, r - dist);
            run.worst_comparison_margin =
                std::min(run.worst_comparison_margin, run.tube.radius(tr.times[k]) - dist);
            if (!in_domain(sc.net, sc.domain, tr.states[k], -1e-9)) ++run.domain_exits;
        }
    }

    std::vector<SystemState> limits;
    for (std::size_t k = 0; k < opts.newton_starts; ++k) {
        const auto start = displaced(proj, x_c, ball_point(rng, d, r));
        try {
            limits.push_back(solve_equilibrium(sc.net, sc.params, zero, start).x);
        } catch (const EquilibriumError&) {
        }
    }
    run.newton_converged = limits.size();
    for (std::size_t a = 0; a < limits.size(); ++a)
        for (std::size_t b = a + 1; b < limits.size(); ++b)
            run.newton_spread = std::max(run.newton_spread, seminorm_distance(proj, limits[a], limits[b]));
    return run;
}

ContractionRun run_contraction(const Scenario& sc, double rate, const TubeCertificate& tube,
                               const RunOptions& opts) {
    const auto n = sc.net.size();
    const auto proj = make_projection(n);
    const auto d = proj.r_full.rows();
    const double r = tube.rho0;
    std::mt19937_64 rng(opts.seed ^ 0x5bd1e995ULL);

    ContractionRun run;
    run.pairs = opts.pairs;
    for (std::size_t k = 0; k < 2 * opts.pairs; ++k)
        run.starts.push_back(displaced(proj, tube.reference, ball_point(rng, d, r)));

    DisturbanceSpec quiet;
    quiet.n_buses = n;
    const Disturbance none(quiet);
    const auto trajs = integrate_all(sc, run.starts, none, sc.solver.t_end, opts.jobs);
    run.times = trajs.front().times;
    run.equilibrium = solve_equilibrium(sc.net, sc.params, Vec::Zero(static_cast<Eigen::Index>(2 * n)),
                                        tube.reference).x;

    for (std::size_t p = 0; p < opts.pairs; ++p) {
        const auto& a = trajs[2 * p];
        const auto& b = trajs[2 * p + 1];
        const double d0 = seminorm_distance(proj, a.states.front(), b.states.front());
        if (d0 == 0.0) continue;
        for (std::size_t k = 0; k < a.size(); ++k) {
            const double ratio = seminorm_distance(proj, a.states[k], b.states[k]) /
                                 (std::exp(-rate * a.times[k]) * d0);
            if (ratio > run.worst_ratio) {
                run.worst_ratio = ratio;
                run.worst_time = a.times[k];
            }
        }
    }
    for (const auto& tr : trajs) {
        std::vector<double> ang;
        std::vector<double> volt;
        for (const auto& x : tr.states) {
            ang.push_back((proj.r_theta * (x.theta - run.equilibrium.theta)).norm());
            volt.push_back((x.v - run.equilibrium.v).norm());
            if (!in_domain(sc.net, sc.domain, x, -1e-9)) ++run.domain_exits;
        }
        run.angle_error.push_back(std::move(ang));
        run.voltage_error.push_back(std::move(volt));
        run.start_distance.push_back(seminorm_distance(proj, tr.states.front(), run.equilibrium));
    }
    return run;
}

TubeRun run_tube(const Scenario& sc, double rate, Regime regime, const RunOptions& opts) {
    if (regime == Regime::autonomous)
        throw ModelError("run_tube: use run_autonomous for the autonomous regime");
    const auto n = sc.net.size();
    const auto proj = make_projection(n);
    const auto u = make_disturbance(sc.disturbance);
    const double t0 = disturbance_onset(sc.disturbance);
    const double t_end = sc.solver.t_end;
    const Vec zero = Vec::Zero(static_cast<Eigen::Index>(2 * n));
    const SystemState start =
        opts.x0 ? *opts.x0 : solve_equilibrium(sc.net, sc.params, zero, flat_start(n)).x;

    TubeRun run;
    run.trajectory = integrate(sc.net, sc.params, start, u, 0.0, t_end, integrate_options(sc));
    const auto& times = run.trajectory.times;
    const auto path = quasi_steady_path(
        sc.net, sc.params, [&](double t) { return u.slow(t); }, times, start);

    double h = 0.0;
    double l_u = 0.0;
    if (regime == Regime::slow || regime == Regime::composite) {
        run.h = estimate_h(sc.net, sc.params, slow_input_box(u, t_end), sc.solver.h_samples, start,
                           opts.seed, opts.jobs);
        if (run.h->ill_conditioned) throw ModelError("run_tube: sensitivity bound is ill-conditioned");
        h = run.h->h;
    }
    if (regime == Regime::fast || regime == Regime::composite) {
        const Vec u_bar = u.slow(t0);
        InputBox box{u_bar.array() - u.delta(), u_bar.array() + u.delta()};
        run.l_u = estimate_lu(sc.net, sc.params, u_bar, box, start, 1000, opts.seed);
        l_u = run.l_u->l_u;
    }

    run.deviation.reserve(times.size());
    for (std::size_t k = 0; k < times.size(); ++k)
        run.deviation.push_back(seminorm_distance(proj, run.trajectory.states[k], path[k]));
    const auto it0 = std::lower_bound(times.begin(), times.end(), t0 - 1e-12);
    const std::size_t k0 = static_cast<std::size_t>(it0 - times.begin());
    const double rho0 = opts.rho0 ? *opts.rho0 : run.deviation[std::min(k0, times.size() - 1)];

    switch (regime) {
        case Regime::slow: run.tube = tracking_bound(rate, h, u, rho0, t0); break;
        case Regime::fast: run.tube = robustness_bound(rate, l_u, u, rho0, t0); break;
        default: run.tube = composite_bound(rate, h, l_u, u, rho0, t0); break;
    }
    run.tube.reference = path[std::min(k0, path.size() - 1)];

    run.worst_margin = std::numeric_limits<double>::infinity();
    run.radius.reserve(times.size());
    for (std::size_t k = 0; k < times.size(); ++k) {
        const double rad = times[k] >= t0 ? run.tube.radius(times[k]) : std::nan("");
        run.radius.push_back(rad);
        if (times[k] < t0) continue;
        run.peak_deviation = std::max(run.peak_deviation, run.deviation[k]);
        run.worst_margin = std::min(run.worst_margin, rad + opts.tolerance - run.deviation[k]);
    }
    run.contained = run.worst_margin >= 0.0;
    return run;
}

std::vector<SweepPoint> heterogeneity_sweep(const Scenario& sc, const std::vector<double>& etas,
                                            bool lossless, std::size_t jobs) {
    const NetworkModel net =
        lossless ? NetworkModel(Mat::Zero(sc.net.conductance().rows(), sc.net.conductance().cols()),
                                sc.net.susceptance())
                 : sc.net;
    auto opts = sc.solver.search;
    opts.jobs = jobs;
    const Vec m0 = sc.params.m_p;
    const double mean = m0.mean();
    std::vector<SweepPoint> out;
    for (double eta : etas) {
        DroopParams p = sc.params;
        p.m_p = (mean + eta * (m0.array() - mean)).matrix();
        const auto am = angle_margin(net, p, sc.domain, opts);
        out.push_back({eta, am.lambda2, am.delta_theta, am.c_theta});
    }
    return out;
}

}  // namespace droopcert
