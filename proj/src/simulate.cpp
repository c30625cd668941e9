#include "droopcert/simulate.hpp"

#include <boost/numeric/odeint.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace droopcert {

namespace odeint = boost::numeric::odeint;

Vec vector_field(const NetworkModel& net, const DroopParams& params, const SystemState& x,
                 const Vec& u, Frame frame) {
    const auto n = static_cast<Eigen::Index>(net.size());
    if (u.size() != 2 * n) throw ModelError("vector_field: input must have length 2N");
    for (Eigen::Index i = 0; i < n; ++i)
        if (!(x.v[i] > 0.0))
            throw ModelError("vector_field: nonpositive voltage at bus " + std::to_string(i));
    const auto inj = power_injections(net, x);
    Vec f(2 * n);
    const double omega = frame == Frame::stationary ? params.omega_nom : 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double p_ref = params.p_ref0[i] + u[i];
        const double q_ref = params.q_ref0[i] + u[n + i];
        f[i] = omega - params.m_p[i] * (inj.p[i] - p_ref);
        f[n + i] =
            (params.v_nom[i] - x.v[i] - params.n_q[i] * (inj.q[i] - q_ref)) / params.tau_v[i];
    }
    return f;
}

Vec vector_field(const NetworkModel& net, const DroopParams& params, const SystemState& x,
                 const Disturbance& u, double t, Frame frame) {
    if (u.dim() == 0) return vector_field(net, params, x, Vec::Zero(2 * x.theta.size()), frame);
    return vector_field(net, params, x, u(t), frame);
}

namespace {

using State = std::vector<double>;

State to_std(const Vec& v) { return {v.data(), v.data() + v.size()}; }

Vec to_eigen(const State& s) {
    return Eigen::Map<const Vec>(s.data(), static_cast<Eigen::Index>(s.size()));
}

}  // namespace

std::vector<Vec> integrate_rhs(const Rhs& rhs, const Vec& x0, const std::vector<double>& times,
                               const std::vector<double>& breakpoints, double rel_tol,
                               double abs_tol) {
    if (times.empty()) return {};
    if (!(rel_tol > 0.0) || !(abs_tol > 0.0))
        throw IntegrationError("integrate: tolerances must be positive");
    if (!x0.allFinite()) throw IntegrationError("integrate: initial state is not finite");
    for (std::size_t i = 1; i < times.size(); ++i)
        if (!(times[i] > times[i - 1]))
            throw IntegrationError("integrate: output times must be strictly increasing");

    const double t_begin = times.front();
    const double t_end = times.back();
    std::vector<double> edges{t_begin};
    for (double b : breakpoints)
        if (b > t_begin && b < t_end) edges.push_back(b);
    edges.push_back(t_end);
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());

    std::vector<Vec> out;
    out.reserve(times.size());
    out.push_back(x0);
    std::size_t next_out = 1;
    State x = to_std(x0);

    for (std::size_t s = 0; s + 1 < edges.size(); ++s) {
        const double a = edges[s];
        const double b = edges[s + 1];
        // evaluate piecewise inputs from the inside of the segment
        const double b_left = std::nextafter(b, -std::numeric_limits<double>::infinity());
        auto system = [&](const State& xs, State& dxdt, double t) {
            const Vec f = rhs(std::min(t, b_left), to_eigen(xs));
            dxdt.assign(f.data(), f.data() + f.size());
        };
        std::vector<double> seg_times{a};
        std::size_t probe = next_out;
        while (probe < times.size() && times[probe] < b) seg_times.push_back(times[probe++]);
        seg_times.push_back(b);

        auto stepper = odeint::make_dense_output(abs_tol, rel_tol, odeint::runge_kutta_dopri5<State>());
        const double dt0 = std::min(1e-3, 0.5 * (b - a));
        try {
            odeint::integrate_times(stepper, system, x, seg_times.begin(), seg_times.end(), dt0,
                                    [&](const State& xs, double t) {
                                        if (!std::all_of(xs.begin(), xs.end(),
                                                         [](double v) { return std::isfinite(v); })) {
                                            std::ostringstream os;
                                            os << "integrate: non-finite state at t=" << t;
                                            throw IntegrationError(os.str());
                                        }
                                        if (next_out < times.size() && t == times[next_out]) {
                                            out.push_back(to_eigen(xs));
                                            ++next_out;
                                        }
                                    });
        } catch (const odeint::step_adjustment_error& e) {
            throw IntegrationError(std::string("integrate: step-size collapse: ") + e.what());
        } catch (const odeint::no_progress_error& e) {
            throw IntegrationError(std::string("integrate: step-size collapse: ") + e.what());
        } catch (const ModelError& e) {
            throw IntegrationError(std::string("integrate: ") + e.what());
        }
    }
    if (out.size() != times.size()) throw IntegrationError("integrate: missed output times");
    return out;
}

Trajectory integrate(const NetworkModel& net, const DroopParams& params, const SystemState& x0,
                     const Disturbance& u, double t0, double t1, const IntegrateOptions& opts) {
    if (!(t1 > t0)) throw IntegrationError("integrate: require t1 > t0");
    if (x0.size() != net.size() || x0.v.size() != x0.theta.size())
        throw IntegrationError("integrate: initial state has wrong dimension");

    std::vector<double> grid = opts.output_times;
    if (grid.empty()) {
        if (!(opts.output_dt > 0.0)) throw IntegrationError("integrate: output_dt must be > 0");
        const auto steps = static_cast<std::size_t>(std::floor((t1 - t0) / opts.output_dt + 1e-9));
        for (std::size_t k = 0; k <= steps; ++k) grid.push_back(t0 + static_cast<double>(k) * opts.output_dt);
        if (t1 - grid.back() > 1e-9 * opts.output_dt) grid.push_back(t1);
    }

    const auto n = static_cast<Eigen::Index>(net.size());
    const bool forced = u.dim() != 0 && !u.is_zero();
    const Vec zero = Vec::Zero(2 * n);
    Rhs rhs = [&](double t, const Vec& xs) -> Vec {
        const auto st = SystemState::from_stacked(xs);
        for (Eigen::Index i = 0; i < n; ++i)
            if (!(st.v[i] > opts.guard_v_min && st.v[i] < opts.guard_v_max)) {
                std::ostringstream os;
                os << "integrate: state left guard box at t=" << t << " (bus " << i
                   << " voltage " << st.v[i] << ")";
                throw IntegrationError(os.str());
            }
        return vector_field(net, params, st, forced ? u(t) : zero, opts.frame);
    };
    const auto bps = forced ? u.breakpoints(grid.front(), grid.back()) : std::vector<double>{};
    const auto xs = integrate_rhs(rhs, x0.stacked(), grid, bps, opts.rel_tol, opts.abs_tol);

    Trajectory traj;
    traj.times = grid;
    traj.states.reserve(xs.size());
    for (std::size_t k = 0; k < xs.size(); ++k) {
        traj.states.push_back(SystemState::from_stacked(xs[k]));
        if (opts.monitor && !traj.first_exit_time &&
            !in_domain(net, *opts.monitor, traj.states.back()))
            traj.first_exit_time = grid[k];
    }
    return traj;
}

}  // namespace droopcert
