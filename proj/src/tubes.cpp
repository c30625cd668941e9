#include "droopcert/tubes.hpp"

#include "droopcert/parallel.hpp"
#include "droopcert/simulate.hpp"

#include <algorithm>
#include <Eigen/SVD>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

namespace droopcert {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// 1 - e^{-x} without cancellation
double one_minus_exp(double x) { return -std::expm1(-x); }

void require_rate(double c) {
    if (!(c > 0.0) || !std::isfinite(c)) throw ModelError("tubes: rate must be finite and > 0");
}

void require_nonneg(double v, const char* what) {
    if (!(v >= 0.0)) throw ModelError(std::string("tubes: ") + what + " must be >= 0");
}

double effective(const ContractionCertificate& cert) {
    if (!cert.effective_rate) throw ModelError("tubes: certificate provides no contraction rate");
    return *cert.effective_rate;
}

}  // namespace

double seminorm(const Projection& proj, const Vec& stacked) {
    if (stacked.size() != proj.r_full.cols())
        throw ModelError("seminorm: state dimension does not match projection");
    return (proj.r_full * stacked).norm();
}

double seminorm(const Projection& proj, const SystemState& x) { return seminorm(proj, x.stacked()); }

double seminorm_distance(const Projection& proj, const SystemState& a, const SystemState& b) {
    return seminorm(proj, Vec(a.stacked() - b.stacked()));
}

Equilibrium solve_equilibrium(const NetworkModel& net, const DroopParams& params, const Vec& u,
                              const SystemState& guess, const std::optional<AdmissibleDomain>& dom,
                              double tol, std::size_t max_iter) {
    const auto n = static_cast<Eigen::Index>(net.size());
    if (guess.size() != net.size()) throw ModelError("solve_equilibrium: guess has wrong dimension");
    const auto proj = make_projection(net.size());
    const double mean0 = guess.theta.mean();

    auto residual = [&](const Vec& x, Vec& out) {
        const auto st = SystemState::from_stacked(x);
        const Vec f = vector_field(net, params, st, u);
        out.resize(2 * n);
        out.head(2 * n - 1) = proj.r_full * f;
        out[2 * n - 1] = st.theta.mean() - mean0;
        return out.norm();
    };

    Vec x = guess.stacked();
    Vec res;
    double norm = residual(x, res);
    std::size_t it = 0;
    auto transverse = [&](const Vec& xs) {
        return seminorm(proj, vector_field(net, params, SystemState::from_stacked(xs), u));
    };
    while (transverse(x) >= tol) {
        if (it >= max_iter) {
            std::ostringstream os;
            os << "solve_equilibrium: no convergence in " << max_iter << " iterations (residual "
               << norm << ")";
            throw EquilibriumError(os.str());
        }
        ++it;
        const auto jac = jacobian(net, params, SystemState::from_stacked(x)).assembled();
        Mat a(2 * n, 2 * n);
        a.topRows(2 * n - 1) = proj.r_full * jac;
        a.row(2 * n - 1).setZero();
        a.row(2 * n - 1).head(n).setConstant(1.0 / static_cast<double>(n));
        const Vec step = a.fullPivLu().solve(-res);
        if (!step.allFinite()) throw EquilibriumError("solve_equilibrium: singular Newton system");
        double alpha = 1.0;
        bool accepted = false;
        for (int ls = 0; ls < 30; ++ls, alpha *= 0.5) {
            const Vec trial = x + alpha * step;
            Vec trial_res;
            double trial_norm;
            try {
                trial_norm = residual(trial, trial_res);
            } catch (const ModelError&) {
                continue;
            }
            if (trial_norm < norm || ls == 29) {
                x = trial;
                res = trial_res;
                norm = trial_norm;
                accepted = true;
                break;
            }
        }
        if (!accepted) throw EquilibriumError("solve_equilibrium: line search left the voltage domain");
    }

    Equilibrium out;
    out.x = SystemState::from_stacked(x);
    out.residual = seminorm(proj, vector_field(net, params, out.x, u));
    out.iterations = it;
    if (dom) out.in_domain = in_domain(net, *dom, out.x);
    return out;
}

ComparisonRadius ComparisonRadius::piecewise(double c, double rho0, std::vector<double> knots,
                                             std::vector<double> values) {
    require_rate(c);
    require_nonneg(rho0, "rho0");
    if (knots.empty() || knots.size() != values.size())
        throw ModelError("comparison_radius: knots and values must be non-empty and equal length");
    for (std::size_t j = 0; j < values.size(); ++j) {
        require_nonneg(values[j], "residual bound");
        if (j > 0 && !(knots[j] > knots[j - 1]))
            throw ModelError("comparison_radius: knots must be strictly increasing");
    }
    ComparisonRadius r;
    r.c_ = c;
    r.rho0_ = rho0;
    r.knots_ = std::move(knots);
    r.values_ = std::move(values);
    return r;
}

ComparisonRadius ComparisonRadius::constant(double c, double rho0, double r, double t0) {
    return piecewise(c, rho0, {t0}, {r});
}

ComparisonRadius ComparisonRadius::general(double c, double rho0, std::function<double(double)> r,
                                           double t0, std::vector<double> breaks) {
    require_rate(c);
    require_nonneg(rho0, "rho0");
    ComparisonRadius out;
    out.c_ = c;
    out.rho0_ = rho0;
    std::sort(breaks.begin(), breaks.end());
    out.knots_ = {t0};
    for (double b : breaks)
        if (b > out.knots_.back()) out.knots_.push_back(b);
    out.general_ = std::move(r);
    return out;
}

double ComparisonRadius::operator()(double t) const { return (*this)(std::vector<double>{t}).front(); }

std::vector<double> ComparisonRadius::operator()(const std::vector<double>& times) const {
    std::vector<double> out;
    out.reserve(times.size());
    const double t0 = knots_.front();
    if (general_) {
        using boost::math::quadrature::gauss_kronrod;
        double t_prev = t0;
        double rho = rho0_;
        for (double t : times) {
            if (t < t_prev) {
                // restart from t0 for non-monotone queries
                t_prev = t0;
                rho = rho0_;
            }
            if (t > t_prev) {
                auto integrand = [&](double s) {
                    const double v = general_(s);
                    if (!(v >= 0.0)) throw ModelError("comparison_radius: residual must be >= 0");
                    return std::exp(-c_ * (t - s)) * v;
                };
                double integral = 0.0;
                double a = t_prev;
                for (std::size_t j = 1; j <= knots_.size(); ++j) {
                    const double b = j < knots_.size() ? std::min(knots_[j], t) : t;
                    if (b <= a) continue;
                    integral += gauss_kronrod<double, 31>::integrate(integrand, a, b, 15, 1e-12);
                    a = b;
                }
                rho = std::exp(-c_ * (t - t_prev)) * rho + integral;
                t_prev = t;
            }
            out.push_back(t <= t0 ? rho0_ : rho);
        }
        return out;
    }
    for (double t : times) {
        if (t <= t0) {
            out.push_back(rho0_);
            continue;
        }
        double rho = rho0_;
        double a = t0;
        for (std::size_t j = 0; j < knots_.size() && a < t; ++j) {
            const double b = j + 1 < knots_.size() ? std::min(knots_[j + 1], t) : t;
            if (b <= a) continue;
            const double decay = std::exp(-c_ * (b - a));
            rho = decay * rho + values_[j] / c_ * one_minus_exp(c_ * (b - a));
            a = b;
        }
        out.push_back(rho);
    }
    return out;
}

std::string to_string(Regime r) {
    switch (r) {
        case Regime::autonomous: return "autonomous";
        case Regime::slow: return "slow";
        case Regime::fast: return "fast";
        case Regime::composite: return "composite";
    }
    return "unknown";
}

double TubeCertificate::radius(double t) const {
    if (t <= t0) return rho0;
    const double x = rate * (t - t0);
    return std::exp(-x) * rho0 + ultimate * one_minus_exp(x);
}

double containment_radius(const NetworkModel& net, const AdmissibleDomain& dom,
                          const SystemState& x_c) {
    double r = kInf;
    for (Eigen::Index i = 0; i < x_c.v.size(); ++i)
        r = std::min({r, x_c.v[i] - dom.v_min, dom.v_max - x_c.v[i]});
    for (const auto& e : net.edges()) {
        const double diff = std::abs(x_c.theta[static_cast<Eigen::Index>(e.i)] -
                                     x_c.theta[static_cast<Eigen::Index>(e.k)]);
        r = std::min(r, (dom.gamma_max - diff) / std::sqrt(2.0));
    }
    return r;
}

TubeCertificate autonomous_tube(double rate, const NetworkModel& net, const DroopParams& params,
                                const AdmissibleDomain& dom, const SystemState& x_c) {
    require_rate(rate);
    if (!in_domain(net, dom, x_c)) throw ModelError("autonomous_tube: reference point is not in D");
    const auto proj = make_projection(net.size());
    TubeCertificate tube;
    tube.regime = Regime::autonomous;
    tube.rate = rate;
    tube.reference = x_c;
    tube.residual_bound = seminorm(proj, vector_field(net, params, x_c, Vec::Zero(2 * x_c.theta.size())));
    tube.ultimate = tube.residual_bound / rate;
    tube.min_radius = tube.ultimate;
    tube.max_radius = containment_radius(net, dom, x_c);
    tube.self_contained = tube.min_radius <= tube.max_radius;
    if (!tube.self_contained) {
        std::ostringstream os;
        os << "not self-contained: minimal radius " << tube.min_radius
           << " exceeds the containment radius " << tube.max_radius;
        tube.warnings.push_back(os.str());
        tube.rho0 = tube.min_radius;
    } else {
        tube.rho0 = tube.max_radius;
    }
    return tube;
}

TubeCertificate autonomous_tube(const ContractionCertificate& cert, const NetworkModel& net,
                                const DroopParams& params, const AdmissibleDomain& dom,
                                const SystemState& x_c) {
    return autonomous_tube(effective(cert), net, params, dom, x_c);
}

TubeCertificate tracking_bound(double rate, double h, double epsilon, double rho0, double t0) {
    require_rate(rate);
    require_nonneg(h, "H");
    require_nonneg(epsilon, "epsilon");
    require_nonneg(rho0, "rho0");
    TubeCertificate tube;
    tube.regime = Regime::slow;
    tube.rate = rate;
    tube.rho0 = rho0;
    tube.residual_bound = h * epsilon;
    tube.ultimate = tube.residual_bound / rate;
    tube.t0 = t0;
    return tube;
}

namespace {

void check_slope(const Disturbance& u, const char* who) {
    const double seen = u.max_slow_rate(u.settled_horizon());
    if (seen > u.epsilon() * (1.0 + 1e-12)) {
        std::ostringstream os;
        os << who << ": observed |du/dt| " << seen << " exceeds declared epsilon " << u.epsilon();
        throw DisturbanceError(os.str());
    }
}

void check_amplitude(const Disturbance& u, const char* who) {
    const double seen = u.max_fast_amplitude(u.settled_horizon());
    if (seen > u.delta() * (1.0 + 1e-12)) {
        std::ostringstream os;
        os << who << ": observed |u - u_bar| " << seen << " exceeds declared delta " << u.delta();
        throw DisturbanceError(os.str());
    }
}

}  // namespace

TubeCertificate tracking_bound(double rate, double h, const Disturbance& u, double rho0,
                               double t0) {
    if (u.max_fast_amplitude(u.settled_horizon()) > 0.0)
        throw DisturbanceError("tracking_bound: disturbance has a fast part; use composite_bound");
    check_slope(u, "tracking_bound");
    return tracking_bound(rate, h, u.epsilon(), rho0, t0);
}

TubeCertificate tracking_bound(const ContractionCertificate& cert, double h, const Disturbance& u,
                               double rho0, double t0) {
    return tracking_bound(effective(cert), h, u, rho0, t0);
}

TubeCertificate robustness_bound(double rate, double l_u, double delta, double rho0, double t0) {
    require_rate(rate);
    require_nonneg(l_u, "L_u");
    require_nonneg(delta, "delta");
    require_nonneg(rho0, "rho0");
    TubeCertificate tube;
    tube.regime = Regime::fast;
    tube.rate = rate;
    tube.rho0 = rho0;
    tube.residual_bound = l_u * delta;
    tube.ultimate = tube.residual_bound / rate;
    tube.t0 = t0;
    return tube;
}

TubeCertificate robustness_bound(double rate, double l_u, const Disturbance& u, double rho0,
                                 double t0) {
    for (const auto& r : u.spec().ramps)
        if (r.slope != 0.0 && r.stop > r.start)
            throw DisturbanceError("robustness_bound: disturbance has a ramp; use composite_bound");
    check_amplitude(u, "robustness_bound");
    return robustness_bound(rate, l_u, u.delta(), rho0, t0);
}

TubeCertificate robustness_bound(const ContractionCertificate& cert, double l_u,
                                 const Disturbance& u, double rho0, double t0) {
    return robustness_bound(effective(cert), l_u, u, rho0, t0);
}

TubeCertificate composite_bound(double rate, double h, double epsilon, double l_u, double delta,
                                double rho0, double t0) {
    require_rate(rate);
    require_nonneg(h, "H");
    require_nonneg(epsilon, "epsilon");
    require_nonneg(l_u, "L_u");
    require_nonneg(delta, "delta");
    require_nonneg(rho0, "rho0");
    TubeCertificate tube;
    tube.regime = Regime::composite;
    tube.rate = rate;
    tube.rho0 = rho0;
    tube.residual_bound = h * epsilon + l_u * delta;
    tube.ultimate = tube.residual_bound / rate;
    tube.t0 = t0;
    return tube;
}

TubeCertificate composite_bound(double rate, double h, double l_u, const Disturbance& u,
                                double rho0, double t0) {
    check_slope(u, "composite_bound");
    check_amplitude(u, "composite_bound");
    return composite_bound(rate, h, u.epsilon(), l_u, u.delta(), rho0, t0);
}

TubeCertificate composite_bound(const ContractionCertificate& cert, double h, double l_u,
                                const Disturbance& u, double rho0, double t0) {
    return composite_bound(effective(cert), h, l_u, u, rho0, t0);
}

SensitivityPoint sensitivity_at(const NetworkModel& net, const DroopParams& params, const Vec& u,
                                const SystemState& guess) {
    const auto proj = make_projection(net.size());
    const auto eq = solve_equilibrium(net, params, u, guess);
    const Mat jac = jacobian(net, params, eq.x).assembled();
    const Mat jr = proj.r_full * jac * proj.r_full.transpose();
    const Mat rb = proj.r_full * input_matrix(params);
    Eigen::JacobiSVD<Mat> svd(jr);
    SensitivityPoint out;
    out.sigma_min = jr.size() ? svd.singularValues().minCoeff() : kInf;
    out.u = u;
    out.x = eq.x;
    // transverse response y = R dx; the pinned representative is R^T y
    const Mat y = jr.fullPivLu().solve(-rb);
    out.dxdu = proj.r_full.transpose() * y;
    out.norm = spectral_norm(y);
    return out;
}

SensitivityEstimate estimate_h(const NetworkModel& net, const DroopParams& params,
                               const InputBox& box, std::size_t n_samples,
                               const SystemState& guess, std::uint64_t seed, std::size_t jobs) {
    const auto m = box.lower.size();
    if (box.upper.size() != m || m != static_cast<Eigen::Index>(2 * net.size()))
        throw ModelError("estimate_H: input box must have length 2N");
    if ((box.upper.array() < box.lower.array()).any())
        throw ModelError("estimate_H: input box has upper < lower");

    std::vector<Vec> inputs;
    inputs.push_back(0.5 * (box.lower + box.upper));
    if (m <= 12) {
        for (std::size_t mask = 0; mask < (std::size_t{1} << m); ++mask) {
            Vec u(m);
            for (Eigen::Index j = 0; j < m; ++j)
                u[j] = (mask >> j) & 1U ? box.upper[j] : box.lower[j];
            inputs.push_back(u);
        }
    }
    std::mt19937_64 rng(seed);
    for (std::size_t s = 0; s < n_samples; ++s) {
        Vec u(m);
        for (Eigen::Index j = 0; j < m; ++j) {
            std::uniform_real_distribution<double> d(box.lower[j], box.upper[j]);
            u[j] = box.upper[j] > box.lower[j] ? d(rng) : box.lower[j];
        }
        inputs.push_back(u);
    }

    std::vector<SensitivityPoint> pts(inputs.size());
    std::vector<std::string> errors(inputs.size());
    parallel_chunks(inputs.size(), jobs, [&](std::size_t b, std::size_t e, std::size_t) {
        for (std::size_t i = b; i < e; ++i) {
            try {
                pts[i] = sensitivity_at(net, params, inputs[i], guess);
            } catch (const std::exception& ex) {
                errors[i] = ex.what();
            }
        }
    });

    SensitivityEstimate est;
    est.sigma_min = kInf;
    est.h = -1.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        if (!errors[i].empty()) {
            est.diagnostics.push_back("sample " + std::to_string(i) + ": " + errors[i]);
            continue;
        }
        ++est.samples;
        est.sigma_min = std::min(est.sigma_min, pts[i].sigma_min);
        if (pts[i].norm > est.h) {
            est.h = pts[i].norm;
            est.argmax_u = pts[i].u;
        }
    }
    if (est.samples == 0) throw EquilibriumError("estimate_H: no quasi-steady solution found");
    if (est.sigma_min < 1e-6) {
        std::ostringstream os;
        os << "projected Jacobian nearly singular (sigma_min " << est.sigma_min << ")";
        est.diagnostics.push_back(os.str());
        est.ill_conditioned = true;
        est.h = kInf;
    }
    return est;
}

LipschitzEstimate estimate_lu(const NetworkModel& net, const DroopParams& params,
                              const Vec& u_bar, const InputBox& box, const SystemState& guess,
                              std::size_t n_samples, std::uint64_t seed) {
    const auto proj = make_projection(net.size());
    LipschitzEstimate out;
    out.l_u = spectral_norm(proj.r_full * input_matrix(params));
    const auto eq = solve_equilibrium(net, params, u_bar, guess);
    const Vec f_bar = vector_field(net, params, eq.x, u_bar);
    std::mt19937_64 rng(seed);
    for (std::size_t s = 0; s < n_samples; ++s) {
        Vec u(u_bar.size());
        for (Eigen::Index j = 0; j < u.size(); ++j) {
            std::uniform_real_distribution<double> d(box.lower[j], box.upper[j]);
            u[j] = box.upper[j] > box.lower[j] ? d(rng) : box.lower[j];
        }
        const double du = (u - u_bar).norm();
        if (du == 0.0) continue;
        const Vec diff = vector_field(net, params, eq.x, u) - f_bar;
        out.sampled_max = std::max(out.sampled_max, seminorm(proj, diff) / du);
        ++out.samples;
    }
    return out;
}

std::vector<SystemState> quasi_steady_path(const NetworkModel& net, const DroopParams& params,
                                           const std::function<Vec(double)>& u,
                                           const std::vector<double>& times,
                                           const SystemState& guess) {
    std::vector<SystemState> out;
    out.reserve(times.size());
    SystemState warm = guess;
    for (double t : times) {
        warm = solve_equilibrium(net, params, u(t), warm).x;
        out.push_back(warm);
    }
    return out;
}

}  // namespace droopcert
