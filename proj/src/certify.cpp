#include "droopcert/certify.hpp"

#include "droopcert/parallel.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>
#include <sstream>

namespace droopcert {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

SearchOptions validation_seed(SearchOptions opts) {
    opts.seed = opts.seed ^ 0x9e3779b97f4a7c15ULL;
    return opts;
}

// max of objective over fresh states, lowest index wins ties
std::pair<double, SystemState> validate_max(const NetworkModel& net, const AdmissibleDomain& dom,
                                            const StateObjective& objective, std::size_t count,
                                            const SearchOptions& opts) {
    if (count == 0) return {-kInf, {}};
    const auto states = sample_domain(net, dom, count, validation_seed(opts).seed, true);
    std::vector<double> values(count);
    parallel_chunks(count, opts.jobs, [&](std::size_t b, std::size_t e, std::size_t) {
        for (std::size_t i = b; i < e; ++i) values[i] = objective(states[i]);
    });
    std::size_t best = 0;
    for (std::size_t i = 1; i < count; ++i)
        if (values[i] > values[best]) best = i;
    return {values[best], states[best]};
}

}  // namespace

// values within 1e-6 quanta of a grid point are snapped to it, so that
// floating-point noise does not cost a whole quantum
double round_down(double v) {
    if (!std::isfinite(v)) return v;
    const double x = v / kMarginQuantum;
    const double r = std::round(x);
    return (std::abs(x - r) < 1e-6 ? r : std::floor(x)) * kMarginQuantum;
}

double round_up(double v) {
    if (!std::isfinite(v)) return v;
    const double x = v / kMarginQuantum;
    const double r = std::round(x);
    return (std::abs(x - r) < 1e-6 ? r : std::ceil(x)) * kMarginQuantum;
}

std::string to_string(RateSource s) {
    switch (s) {
        case RateSource::theorem: return "theorem";
        case RateSource::declared: return "declared";
        case RateSource::none: break;
    }
    return "none";
}

Mat angle_weights_lower(const NetworkModel& net, const DroopParams& params,
                        const AdmissibleDomain& dom) {
    const auto n = static_cast<Eigen::Index>(net.size());
    const auto& g = net.conductance();
    const auto& b = net.susceptance();
    const double cg = std::cos(dom.gamma_max);
    const double sg = std::sin(dom.gamma_max);
    const double v2 = dom.v_min * dom.v_min;
    Mat w = Mat::Zero(n, n);
    for (const auto& e : net.edges()) {
        const auto i = static_cast<Eigen::Index>(e.i);
        const auto k = static_cast<Eigen::Index>(e.k);
        const double mi = params.m_p[i];
        const double mk = params.m_p[k];
        const double val =
            0.5 * v2 * ((mi + mk) * b(i, k) * cg - std::abs(mi - mk) * std::abs(g(i, k)) * sg);
        w(i, k) = val;
        w(k, i) = val;
    }
    return w;
}

Mat laplacian(const Mat& w) {
    Mat off = w;
    off.diagonal().setZero();
    Mat l = -off;
    l.diagonal() = off.rowwise().sum();
    return l;
}

double algebraic_connectivity(const Mat& l) {
    const auto proj = make_projection(static_cast<std::size_t>(l.rows()));
    if (proj.r_theta.rows() == 0) return kInf;
    const Mat reduced = proj.r_theta * l * proj.r_theta.transpose();
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (reduced + reduced.transpose()),
                                          Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

Vec angle_residual(const NetworkModel& net, const DroopParams& params, const SystemState& x) {
    const auto jac = jacobian(net, params, x);
    const Mat sym = 0.5 * (jac.j_tt + jac.j_tt.transpose());
    return sym.rowwise().sum();
}

Mat angle_weights(const NetworkModel& net, const DroopParams& params, const SystemState& x) {
    const auto jac = jacobian(net, params, x);
    Mat w = 0.5 * (jac.j_tt + jac.j_tt.transpose());
    w.diagonal().setZero();
    return w;
}

double max_trig_coupling(double b, double g, double gamma) {
    const double c = std::cos(gamma);
    const double s = std::sin(gamma);
    double best = std::max(std::abs(b * c - g * s), std::abs(b * c + g * s));
    if (b != 0.0) {
        const double star = std::atan(-g / b);
        if (std::abs(star) <= gamma) best = std::max(best, std::hypot(b, g));
    }
    return best;
}

AngleMargin angle_margin(const NetworkModel& net, const DroopParams& params,
                         const AdmissibleDomain& dom, const SearchOptions& opts) {
    params.validate(net.size());
    dom.validate();
    AngleMargin out;
    out.w_lower = angle_weights_lower(net, params, dom);
    if (net.size() < 2) {
        out.lambda2 = kInf;
        out.delta_theta = 0.0;
        out.c_theta = kInf;
        out.delta_argmax = SystemState(Vec::Zero(1), Vec::Constant(1, dom.v_min));
        out.diagnostics.push_back("single bus: angle block is empty");
        return out;
    }
    for (const auto& e : net.edges()) {
        const double w = out.w_lower(static_cast<Eigen::Index>(e.i), static_cast<Eigen::Index>(e.k));
        if (w < 0.0) {
            std::ostringstream os;
            os << "negative worst-case weight on edge (" << e.i << "," << e.k << "): " << w;
            out.diagnostics.push_back(os.str());
        }
    }
    out.lambda2 = algebraic_connectivity(laplacian(out.w_lower));

    const StateObjective obj = [&](const SystemState& x) {
        return angle_residual(net, params, x).maxCoeff();
    };
    const auto res = maximize_over_domain(net, dom, obj, opts);
    auto [vmax, vstate] = validate_max(net, dom, obj, 10'000, opts);
    out.method = res.method;
    out.delta_theta = res.value;
    out.delta_argmax = res.argmax;
    if (vmax > res.value) {
        out.delta_theta = vmax;
        out.delta_argmax = vstate;
        out.diagnostics.push_back("validation sample exceeded the searched delta_theta");
    }
    if (!res.converged) out.diagnostics.push_back("delta_theta search did not converge");
    out.delta_theta = round_up(out.delta_theta);
    out.c_theta = round_down(out.lambda2 - out.delta_theta);
    return out;
}

VoltageMargin voltage_margin(const NetworkModel& net, const DroopParams& params,
                             const AdmissibleDomain& dom) {
    params.validate(net.size());
    dom.validate();
    const auto n = static_cast<Eigen::Index>(net.size());
    const auto& g = net.conductance();
    const auto& b = net.susceptance();
    const Vec a = params.n_q.cwiseQuotient(params.tau_v);
    VoltageMargin out;
    out.c_bar = Vec::Zero(n);
    out.r_bar = Vec::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double centre = (2.0 * params.n_q[i] * dom.v_min * b(i, i) - 1.0) / params.tau_v[i];
        double radius = 0.0;
        for (Eigen::Index k = 0; k < n; ++k) {
            if (k == i) continue;
            const double m = max_trig_coupling(b(i, k), g(i, k), dom.gamma_max);
            centre += a[i] * m;
            radius += 0.5 * (a[i] + a[k]) * dom.v_max * m;
        }
        out.c_bar[i] = centre;
        out.r_bar[i] = radius;
    }
    const Vec sum = out.c_bar + out.r_bar;
    Eigen::Index worst = 0;
    const double top = sum.maxCoeff(&worst);
    out.worst_node = static_cast<std::size_t>(worst);
    out.c_v = round_down(-top);
    return out;
}

CouplingMargin coupling_margin(const NetworkModel& net, const DroopParams& params,
                               const AdmissibleDomain& dom, const SearchOptions& opts,
                               std::size_t validation_states) {
    params.validate(net.size());
    CouplingMargin out;
    const auto proj = make_projection(net.size());
    const StateObjective obj = [&](const SystemState& x) {
        return spectral_norm(projected_symmetric(jacobian(net, params, x), proj).s_tv);
    };
    const auto res = maximize_over_domain(net, dom, obj, opts);
    out.beta = res.value;
    out.maximizer = res.argmax;
    out.method = res.method;
    out.warning = !res.converged;
    out.validation_states = validation_states;
    auto [vmax, vstate] = validate_max(net, dom, obj, validation_states, opts);
    out.validation_max = validation_states > 0 ? vmax : 0.0;
    if (vmax > out.beta) {
        out.beta = vmax;
        out.maximizer = vstate;
        out.warning = true;
    }
    out.beta = round_up(std::max(0.0, out.beta));
    return out;
}

std::optional<double> theorem_rate(double c_theta, double c_v, double beta) {
    if (std::isinf(c_theta) && c_theta > 0) {
        if (c_v > 0.0) return c_v;
        return std::nullopt;
    }
    if (!(c_theta > 0.0) || !(c_v > 0.0) || !(c_theta * c_v > beta * beta)) return std::nullopt;
    const double d = c_theta - c_v;
    return 0.5 * (c_theta + c_v - std::sqrt(d * d + 4.0 * beta * beta));
}

Mat comparison_matrix(double c_theta, double c_v, double beta) {
    Mat m(2, 2);
    m << -c_theta, beta, beta, -c_v;
    return m;
}

SearchResult measure_sup(const NetworkModel& net, const AdmissibleDomain& dom,
                         const DroopParams& params, const SearchOptions& opts,
                         std::size_t validation_states) {
    const auto proj = make_projection(net.size());
    const StateObjective obj = [&](const SystemState& x) { return measure(net, params, x, proj); };
    auto res = maximize_over_domain(net, dom, obj, opts);
    auto [vmax, vstate] = validate_max(net, dom, obj, validation_states, opts);
    if (vmax > res.value) {
        res.value = vmax;
        res.argmax = vstate;
        res.converged = false;
    }
    return res;
}

ContractionCertificate certificate(const NetworkModel& net, const DroopParams& params,
                                   const AdmissibleDomain& dom, const SearchOptions& opts,
                                   std::optional<double> declared_rate) {
    ContractionCertificate cert;
    cert.angle = angle_margin(net, params, dom, opts);
    cert.voltage = voltage_margin(net, params, dom);
    cert.coupling = coupling_margin(net, params, dom, opts);

    const double ct = cert.angle.c_theta;
    const double cv = cert.voltage.c_v;
    const double beta = cert.coupling.beta;
    if (auto r = theorem_rate(ct, cv, beta)) {
        cert.feasible = true;
        cert.rate = round_down(*r);
    }
    if (std::isfinite(ct)) {
        cert.m_c = comparison_matrix(ct, cv, beta);
        Eigen::SelfAdjointEigenSolver<Mat> es(cert.m_c, Eigen::EigenvaluesOnly);
        cert.mc_lambda_max = es.eigenvalues().maxCoeff();
    } else {
        cert.m_c = Mat::Constant(1, 1, -cv);
        cert.mc_lambda_max = -cv;
    }

    const auto sup = measure_sup(net, dom, params, opts);
    cert.measure_sup = round_up(sup.value);
    cert.measure_argmax = sup.argmax;

    cert.declared_rate = declared_rate;
    if (declared_rate) {
        if (!(*declared_rate > 0.0)) throw ModelError("certify: declared_rate must be > 0");
        cert.declared_accepted = cert.measure_sup <= -*declared_rate;
    }
    if (cert.feasible) {
        cert.rate_source = RateSource::theorem;
        cert.effective_rate = cert.rate;
    } else if (cert.declared_accepted) {
        cert.rate_source = RateSource::declared;
        cert.effective_rate = declared_rate;
    }
    return cert;
}

}  // namespace droopcert
