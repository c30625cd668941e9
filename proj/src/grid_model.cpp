#include "droopcert/grid_model.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <sstream>

namespace droopcert {

namespace {

void require(bool cond, const std::string& what) {
    if (!cond) throw ModelError(what);
}

std::string at(const char* name, Eigen::Index i) {
    std::ostringstream os;
    os << name << "[" << i << "]";
    return os.str();
}

}  // namespace

NetworkModel::NetworkModel(Mat conductance, Mat susceptance, double edge_tol)
    : g_(std::move(conductance)), b_(std::move(susceptance)) {
    require(g_.rows() == g_.cols() && b_.rows() == b_.cols() && g_.rows() == b_.rows(),
            "network: conductance and susceptance must be square with equal size");
    require(g_.rows() >= 1, "network: n_buses must be positive");
    require(g_.allFinite() && b_.allFinite(), "network: non-finite admittance entry");
    const double scale = std::max({1.0, g_.cwiseAbs().maxCoeff(), b_.cwiseAbs().maxCoeff()});
    const double sym_tol = 1e-10 * scale;
    const auto n = g_.rows();
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index k = i + 1; k < n; ++k) {
            require(std::abs(g_(i, k) - g_(k, i)) <= sym_tol,
                    "network: conductance matrix is not symmetric at (" + std::to_string(i) + "," +
                        std::to_string(k) + ")");
            require(std::abs(b_(i, k) - b_(k, i)) <= sym_tol,
                    "network: susceptance matrix is not symmetric at (" + std::to_string(i) + "," +
                        std::to_string(k) + ")");
            if (std::hypot(g_(i, k), b_(i, k)) > edge_tol) {
                require(b_(i, k) >= 0.0, "network: off-diagonal susceptance B(" + std::to_string(i) +
                                             "," + std::to_string(k) +
                                             ") < 0 violates the nodal sign convention");
                edges_.push_back({static_cast<std::size_t>(i), static_cast<std::size_t>(k)});
            }
        }
    }
    // exact symmetrization so downstream symmetric-part algebra is clean
    g_ = 0.5 * (g_ + g_.transpose()).eval();
    b_ = 0.5 * (b_ + b_.transpose()).eval();
}

std::vector<std::size_t> NetworkModel::neighbors(std::size_t i) const {
    std::vector<std::size_t> out;
    for (const auto& e : edges_) {
        if (e.i == i) out.push_back(e.k);
        if (e.k == i) out.push_back(e.i);
    }
    std::sort(out.begin(), out.end());
    return out;
}

NetworkModel assemble_network(std::size_t n_buses, const std::vector<Branch>& branches,
                              const std::vector<Shunt>& shunts) {
    require(n_buses >= 1, "network: n_buses must be positive");
    Eigen::MatrixXcd y = Eigen::MatrixXcd::Zero(n_buses, n_buses);
    for (const auto& br : branches) {
        require(br.from < n_buses && br.to < n_buses && br.from != br.to,
                "network: branch endpoints out of range or identical");
        const std::complex<double> z(br.r, br.x);
        require(std::abs(z) > 0.0, "network: zero branch impedance");
        const std::complex<double> ys = 1.0 / z;
        y(br.from, br.from) += ys;
        y(br.to, br.to) += ys;
        y(br.from, br.to) -= ys;
        y(br.to, br.from) -= ys;
    }
    for (const auto& sh : shunts) {
        require(sh.bus < n_buses, "network: shunt bus out of range");
        y(sh.bus, sh.bus) += std::complex<double>(sh.g, sh.b);
    }
    return NetworkModel(y.real(), y.imag());
}

void DroopParams::validate(std::size_t n) const {
    const auto ni = static_cast<Eigen::Index>(n);
    require(m_p.size() == ni, "droop: m_p has wrong length");
    require(n_q.size() == ni, "droop: n_q has wrong length");
    require(tau_v.size() == ni, "droop: tau_v has wrong length");
    require(v_nom.size() == ni, "droop: v_nom has wrong length");
    require(p_ref0.size() == ni, "droop: p_ref0 has wrong length");
    require(q_ref0.size() == ni, "droop: q_ref0 has wrong length");
    require(std::isfinite(omega_nom), "droop: omega_nom must be finite");
    for (Eigen::Index i = 0; i < ni; ++i) {
        require(std::isfinite(m_p[i]) && m_p[i] > 0.0, "droop: " + at("m_p", i) + " must be > 0");
        require(std::isfinite(n_q[i]) && n_q[i] >= 0.0, "droop: " + at("n_q", i) + " must be >= 0");
        require(std::isfinite(tau_v[i]) && tau_v[i] > 0.0,
                "droop: " + at("tau_v", i) + " must be > 0");
        require(std::isfinite(v_nom[i]) && v_nom[i] > 0.0,
                "droop: " + at("v_nom", i) + " must be > 0");
        require(std::isfinite(p_ref0[i]) && std::isfinite(q_ref0[i]),
                "droop: power references must be finite");
    }
}

void AdmissibleDomain::validate() const {
    require(std::isfinite(v_min) && std::isfinite(v_max) && 0.0 < v_min && v_min < v_max,
            "domain: require 0 < v_min < v_max");
    require(std::isfinite(gamma_max) && 0.0 < gamma_max && gamma_max < std::numbers::pi / 2,
            "domain: require 0 < gamma_max < pi/2");
}

Vec SystemState::stacked() const {
    Vec x(theta.size() + v.size());
    x << theta, v;
    return x;
}

SystemState SystemState::from_stacked(const Vec& x) {
    require(x.size() % 2 == 0, "state: stacked vector must have even length");
    const auto n = x.size() / 2;
    return {x.head(n), x.tail(n)};
}

bool SystemState::finite() const { return theta.allFinite() && v.allFinite(); }

bool in_domain(const NetworkModel& net, const AdmissibleDomain& dom, const SystemState& x,
               double slack) {
    for (Eigen::Index i = 0; i < x.v.size(); ++i) {
        if (x.v[i] < dom.v_min + slack || x.v[i] > dom.v_max - slack) return false;
    }
    for (const auto& e : net.edges()) {
        if (std::abs(x.theta[e.i] - x.theta[e.k]) > dom.gamma_max - slack) return false;
    }
    return true;
}

Injections power_injections(const NetworkModel& net, const SystemState& x) {
    const auto n = static_cast<Eigen::Index>(net.size());
    require(x.theta.size() == n && x.v.size() == n, "power_injections: dimension mismatch");
    const Mat& g = net.conductance();
    const Mat& b = net.susceptance();
    Injections out{Vec::Zero(n), Vec::Zero(n)};
    for (Eigen::Index i = 0; i < n; ++i) {
        double sp = 0.0;
        double sq = 0.0;
        for (Eigen::Index k = 0; k < n; ++k) {
            if (k == i) continue;
            const double t = x.theta[i] - x.theta[k];
            const double c = std::cos(t);
            const double s = std::sin(t);
            sp += x.v[k] * (g(i, k) * c + b(i, k) * s);
            sq += x.v[k] * (g(i, k) * s - b(i, k) * c);
        }
        const double vi = x.v[i];
        out.p[i] = vi * vi * g(i, i) + vi * sp;
        out.q[i] = -vi * vi * b(i, i) + vi * sq;
    }
    return out;
}

NetworkModel kron_reduce(const Mat& full_g, const Mat& full_b,
                         const std::vector<std::size_t>& retained) {
    require(full_g.rows() == full_g.cols() && full_b.rows() == full_b.cols() &&
                full_g.rows() == full_b.rows(),
            "kron_reduce: admittance blocks must be square with equal size");
    const auto m = static_cast<std::size_t>(full_g.rows());
    std::vector<bool> keep(m, false);
    for (auto r : retained) {
        require(r < m, "kron_reduce: retained index out of range");
        require(!keep[r], "kron_reduce: duplicate retained index");
        keep[r] = true;
    }
    require(!retained.empty(), "kron_reduce: at least one bus must be retained");
    std::vector<std::size_t> elim;
    for (std::size_t i = 0; i < m; ++i)
        if (!keep[i]) elim.push_back(i);

    Eigen::MatrixXcd y(m, m);
    y.real() = full_g;
    y.imag() = full_b;
    const auto nr = static_cast<Eigen::Index>(retained.size());
    const auto ne = static_cast<Eigen::Index>(elim.size());
    Eigen::MatrixXcd yrr(nr, nr), yre(nr, ne), yer(ne, nr), yee(ne, ne);
    for (Eigen::Index a = 0; a < nr; ++a) {
        for (Eigen::Index c = 0; c < nr; ++c) yrr(a, c) = y(retained[a], retained[c]);
        for (Eigen::Index c = 0; c < ne; ++c) yre(a, c) = y(retained[a], elim[c]);
    }
    for (Eigen::Index a = 0; a < ne; ++a) {
        for (Eigen::Index c = 0; c < ne; ++c) yee(a, c) = y(elim[a], elim[c]);
        for (Eigen::Index c = 0; c < nr; ++c) yer(a, c) = y(elim[a], retained[c]);
    }

    Eigen::MatrixXcd red = yrr;
    if (ne > 0) {
        Eigen::FullPivLU<Eigen::MatrixXcd> lu(yee);
        lu.setThreshold(1e-12);
        require(lu.isInvertible() && lu.rcond() > 1e-14,
                "kron_reduce: eliminated admittance block is singular");
        red -= yre * lu.solve(yer);
    }
    Mat g = red.real();
    Mat b = red.imag();
    return NetworkModel(0.5 * (g + g.transpose()), 0.5 * (b + b.transpose()));
}

}  // namespace droopcert
