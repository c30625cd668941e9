#pragma once

#include "droopcert/grid_model.hpp"
#include "droopcert/scenario.hpp"

#include <complex>
#include <random>
#include <string>

namespace testing_support {

using droopcert::Mat;
using droopcert::Vec;

inline std::string scenario_path(const std::string& name) {
    return std::string(DROOPCERT_SCENARIO_DIR) + "/" + name + ".yaml";
}

inline const droopcert::Scenario& case3() {
    static const droopcert::Scenario sc = droopcert::load_scenario(scenario_path("case_3bus"));
    return sc;
}

inline double uniform(std::mt19937_64& rng, double a, double b) {
    return std::uniform_real_distribution<double>(a, b)(rng);
}

// chain 0-1-...-(n-1) plus random chords, inductive lines with some resistance
inline std::vector<droopcert::Branch> random_branches(std::mt19937_64& rng, std::size_t n) {
    std::vector<droopcert::Branch> br;
    for (std::size_t i = 0; i + 1 < n; ++i) br.push_back({i, i + 1, uniform(rng, 0.01, 0.1), uniform(rng, 0.05, 0.3)});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = i + 2; k < n; ++k)
            if (uniform(rng, 0, 1) < 0.4) br.push_back({i, k, uniform(rng, 0.01, 0.1), uniform(rng, 0.05, 0.3)});
    return br;
}

inline droopcert::NetworkModel random_network(std::mt19937_64& rng, std::size_t n) {
    return droopcert::assemble_network(n, random_branches(rng, n));
}

inline droopcert::DroopParams random_params(std::mt19937_64& rng, std::size_t n) {
    const auto nn = static_cast<Eigen::Index>(n);
    droopcert::DroopParams p;
    p.m_p = Vec(nn);
    p.n_q = Vec(nn);
    p.tau_v = Vec(nn);
    p.v_nom = Vec::Ones(nn);
    p.p_ref0 = Vec(nn);
    p.q_ref0 = Vec(nn);
    for (Eigen::Index i = 0; i < nn; ++i) {
        p.m_p[i] = uniform(rng, 0.02, 0.06);
        p.n_q[i] = uniform(rng, 0.01, 0.03);
        p.tau_v[i] = uniform(rng, 0.1, 1.0);
        p.p_ref0[i] = uniform(rng, -0.2, 0.2);
        p.q_ref0[i] = uniform(rng, -0.1, 0.1);
    }
    p.omega_nom = 2.0 * 3.141592653589793 * 50.0;
    return p;
}

inline droopcert::SystemState random_state(std::mt19937_64& rng, std::size_t n, double spread = 0.3) {
    const auto nn = static_cast<Eigen::Index>(n);
    Vec th(nn);
    Vec v(nn);
    for (Eigen::Index i = 0; i < nn; ++i) {
        th[i] = uniform(rng, -spread, spread);
        v[i] = uniform(rng, 0.9, 1.1);
    }
    return {th, v};
}

// S_i = V_i e^{j theta_i} conj(sum_k Y_ik V_k e^{j theta_k})
inline std::pair<Vec, Vec> complex_injections(const Mat& g, const Mat& b, const droopcert::SystemState& x) {
    using C = std::complex<double>;
    const auto n = g.rows();
    Vec p(n);
    Vec q(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        C current = 0.0;
        for (Eigen::Index k = 0; k < n; ++k) current += C(g(i, k), b(i, k)) * std::polar(x.v[k], x.theta[k]);
        const C s = std::polar(x.v[i], x.theta[i]) * std::conj(current);
        p[i] = s.real();
        q[i] = s.imag();
    }
    return {p, q};
}

}  // namespace testing_support
