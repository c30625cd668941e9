#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "droopcert/simulate.hpp"
#include "droopcert/tubes.hpp"
#include "droopcert/variational.hpp"
#include "support.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SVD>

#include <cmath>

using namespace droopcert;
using namespace testing_support;

namespace {

Mat central_differences(const NetworkModel& net, const DroopParams& p, const SystemState& x, const Vec& u,
                        double h = 1e-6) {
    const Vec base = x.stacked();
    Mat fd(base.size(), base.size());
    for (Eigen::Index c = 0; c < base.size(); ++c) {
        Vec a = base;
        Vec b = base;
        a[c] += h;
        b[c] -= h;
        fd.col(c) = (vector_field(net, p, SystemState::from_stacked(a), u) -
                     vector_field(net, p, SystemState::from_stacked(b), u)) /
                    (2 * h);
    }
    return fd;
}

// orthonormal basis of the range of the projector P = I - 11^T/n on the angle
// block, taken from an SVD (independent of the Helmert construction)
Mat svd_range_basis(std::size_t n) {
    const auto nn = static_cast<Eigen::Index>(n);
    Mat p = Mat::Identity(2 * nn, 2 * nn);
    p.topLeftCorner(nn, nn) -= Mat::Constant(nn, nn, 1.0 / static_cast<double>(n));
    Eigen::JacobiSVD<Mat> svd(p, Eigen::ComputeFullU);
    return svd.matrixU().leftCols(2 * nn - 1);
}

}  // namespace

TEST_CASE("two-bus inductive line: off-diagonal angle entry") {
    const double b12 = 5.0;
    Mat g = Mat::Zero(2, 2);
    Mat b(2, 2);
    b << -b12, b12, b12, -b12;
    const NetworkModel net(g, b);
    DroopParams p;
    p.m_p = Vec::Constant(2, 0.04);
    p.m_p[1] = 0.03;
    p.n_q = Vec::Constant(2, 0.02);
    p.tau_v = Vec::Constant(2, 0.5);
    p.v_nom = Vec::Ones(2);
    p.p_ref0 = Vec::Zero(2);
    p.q_ref0 = Vec::Zero(2);
    const double v = 1.02;
    const auto j = jacobian(net, p, SystemState(Vec::Constant(2, 0.1), Vec::Constant(2, v)));
    // theta_dot_1 = -m_1 (P_1 - P_ref): dP_1/dtheta_2 = -V^2 B_12 cos 0
    CHECK(j.j_tt(0, 1) == doctest::Approx(0.04 * v * v * b12).epsilon(1e-14));
    CHECK(j.j_tt(1, 0) == doctest::Approx(0.03 * v * v * b12).epsilon(1e-14));
    // lossless, equal angles and voltages: no active power moves with V
    CHECK(j.j_tv.cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("coupling block spot check at a symmetric lossless state") {
    const double b12 = 4.0;
    Mat b(2, 2);
    b << -b12, b12, b12, -b12;
    const NetworkModel net(Mat::Zero(2, 2), b);
    DroopParams p;
    p.m_p = Vec::Constant(2, 0.05);
    p.n_q = Vec::Constant(2, 0.02);
    p.tau_v = Vec::Constant(2, 0.4);
    p.v_nom = Vec::Ones(2);
    p.p_ref0 = Vec::Zero(2);
    p.q_ref0 = Vec::Zero(2);
    const double phi = 0.2;
    const double v = 1.0;
    Vec th(2);
    th << phi, 0.0;
    const auto j = jacobian(net, p, SystemState(th, Vec::Constant(2, v)));
    // P_1 = V_1 V_2 B sin(phi): dP_1/dV_2 = V_1 B sin(phi), dP_1/dV_1 = V_2 B sin(phi)
    CHECK(j.j_tv(0, 1) == doctest::Approx(-0.05 * v * b12 * std::sin(phi)).epsilon(1e-14));
    CHECK(j.j_tv(0, 0) == doctest::Approx(-0.05 * v * b12 * std::sin(phi)).epsilon(1e-14));
    // Q_1 = -V_1^2 B_11 - V_1 V_2 B cos(phi): dQ_1/dtheta_2 = -V_1 V_2 B sin(phi)
    CHECK(j.j_vt(0, 1) == doctest::Approx(0.02 * v * v * b12 * std::sin(phi) / 0.4).epsilon(1e-14));
}

TEST_CASE("property: analytical Jacobian matches central differences") {
    std::mt19937_64 rng(2001);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 2 + trial % 5;
        const auto net = random_network(rng, n);
        const auto p = random_params(rng, n);
        const auto x = random_state(rng, n, 0.3);
        const Vec u = Vec::Zero(static_cast<Eigen::Index>(2 * n));
        const Mat fd = central_differences(net, p, x, u);
        const Mat j = jacobian(net, p, x).assembled();
        CHECK((j - fd).cwiseAbs().maxCoeff() / fd.cwiseAbs().maxCoeff() < 1e-5);
    }
}

TEST_CASE("property: inputs do not change the Jacobian") {
    std::mt19937_64 rng(2002);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t n = 3;
        const auto net = random_network(rng, n);
        const auto p = random_params(rng, n);
        const auto x = random_state(rng, n);
        Vec u(6);
        for (int i = 0; i < 6; ++i) u[i] = uniform(rng, -0.5, 0.5);
        const Mat a = central_differences(net, p, x, Vec::Zero(6));
        const Mat b = central_differences(net, p, x, u);
        CHECK((a - b).cwiseAbs().maxCoeff() < 1e-8);
    }
}

TEST_CASE("property: kernel invariance and zero row sums") {
    std::mt19937_64 rng(2003);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 2 + trial % 6;
        const auto net = random_network(rng, n);
        const auto p = random_params(rng, n);
        const auto j = jacobian(net, p, random_state(rng, n, 0.6));
        CHECK(j.j_tt.rowwise().sum().cwiseAbs().maxCoeff() < 1e-10);
        CHECK(j.j_vt.rowwise().sum().cwiseAbs().maxCoeff() < 1e-10);
    }
}

TEST_CASE("projection construction") {
    SUBCASE("n = 2") {
        const auto pr = make_projection(2);
        const double s = 1.0 / std::sqrt(2.0);
        CHECK(std::abs(std::abs(pr.r_theta(0, 0)) - s) < 1e-15);
        CHECK(pr.r_theta(0, 0) == doctest::Approx(-pr.r_theta(0, 1)));
    }
    SUBCASE("orthonormal rows orthogonal to ones") {
        for (std::size_t n : {1u, 2u, 3u, 7u, 12u}) {
            const auto pr = make_projection(n);
            const auto m = static_cast<Eigen::Index>(2 * n - 1);
            CHECK((pr.r_full * pr.r_full.transpose() - Mat::Identity(m, m)).cwiseAbs().maxCoeff() < 1e-14);
            Vec ones = Vec::Zero(static_cast<Eigen::Index>(2 * n));
            ones.head(static_cast<Eigen::Index>(n)).setOnes();
            CHECK((pr.r_full * ones).cwiseAbs().maxCoeff() < 1e-14);
        }
    }
    SUBCASE("deterministic") {
        CHECK((make_projection(5).r_theta - make_projection(5).r_theta).norm() == 0.0);
    }
    SUBCASE("property: |R_theta theta|^2 = sum theta^2 - N mean^2") {
        std::mt19937_64 rng(2004);
        for (int trial = 0; trial < 100; ++trial) {
            const std::size_t n = 2 + trial % 8;
            const auto pr = make_projection(n);
            const auto x = random_state(rng, n, 3.0);
            const double mean = x.theta.mean();
            const double direct = x.theta.squaredNorm() - static_cast<double>(n) * mean * mean;
            CHECK((pr.r_theta * x.theta).squaredNorm() == doctest::Approx(direct).epsilon(1e-12));
        }
    }
    SUBCASE("rejects a non-orthonormal basis") {
        Mat bad(1, 2);
        bad << 1.0, -1.0;
        CHECK_THROWS_AS(make_projection(bad), ModelError);
    }
}

TEST_CASE("projected symmetric part of a voltage-only Jacobian") {
    JacobianBlocks j;
    j.j_tt = Mat::Zero(3, 3);
    j.j_tv = Mat::Zero(3, 3);
    j.j_vt = Mat::Zero(3, 3);
    j.j_vv = Vec(Eigen::Vector3d(-1.0, -2.0, -3.0)).asDiagonal();
    const auto s = projected_symmetric(j, make_projection(3));
    CHECK((s.s_vv - j.j_vv).norm() == 0.0);
    CHECK(s.s_tt.norm() == 0.0);
    CHECK(s.s_tv.norm() == 0.0);
    CHECK(lambda_max_sym(s.assembled()) == doctest::Approx(0.0));
    Mat d = Vec(Eigen::Vector2d(-1.0, -2.0)).asDiagonal();
    CHECK(lambda_max_sym(d) == doctest::Approx(-1.0));
    CHECK(lambda_max_sym(Mat(0, 0)) == -std::numeric_limits<double>::infinity());
    CHECK(spectral_norm(Mat(0, 3)) == 0.0);
}

TEST_CASE("property: measure equals the definition-level projector oracle") {
    std::mt19937_64 rng(2005);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = trial < 50 ? 3 : 2 + trial % 6;
        const auto net = trial < 50 ? case3().net : random_network(rng, n);
        const auto p = trial < 50 ? case3().params : random_params(rng, n);
        const auto x = random_state(rng, n, 0.3);
        const Mat jf = jacobian(net, p, x).assembled();
        const Mat q = svd_range_basis(n);
        const Mat sym = 0.5 * (jf + jf.transpose());
        Eigen::SelfAdjointEigenSolver<Mat> es(q.transpose() * sym * q);
        CHECK(measure(net, p, x) == doctest::Approx(es.eigenvalues().maxCoeff()).epsilon(1e-10));
    }
}

TEST_CASE("property: measure does not depend on the angle basis") {
    std::mt19937_64 rng(2006);
    std::normal_distribution<double> gauss;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 2 + trial % 6;
        const auto nn = static_cast<Eigen::Index>(n);
        const auto net = random_network(rng, n);
        const auto p = random_params(rng, n);
        const auto x = random_state(rng, n);
        Mat a(nn, nn);
        a.col(0).setOnes();
        for (Eigen::Index c = 1; c < nn; ++c)
            for (Eigen::Index r = 0; r < nn; ++r) a(r, c) = gauss(rng);
        Eigen::HouseholderQR<Mat> qr(a);
        const Mat qm = qr.householderQ() * Mat::Identity(nn, nn);
        const auto other = make_projection(Mat(qm.rightCols(nn - 1).transpose()));
        CHECK(std::abs(measure(net, p, x) - measure(net, p, x, other)) < 1e-9);
    }
}

TEST_CASE("case_3bus: measure near the equilibrium is below -0.184") {
    const auto& sc = case3();
    const auto eq = solve_equilibrium(sc.net, sc.params, Vec::Zero(6),
                                      SystemState(Vec::Zero(3), Vec::Ones(3)))
                        .x;
    std::mt19937_64 rng(2007);
    for (int k = 0; k < 200; ++k) {
        SystemState x = eq;
        for (int i = 0; i < 3; ++i) {
            x.theta[i] += uniform(rng, -0.02, 0.02);
            x.v[i] += uniform(rng, -0.01, 0.01);
        }
        CHECK(measure(sc.net, sc.params, x) <= -0.184);
    }
}

TEST_CASE("nonpositive voltage is rejected") {
    const auto& sc = case3();
    Vec v = Vec::Ones(3);
    v[1] = 0.0;
    CHECK_THROWS_AS(jacobian(sc.net, sc.params, SystemState(Vec::Zero(3), v)), ModelError);
}
