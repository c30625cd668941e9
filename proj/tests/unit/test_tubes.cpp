#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "droopcert/simulate.hpp"
#include "droopcert/tubes.hpp"
#include "support.hpp"

#include <Eigen/SVD>

#include <cmath>

using namespace droopcert;
using namespace testing_support;

namespace {

SystemState flat(std::size_t n) {
    return {Vec::Zero(static_cast<Eigen::Index>(n)), Vec::Ones(static_cast<Eigen::Index>(n))};
}

DroopParams two_bus_params() {
    DroopParams p;
    p.m_p = Vec::Constant(2, 0.04);
    p.n_q = Vec::Constant(2, 0.02);
    p.tau_v = Vec::Constant(2, 0.5);
    p.v_nom = Vec::Ones(2);
    p.p_ref0 = Vec::Constant(2, 0.1);
    p.q_ref0 = Vec::Constant(2, 0.05);
    return p;
}

}  // namespace

TEST_CASE("seminorm examples") {
    const auto pr = make_projection(3);
    SystemState k(Vec::Constant(3, 0.7), Vec::Zero(3));
    CHECK(seminorm(pr, k) < 1e-15);
    const Vec v(Eigen::Vector3d(0.1, -0.2, 0.3));
    CHECK(seminorm(pr, SystemState(Vec::Zero(3), v)) == doctest::Approx(v.norm()));
    const double a = 0.3;
    const auto p2 = make_projection(2);
    CHECK(seminorm(p2, SystemState(Vec(Eigen::Vector2d(a, -a)), Vec::Zero(2))) ==
          doctest::Approx(std::sqrt(2.0) * a).epsilon(1e-15));
}

TEST_CASE("comparison radius closed forms") {
    const auto decay = ComparisonRadius::constant(1.0, 1.0, 0.0);
    const auto step = ComparisonRadius::constant(1.0, 0.0, 1.0);
    for (double t : {0.0, 0.5, 2.0, 10.0}) {
        CHECK(decay(t) == doctest::Approx(std::exp(-t)).epsilon(1e-14));
        CHECK(step(t) == doctest::Approx(1.0 - std::exp(-t)).epsilon(1e-14));
    }
    CHECK(step(60.0) == doctest::Approx(1.0));
    const auto track = tracking_bound(0.184, 0.059, 0.014, 0.0);
    CHECK(track.ultimate == doctest::Approx(0.059 * 0.014 / 0.184).epsilon(1e-14));
    CHECK(track.ultimate == doctest::Approx(4.49e-3).epsilon(0.001));
}

TEST_CASE("property: piecewise comparison radius matches numerical integration") {
    std::mt19937_64 rng(4001);
    for (int trial = 0; trial < 20; ++trial) {
        const double c = uniform(rng, 0.05, 2.0);
        const double rho0 = uniform(rng, 0.0, 1.0);
        std::vector<double> knots{0.0};
        std::vector<double> values{uniform(rng, 0.0, 0.5)};
        for (int j = 1; j < 5; ++j) {
            knots.push_back(knots.back() + uniform(rng, 0.5, 4.0));
            values.push_back(uniform(rng, 0.0, 0.5));
        }
        const auto r = ComparisonRadius::piecewise(c, rho0, knots, values);
        auto value_at = [&](double t) {
            std::size_t j = 0;
            while (j + 1 < knots.size() && t >= knots[j + 1]) ++j;
            return values[j];
        };
        std::vector<double> times;
        for (double t = 0.0; t <= 25.0; t += 0.25) times.push_back(t);
        const std::vector<double> breaks(knots.begin() + 1, knots.end());
        const auto sol = integrate_rhs([&](double t, const Vec& y) { return Vec::Constant(1, -c * y[0] + value_at(t)); },
                                       Vec::Constant(1, rho0), times, breaks, 1e-12, 1e-14);
        for (std::size_t k = 0; k < times.size(); ++k)
            CHECK(r(times[k]) == doctest::Approx(sol[k][0]).epsilon(1e-8));
        const auto gen = ComparisonRadius::general(c, rho0, value_at, 0.0, breaks);
        for (double t : {1.0, 7.3, 20.0}) CHECK(gen(t) == doctest::Approx(r(t)).epsilon(1e-7));
    }
}

TEST_CASE("tube bound structure") {
    const double c = 0.2;
    SUBCASE("no drift reduces to exponential decay") {
        const auto t = tracking_bound(c, 0.06, 0.0, 0.5);
        CHECK(t.radius(3.0) == doctest::Approx(0.5 * std::exp(-c * 3.0)));
    }
    SUBCASE("doubling the drift doubles the ultimate bound") {
        CHECK(tracking_bound(c, 0.06, 0.028, 0.0).ultimate ==
              doctest::Approx(2.0 * tracking_bound(c, 0.06, 0.014, 0.0).ultimate));
    }
    SUBCASE("no perturbation is pure decay") {
        const auto t = robustness_bound(c, 0.13, 0.0, 0.5, 1.0);
        CHECK(t.radius(4.0) == doctest::Approx(0.5 * std::exp(-c * 3.0)));
    }
    SUBCASE("halving the rate doubles the ultimate bound") {
        CHECK(robustness_bound(c / 2, 0.13, 0.04, 0.0).ultimate ==
              doctest::Approx(2.0 * robustness_bound(c, 0.13, 0.04, 0.0).ultimate));
    }
    SUBCASE("composite reduces to each part") {
        const auto a = composite_bound(c, 0.06, 0.014, 0.13, 0.0, 0.1);
        const auto b = tracking_bound(c, 0.06, 0.014, 0.1);
        CHECK(a.ultimate == doctest::Approx(b.ultimate));
        CHECK(a.radius(5.0) == doctest::Approx(b.radius(5.0)));
        const auto d = composite_bound(c, 0.06, 0.0, 0.13, 0.04, 0.1);
        const auto e = robustness_bound(c, 0.13, 0.04, 0.1);
        CHECK(d.radius(5.0) == doctest::Approx(e.radius(5.0)));
    }
    SUBCASE("invalid inputs") {
        CHECK_THROWS_AS(tracking_bound(0.0, 0.06, 0.01, 0.0), ModelError);
        CHECK_THROWS_AS(robustness_bound(c, 0.13, -0.1, 0.0), ModelError);
    }
}

TEST_CASE("disturbance regime checks") {
    DisturbanceSpec ramp;
    ramp.n_buses = 3;
    ramp.ramps.push_back({Channel::p, 1, 10.0, 20.0, 0.014});
    ramp.epsilon = 0.014;
    DisturbanceSpec fast;
    fast.n_buses = 3;
    fast.fast.push_back({Channel::p, 2, 0.04, Waveform::square, 0.2, 10.0, 1e300});
    fast.delta = 0.04;
    CHECK_NOTHROW(tracking_bound(0.2, 0.06, Disturbance(ramp), 0.0));
    CHECK_THROWS(tracking_bound(0.2, 0.06, Disturbance(fast), 0.0));
    CHECK_NOTHROW(robustness_bound(0.2, 0.13, Disturbance(fast), 0.0));
    CHECK_THROWS(robustness_bound(0.2, 0.13, Disturbance(ramp), 0.0));
    auto understated = ramp;
    understated.epsilon = 0.01;
    CHECK_THROWS(tracking_bound(0.2, 0.06, Disturbance(understated), 0.0));
}

TEST_CASE("equilibria") {
    SUBCASE("decoupled bus without reactive droop sits at nominal voltage") {
        const NetworkModel net(Mat::Zero(1, 1), Mat::Constant(1, 1, -1.0));
        DroopParams p;
        p.m_p = Vec::Constant(1, 0.04);
        p.n_q = Vec::Zero(1);
        p.tau_v = Vec::Constant(1, 0.3);
        p.v_nom = Vec::Constant(1, 1.02);
        p.p_ref0 = Vec::Zero(1);
        p.q_ref0 = Vec::Zero(1);
        const auto eq = solve_equilibrium(net, p, Vec::Zero(2), SystemState(Vec::Constant(1, 0.4), Vec::Ones(1)));
        CHECK(eq.x.v[0] == doctest::Approx(1.02).epsilon(1e-12));
        CHECK(eq.x.theta[0] == doctest::Approx(0.4));
    }
    SUBCASE("symmetric two-bus system") {
        const auto net = assemble_network(2, {{0, 1, 0.03, 0.2}});
        const auto eq = solve_equilibrium(net, two_bus_params(), Vec::Zero(4), flat(2));
        CHECK(eq.x.v[0] == doctest::Approx(eq.x.v[1]).epsilon(1e-12));
        CHECK(eq.x.theta[0] == doctest::Approx(eq.x.theta[1]).epsilon(1e-12));
    }
    SUBCASE("case_3bus equilibrium agrees with a long simulation") {
        const auto& sc = case3();
        const auto eq = solve_equilibrium(sc.net, sc.params, Vec::Zero(6), flat(3), sc.domain);
        CHECK(eq.residual < 1e-10);
        REQUIRE(eq.in_domain);
        CHECK(*eq.in_domain);
        IntegrateOptions io;
        io.output_dt = 1.0;
        DisturbanceSpec none;
        none.n_buses = 3;
        const auto tr = integrate(sc.net, sc.params, flat(3), Disturbance(none), 0.0, 200.0, io);
        CHECK(seminorm_distance(make_projection(3), tr.states.back(), eq.x) < 1e-7);
    }
}

TEST_CASE("autonomous tube radii") {
    const auto& sc = case3();
    const auto eq = solve_equilibrium(sc.net, sc.params, Vec::Zero(6), flat(3)).x;
    SUBCASE("centred at the equilibrium the tube shrinks to a point") {
        const auto t = autonomous_tube(0.184, sc.net, sc.params, sc.domain, eq);
        CHECK(t.min_radius < 1e-9);
        CHECK(t.max_radius == doctest::Approx(containment_radius(sc.net, sc.domain, eq)));
    }
    SUBCASE("a kernel shift of the reference changes nothing") {
        SystemState shifted = *sc.reference;
        shifted.theta.array() += 0.37;
        const auto a = autonomous_tube(0.184, sc.net, sc.params, sc.domain, *sc.reference);
        const auto b = autonomous_tube(0.184, sc.net, sc.params, sc.domain, shifted);
        CHECK(a.min_radius == doctest::Approx(b.min_radius).epsilon(1e-12));
        CHECK(a.max_radius == doctest::Approx(b.max_radius).epsilon(1e-12));
        CHECK(a.min_radius > 0.0);
        CHECK(a.self_contained);
    }
}

TEST_CASE("quasi-steady sensitivity") {
    const auto& sc = case3();
    const Vec u0 = Vec::Zero(6);
    const auto pt = sensitivity_at(sc.net, sc.params, u0, flat(3));
    const auto proj = make_projection(3);
    SUBCASE("implicit derivative matches finite differences of the equilibrium map") {
        const double h = 1e-6;
        Mat fd(5, 6);
        for (int j = 0; j < 6; ++j) {
            Vec up = u0;
            Vec um = u0;
            up[j] += h;
            um[j] -= h;
            const auto xp = solve_equilibrium(sc.net, sc.params, up, pt.x, std::nullopt, 1e-13).x;
            const auto xm = solve_equilibrium(sc.net, sc.params, um, pt.x, std::nullopt, 1e-13).x;
            fd.col(j) = proj.r_full * (xp.stacked() - xm.stacked()) / (2 * h);
        }
        const Mat analytic = proj.r_full * pt.dxdu;
        CHECK((analytic - fd).cwiseAbs().maxCoeff() < 1e-6);
        CHECK(pt.norm == doctest::Approx(Eigen::JacobiSVD<Mat>(fd).singularValues()[0]).epsilon(1e-5));
    }
    SUBCASE("a zero-width box gives the point value") {
        const auto est = estimate_h(sc.net, sc.params, InputBox{u0, u0}, 10, flat(3));
        CHECK(est.h == doctest::Approx(pt.norm).epsilon(1e-12));
        CHECK_FALSE(est.ill_conditioned);
    }
    SUBCASE("scalar decoupled bus") {
        const NetworkModel net(Mat::Zero(1, 1), Mat::Constant(1, 1, -2.0));
        DroopParams p;
        p.m_p = Vec::Constant(1, 0.04);
        p.n_q = Vec::Constant(1, 0.1);
        p.tau_v = Vec::Constant(1, 0.3);
        p.v_nom = Vec::Ones(1);
        p.p_ref0 = Vec::Zero(1);
        p.q_ref0 = Vec::Zero(1);
        // V = 1 - n_q (2 V^2 - q): dV/dq = n_q / (1 + 4 n_q V)
        const auto s = sensitivity_at(net, p, Vec::Zero(2), flat(1));
        const double v = s.x.v[0];
        CHECK(v == doctest::Approx((-1 + std::sqrt(1 + 8 * 0.1)) / (4 * 0.1)).epsilon(1e-12));
        CHECK(s.dxdu(1, 1) == doctest::Approx(0.1 / (1 + 4 * 0.1 * v)).epsilon(1e-10));
    }
}

TEST_CASE("input Lipschitz constant") {
    const auto& sc = case3();
    const auto proj = make_projection(3);
    const Mat bu = input_matrix(sc.params);
    const double direct = Eigen::JacobiSVD<Mat>(proj.r_full * bu).singularValues()[0];
    const auto est = estimate_lu(sc.net, sc.params, Vec::Zero(6), InputBox{Vec::Constant(6, -0.04), Vec::Constant(6, 0.04)},
                                 flat(3), 300, 4002);
    CHECK(est.l_u == doctest::Approx(direct).epsilon(1e-12));
    CHECK(est.sampled_max <= est.l_u + 1e-12);
    CHECK(est.sampled_max > 0.5 * est.l_u);
    // voltage channel alone: the largest n_q / tau_v
    CHECK(direct >= (sc.params.n_q.cwiseQuotient(sc.params.tau_v)).maxCoeff() - 1e-15);
}
