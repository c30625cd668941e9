#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "droopcert/disturbance.hpp"
#include "droopcert/pipelines.hpp"
#include "droopcert/simulate.hpp"
#include "droopcert/tubes.hpp"
#include "support.hpp"

#include <cmath>

using namespace droopcert;
using namespace testing_support;

namespace {

SystemState flat(std::size_t n) {
    return {Vec::Zero(static_cast<Eigen::Index>(n)), Vec::Ones(static_cast<Eigen::Index>(n))};
}

Disturbance quiet(std::size_t n) {
    DisturbanceSpec s;
    s.n_buses = n;
    return Disturbance(s);
}

// droop equations written out term by term
Vec reference_field(const Mat& g, const Mat& b, const DroopParams& p, const SystemState& x, const Vec& u) {
    const auto n = g.rows();
    Vec f(2 * n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double pi = x.v[i] * x.v[i] * g(i, i);
        double qi = -x.v[i] * x.v[i] * b(i, i);
        for (Eigen::Index k = 0; k < n; ++k) {
            if (k == i) continue;
            const double th = x.theta[i] - x.theta[k];
            pi += x.v[i] * x.v[k] * (g(i, k) * std::cos(th) + b(i, k) * std::sin(th));
            qi += x.v[i] * x.v[k] * (g(i, k) * std::sin(th) - b(i, k) * std::cos(th));
        }
        f[i] = -p.m_p[i] * (pi - p.p_ref0[i] - u[i]);
        f[n + i] = (p.v_nom[i] - x.v[i] - p.n_q[i] * (qi - p.q_ref0[i] - u[n + i])) / p.tau_v[i];
    }
    return f;
}

}  // namespace

TEST_CASE("property: vector field matches the written-out equations") {
    std::mt19937_64 rng(5001);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 1 + trial % 6;
        const auto net = n == 1 ? NetworkModel(Mat::Constant(1, 1, 0.1), Mat::Constant(1, 1, -0.5)) : random_network(rng, n);
        const auto p = random_params(rng, n);
        const auto x = random_state(rng, n, 1.0);
        Vec u(2 * static_cast<Eigen::Index>(n));
        for (Eigen::Index i = 0; i < u.size(); ++i) u[i] = uniform(rng, -0.2, 0.2);
        const Vec a = vector_field(net, p, x, u);
        const Vec b = reference_field(net.conductance(), net.susceptance(), p, x, u);
        CHECK((a - b).cwiseAbs().maxCoeff() < 1e-13);
    }
}

TEST_CASE("equilibrium is a fixed point of the rotating frame up to a common frequency") {
    // with line losses the synchronous frequency is offset from nominal, so
    // only the projected field vanishes
    const auto& sc = case3();
    const auto eq = solve_equilibrium(sc.net, sc.params, Vec::Zero(6), flat(3)).x;
    const Vec f = vector_field(sc.net, sc.params, eq, Vec::Zero(6));
    const auto pr = make_projection(3);
    CHECK((pr.r_theta * f.head(3)).norm() < 1e-10);
    CHECK(f.tail(3).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((f.head(3).array() - f[0]).abs().maxCoeff() < 1e-10);
}

TEST_CASE("without reactive droop the voltage is a network-free lag") {
    std::mt19937_64 rng(5002);
    const auto net = random_network(rng, 4);
    auto p = random_params(rng, 4);
    p.n_q.setZero();
    const auto x = random_state(rng, 4);
    const Vec f = vector_field(net, p, x, Vec::Zero(8));
    for (int i = 0; i < 4; ++i) CHECK(f[4 + i] == doctest::Approx((p.v_nom[i] - x.v[i]) / p.tau_v[i]).epsilon(1e-15));
}

TEST_CASE("integrator self-test on x' = -x") {
    std::vector<double> times;
    for (int k = 0; k <= 100; ++k) times.push_back(0.1 * k);
    const auto sol = integrate_rhs([](double, const Vec& y) { return Vec(-y); }, Vec::Ones(1), times, {}, 1e-8, 1e-10);
    for (std::size_t k = 0; k < times.size(); ++k) CHECK(std::abs(sol[k][0] - std::exp(-times[k])) < 1e-7);
}

TEST_CASE("halving the tolerance moves the terminal state by less than ten tolerances") {
    const auto& sc = case3();
    IntegrateOptions a;
    a.output_dt = 1.0;
    IntegrateOptions b = a;
    b.rel_tol /= 2;
    b.abs_tol /= 2;
    SystemState x0 = *sc.reference;
    x0.theta[1] += 0.05;
    x0.v[2] -= 0.02;
    const auto ta = integrate(sc.net, sc.params, x0, quiet(3), 0.0, 30.0, a);
    const auto tb = integrate(sc.net, sc.params, x0, quiet(3), 0.0, 30.0, b);
    const double diff = (ta.states.back().stacked() - tb.states.back().stacked()).cwiseAbs().maxCoeff();
    CHECK(diff < 10 * a.rel_tol);
}

TEST_CASE("rotating and stationary frames differ only along the kernel") {
    const auto& sc = case3();
    IntegrateOptions rot;
    rot.output_dt = 0.5;
    rot.rel_tol = 1e-11;
    rot.abs_tol = 1e-13;
    IntegrateOptions sta = rot;
    sta.frame = Frame::stationary;
    SystemState x0 = *sc.reference;
    x0.theta[0] += 0.04;
    const auto a = integrate(sc.net, sc.params, x0, quiet(3), 0.0, 20.0, rot);
    const auto b = integrate(sc.net, sc.params, x0, quiet(3), 0.0, 20.0, sta);
    const auto pr = make_projection(3);
    const auto eq = solve_equilibrium(sc.net, sc.params, Vec::Zero(6), x0).x;
    for (std::size_t k = 0; k < a.size(); ++k) {
        CHECK(std::abs(seminorm_distance(pr, a.states[k], eq) - seminorm_distance(pr, b.states[k], eq)) < 1e-9);
        const Vec drift = b.states[k].theta - a.states[k].theta;
        CHECK(drift.mean() == doctest::Approx(sc.params.omega_nom * a.times[k]).epsilon(1e-9));
        CHECK((drift.array() - drift.mean()).abs().maxCoeff() < 1e-7);
    }
}

TEST_CASE("domain exits are reported with a time") {
    const auto& sc = case3();
    IntegrateOptions io;
    io.monitor = sc.domain;
    SystemState x0 = flat(3);
    x0.v[0] = 1.049;
    x0.theta[1] = 0.33;
    const auto tr = integrate(sc.net, sc.params, x0, quiet(3), 0.0, 5.0, io);
    const auto inside = integrate(sc.net, sc.params, *sc.reference, quiet(3), 0.0, 5.0, io);
    CHECK_FALSE(inside.first_exit_time);
    if (tr.first_exit_time) CHECK(*tr.first_exit_time <= 5.0);
    SystemState outside = flat(3);
    outside.v[1] = 1.2;
    const auto out = integrate(sc.net, sc.params, outside, quiet(3), 0.0, 1.0, io);
    REQUIRE(out.first_exit_time);
    CHECK(*out.first_exit_time == 0.0);
}

TEST_CASE("disturbance signals") {
    SUBCASE("zero spec") {
        const auto u = quiet(3);
        CHECK(u.is_zero());
        CHECK(u(3.0).norm() == 0.0);
    }
    SUBCASE("a ramp has slope epsilon") {
        DisturbanceSpec s;
        s.n_buses = 3;
        s.ramps.push_back({Channel::q, 2, 1.0, 4.0, 0.014});
        s.epsilon = 0.014;
        const auto u = make_disturbance(s);
        CHECK(u.slow_rate(2.0).norm() == doctest::Approx(0.014));
        CHECK(u.slow_rate(5.0).norm() == 0.0);
        CHECK(u.slow(10.0)[5] == doctest::Approx(3 * 0.014));
        CHECK(u.max_slow_rate(10.0) == doctest::Approx(0.014));
    }
    SUBCASE("declared bounds are enforced") {
        DisturbanceSpec s;
        s.n_buses = 2;
        s.ramps.push_back({Channel::p, 0, 0.0, 1.0, 0.02});
        s.epsilon = 0.01;
        CHECK_THROWS_AS(make_disturbance(s), DisturbanceError);
    }
    SUBCASE("shipped composite disturbance") {
        const auto sc = load_scenario(scenario_path("case_3bus_composite"));
        const auto u = make_disturbance(sc.disturbance);
        CHECK(u.epsilon() == doctest::Approx(0.014));
        CHECK(u.delta() == doctest::Approx(0.04));
        CHECK(u.max_slow_rate(60.0) <= 0.014 + 1e-12);
        CHECK(u.max_fast_amplitude(60.0) <= 0.04 + 1e-12);
        CHECK(u.max_fast_amplitude(60.0) == doctest::Approx(0.04));
    }
    SUBCASE("seeded dither is reproducible and bounded") {
        DisturbanceSpec s;
        s.n_buses = 3;
        s.fast.push_back({Channel::p, 2, 0.04, Waveform::square_dither, 0.2, 1.0, 1e300});
        s.delta = 0.04;
        s.seed = 7;
        const auto a = make_disturbance(s);
        const auto b = make_disturbance(s);
        s.seed = 8;
        const auto c = make_disturbance(s);
        bool differs = false;
        for (double t = 0.0; t < 20.0; t += 0.05) {
            CHECK(a(t) == b(t));
            CHECK(std::abs(a.fast(t)[2]) <= 0.04);
            if (t >= 1.0) CHECK(std::abs(a.fast(t)[2]) == doctest::Approx(0.04));
            differs = differs || a(t) != c(t);
        }
        CHECK(differs);
    }
}

TEST_CASE("parallel trajectory batches do not depend on the job count") {
    const auto& sc = case3();
    RunOptions one;
    one.pairs = 4;
    RunOptions two = one;
    two.jobs = 2;
    const auto tube = autonomous_tube(0.184, sc.net, sc.params, sc.domain, *sc.reference);
    const auto a = run_contraction(sc, 0.184, tube, one);
    const auto b = run_contraction(sc, 0.184, tube, two);
    CHECK(a.worst_ratio == b.worst_ratio);
    REQUIRE(a.angle_error.size() == b.angle_error.size());
    for (std::size_t k = 0; k < a.angle_error.size(); ++k) CHECK(a.angle_error[k] == b.angle_error[k]);
}
