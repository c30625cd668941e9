#pragma once

#include "droopcert/certify.hpp"
#include "droopcert/scenario.hpp"
#include "droopcert/simulate.hpp"
#include "droopcert/tubes.hpp"

#include <optional>
#include <vector>

namespace droopcert {

struct RunOptions {
    std::size_t jobs = 1;
    std::uint64_t seed = 42;
    std::optional<double> rho0;          // override of the default initial radius
    std::optional<SystemState> x0;       // override of the initial state
    std::size_t boundary_random = 20;    // random boundary states besides the axis ones
    std::size_t newton_starts = 20;
    std::size_t pairs = 50;
    double tolerance = 1e-6;             // absolute slack on tube checks
};

/// Certificate for a scenario using its search settings and declared rate.
ContractionCertificate certify_scenario(const Scenario& sc, std::size_t jobs);

/// Input box spanned by the slow part of a disturbance on [0, t_end].
InputBox slow_input_box(const Disturbance& u, double t_end);

/// Earliest time at which any component of the disturbance acts (0 if none).
double disturbance_onset(const DisturbanceSpec& spec);

struct AutonomousRun {
    TubeCertificate tube;
    SystemState equilibrium;
    double equilibrium_distance = 0.0;  // ||x* - x_c||_R
    std::vector<SystemState> starts;    // boundary initial states
    std::vector<Trajectory> trajectories;
    double worst_invariance_margin = 0.0;  // min over runs of (r - ||x(t) - x_c||_R)
    double worst_comparison_margin = 0.0;  // min of (rho(t) - ||x(t) - x_c||_R)
    std::size_t domain_exits = 0;
    double newton_spread = 0.0;  // max pairwise seminorm distance of Newton limits
    std::size_t newton_converged = 0;
};

/// Tube around the scenario reference point (or its equilibrium), checked by
/// simulating from states on the tube boundary and by Newton from interior
/// starts.
AutonomousRun run_autonomous(const Scenario& sc, double rate, const RunOptions& opts);

struct ContractionRun {
    std::vector<double> times;
    std::size_t pairs = 0;
    double worst_ratio = 0.0;  // max of dist(t) / (e^{-ct} dist(0))
    double worst_time = 0.0;
    std::size_t domain_exits = 0;
    // per-trajectory distances to the equilibrium manifold (angle, voltage)
    std::vector<SystemState> starts;
    std::vector<std::vector<double>> angle_error;
    std::vector<std::vector<double>> voltage_error;
    std::vector<double> start_distance;
    SystemState equilibrium;
};

/// Random initial pairs inside the certified autonomous tube, integrated
/// over [0, t_end] and compared with the e^{-ct} envelope.
ContractionRun run_contraction(const Scenario& sc, double rate, const TubeCertificate& tube,
                               const RunOptions& opts);

struct TubeRun {
    TubeCertificate tube;
    Trajectory trajectory;
    std::vector<double> deviation;   // ||x(t) - x*(u_bar(t))||_R
    std::vector<double> radius;      // tube radius at each output time
    double worst_margin = 0.0;       // min over t >= t0 of radius + tol - deviation
    double peak_deviation = 0.0;
    std::optional<SensitivityEstimate> h;
    std::optional<LipschitzEstimate> l_u;
    bool contained = true;
};

/// Slow (tracking), fast (robustness) or composite regime on a scenario with
/// its shipped disturbance; the system starts at the equilibrium of u = 0.
TubeRun run_tube(const Scenario& sc, double rate, Regime regime, const RunOptions& opts);

struct SweepPoint {
    double eta = 0.0;
    double lambda2 = 0.0;
    double delta_theta = 0.0;
    double c_theta = 0.0;
};

/// Mean-preserving droop homogenization m(eta) = mean(m) + eta (m - mean(m)).
/// `lossless` zeroes the conductances first.
std::vector<SweepPoint> heterogeneity_sweep(const Scenario& sc, const std::vector<double>& etas,
                                            bool lossless, std::size_t jobs);

}  // namespace droopcert
