#pragma once

#include "droopcert/disturbance.hpp"
#include "droopcert/grid_model.hpp"

#include <functional>
#include <optional>
#include <vector>

namespace droopcert {

/// Rotating frame drops omega_nom from every angle rate; the two frames differ
/// only along the rotational kernel.
enum class Frame { rotating, stationary };

/// Droop vector field at x with reference perturbation u = [p; q].
/// Returns the stacked rate [theta_dot; v_dot].
Vec vector_field(const NetworkModel& net, const DroopParams& params, const SystemState& x,
                 const Vec& u, Frame frame = Frame::rotating);

/// Same, with u taken from a disturbance at time t.
Vec vector_field(const NetworkModel& net, const DroopParams& params, const SystemState& x,
                 const Disturbance& u, double t, Frame frame = Frame::rotating);

class IntegrationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct IntegrateOptions {
    double rel_tol = 1e-8;
    double abs_tol = 1e-10;
    double output_dt = 0.01;
    /// Explicit output grid; overrides output_dt when non-empty.
    std::vector<double> output_times;
    Frame frame = Frame::rotating;
    /// Guard box on voltages; leaving it aborts the run.
    double guard_v_min = 0.05;
    double guard_v_max = 5.0;
    /// Domain whose exits are recorded (not an error).
    std::optional<AdmissibleDomain> monitor;
};

struct Trajectory {
    std::vector<double> times;
    std::vector<SystemState> states;
    /// Seminorm deviation from a reference, filled by attach_metric.
    std::vector<double> metrics;
    std::optional<double> first_exit_time;

    std::size_t size() const { return times.size(); }
};

/// Adaptive Dormand-Prince integration on [t0, t1] with dense output at the
/// requested grid. Disturbance breakpoints are stepped onto exactly.
Trajectory integrate(const NetworkModel& net, const DroopParams& params, const SystemState& x0,
                     const Disturbance& u, double t0, double t1,
                     const IntegrateOptions& opts = {});

/// Generic variant for a stacked-state right-hand side (used for self-tests).
using Rhs = std::function<Vec(double, const Vec&)>;
std::vector<Vec> integrate_rhs(const Rhs& rhs, const Vec& x0, const std::vector<double>& times,
                               const std::vector<double>& breakpoints, double rel_tol,
                               double abs_tol);

}  // namespace droopcert
