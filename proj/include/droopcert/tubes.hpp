#pragma once

#include "droopcert/certify.hpp"
#include "droopcert/disturbance.hpp"
#include "droopcert/grid_model.hpp"
#include "droopcert/variational.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace droopcert {

/// ||R x||_2. Vanishes on uniform angle shifts with zero voltage part.
double seminorm(const Projection& proj, const SystemState& x);
double seminorm(const Projection& proj, const Vec& stacked);

/// ||R (a - b)||_2, i.e. the distance from a to the manifold b + ker R.
double seminorm_distance(const Projection& proj, const SystemState& a, const SystemState& b);

class EquilibriumError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Equilibrium {
    SystemState x;
    double residual = 0.0;  // ||f(x, u)||_R
    std::size_t iterations = 0;
    std::optional<bool> in_domain;  // set when a domain was supplied
};

/// Newton iteration on R f(x, u) = 0 with the angle mean pinned to that of
/// the guess. Throws EquilibriumError after `max_iter` iterations.
Equilibrium solve_equilibrium(const NetworkModel& net, const DroopParams& params, const Vec& u,
                              const SystemState& guess,
                              const std::optional<AdmissibleDomain>& dom = std::nullopt,
                              double tol = 1e-10, std::size_t max_iter = 50);

/// Solution of rho' = -c rho + r(t), rho(t0) = rho0.
class ComparisonRadius {
public:
    /// r piecewise constant: values[j] on [knots[j], knots[j+1]), last value
    /// held afterwards. knots[0] is the initial time. Exact convolution.
    static ComparisonRadius piecewise(double c, double rho0, std::vector<double> knots,
                                      std::vector<double> values);
    static ComparisonRadius constant(double c, double rho0, double r, double t0 = 0.0);
    /// General nonnegative r, integrated by adaptive Gauss-Kronrod quadrature.
    /// Pass the jump times of r as breaks; the quadrature is split there.
    static ComparisonRadius general(double c, double rho0, std::function<double(double)> r,
                                    double t0 = 0.0, std::vector<double> breaks = {});

    double operator()(double t) const;
    std::vector<double> operator()(const std::vector<double>& times) const;

    double rate() const { return c_; }
    double rho0() const { return rho0_; }
    double t0() const { return knots_.front(); }

private:
    ComparisonRadius() = default;
    double c_ = 0.0;
    double rho0_ = 0.0;
    std::vector<double> knots_;
    std::vector<double> values_;
    std::function<double(double)> general_;
};

enum class Regime { autonomous, slow, fast, composite };
std::string to_string(Regime r);

struct TubeCertificate {
    Regime regime = Regime::autonomous;
    double rate = 0.0;
    double rho0 = 0.0;
    double residual_bound = 0.0;  // constant r in rho' = -c rho + r
    double ultimate = 0.0;        // residual_bound / rate
    double t0 = 0.0;              // start of the bound
    SystemState reference;        // x_c (constant reference or x*(u_bar))

    // autonomous tubes only
    double min_radius = 0.0;      // r_res / c
    double max_radius = 0.0;      // largest seminorm ball around x_c inside D
    bool self_contained = true;

    std::vector<std::string> warnings;

    /// e^{-c (t - t0)} rho0 + ultimate (1 - e^{-c (t - t0)}) for t >= t0.
    double radius(double t) const;
};

/// Autonomous tube around a constant reference point.
TubeCertificate autonomous_tube(double rate, const NetworkModel& net, const DroopParams& params,
                                const AdmissibleDomain& dom, const SystemState& x_c);
TubeCertificate autonomous_tube(const ContractionCertificate& cert, const NetworkModel& net,
                                const DroopParams& params, const AdmissibleDomain& dom,
                                const SystemState& x_c);

/// Largest r with the seminorm ball of radius r around x_c inside D
/// (voltages move by at most r, edge angle differences by at most sqrt(2) r).
double containment_radius(const NetworkModel& net, const AdmissibleDomain& dom,
                          const SystemState& x_c);

/// Quasi-steady tracking under a slowly varying input with |du/dt| <= epsilon.
TubeCertificate tracking_bound(double rate, double h, double epsilon, double rho0,
                               double t0 = 0.0);
/// Same, checking that `u` has no fast part and respects its declared epsilon.
TubeCertificate tracking_bound(double rate, double h, const Disturbance& u, double rho0,
                               double t0 = 0.0);
TubeCertificate tracking_bound(const ContractionCertificate& cert, double h, const Disturbance& u,
                               double rho0, double t0 = 0.0);

/// Robust boundedness for |u - u_bar| <= delta around a constant u_bar.
TubeCertificate robustness_bound(double rate, double l_u, double delta, double rho0,
                                 double t0 = 0.0);
/// Same, checking that `u` has a constant slow part and respects delta.
TubeCertificate robustness_bound(double rate, double l_u, const Disturbance& u, double rho0,
                                 double t0 = 0.0);
TubeCertificate robustness_bound(const ContractionCertificate& cert, double l_u,
                                 const Disturbance& u, double rho0, double t0 = 0.0);

/// Slow drift plus bounded fast perturbation.
TubeCertificate composite_bound(double rate, double h, double epsilon, double l_u, double delta,
                                double rho0, double t0 = 0.0);
/// Same, checking both declared bounds on `u`.
TubeCertificate composite_bound(double rate, double h, double l_u, const Disturbance& u,
                                double rho0, double t0 = 0.0);
TubeCertificate composite_bound(const ContractionCertificate& cert, double h, double l_u,
                                const Disturbance& u, double rho0, double t0 = 0.0);

/// Input box for sensitivity sampling, u = [p; q].
struct InputBox {
    Vec lower;
    Vec upper;
};

struct SensitivityPoint {
    double norm = 0.0;       // ||R dx*/du||_2
    double sigma_min = 0.0;  // of the pinned projected Jacobian
    Vec u;
    SystemState x;
    Mat dxdu;                // 2N x 2N
};

/// Implicit-function sensitivity of the quasi-steady map at u.
SensitivityPoint sensitivity_at(const NetworkModel& net, const DroopParams& params, const Vec& u,
                                const SystemState& guess);

struct SensitivityEstimate {
    double h = 0.0;          // +inf when ill-conditioned
    bool ill_conditioned = false;
    double sigma_min = 0.0;  // smallest over the samples
    Vec argmax_u;
    std::size_t samples = 0;
    std::vector<std::string> diagnostics;
};

/// H = max over sampled u in the box (corners, centre and seeded uniform
/// samples) of the sensitivity norm.
SensitivityEstimate estimate_h(const NetworkModel& net, const DroopParams& params,
                               const InputBox& box, std::size_t n_samples,
                               const SystemState& guess, std::uint64_t seed = 42,
                               std::size_t jobs = 1);

struct LipschitzEstimate {
    double l_u = 0.0;          // exact ||R B_u||_2
    double sampled_max = 0.0;  // max ratio over sampled input pairs
    std::size_t samples = 0;
};

/// Input Lipschitz constant of f in the seminorm. f is affine in u, so the
/// exact value is the norm of the projected input matrix; a sampled check
/// around x*(u_bar) is reported alongside.
LipschitzEstimate estimate_lu(const NetworkModel& net, const DroopParams& params,
                              const Vec& u_bar, const InputBox& box, const SystemState& guess,
                              std::size_t n_samples = 1000, std::uint64_t seed = 42);

/// Quasi-steady reference x*(u(t)) on a time grid, warm-started along it.
std::vector<SystemState> quasi_steady_path(const NetworkModel& net, const DroopParams& params,
                                           const std::function<Vec(double)>& u,
                                           const std::vector<double>& times,
                                           const SystemState& guess);

}  // namespace droopcert
