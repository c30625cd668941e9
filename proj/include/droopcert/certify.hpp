#pragma once

#include "droopcert/domain_search.hpp"
#include "droopcert/grid_model.hpp"
#include "droopcert/variational.hpp"

#include <optional>
#include <string>
#include <vector>

namespace droopcert {

/// Margins are rounded to this granularity in the conservative direction.
inline constexpr double kMarginQuantum = 1e-6;

double round_down(double v);
double round_up(double v);

struct AngleMargin {
    Mat w_lower;             // worst-case edge weights, zero diagonal
    double lambda2 = 0.0;    // algebraic connectivity of the weighted Laplacian
    double delta_theta = 0.0;
    double c_theta = 0.0;
    SystemState delta_argmax;
    SearchMethod method = SearchMethod::grid;
    std::vector<std::string> diagnostics;
};

struct VoltageMargin {
    Vec c_bar;
    Vec r_bar;
    double c_v = 0.0;
    std::size_t worst_node = 0;
};

struct CouplingMargin {
    double beta = 0.0;
    SystemState maximizer;
    SearchMethod method = SearchMethod::grid;
    bool warning = false;          // search did not converge or validation exceeded it
    double validation_max = 0.0;   // largest norm seen on fresh states
    std::size_t validation_states = 0;
};

enum class RateSource { theorem, declared, none };
std::string to_string(RateSource s);

struct ContractionCertificate {
    AngleMargin angle;
    VoltageMargin voltage;
    CouplingMargin coupling;
    bool feasible = false;
    std::optional<double> rate;     // closed-form rate when feasible
    Mat m_c;                        // 2 x 2 comparison matrix
    double mc_lambda_max = 0.0;

    // sampled sup of the projected measure over D, always reported
    double measure_sup = 0.0;
    SystemState measure_argmax;

    std::optional<double> declared_rate;
    bool declared_accepted = false;
    RateSource rate_source = RateSource::none;
    std::optional<double> effective_rate;
};

/// Worst-case synchronizing weight between i and k over D.
Mat angle_weights_lower(const NetworkModel& net, const DroopParams& params,
                        const AdmissibleDomain& dom);

/// Weighted graph Laplacian of a symmetric weight matrix (diagonal ignored).
Mat laplacian(const Mat& w);

/// Smallest eigenvalue of L restricted to the complement of the ones vector.
double algebraic_connectivity(const Mat& l);

/// Diagonal residual Delta(x) = diag(sym(J_tt) 1).
Vec angle_residual(const NetworkModel& net, const DroopParams& params, const SystemState& x);

/// Symmetric synchronizing weights -sym(J_tt)_ik at x, zero diagonal.
Mat angle_weights(const NetworkModel& net, const DroopParams& params, const SystemState& x);

/// max over |theta| <= gamma of |b cos(theta) - g sin(theta)|.
double max_trig_coupling(double b, double g, double gamma);

AngleMargin angle_margin(const NetworkModel& net, const DroopParams& params,
                         const AdmissibleDomain& dom, const SearchOptions& opts = {});

VoltageMargin voltage_margin(const NetworkModel& net, const DroopParams& params,
                             const AdmissibleDomain& dom);

CouplingMargin coupling_margin(const NetworkModel& net, const DroopParams& params,
                               const AdmissibleDomain& dom, const SearchOptions& opts = {},
                               std::size_t validation_states = 10'000);

/// Rate of the 2 x 2 comparison system; nullopt when the condition fails.
std::optional<double> theorem_rate(double c_theta, double c_v, double beta);
Mat comparison_matrix(double c_theta, double c_v, double beta);

/// Sampled sup of mu_R(J(x)) over D (grid/multistart plus fresh validation).
SearchResult measure_sup(const NetworkModel& net, const AdmissibleDomain& dom,
                         const DroopParams& params, const SearchOptions& opts = {},
                         std::size_t validation_states = 10'000);

/// Full certificate. A declared rate is accepted only when the sampled sup of
/// the measure does not exceed -declared; it is used as the effective rate
/// only when the closed-form certificate is infeasible.
ContractionCertificate certificate(const NetworkModel& net, const DroopParams& params,
                                   const AdmissibleDomain& dom, const SearchOptions& opts = {},
                                   std::optional<double> declared_rate = std::nullopt);

}  // namespace droopcert
