#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace droopcert {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Raised when a model, parameter set or state violates one of its invariants.
class ModelError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Unordered bus pair (i < k), zero-based.
struct Edge {
    std::size_t i;
    std::size_t k;
    bool operator==(const Edge&) const = default;
};

/// Kron-reduced converter network in nodal form Y = G + jB.
///
/// Sign convention: Y_ii = sum of incident series admittances plus shunt,
/// Y_ik = -(series admittance). For inductive lines this gives B_ik >= 0 off
/// the diagonal and B_ii <= 0.
class NetworkModel {
public:
    NetworkModel() = default;
    NetworkModel(Mat conductance, Mat susceptance, double edge_tol = 1e-12);

    std::size_t size() const { return static_cast<std::size_t>(g_.rows()); }
    const Mat& conductance() const { return g_; }
    const Mat& susceptance() const { return b_; }
    const std::vector<Edge>& edges() const { return edges_; }

    /// Neighbors of bus i (buses sharing an edge with i), ascending.
    std::vector<std::size_t> neighbors(std::size_t i) const;

private:
    Mat g_;
    Mat b_;
    std::vector<Edge> edges_;
};

/// Series branch between two buses (zero-based) with impedance r + jx.
struct Branch {
    std::size_t from;
    std::size_t to;
    double r;
    double x;
};

/// Shunt admittance g + jb at a bus (zero-based).
struct Shunt {
    std::size_t bus;
    double g;
    double b;
};

/// Assemble the nodal admittance matrix from series branches and shunts.
NetworkModel assemble_network(std::size_t n_buses, const std::vector<Branch>& branches,
                              const std::vector<Shunt>& shunts = {});

struct DroopParams {
    Vec m_p;    // active droop gains, > 0
    Vec n_q;    // reactive droop gains, >= 0
    Vec tau_v;  // voltage loop time constants [s], > 0
    double omega_nom = 0.0;
    Vec v_nom;
    Vec p_ref0;
    Vec q_ref0;

    std::size_t size() const { return static_cast<std::size_t>(m_p.size()); }

    /// Throws ModelError naming the first violated invariant.
    void validate(std::size_t n_buses) const;
};

struct AdmissibleDomain {
    double v_min = 0.0;
    double v_max = 0.0;
    double gamma_max = 0.0;  // rad

    void validate() const;
};

/// Stacked state x = [theta; v].
struct SystemState {
    Vec theta;
    Vec v;

    SystemState() = default;
    SystemState(Vec th, Vec volt) : theta(std::move(th)), v(std::move(volt)) {}

    std::size_t size() const { return static_cast<std::size_t>(theta.size()); }
    Vec stacked() const;
    static SystemState from_stacked(const Vec& x);
    bool finite() const;
};

/// True iff every voltage lies in [v_min, v_max] and every edge angle
/// difference is at most gamma_max in magnitude. `slack` tightens the test.
bool in_domain(const NetworkModel& net, const AdmissibleDomain& dom, const SystemState& x,
               double slack = 0.0);

struct Injections {
    Vec p;
    Vec q;
};

/// Active and reactive bus injections from the AC power-flow equations.
Injections power_injections(const NetworkModel& net, const SystemState& x);

/// Schur-complement elimination of every bus not in `retained` (zero-based,
/// order preserved). Throws ModelError if the eliminated block is singular.
NetworkModel kron_reduce(const Mat& full_g, const Mat& full_b,
                         const std::vector<std::size_t>& retained);

}  // namespace droopcert
