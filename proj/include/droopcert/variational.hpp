#pragma once

#include "droopcert/grid_model.hpp"

namespace droopcert {

/// The four N x N blocks of the state Jacobian of the droop dynamics.
/// Inputs enter additively, so the same blocks serve the forced system.
struct JacobianBlocks {
    Mat j_tt;  // d(theta_dot)/d(theta)
    Mat j_tv;  // d(theta_dot)/d(v)
    Mat j_vt;  // d(v_dot)/d(theta)
    Mat j_vv;  // d(v_dot)/d(v)

    std::size_t size() const { return static_cast<std::size_t>(j_tt.rows()); }
    Mat assembled() const;
};

/// Pairwise coupling terms P_ik = V_i V_k (G_ik cos + B_ik sin) and
/// Q_ik = V_i V_k (G_ik sin - B_ik cos); diagonals are zero.
struct PairwiseFlows {
    Mat p;
    Mat q;
};

PairwiseFlows pairwise_flows(const NetworkModel& net, const SystemState& x);

/// Analytical Jacobian. Throws ModelError on a nonpositive voltage.
JacobianBlocks jacobian(const NetworkModel& net, const DroopParams& params, const SystemState& x);

/// Constant input matrix df/du for u = [p; q]: diag(m_p) on the angle rows
/// and diag(n_q / tau_v) on the voltage rows.
Mat input_matrix(const DroopParams& params);

/// Symmetry-removing projection. r_theta has orthonormal rows spanning the
/// complement of the all-ones vector; r_full = blkdiag(r_theta, I).
struct Projection {
    Mat r_theta;
    Mat r_full;

    std::size_t size() const { return static_cast<std::size_t>(r_theta.cols()); }
    /// Orthogonal projector R^T R.
    Mat projector() const { return r_full.transpose() * r_full; }
};

/// Deterministic Helmert basis (Gram-Schmidt of e_i - e_{i+1}). n = 1 gives a
/// 0 x 1 angle block. Throws ModelError for n = 0.
Projection make_projection(std::size_t n);

/// Projection from a caller-supplied angle basis; validated to 1e-10.
Projection make_projection(const Mat& r_theta);

struct ProjectedSymmetric {
    Mat s_tt;  // (N-1) x (N-1)
    Mat s_tv;  // (N-1) x N
    Mat s_vv;  // N x N

    Mat assembled() const;
};

ProjectedSymmetric projected_symmetric(const JacobianBlocks& jac, const Projection& proj);

/// Largest eigenvalue of a symmetric matrix (empty -> -inf).
double lambda_max_sym(const Mat& s);

/// Largest singular value (empty -> 0).
double spectral_norm(const Mat& a);

/// Euclidean matrix measure of the projected Jacobian at x.
double measure(const NetworkModel& net, const DroopParams& params, const SystemState& x);
double measure(const NetworkModel& net, const DroopParams& params, const SystemState& x,
               const Projection& proj);

}  // namespace droopcert
