#include "droopcert/variational.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace droopcert {

Mat JacobianBlocks::assembled() const {
    const auto n = j_tt.rows();
    Mat j(2 * n, 2 * n);
    j << j_tt, j_tv, j_vt, j_vv;
    return j;
}

PairwiseFlows pairwise_flows(const NetworkModel& net, const SystemState& x) {
    const auto n = static_cast<Eigen::Index>(net.size());
    if (x.theta.size() != n || x.v.size() != n)
        throw ModelError("pairwise_flows: dimension mismatch");
    const Mat& g = net.conductance();
    const Mat& b = net.susceptance();
    PairwiseFlows f{Mat::Zero(n, n), Mat::Zero(n, n)};
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index k = 0; k < n; ++k) {
            if (i == k) continue;
            const double t = x.theta[i] - x.theta[k];
            const double vv = x.v[i] * x.v[k];
            const double c = std::cos(t);
            const double s = std::sin(t);
            f.p(i, k) = vv * (g(i, k) * c + b(i, k) * s);
            f.q(i, k) = vv * (g(i, k) * s - b(i, k) * c);
        }
    }
    return f;
}

JacobianBlocks jacobian(const NetworkModel& net, const DroopParams& params, const SystemState& x) {
    const auto n = static_cast<Eigen::Index>(net.size());
    if (static_cast<Eigen::Index>(params.size()) != n || params.n_q.size() != n ||
        params.tau_v.size() != n)
        throw ModelError("jacobian: parameter dimension mismatch");
    for (Eigen::Index i = 0; i < x.v.size(); ++i)
        if (!(x.v[i] > 0.0))
            throw ModelError("jacobian: nonpositive voltage at bus " + std::to_string(i));

    const auto flows = pairwise_flows(net, x);
    const Mat& g = net.conductance();
    const Mat& b = net.susceptance();
    const Vec p_row = flows.p.rowwise().sum();
    const Vec q_row = flows.q.rowwise().sum();

    JacobianBlocks jac{Mat::Zero(n, n), Mat::Zero(n, n), Mat::Zero(n, n), Mat::Zero(n, n)};
    for (Eigen::Index i = 0; i < n; ++i) {
        const double m = params.m_p[i];
        const double a = params.n_q[i] / params.tau_v[i];
        const double vi = x.v[i];
        const double p_i = vi * vi * g(i, i) + p_row[i];
        const double q_i = -vi * vi * b(i, i) + q_row[i];
        for (Eigen::Index k = 0; k < n; ++k) {
            if (k == i) continue;
            jac.j_tt(i, k) = -m * flows.q(i, k);
            jac.j_tv(i, k) = -m * flows.p(i, k) / x.v[k];
            jac.j_vt(i, k) = a * flows.p(i, k);
            jac.j_vv(i, k) = -a * flows.q(i, k) / x.v[k];
        }
        jac.j_tt(i, i) = m * q_row[i];
        jac.j_tv(i, i) = -m * (p_i + vi * vi * g(i, i)) / vi;
        jac.j_vt(i, i) = -a * p_row[i];
        jac.j_vv(i, i) = -1.0 / params.tau_v[i] - a * (q_i - vi * vi * b(i, i)) / vi;
    }
    return jac;
}

Mat input_matrix(const DroopParams& params) {
    const auto n = static_cast<Eigen::Index>(params.size());
    Mat bu = Mat::Zero(2 * n, 2 * n);
    for (Eigen::Index i = 0; i < n; ++i) {
        bu(i, i) = params.m_p[i];
        bu(n + i, n + i) = params.n_q[i] / params.tau_v[i];
    }
    return bu;
}

namespace {

Mat full_from_angle_block(const Mat& r_theta) {
    const auto n = r_theta.cols();
    Mat r = Mat::Zero(2 * n - 1, 2 * n);
    r.topLeftCorner(n - 1, n) = r_theta;
    r.bottomRightCorner(n, n).setIdentity();
    return r;
}

}  // namespace

Projection make_projection(std::size_t n) {
    if (n == 0) throw ModelError("make_projection: n must be positive");
    const auto ni = static_cast<Eigen::Index>(n);
    Mat rt = Mat::Zero(ni - 1, ni);
    for (Eigen::Index k = 0; k + 1 < ni; ++k) {
        const double scale = 1.0 / std::sqrt(static_cast<double>((k + 1) * (k + 2)));
        rt.row(k).head(k + 1).setConstant(scale);
        rt(k, k + 1) = -static_cast<double>(k + 1) * scale;
    }
    return {rt, full_from_angle_block(rt)};
}

Projection make_projection(const Mat& r_theta) {
    const auto n = r_theta.cols();
    if (n == 0 || r_theta.rows() != n - 1)
        throw ModelError("make_projection: angle basis must be (n-1) x n");
    if (n > 1) {
        const double ones = (r_theta * Vec::Ones(n)).cwiseAbs().maxCoeff();
        const double orth =
            (r_theta * r_theta.transpose() - Mat::Identity(n - 1, n - 1)).cwiseAbs().maxCoeff();
        if (ones > 1e-10 || orth > 1e-10)
            throw ModelError("make_projection: rows must be orthonormal and orthogonal to 1");
    }
    return {r_theta, full_from_angle_block(r_theta)};
}

Mat ProjectedSymmetric::assembled() const {
    const auto a = s_tt.rows();
    const auto n = s_vv.rows();
    Mat s(a + n, a + n);
    s.topLeftCorner(a, a) = s_tt;
    s.topRightCorner(a, n) = s_tv;
    s.bottomLeftCorner(n, a) = s_tv.transpose();
    s.bottomRightCorner(n, n) = s_vv;
    return s;
}

ProjectedSymmetric projected_symmetric(const JacobianBlocks& jac, const Projection& proj) {
    if (jac.size() != proj.size())
        throw ModelError("projected_symmetric: dimension mismatch");
    const Mat& r = proj.r_theta;
    ProjectedSymmetric s;
    s.s_tt = 0.5 * r * (jac.j_tt + jac.j_tt.transpose()) * r.transpose();
    s.s_tv = 0.5 * r * (jac.j_tv + jac.j_vt.transpose());
    s.s_vv = 0.5 * (jac.j_vv + jac.j_vv.transpose());
    return s;
}

double lambda_max_sym(const Mat& s) {
    if (s.rows() == 0) return -std::numeric_limits<double>::infinity();
    Eigen::SelfAdjointEigenSolver<Mat> es(s, Eigen::EigenvaluesOnly);
    return es.eigenvalues()(s.rows() - 1);
}

double spectral_norm(const Mat& a) {
    if (a.size() == 0) return 0.0;
    // sqrt of lambda_max of the smaller Gram matrix
    const Mat gram = a.rows() <= a.cols() ? Mat(a * a.transpose()) : Mat(a.transpose() * a);
    Eigen::SelfAdjointEigenSolver<Mat> es(gram, Eigen::EigenvaluesOnly);
    return std::sqrt(std::max(0.0, es.eigenvalues()(gram.rows() - 1)));
}

double measure(const NetworkModel& net, const DroopParams& params, const SystemState& x,
               const Projection& proj) {
    return lambda_max_sym(projected_symmetric(jacobian(net, params, x), proj).assembled());
}

double measure(const NetworkModel& net, const DroopParams& params, const SystemState& x) {
    return measure(net, params, x, make_projection(net.size()));
}

}  // namespace droopcert
