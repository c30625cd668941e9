#include "droopcert/harness.hpp"

#include "droopcert/parallel.hpp"
#include "droopcert/simulate.hpp"

#include <Eigen/QR>

#include <array>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>

namespace droopcert {

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

json vec_json(const Vec& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

json mat_json(const Mat& m) {
    json a = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) a.push_back(vec_json(m.row(i).transpose()));
    return a;
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Verdict make_verdict(std::string id, std::string name, bool passed, double value, double reference,
                     double tolerance, std::string check, std::string detail = {}) {
    Verdict v;
    v.id = std::move(id);
    v.name = std::move(name);
    v.passed = passed;
    v.value = value;
    v.reference = reference;
    v.tolerance = tolerance;
    v.check = std::move(check);
    v.detail = std::move(detail);
    return v;
}

// |value - reference| <= rel * |reference|
Verdict relative_verdict(std::string id, std::string name, std::optional<double> value,
                         double reference, double rel, std::string detail = {}) {
    const double v = value ? *value : kNaN;
    const bool ok = value && std::isfinite(v) && std::abs(v - reference) <= rel * std::abs(reference);
    return make_verdict(std::move(id), std::move(name), ok, v, reference, rel * std::abs(reference),
                        "|value - " + fmt(reference) + "| <= " + fmt(rel * 100.0) + "% of reference",
                        std::move(detail));
}

const char* block_name(Eigen::Index row, Eigen::Index col, Eigen::Index n) {
    const bool rt = row < n;
    const bool ct = col < n;
    if (rt && ct) return "(theta,theta)";
    if (rt) return "(theta,V)";
    if (ct) return "(V,theta)";
    return "(V,V)";
}

// random orthonormal basis of the complement of the ones vector
Mat random_angle_basis(std::size_t n, std::mt19937_64& rng) {
    const auto nn = static_cast<Eigen::Index>(n);
    std::normal_distribution<double> g(0.0, 1.0);
    Mat a(nn, nn);
    a.col(0).setOnes();
    for (Eigen::Index j = 1; j < nn; ++j)
        for (Eigen::Index i = 0; i < nn; ++i) a(i, j) = g(rng);
    Eigen::HouseholderQR<Mat> qr(a);
    const Mat q = qr.householderQ() * Mat::Identity(nn, nn);
    return q.rightCols(nn - 1).transpose();
}

// sym(J_tt) rebuilt from the trigonometric closed forms of w and Delta
Mat decomposed_angle_block(const NetworkModel& net, const DroopParams& params,
                           const SystemState& x) {
    const auto n = static_cast<Eigen::Index>(net.size());
    const auto& g = net.conductance();
    const auto& b = net.susceptance();
    Mat w = Mat::Zero(n, n);
    Vec delta = Vec::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index k = 0; k < n; ++k) {
            if (k == i) continue;
            const double th = x.theta[i] - x.theta[k];
            const double vv = x.v[i] * x.v[k];
            const double mi = params.m_p[i];
            const double mk = params.m_p[k];
            w(i, k) = 0.5 * vv * ((mi + mk) * b(i, k) * std::cos(th) - (mi - mk) * g(i, k) * std::sin(th));
            delta[i] += 0.5 * vv *
                        ((mk - mi) * b(i, k) * std::cos(th) + (mi + mk) * g(i, k) * std::sin(th));
        }
    }
    Mat out = -laplacian(w);
    out.diagonal() += delta;
    return out;
}

void write_failure(const std::string& out_dir, const std::string& id, const SystemState& x,
                   const std::string& detail, std::vector<std::string>& files) {
    if (out_dir.empty() || x.size() == 0) return;
    fs::create_directories(out_dir);
    const std::string path = (fs::path(out_dir) / ("oracle_failure_" + id + ".json")).string();
    json j = to_json(x);
    j["oracle"] = id;
    j["detail"] = detail;
    write_json(path, j);
    files.push_back(path);
}

std::vector<double> relative_angles(const SystemState& x) {
    std::vector<double> out;
    for (Eigen::Index k = 1; k < x.theta.size(); ++k) out.push_back(x.theta[k] - x.theta[0]);
    return out;
}

void append(std::vector<double>& row, const std::vector<double>& more) {
    row.insert(row.end(), more.begin(), more.end());
}

void append(std::vector<double>& row, const Vec& more) {
    for (Eigen::Index i = 0; i < more.size(); ++i) row.push_back(more[i]);
}

std::vector<std::string> state_columns(std::size_t n) {
    std::vector<std::string> h;
    for (std::size_t k = 2; k <= n; ++k) h.push_back("theta" + std::to_string(k) + "1");
    for (std::size_t k = 1; k <= n; ++k) h.push_back("v" + std::to_string(k));
    return h;
}

}  // namespace

// ---------------------------------------------------------------- reporting

bool RunReport::ok() const {
    for (const auto& v : verdicts)
        if (!v.passed) return false;
    return true;
}

json RunReport::to_json() const {
    json j;
    j["scenario"] = scenario;
    j["kind"] = kind;
    j["version"] = std::string("droopcert ") + version;
    j["timestamp"] = timestamp;
    j["passed"] = ok();
    j["certificate"] = certificate;
    j["tubes"] = tubes;
    j["verdicts"] = json::array();
    for (const auto& v : verdicts) j["verdicts"].push_back(droopcert::to_json(v));
    j["files"] = files;
    if (!extra.empty()) j["extra"] = extra;
    return j;
}

json to_json(const SystemState& x) {
    return {{"theta", vec_json(x.theta)}, {"v", vec_json(x.v)}};
}

json to_json(const ContractionCertificate& c) {
    json j;
    j["angle"] = {{"lambda2", c.angle.lambda2},
                  {"delta_theta", c.angle.delta_theta},
                  {"c_theta", c.angle.c_theta},
                  {"delta_argmax", to_json(c.angle.delta_argmax)},
                  {"method", to_string(c.angle.method)},
                  {"w_lower", mat_json(c.angle.w_lower)},
                  {"diagnostics", c.angle.diagnostics}};
    j["voltage"] = {{"c_bar", vec_json(c.voltage.c_bar)},
                    {"r_bar", vec_json(c.voltage.r_bar)},
                    {"c_v", c.voltage.c_v},
                    {"worst_node", c.voltage.worst_node}};
    j["coupling"] = {{"beta", c.coupling.beta},
                     {"maximizer", to_json(c.coupling.maximizer)},
                     {"method", to_string(c.coupling.method)},
                     {"warning", c.coupling.warning},
                     {"validation_max", c.coupling.validation_max},
                     {"validation_states", c.coupling.validation_states}};
    j["feasible"] = c.feasible;
    j["rate"] = c.rate ? json(*c.rate) : json(nullptr);
    j["m_c"] = mat_json(c.m_c);
    j["mc_lambda_max"] = c.mc_lambda_max;
    j["measure_sup"] = c.measure_sup;
    j["measure_argmax"] = to_json(c.measure_argmax);
    j["declared_rate"] = c.declared_rate ? json(*c.declared_rate) : json(nullptr);
    j["declared_accepted"] = c.declared_accepted;
    j["rate_source"] = to_string(c.rate_source);
    j["effective_rate"] = c.effective_rate ? json(*c.effective_rate) : json(nullptr);
    return j;
}

json to_json(const TubeCertificate& t) {
    json j;
    j["regime"] = to_string(t.regime);
    j["rate"] = t.rate;
    j["rho0"] = t.rho0;
    j["residual_bound"] = t.residual_bound;
    j["ultimate"] = t.ultimate;
    j["t0"] = t.t0;
    j["reference"] = to_json(t.reference);
    if (t.regime == Regime::autonomous) {
        j["min_radius"] = t.min_radius;
        j["max_radius"] = t.max_radius;
        j["self_contained"] = t.self_contained;
    }
    j["warnings"] = t.warnings;
    return j;
}

json to_json(const SensitivityEstimate& h) {
    return {{"h", h.h},
            {"ill_conditioned", h.ill_conditioned},
            {"sigma_min", h.sigma_min},
            {"argmax_u", vec_json(h.argmax_u)},
            {"samples", h.samples},
            {"diagnostics", h.diagnostics}};
}

json to_json(const LipschitzEstimate& l) {
    return {{"l_u", l.l_u}, {"sampled_max", l.sampled_max}, {"samples", l.samples}};
}

json to_json(const Verdict& v) {
    return {{"id", v.id},         {"name", v.name},           {"passed", v.passed},
            {"value", v.value},   {"reference", v.reference}, {"tolerance", v.tolerance},
            {"check", v.check},   {"detail", v.detail}};
}

void write_json(const std::string& path, const json& j) {
    const fs::path p(path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << j.dump(2) << '\n';
}

std::string timestamp_utc() {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string resolve_out_dir(const std::optional<std::string>& flag) {
    if (flag && !flag->empty()) return *flag;
    if (const char* env = std::getenv("DROOPCERT_OUT_DIR"); env && *env) return env;
    return "out";
}

CsvWriter::CsvWriter(const std::string& path, const std::vector<std::string>& header)
    : columns_(header.size()) {
    const fs::path p(path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    f_ = std::fopen(path.c_str(), "w");
    if (!f_) throw std::runtime_error("cannot write " + path);
    for (std::size_t i = 0; i < header.size(); ++i)
        std::fprintf(f_, "%s%s", i ? "," : "", header[i].c_str());
    std::fputc('\n', f_);
}

CsvWriter::~CsvWriter() {
    if (f_) std::fclose(f_);
}

void CsvWriter::row(const std::vector<double>& values) {
    if (values.size() != columns_) throw std::logic_error("CsvWriter: column count mismatch");
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) std::fputc(',', f_);
        const double v = values[i];
        if (std::isnan(v)) std::fputs("nan", f_);
        else if (std::isinf(v)) std::fputs(v > 0 ? "inf" : "-inf", f_);
        else std::fprintf(f_, "%.12g", v);
    }
    std::fputc('\n', f_);
}

void CsvWriter::row(const std::string& label, const std::vector<double>& values) {
    if (values.size() + 1 != columns_) throw std::logic_error("CsvWriter: column count mismatch");
    std::fputs(label.c_str(), f_);
    for (double v : values) {
        std::fputc(',', f_);
        if (std::isnan(v)) std::fputs("nan", f_);
        else if (std::isinf(v)) std::fputs(v > 0 ? "inf" : "-inf", f_);
        else std::fprintf(f_, "%.12g", v);
    }
    std::fputc('\n', f_);
}

// ------------------------------------------------------------------ oracles

FdCheck finite_difference_check(const NetworkModel& net, const DroopParams& params,
                                 const std::vector<SystemState>& states, const JacobianFn& jac,
                                 double step) {
    FdCheck out;
    out.states = states.size();
    const auto n = static_cast<Eigen::Index>(net.size());
    const Vec u = Vec::Zero(2 * n);
    for (const auto& x : states) {
        const Mat j = jac(x).assembled();
        const Vec base = x.stacked();
        Mat fd(2 * n, 2 * n);
        for (Eigen::Index c = 0; c < 2 * n; ++c) {
            Vec xp = base;
            Vec xm = base;
            xp[c] += step;
            xm[c] -= step;
            fd.col(c) = (vector_field(net, params, SystemState::from_stacked(xp), u) -
                         vector_field(net, params, SystemState::from_stacked(xm), u)) /
                        (2.0 * step);
        }
        const Mat diff = (j - fd).cwiseAbs();
        Eigen::Index r = 0;
        Eigen::Index c = 0;
        const double err = diff.maxCoeff(&r, &c) / std::max(fd.cwiseAbs().maxCoeff(), 1e-300);
        if (err > out.worst_relative || out.worst_block.empty()) {
            out.worst_relative = err;
            out.worst_block = block_name(r, c, n);
            out.worst_state = x;
        }

        Vec ones = Vec::Zero(2 * n);
        ones.head(n).setOnes();
        const double kern = (j * ones).cwiseAbs().maxCoeff();
        if (kern > out.worst_kernel || out.worst_kernel_state.size() == 0) {
            out.worst_kernel = kern;
            out.worst_kernel_state = x;
        }
    }
    return out;
}

DominanceCheck dominance_check(const NetworkModel& net, const DroopParams& params,
                               const ContractionCertificate& cert,
                               const std::vector<SystemState>& states, std::size_t jobs,
                               const JacobianFn& jac) {
    params.validate(net.size());
    const auto proj = make_projection(net.size());
    const std::size_t count = states.size();
    std::vector<std::array<double, 4>> vals(count);
    parallel_chunks(count, jobs, [&](std::size_t b, std::size_t e, std::size_t) {
        for (std::size_t i = b; i < e; ++i) {
            const auto s = projected_symmetric(jac(states[i]), proj);
            vals[i] = {lambda_max_sym(s.s_tt), lambda_max_sym(s.s_vv), spectral_norm(s.s_tv),
                       lambda_max_sym(s.assembled())};
        }
    });
    DominanceCheck out;
    out.states = count;
    const double ct = std::isfinite(cert.angle.c_theta) ? cert.angle.c_theta : 0.0;
    for (std::size_t i = 0; i < count; ++i) {
        if (std::isfinite(vals[i][0])) out.worst_tt = std::max(out.worst_tt, vals[i][0] + ct);
        out.worst_vv = std::max(out.worst_vv, vals[i][1] + cert.voltage.c_v);
        out.worst_tv = std::max(out.worst_tv, vals[i][2] - cert.coupling.beta);
        if (vals[i][3] > out.worst_measure) {
            out.worst_measure = vals[i][3];
            out.worst_measure_state = states[i];
        }
        out.worst_mc = std::max(out.worst_mc, vals[i][3] - cert.mc_lambda_max);
    }
    return out;
}

RunReport run_oracles(const Scenario& sc, const OracleOptions& opts) {
    RunReport rep;
    rep.scenario = sc.name;
    rep.kind = "oracles";
    rep.timestamp = timestamp_utc();

    const JacobianFn jac = opts.jacobian_override
                               ? opts.jacobian_override
                               : JacobianFn([&](const SystemState& x) { return jacobian(sc.net, sc.params, x); });

    if (opts.n_states == 0) {
        for (const char* id : {"fd_jacobian", "kernel_invariance", "basis_invariance",
                               "blockwise_dominance", "certificate_dominance",
                               "decomposition_identity"})
            rep.verdicts.push_back(make_verdict(id, id, true, kNaN, kNaN, kNaN, "n/a",
                                                "no sampling performed"));
        rep.extra["n_states"] = 0;
        return rep;
    }

    const auto states = sample_domain(sc.net, sc.domain, opts.n_states, opts.seed, true);
    rep.extra["n_states"] = opts.n_states;
    rep.extra["seed"] = opts.seed;

    // 1-2: finite differences and kernel
    const auto fd = finite_difference_check(sc.net, sc.params, states, jac);
    {
        const bool ok = fd.worst_relative < 1e-5;
        auto v = make_verdict("fd_jacobian", "analytical vs central-difference Jacobian", ok,
                              fd.worst_relative, 0.0, 1e-5, "max relative error < 1e-5",
                              "worst block " + fd.worst_block);
        if (!ok) write_failure(opts.out_dir, v.id, fd.worst_state, v.detail, rep.files);
        rep.verdicts.push_back(v);
    }
    {
        const bool ok = fd.worst_kernel < 1e-10;
        auto v = make_verdict("kernel_invariance", "|J [1;0]|_inf", ok, fd.worst_kernel, 0.0, 1e-10,
                              "< 1e-10");
        if (!ok) write_failure(opts.out_dir, v.id, fd.worst_kernel_state, v.detail, rep.files);
        rep.verdicts.push_back(v);
    }

    // 3: measure independent of the angle basis
    {
        std::mt19937_64 rng(opts.seed ^ 0xa5a5a5a5ULL);
        const auto helmert = make_projection(sc.net.size());
        double worst = 0.0;
        SystemState worst_x;
        if (sc.net.size() > 1) {
            const auto other = make_projection(random_angle_basis(sc.net.size(), rng));
            for (const auto& x : states) {
                const auto j = jac(x);
                const double a = lambda_max_sym(projected_symmetric(j, helmert).assembled());
                const double b = lambda_max_sym(projected_symmetric(j, other).assembled());
                if (std::abs(a - b) >= worst) {
                    worst = std::abs(a - b);
                    worst_x = x;
                }
            }
        }
        const bool ok = worst < 1e-10;
        auto v = make_verdict("basis_invariance", "measure under a second orthonormal basis", ok,
                              worst, 0.0, 1e-10, "|difference| < 1e-10");
        if (!ok) write_failure(opts.out_dir, v.id, worst_x, v.detail, rep.files);
        rep.verdicts.push_back(v);
    }

    // 4-5: dominance by the certificate margins
    const ContractionCertificate cert =
        opts.certificate ? *opts.certificate : certify_scenario(sc, opts.jobs);
    rep.certificate = to_json(cert);
    const auto dom = dominance_check(sc.net, sc.params, cert, states, opts.jobs, jac);
    {
        const double worst = std::max({dom.worst_tt, dom.worst_vv, dom.worst_tv});
        const bool ok = worst <= 1e-8;
        auto v = make_verdict("blockwise_dominance",
                              "S_tt <= -c_theta, S_VV <= -c_V, |S_tV| <= beta", ok, worst, 0.0, 1e-8,
                              "max block excess <= 1e-8",
                              "theta " + fmt(dom.worst_tt) + ", V " + fmt(dom.worst_vv) +
                                  ", coupling " + fmt(dom.worst_tv));
        if (!ok) write_failure(opts.out_dir, v.id, dom.worst_measure_state, v.detail, rep.files);
        rep.verdicts.push_back(v);
    }
    {
        const double bound =
            cert.effective_rate ? -*cert.effective_rate : std::numeric_limits<double>::quiet_NaN();
        const double slack = bound - dom.worst_measure;
        const bool ok = cert.effective_rate && slack >= -1e-8 && dom.worst_mc <= 1e-8;
        auto v = make_verdict("certificate_dominance", "lambda_max(S) <= -c and <= lambda_max(M_c)",
                              ok, slack, 0.0, 1e-8, "slack >= -1e-8",
                              "rate source " + to_string(cert.rate_source) + ", worst measure " +
                                  fmt(dom.worst_measure) + ", M_c excess " + fmt(dom.worst_mc));
        if (!ok) write_failure(opts.out_dir, v.id, dom.worst_measure_state, v.detail, rep.files);
        rep.verdicts.push_back(v);
    }

    // 6: sym(J_tt) = -L(w) + diag(Delta) from closed forms
    {
        double worst = 0.0;
        SystemState worst_x;
        for (const auto& x : states) {
            const auto j = jac(x);
            const Mat sym = 0.5 * (j.j_tt + j.j_tt.transpose());
            const double err = (sym - decomposed_angle_block(sc.net, sc.params, x)).cwiseAbs().maxCoeff();
            if (err >= worst) {
                worst = err;
                worst_x = x;
            }
        }
        const bool ok = worst < 1e-10;
        auto v = make_verdict("decomposition_identity", "sym(J_tt) = -L(w) + diag(Delta)", ok, worst,
                              0.0, 1e-10, "max entry error < 1e-10");
        if (!ok) write_failure(opts.out_dir, v.id, worst_x, v.detail, rep.files);
        rep.verdicts.push_back(v);
    }
    rep.extra["worst_certificate_slack"] = rep.verdicts[4].value;
    return rep;
}

// ------------------------------------------------------------- reproduction

Reproduction::Reproduction(ReproduceOptions opts) : opts_(std::move(opts)) {}

const Scenario& Reproduction::scenario(const std::string& name) {
    auto it = scenarios_.find(name);
    if (it != scenarios_.end()) return it->second;
    Scenario sc = load_scenario((fs::path(opts_.scenario_dir) / (name + ".yaml")).string());
    if (opts_.seed) {
        sc.solver.seed = *opts_.seed;
        sc.solver.search.seed = *opts_.seed;
        sc.disturbance.seed = *opts_.seed;
    }
    return scenarios_.emplace(name, std::move(sc)).first->second;
}

const ContractionCertificate& Reproduction::cert() {
    if (!cert_) {
        const auto t0 = std::chrono::steady_clock::now();
        cert_ = certify_scenario(scenario("case_3bus"), opts_.jobs);
        cert_seconds_ = seconds_since(t0);
    }
    return *cert_;
}

double Reproduction::cert_seconds() {
    cert();
    return cert_seconds_;
}

RunOptions Reproduction::run_options() const {
    RunOptions o;
    o.jobs = opts_.jobs;
    o.seed = opts_.seed.value_or(42);
    o.tolerance = 1e-9;
    return o;
}

std::string Reproduction::path(const std::string& file) {
    const std::string p = (fs::path(opts_.out_dir) / file).string();
    files_.push_back(p);
    return p;
}

const AutonomousRun& Reproduction::autonomous() {
    if (!auto_) {
        const auto& c = cert();
        if (!c.effective_rate) throw ModelError("no certified contraction rate for case_3bus");
        auto o = run_options();
        o.seed = scenario("case_3bus").solver.seed;
        auto_ = run_autonomous(scenario("case_3bus"), *c.effective_rate, o);
        tubes_.push_back(to_json(auto_->tube));
    }
    return *auto_;
}

std::vector<Verdict> Reproduction::certificate_rate() {
    const auto& c = cert();
    std::ostringstream d;
    d << "lambda2 " << fmt(c.angle.lambda2) << ", delta_theta " << fmt(c.angle.delta_theta)
      << ", c_theta " << fmt(c.angle.c_theta) << ", c_V " << fmt(c.voltage.c_v) << ", beta "
      << fmt(c.coupling.beta);
    std::vector<Verdict> out;
    {
        const double v = c.rate ? *c.rate : kNaN;
        const bool ok = c.rate && std::abs(v - 0.184) <= 0.005;
        out.push_back(make_verdict("AC1.rate", "theorem contraction rate", ok, v, 0.184, 0.005,
                                   "|c - 0.184| <= 0.005", d.str()));
    }
    {
        const double gap = c.angle.c_theta * c.voltage.c_v - c.coupling.beta * c.coupling.beta;
        out.push_back(make_verdict("AC1.feasibility", "c_theta c_V - beta^2", gap > 0.0, gap, 0.0, 0.0,
                                   "> 0", d.str()));
    }
    out.push_back(make_verdict("AC1.runtime", "certificate wall time [s]", cert_seconds_ < 30.0,
                               cert_seconds_, 30.0, 0.0, "< 30 s"));
    extra_["certificate"] = to_json(c);
    return out;
}

std::vector<Verdict> Reproduction::certificate_soundness() {
    const auto& sc = scenario("case_3bus");
    const auto& c = cert();
    const auto t0 = std::chrono::steady_clock::now();
    const auto states = sample_domain(sc.net, sc.domain, 10'000, sc.solver.seed ^ 0x2545f491ULL, true);
    const auto dom = dominance_check(sc.net, sc.params, c, states, opts_.jobs,
                                     [&](const SystemState& x) { return jacobian(sc.net, sc.params, x); });
    const double secs = cert_seconds_ + seconds_since(t0);

    std::vector<Verdict> out;
    {
        const double rate = c.effective_rate ? *c.effective_rate : kNaN;
        const bool ok = c.effective_rate && dom.worst_measure <= -rate + 1e-8;
        out.push_back(make_verdict("AC2.measure", "max lambda_max(S) over 1e4 states", ok,
                                   dom.worst_measure, -rate, 1e-8, "<= -c + 1e-8",
                                   "rate source " + to_string(c.rate_source)));
    }
    out.push_back(make_verdict("AC2.angle_block", "max lambda_max(S_tt) + c_theta",
                               dom.worst_tt <= 1e-8, dom.worst_tt, 0.0, 1e-8, "<= 1e-8"));
    out.push_back(make_verdict("AC2.voltage_block", "max lambda_max(S_VV) + c_V",
                               dom.worst_vv <= 1e-8, dom.worst_vv, 0.0, 1e-8, "<= 1e-8"));
    out.push_back(make_verdict("AC2.coupling_block", "max |S_tV| - beta", dom.worst_tv <= 1e-8,
                               dom.worst_tv, 0.0, 1e-8, "<= 1e-8"));
    out.push_back(make_verdict("AC2.comparison_matrix", "max lambda_max(S) - lambda_max(M_c)",
                               dom.worst_mc <= 1e-8, dom.worst_mc, 0.0, 1e-8, "<= 1e-8"));
    out.push_back(make_verdict("AC2.runtime", "certificate plus sampling wall time [s]", secs < 60.0,
                               secs, 60.0, 0.0, "< 60 s"));
    return out;
}

std::vector<Verdict> Reproduction::jacobian_correctness() {
    const auto& sc = scenario("case_3bus");
    const auto states = sample_domain(sc.net, sc.domain, 100, sc.solver.seed ^ 0x68e31da4ULL, true);
    const auto fd = finite_difference_check(
        sc.net, sc.params, states, [&](const SystemState& x) { return jacobian(sc.net, sc.params, x); });
    return {make_verdict("AC3.finite_difference", "max relative Jacobian error over 100 states",
                         fd.worst_relative < 1e-5, fd.worst_relative, 0.0, 1e-5, "< 1e-5",
                         "worst block " + fd.worst_block),
            make_verdict("AC3.kernel", "max |J [1;0]|_inf", fd.worst_kernel < 1e-10, fd.worst_kernel,
                         0.0, 1e-10, "< 1e-10")};
}

std::vector<Verdict> Reproduction::trajectory_contraction() {
    const auto& sc = scenario("case_3bus");
    const auto& c = cert();
    if (!c.effective_rate)
        return {make_verdict("AC4.envelope", "pairwise contraction envelope", false, kNaN, 1.0, 1e-6,
                             "ratio <= 1 + 1e-6", "no certified rate")};
    const double rate = *c.effective_rate;
    auto o = run_options();
    o.seed = sc.solver.seed;
    const auto& au = autonomous();
    const auto run = run_contraction(sc, rate, au.tube, o);

    if (opts_.write_files) {
        CsvWriter w(path("fig5_contraction.csv"),
                    {"trajectory", "t", "angle_error", "voltage_error", "envelope"});
        const std::size_t shown = std::min<std::size_t>(10, run.angle_error.size());
        const auto stride = static_cast<std::size_t>(std::max(1.0, std::round(0.1 / sc.solver.output_dt)));
        for (std::size_t p = 0; p < shown; ++p)
            for (std::size_t k = 0; k < run.times.size(); k += stride)
                w.row({static_cast<double>(p), run.times[k], run.angle_error[p][k],
                       run.voltage_error[p][k], std::exp(-rate * run.times[k]) * run.start_distance[p]});
    }
    extra_["contraction"] = {{"pairs", run.pairs},
                             {"worst_ratio", run.worst_ratio},
                             {"worst_time", run.worst_time},
                             {"domain_exits", run.domain_exits}};
    return {make_verdict("AC4.envelope", "max |x(t)-y(t)|_R / (e^{-ct} |x0-y0|_R) over 50 pairs",
                         run.worst_ratio <= 1.0 + 1e-6 && run.pairs == 50, run.worst_ratio, 1.0, 1e-6,
                         "<= 1 + 1e-6", "worst at t = " + fmt(run.worst_time)),
            make_verdict("AC4.domain", "samples outside D", run.domain_exits == 0,
                         static_cast<double>(run.domain_exits), 0.0, 0.0, "== 0")};
}

std::vector<Verdict> Reproduction::autonomous_tube() {
    const auto& sc = scenario("case_3bus");
    if (!cert().effective_rate)
        return {make_verdict("AC5.invariance", "boundary trajectories inside the tube", false, kNaN, 0.0,
                             1e-9, "margin >= -1e-9", "no certified rate")};
    const auto& run = autonomous();

    if (opts_.write_files) {
        auto header = std::vector<std::string>{"trajectory", "t"};
        for (auto& h : state_columns(sc.net.size())) header.push_back(h);
        header.push_back("distance");
        header.push_back("radius");
        CsvWriter w(path("fig4_invariant_set.csv"), header);
        const auto proj = make_projection(sc.net.size());
        const auto stride = static_cast<std::size_t>(std::max(1.0, std::round(0.1 / sc.solver.output_dt)));
        for (std::size_t p = 0; p < run.trajectories.size(); ++p) {
            const auto& tr = run.trajectories[p];
            for (std::size_t k = 0; k < tr.size(); k += stride) {
                std::vector<double> row{static_cast<double>(p), tr.times[k]};
                append(row, relative_angles(tr.states[k]));
                append(row, tr.states[k].v);
                row.push_back(seminorm_distance(proj, tr.states[k], run.tube.reference));
                row.push_back(run.tube.radius(tr.times[k]));
                w.row(row);
            }
        }
    }
    extra_["autonomous"] = {{"equilibrium", to_json(run.equilibrium)},
                            {"equilibrium_distance", run.equilibrium_distance},
                            {"worst_invariance_margin", run.worst_invariance_margin},
                            {"worst_comparison_margin", run.worst_comparison_margin},
                            {"newton_spread", run.newton_spread},
                            {"newton_converged", run.newton_converged}};

    const double margin = std::min(run.worst_invariance_margin, run.worst_comparison_margin);
    return {make_verdict("AC5.invariance", "min over boundary runs of tube radius - distance",
                         margin >= -1e-9 && run.domain_exits == 0, margin, 0.0, 1e-9, ">= -1e-9",
                         std::to_string(run.trajectories.size()) + " trajectories, " +
                             std::to_string(run.domain_exits) + " domain exits"),
            make_verdict("AC5.newton", "pairwise seminorm spread of 20 Newton limits",
                         run.newton_converged == 20 && run.newton_spread < 1e-8, run.newton_spread, 0.0,
                         1e-8, "< 1e-8 with 20 of 20 converged",
                         std::to_string(run.newton_converged) + " converged")};
}

namespace {

void write_tube_csv(CsvWriter& w, const Scenario& sc, const TubeRun& run) {
    const auto u = make_disturbance(sc.disturbance);
    const auto stride = static_cast<std::size_t>(std::max(1.0, std::round(0.1 / sc.solver.output_dt)));
    const auto& tr = run.trajectory;
    for (std::size_t k = 0; k < tr.size(); k += stride) {
        std::vector<double> row{tr.times[k]};
        append(row, u(tr.times[k]));
        append(row, relative_angles(tr.states[k]));
        append(row, tr.states[k].v);
        row.push_back(run.deviation[k]);
        row.push_back(run.radius[k]);
        w.row(row);
    }
}

std::vector<std::string> tube_header(std::size_t n) {
    std::vector<std::string> h{"t"};
    for (std::size_t k = 1; k <= n; ++k) h.push_back("u_p" + std::to_string(k));
    for (std::size_t k = 1; k <= n; ++k) h.push_back("u_q" + std::to_string(k));
    for (auto& s : state_columns(n)) h.push_back(s);
    h.push_back("deviation");
    h.push_back("radius");
    return h;
}

}  // namespace

std::vector<Verdict> Reproduction::slow_tracking() {
    const auto& sc = scenario("case_3bus_slow");
    const auto& c = cert();
    if (!c.effective_rate)
        return {make_verdict("AC6.envelope", "tracking bound", false, kNaN, 0.0, 1e-9, "margin >= 0",
                             "no certified rate")};
    auto o = run_options();
    o.seed = sc.solver.seed;
    const auto run = run_tube(sc, *c.effective_rate, Regime::slow, o);
    if (opts_.write_files) {
        CsvWriter w(path("fig6_slow_tracking.csv"), tube_header(sc.net.size()));
        write_tube_csv(w, sc, run);
    }
    auto tj = to_json(run.tube);
    tj["h"] = to_json(*run.h);
    tj["peak_deviation"] = run.peak_deviation;
    tubes_.push_back(tj);
    extra_["H"] = run.h->h;
    return {make_verdict("AC6.envelope", "min over t >= t0 of bound + 1e-9 - deviation",
                         run.contained, run.worst_margin, 0.0, 1e-9, ">= 0",
                         "peak deviation " + fmt(run.peak_deviation) + ", ultimate " + fmt(run.tube.ultimate)),
            relative_verdict("AC6.H", "quasi-steady sensitivity H", run.h->h, 0.059, 0.20)};
}

std::vector<Verdict> Reproduction::composite_bound() {
    const auto& sc = scenario("case_3bus_composite");
    const auto& c = cert();
    if (!c.effective_rate)
        return {make_verdict("AC7.envelope", "composite bound", false, kNaN, 0.0, 1e-9, "margin >= 0",
                             "no certified rate")};
    auto o = run_options();
    o.seed = sc.solver.seed;
    const auto run = run_tube(sc, *c.effective_rate, Regime::composite, o);
    if (opts_.write_files) {
        CsvWriter w(path("fig7_composite.csv"), tube_header(sc.net.size()));
        write_tube_csv(w, sc, run);
    }
    auto tj = to_json(run.tube);
    tj["h"] = to_json(*run.h);
    tj["l_u"] = to_json(*run.l_u);
    tj["peak_deviation"] = run.peak_deviation;
    tubes_.push_back(tj);
    extra_["L_u"] = run.l_u->l_u;
    extra_["composite_ultimate"] = run.tube.ultimate;
    return {make_verdict("AC7.envelope", "min over t >= t0 of bound + 1e-9 - deviation",
                         run.contained, run.worst_margin, 0.0, 1e-9, ">= 0",
                         "peak deviation " + fmt(run.peak_deviation)),
            relative_verdict("AC7.ultimate", "composite ultimate bound (H eps + L_u delta) / c",
                             run.tube.ultimate, 0.0331, 0.15,
                             "H " + fmt(run.h->h) + ", L_u " + fmt(run.l_u->l_u)),
            relative_verdict("AC7.L_u", "input Lipschitz constant L_u", run.l_u->l_u, 0.132, 0.10,
                             "sampled " + fmt(run.l_u->sampled_max))};
}

std::vector<Verdict> Reproduction::heterogeneity_sweep() {
    const auto& sc = scenario("case_3bus");
    std::vector<double> etas;
    for (int k = 10; k >= 0; --k) etas.push_back(k / 10.0);
    const auto lossy = droopcert::heterogeneity_sweep(sc, etas, false, opts_.jobs);
    const auto lossless = droopcert::heterogeneity_sweep(sc, {1.0, 0.0}, true, opts_.jobs);

    if (opts_.write_files) {
        CsvWriter w(path("fig3_heterogeneity.csv"),
                    {"lossless", "eta", "lambda2", "delta_theta", "c_theta"});
        for (const auto& p : lossy) w.row({0.0, p.eta, p.lambda2, p.delta_theta, p.c_theta});
        for (const auto& p : lossless) w.row({1.0, p.eta, p.lambda2, p.delta_theta, p.c_theta});
    }

    double worst_delta = -std::numeric_limits<double>::infinity();  // max increase of delta
    double worst_c = -std::numeric_limits<double>::infinity();      // max decrease of c
    for (std::size_t k = 1; k < lossy.size(); ++k) {
        worst_delta = std::max(worst_delta, lossy[k].delta_theta - lossy[k - 1].delta_theta);
        worst_c = std::max(worst_c, lossy[k - 1].c_theta - lossy[k].c_theta);
    }
    const double ideal = lossless.back().delta_theta;
    extra_["sweep"] = json::array();
    for (const auto& p : lossy)
        extra_["sweep"].push_back(
            {{"eta", p.eta}, {"lambda2", p.lambda2}, {"delta_theta", p.delta_theta}, {"c_theta", p.c_theta}});
    extra_["lossless_uniform_delta_theta"] = ideal;
    return {make_verdict("AC8.delta_monotone", "max step increase of delta_theta as eta decreases",
                         worst_delta <= 0.0, worst_delta, 0.0, 0.0, "<= 0",
                         fmt(lossy.front().delta_theta) + " at eta 1 -> " + fmt(lossy.back().delta_theta) +
                             " at eta 0"),
            make_verdict("AC8.c_monotone", "max step decrease of c_theta as eta decreases",
                         worst_c <= 0.0, worst_c, 0.0, 0.0, "<= 0",
                         fmt(lossy.front().c_theta) + " at eta 1 -> " + fmt(lossy.back().c_theta) + " at eta 0"),
            make_verdict("AC8.lossless_uniform", "delta_theta, lossless network, uniform droop",
                         ideal == 0.0, ideal, 0.0, 0.0, "== 0 exactly")};
}

std::vector<Verdict> Reproduction::comparison_exactness() {
    double worst = 0.0;
    std::string where;
    for (double c : {0.01, 0.184, 1.0, 5.0})
        for (double rho0 : {0.0, 0.05, 2.0})
            for (double r : {0.0, 0.003, 0.3}) {
                const auto exact = [&](double t) {
                    return std::exp(-c * t) * rho0 + (r / c) * (1.0 - std::exp(-c * t));
                };
                const auto con = ComparisonRadius::constant(c, rho0, r);
                const auto pw = ComparisonRadius::piecewise(c, rho0, {0.0, 7.5, 31.0}, {r, r, r});
                const auto gen = ComparisonRadius::general(c, rho0, [r](double) { return r; });
                for (int k = 0; k <= 120; ++k) {
                    const double t = 0.5 * k;
                    const double e = exact(t);
                    for (double got : {con(t), pw(t), gen(t)}) {
                        const double err = e == 0.0 ? std::abs(got) * 1e300 : std::abs(got - e) / std::abs(e);
                        if (err > worst) {
                            worst = err;
                            where = "c " + fmt(c) + ", rho0 " + fmt(rho0) + ", r " + fmt(r) + ", t " + fmt(t);
                        }
                    }
                }
            }
    return {make_verdict("AC9.closed_form", "max relative error vs e^{-ct} rho0 + r/c (1 - e^{-ct})",
                         worst <= 1e-8, worst, 0.0, 1e-8, "<= 1e-8", where)};
}

std::vector<Verdict> Reproduction::criterion(int k) {
    switch (k) {
        case 1: return certificate_rate();
        case 2: return certificate_soundness();
        case 3: return jacobian_correctness();
        case 4: return trajectory_contraction();
        case 5: return autonomous_tube();
        case 6: return slow_tracking();
        case 7: return composite_bound();
        case 8: return heterogeneity_sweep();
        case 9: return comparison_exactness();
        default: break;
    }
    throw std::out_of_range("criterion must be in 1..9");
}

RunReport Reproduction::run_all() {
    RunReport rep;
    rep.scenario = "case_3bus";
    rep.kind = "reproduce";
    rep.timestamp = timestamp_utc();
    for (int k = 1; k <= 9; ++k) {
        auto v = criterion(k);
        rep.verdicts.insert(rep.verdicts.end(), v.begin(), v.end());
    }
    rep.certificate = to_json(cert());

    if (opts_.write_files) {
        CsvWriter w(path("summary.csv"), {"quantity", "computed", "reference", "tolerance", "passed"});
        auto find = [&](const std::string& id) -> const Verdict& {
            for (const auto& v : rep.verdicts)
                if (v.id == id) return v;
            throw std::logic_error("missing verdict " + id);
        };
        for (const auto& [label, id] : std::vector<std::pair<std::string, std::string>>{
                 {"rate_c", "AC1.rate"},
                 {"H", "AC6.H"},
                 {"L_u", "AC7.L_u"},
                 {"composite_ultimate", "AC7.ultimate"},
                 {"delta_theta_lossless_uniform", "AC8.lossless_uniform"}}) {
            const auto& v = find(id);
            w.row(label, {v.value, v.reference, v.tolerance, v.passed ? 1.0 : 0.0});
        }
    }
    rep.tubes = tubes_;
    rep.extra = extra_;
    rep.files = files_;
    if (opts_.write_files) {
        const std::string p = (fs::path(opts_.out_dir) / "reproduce.json").string();
        rep.files.push_back(p);
        write_json(p, rep.to_json());
    }
    return rep;
}

RunReport reproduce(const ReproduceOptions& opts) {
    Reproduction r(opts);
    return r.run_all();
}

}  // namespace droopcert
