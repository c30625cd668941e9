// droopcert command line: certificates, simulations, tubes, oracles and the
// reproduction report.

#include "droopcert/harness.hpp"
#include "droopcert/pipelines.hpp"
#include "droopcert/scenario.hpp"
#include "droopcert/simulate.hpp"
#include "droopcert/tubes.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

namespace fs = std::filesystem;
using namespace droopcert;

namespace {

struct Common {
    std::size_t jobs = 1;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;

    std::string dir() const { return resolve_out_dir(out_dir); }
    std::string file(const std::string& name) const { return (fs::path(dir()) / name).string(); }
};

Scenario load(const std::string& path, const Common& c) {
    Scenario sc = load_scenario(path);
    if (c.seed) {
        sc.solver.seed = *c.seed;
        sc.solver.search.seed = *c.seed;
        sc.disturbance.seed = *c.seed;
    }
    return sc;
}

SystemState equilibrium_of(const Scenario& sc) {
    const auto n = static_cast<Eigen::Index>(sc.net.size());
    return solve_equilibrium(sc.net, sc.params, Vec::Zero(2 * n),
                             SystemState(Vec::Zero(n), Vec::Ones(n)))
        .x;
}

// preset name or YAML state file
SystemState resolve_state(const std::string& what, const Scenario& sc) {
    const auto n = static_cast<Eigen::Index>(sc.net.size());
    if (what == "flat") return {Vec::Zero(n), Vec::Ones(n)};
    if (what == "equilibrium") return equilibrium_of(sc);
    if (what == "reference") return sc.reference ? *sc.reference : equilibrium_of(sc);
    SystemState x = load_state(what);
    if (x.size() != sc.net.size())
        throw ScenarioError(what + ": state has " + std::to_string(x.size()) + " buses, scenario has " +
                            std::to_string(sc.net.size()));
    return x;
}

double effective_rate(const Scenario& sc, const Common& c, ContractionCertificate* keep = nullptr) {
    auto cert = certify_scenario(sc, c.jobs);
    if (keep) *keep = cert;
    if (!cert.effective_rate)
        throw ModelError("no certified contraction rate (theorem infeasible and no accepted declared rate)");
    return *cert.effective_rate;
}

void print_verdicts(const std::vector<Verdict>& vs) {
    for (const auto& v : vs)
        std::printf("%s %-26s value=%-14.8g %s  %s\n", v.passed ? "PASS" : "FAIL", v.id.c_str(), v.value,
                    v.check.c_str(), v.detail.c_str());
}

void print_certificate(const ContractionCertificate& c) {
    std::printf("lambda2        %.6f\n", c.angle.lambda2);
    std::printf("delta_theta    %.6f\n", c.angle.delta_theta);
    std::printf("c_theta        %.6f\n", c.angle.c_theta);
    std::printf("c_V            %.6f  (worst node %zu)\n", c.voltage.c_v, c.voltage.worst_node + 1);
    std::printf("beta           %.6f%s\n", c.coupling.beta, c.coupling.warning ? "  (search warning)" : "");
    std::printf("c_theta c_V    %.6f  vs beta^2 %.6f\n", c.angle.c_theta * c.voltage.c_v,
                c.coupling.beta * c.coupling.beta);
    std::printf("lambda_max M_c %.6f\n", c.mc_lambda_max);
    if (c.rate) std::printf("theorem rate   %.6f\n", *c.rate);
    else std::printf("theorem rate   infeasible\n");
    std::printf("measure sup    %.6f\n", c.measure_sup);
    if (c.declared_rate)
        std::printf("declared rate  %.6f  %s\n", *c.declared_rate, c.declared_accepted ? "accepted" : "rejected");
    if (c.effective_rate) std::printf("effective rate %.6f  (%s)\n", *c.effective_rate, to_string(c.rate_source).c_str());
    else std::printf("effective rate none\n");
    for (const auto& d : c.angle.diagnostics) std::printf("note: %s\n", d.c_str());
}

RunOptions run_options(const Scenario& sc, const Common& c, std::optional<double> rho0) {
    RunOptions o;
    o.jobs = c.jobs;
    o.seed = sc.solver.seed;
    o.rho0 = rho0;
    return o;
}

int cmd_certify(const std::string& path, std::optional<double> declared, const Common& c) {
    Scenario sc = load(path, c);
    if (declared) sc.solver.declared_rate = declared;
    const auto cert = certify_scenario(sc, c.jobs);
    print_certificate(cert);
    RunReport rep;
    rep.scenario = sc.name;
    rep.kind = "certify";
    rep.timestamp = timestamp_utc();
    rep.certificate = to_json(cert);
    const std::string out = c.file("certify_" + sc.name + ".json");
    rep.files.push_back(out);
    write_json(out, rep.to_json());
    std::printf("wrote %s\n", out.c_str());
    return cert.effective_rate ? 0 : 1;
}

int cmd_simulate(const std::string& path, const std::string& x0_spec, const std::string& out_csv,
                 const std::string& tube, bool quiet_input, std::optional<double> t_end, const Common& c) {
    Scenario sc = load(path, c);
    if (t_end) sc.solver.t_end = *t_end;
    if (quiet_input) {
        DisturbanceSpec none;
        none.n_buses = sc.net.size();
        sc.disturbance = none;
    }
    const auto n = sc.net.size();
    const auto proj = make_projection(n);
    const SystemState x0 = resolve_state(x0_spec, sc);
    const std::string out = out_csv.empty() ? c.file("simulate_" + sc.name + ".csv") : out_csv;

    std::vector<std::string> header{"t"};
    for (std::size_t k = 1; k <= n; ++k) header.push_back("theta" + std::to_string(k));
    for (std::size_t k = 1; k <= n; ++k) header.push_back("v" + std::to_string(k));
    header.push_back("err_R");

    auto emit = [&](const std::vector<double>& times, const std::vector<SystemState>& xs,
                    const std::vector<double>& err, const std::vector<double>* rho) {
        if (rho) header.push_back("rho");
        CsvWriter w(out, header);
        for (std::size_t k = 0; k < times.size(); ++k) {
            std::vector<double> row{times[k]};
            for (Eigen::Index i = 0; i < xs[k].theta.size(); ++i) row.push_back(xs[k].theta[i]);
            for (Eigen::Index i = 0; i < xs[k].v.size(); ++i) row.push_back(xs[k].v[i]);
            row.push_back(err[k]);
            if (rho) row.push_back((*rho)[k]);
            w.row(row);
        }
    };

    if (tube == "slow" || tube == "fast" || tube == "composite") {
        const Regime regime = tube == "slow" ? Regime::slow : tube == "fast" ? Regime::fast : Regime::composite;
        auto o = run_options(sc, c, std::nullopt);
        o.x0 = x0;
        const auto run = run_tube(sc, effective_rate(sc, c), regime, o);
        emit(run.trajectory.times, run.trajectory.states, run.deviation, &run.radius);
    } else if (tube == "auto") {
        const double rate = effective_rate(sc, c);
        const SystemState x_c = sc.reference ? *sc.reference : equilibrium_of(sc);
        auto cert = autonomous_tube(rate, sc.net, sc.params, sc.domain, x_c);
        cert.rho0 = seminorm_distance(proj, x0, x_c);
        IntegrateOptions io;
        io.rel_tol = sc.solver.rel_tol;
        io.abs_tol = sc.solver.abs_tol;
        io.output_dt = sc.solver.output_dt;
        io.monitor = sc.domain;
        const auto tr = integrate(sc.net, sc.params, x0, make_disturbance(sc.disturbance), 0.0,
                                  sc.solver.t_end, io);
        std::vector<double> err;
        std::vector<double> rho;
        for (std::size_t k = 0; k < tr.size(); ++k) {
            err.push_back(seminorm_distance(proj, tr.states[k], x_c));
            rho.push_back(cert.radius(tr.times[k]));
        }
        emit(tr.times, tr.states, err, &rho);
    } else if (tube.empty()) {
        IntegrateOptions io;
        io.rel_tol = sc.solver.rel_tol;
        io.abs_tol = sc.solver.abs_tol;
        io.output_dt = sc.solver.output_dt;
        io.monitor = sc.domain;
        const auto u = make_disturbance(sc.disturbance);
        const auto tr = integrate(sc.net, sc.params, x0, u, 0.0, sc.solver.t_end, io);
        const auto path_x = quasi_steady_path(
            sc.net, sc.params, [&](double t) { return u.slow(t); }, tr.times, x0);
        std::vector<double> err;
        for (std::size_t k = 0; k < tr.size(); ++k) err.push_back(seminorm_distance(proj, tr.states[k], path_x[k]));
        emit(tr.times, tr.states, err, nullptr);
        if (tr.first_exit_time) std::printf("left the admissible domain at t = %.6g\n", *tr.first_exit_time);
    } else {
        throw CLI::ValidationError("--tube", "expected auto, slow, fast or composite");
    }
    std::printf("wrote %s\n", out.c_str());
    return 0;
}

int cmd_jacobian(const std::string& path, const std::string& state, const std::string& out_csv,
                 const Common& c) {
    const Scenario sc = load(path, c);
    const SystemState x = resolve_state(state, sc);
    const auto j = jacobian(sc.net, sc.params, x);
    const Mat full = j.assembled();
    const auto n = static_cast<Eigen::Index>(sc.net.size());
    const char* names[2] = {"theta", "V"};
    std::FILE* f = out_csv.empty() ? stdout : std::fopen(out_csv.c_str(), "w");
    if (!f) throw std::runtime_error("cannot write " + out_csv);
    std::fprintf(f, "block,row,col,value\n");
    for (Eigen::Index r = 0; r < 2 * n; ++r)
        for (Eigen::Index col = 0; col < 2 * n; ++col)
            std::fprintf(f, "(%s;%s),%ld,%ld,%.12g\n", names[r >= n], names[col >= n],
                         static_cast<long>(r % n + 1), static_cast<long>(col % n + 1), full(r, col));
    if (f != stdout) {
        std::fclose(f);
        std::printf("wrote %s\n", out_csv.c_str());
    }
    std::fprintf(stderr, "measure mu_R(J) = %.10g\n", measure(sc.net, sc.params, x));
    return 0;
}

int cmd_tube_auto(const std::string& path, std::optional<double> rho0, const Common& c) {
    const Scenario sc = load(path, c);
    const double rate = effective_rate(sc, c);
    const auto run = run_autonomous(sc, rate, run_options(sc, c, rho0));
    const auto proj = make_projection(sc.net.size());

    const std::string csv = c.file("tube_auto_" + sc.name + ".csv");
    {
        CsvWriter w(csv, {"t", "rho", "deviation"});
        const auto& times = run.trajectories.front().times;
        for (std::size_t k = 0; k < times.size(); ++k) {
            double worst = 0.0;
            for (const auto& tr : run.trajectories)
                worst = std::max(worst, seminorm_distance(proj, tr.states[k], run.tube.reference));
            w.row({times[k], run.tube.radius(times[k]), worst});
        }
    }
    const double margin = std::min(run.worst_invariance_margin, run.worst_comparison_margin);
    std::vector<Verdict> vs;
    Verdict inv;
    inv.id = "tube.invariance";
    inv.name = "boundary trajectories inside the tube";
    inv.passed = margin >= -1e-9 && run.domain_exits == 0;
    inv.value = margin;
    inv.tolerance = 1e-9;
    inv.check = "margin >= -1e-9";
    vs.push_back(inv);
    Verdict nw;
    nw.id = "tube.newton";
    nw.name = "Newton limits on one manifold";
    nw.passed = run.newton_converged == run_options(sc, c, rho0).newton_starts && run.newton_spread < 1e-8;
    nw.value = run.newton_spread;
    nw.tolerance = 1e-8;
    nw.check = "spread < 1e-8";
    nw.detail = std::to_string(run.newton_converged) + " converged";
    vs.push_back(nw);
    print_verdicts(vs);

    RunReport rep;
    rep.scenario = sc.name;
    rep.kind = "tube-auto";
    rep.timestamp = timestamp_utc();
    rep.tubes.push_back(to_json(run.tube));
    rep.verdicts = vs;
    rep.files = {csv};
    rep.extra = {{"equilibrium", to_json(run.equilibrium)}, {"equilibrium_distance", run.equilibrium_distance}};
    const std::string js = c.file("tube_auto_" + sc.name + ".json");
    rep.files.push_back(js);
    write_json(js, rep.to_json());
    std::printf("rate %.6f  rho0 %.6g  min radius %.6g  max radius %.6g\nwrote %s\n", rate, run.tube.rho0,
                run.tube.min_radius, run.tube.max_radius, csv.c_str());
    return rep.ok() ? 0 : 1;
}

int cmd_tube(const std::string& path, Regime regime, std::optional<double> rho0, const std::string& x0,
             const Common& c) {
    const Scenario sc = load(path, c);
    const double rate = effective_rate(sc, c);
    auto o = run_options(sc, c, rho0);
    if (!x0.empty()) o.x0 = resolve_state(x0, sc);
    const auto run = run_tube(sc, rate, regime, o);
    const std::string tag = "tube_" + to_string(regime) + "_" + sc.name;

    const std::string csv = c.file(tag + ".csv");
    {
        CsvWriter w(csv, {"t", "rho", "deviation"});
        for (std::size_t k = 0; k < run.trajectory.size(); ++k)
            w.row({run.trajectory.times[k], run.radius[k], run.deviation[k]});
    }
    Verdict v;
    v.id = "tube.envelope";
    v.name = "deviation below the bound";
    v.passed = run.contained;
    v.value = run.worst_margin;
    v.tolerance = o.tolerance;
    v.check = "min(bound + tol - deviation) >= 0";
    v.detail = "peak deviation " + std::to_string(run.peak_deviation);
    print_verdicts({v});

    RunReport rep;
    rep.scenario = sc.name;
    rep.kind = "tube-" + to_string(regime);
    rep.timestamp = timestamp_utc();
    auto tj = to_json(run.tube);
    if (run.h) tj["h"] = to_json(*run.h);
    if (run.l_u) tj["l_u"] = to_json(*run.l_u);
    rep.tubes.push_back(tj);
    rep.verdicts = {v};
    rep.files = {csv};
    const std::string js = c.file(tag + ".json");
    rep.files.push_back(js);
    write_json(js, rep.to_json());
    std::printf("rate %.6f", rate);
    if (run.h) std::printf("  H %.6g", run.h->h);
    if (run.l_u) std::printf("  L_u %.6g", run.l_u->l_u);
    std::printf("  rho0 %.6g  ultimate %.6g\nwrote %s\n", run.tube.rho0, run.tube.ultimate, csv.c_str());
    return rep.ok() ? 0 : 1;
}

int cmd_oracles(const std::string& path, std::size_t n_states, const Common& c) {
    const Scenario sc = load(path, c);
    OracleOptions o;
    o.n_states = n_states;
    o.seed = sc.solver.seed;
    o.jobs = c.jobs;
    o.out_dir = c.dir();
    auto rep = run_oracles(sc, o);
    print_verdicts(rep.verdicts);
    const std::string js = c.file("oracles_" + sc.name + ".json");
    rep.files.push_back(js);
    write_json(js, rep.to_json());
    std::printf("wrote %s\n", js.c_str());
    return rep.ok() ? 0 : 1;
}

int cmd_reproduce(const std::string& scenario_dir, const Common& c) {
    ReproduceOptions o;
    o.scenario_dir = scenario_dir;
    o.out_dir = c.dir();
    o.jobs = c.jobs;
    o.seed = c.seed;
    const auto rep = reproduce(o);
    print_verdicts(rep.verdicts);
    for (const auto& f : rep.files) std::printf("wrote %s\n", f.c_str());
    std::printf("%s\n", rep.ok() ? "all criteria met" : "some criteria missed");
    return rep.ok() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Contraction certificates and reachability tubes for droop-controlled inverter grids"};
    app.set_version_flag("--version", std::string("droopcert ") + kVersion);
    app.require_subcommand(1);

    Common common;
    app.add_option("--jobs", common.jobs, "worker threads")->check(CLI::PositiveNumber);
    app.add_option("--seed", common.seed, "override the scenario seed");
    app.add_option("--out-dir", common.out_dir, "output directory (env DROOPCERT_OUT_DIR, default ./out)");

    std::string scenario;
    int rc = 0;

    auto* certify = app.add_subcommand("certify", "contraction certificate with all margins");
    std::optional<double> declared;
    certify->add_option("scenario", scenario)->required()->check(CLI::ExistingFile);
    certify->add_option("--declared-rate", declared, "rate to accept against the sampled measure");

    auto* simulate = app.add_subcommand("simulate", "integrate the droop dynamics");
    std::string x0 = "equilibrium";
    std::string out_csv;
    std::string tube;
    bool quiet_input = false;
    std::optional<double> t_end;
    simulate->add_option("scenario", scenario)->required()->check(CLI::ExistingFile);
    simulate->add_option("--x0", x0, "state file or preset: flat, equilibrium, reference");
    simulate->add_option("--out", out_csv, "CSV path (default <out-dir>/simulate_<name>.csv)");
    simulate->add_option("--tube", tube, "attach a tube: auto, slow, fast or composite");
    simulate->add_option("--t-end", t_end, "final time [s]");
    simulate->add_flag("--no-input", quiet_input, "ignore the scenario disturbance");

    auto* jac = app.add_subcommand("jacobian", "Jacobian blocks at a state");
    std::string state;
    std::string jac_out;
    jac->add_option("scenario", scenario)->required()->check(CLI::ExistingFile);
    jac->add_option("--state", state, "state file or preset")->required();
    jac->add_option("--out", jac_out, "CSV path (default stdout)");

    std::optional<double> rho0;
    auto* tauto = app.add_subcommand("tube-auto", "autonomous tube around the reference point");
    tauto->add_option("scenario", scenario)->required()->check(CLI::ExistingFile);
    tauto->add_option("--rho0", rho0, "initial radius (default: largest certified)");

    std::string tube_x0;
    auto add_tube = [&](const char* name, const char* help) {
        auto* s = app.add_subcommand(name, help);
        s->add_option("scenario", scenario)->required()->check(CLI::ExistingFile);
        s->add_option("--rho0", rho0, "initial radius (default: measured deviation at onset)");
        s->add_option("--x0", tube_x0, "initial state file or preset (default: equilibrium)");
        return s;
    };
    auto* ttrack = add_tube("tube-track", "slow tracking tube");
    auto* trobust = add_tube("tube-robust", "robustness tube for bounded fast inputs");
    auto* tcomp = add_tube("tube-composite", "slow drift plus fast perturbation");

    auto* oracles = app.add_subcommand("oracles", "brute-force consistency checks");
    std::size_t n_states = 1000;
    oracles->add_option("scenario", scenario)->required()->check(CLI::ExistingFile);
    oracles->add_option("--n-states", n_states, "sampled states");

    auto* repro = app.add_subcommand("reproduce", "case studies, figure CSVs and the summary table");
    std::string scenario_dir = "scenarios";
    repro->add_option("--scenarios", scenario_dir, "directory with the bundled scenarios")
        ->check(CLI::ExistingDirectory);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*certify) rc = cmd_certify(scenario, declared, common);
        else if (*simulate) rc = cmd_simulate(scenario, x0, out_csv, tube, quiet_input, t_end, common);
        else if (*jac) rc = cmd_jacobian(scenario, state, jac_out, common);
        else if (*tauto) rc = cmd_tube_auto(scenario, rho0, common);
        else if (*ttrack) rc = cmd_tube(scenario, Regime::slow, rho0, tube_x0, common);
        else if (*trobust) rc = cmd_tube(scenario, Regime::fast, rho0, tube_x0, common);
        else if (*tcomp) rc = cmd_tube(scenario, Regime::composite, rho0, tube_x0, common);
        else if (*oracles) rc = cmd_oracles(scenario, n_states, common);
        else if (*repro) rc = cmd_reproduce(scenario_dir, common);
    } catch (const CLI::Error& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return rc;
}
