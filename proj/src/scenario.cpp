#include "droopcert/scenario.hpp"

#include <yaml-cpp/yaml.h>

#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

namespace droopcert {

namespace {

class Reader {
public:
    explicit Reader(std::string source) : source_(std::move(source)) {}

    [[noreturn]] void fail(const YAML::Node& at, const std::string& field,
                           const std::string& msg) const {
        std::ostringstream os;
        os << source_;
        if (at.IsDefined() && !at.Mark().is_null()) os << ":" << at.Mark().line + 1;
        os << ": " << field << ": " << msg;
        throw ScenarioError(os.str());
    }

    void only_keys(const YAML::Node& map, const std::string& section,
                   const std::set<std::string>& allowed) const {
        if (!map.IsMap()) fail(map, section, "expected a mapping");
        for (const auto& kv : map) {
            const auto key = kv.first.as<std::string>();
            if (!allowed.count(key)) fail(kv.first, section + "." + key, "unknown key");
        }
    }

    YAML::Node required(const YAML::Node& map, const std::string& section,
                        const std::string& key) const {
        const auto node = map[key];
        if (!node) fail(map, section + "." + key, "missing required field");
        return node;
    }

    double number(const YAML::Node& node, const std::string& field) const {
        if (!node.IsScalar()) fail(node, field, "expected a number");
        try {
            return node.as<double>();
        } catch (const YAML::Exception&) {
            fail(node, field, "expected a number, got '" + node.Scalar() + "'");
        }
    }

    std::size_t count(const YAML::Node& node, const std::string& field) const {
        const double v = number(node, field);
        if (v < 0 || std::floor(v) != v) fail(node, field, "expected a nonnegative integer");
        return static_cast<std::size_t>(v);
    }

    std::string text(const YAML::Node& node, const std::string& field) const {
        if (!node.IsScalar()) fail(node, field, "expected a string");
        return node.Scalar();
    }

    Vec vector(const YAML::Node& node, const std::string& field, std::size_t n) const {
        if (!node.IsSequence()) fail(node, field, "expected a list");
        if (node.size() != n)
            fail(node, field, "expected " + std::to_string(n) + " entries, got " +
                                  std::to_string(node.size()));
        Vec v(static_cast<Eigen::Index>(n));
        for (std::size_t i = 0; i < n; ++i)
            v[static_cast<Eigen::Index>(i)] =
                number(node[i], field + "[" + std::to_string(i) + "]");
        return v;
    }

    Mat matrix(const YAML::Node& node, const std::string& field, std::size_t n) const {
        if (!node.IsSequence() || node.size() != n)
            fail(node, field, "expected " + std::to_string(n) + " rows");
        Mat m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
        for (std::size_t i = 0; i < n; ++i)
            m.row(static_cast<Eigen::Index>(i)) =
                vector(node[i], field + "[" + std::to_string(i) + "]", n).transpose();
        return m;
    }

    std::size_t bus(const YAML::Node& node, const std::string& field, std::size_t n) const {
        const auto b = count(node, field);
        if (b < 1 || b > n)
            fail(node, field, "bus index must be in 1.." + std::to_string(n) + " (1-based)");
        return b - 1;
    }

    const std::string& source() const { return source_; }

private:
    std::string source_;
};

NetworkModel read_network(const Reader& rd, const YAML::Node& sec, std::size_t& n_out,
                          std::map<std::string, double>& base) {
    rd.only_keys(sec, "network", {"n_buses", "branches", "shunts", "retained", "conductance",
                                  "susceptance", "base"});
    const std::size_t n = rd.count(rd.required(sec, "network", "n_buses"), "network.n_buses");
    if (n == 0) rd.fail(sec["n_buses"], "network.n_buses", "must be positive");
    if (const auto b = sec["base"]) {
        rd.only_keys(b, "network.base", {"s_mva", "v_kv", "f_hz"});
        for (const auto& kv : b)
            base[kv.first.as<std::string>()] =
                rd.number(kv.second, "network.base." + kv.first.as<std::string>());
    }
    const bool matrices = sec["conductance"] || sec["susceptance"];
    const bool branches = static_cast<bool>(sec["branches"]);
    if (matrices == branches)
        rd.fail(sec, "network", "give either branches or conductance/susceptance matrices");

    try {
        if (matrices) {
            const Mat g = rd.matrix(rd.required(sec, "network", "conductance"),
                                    "network.conductance", n);
            const Mat b = rd.matrix(rd.required(sec, "network", "susceptance"),
                                    "network.susceptance", n);
            if (sec["retained"]) {
                std::vector<std::size_t> keep;
                for (std::size_t i = 0; i < sec["retained"].size(); ++i)
                    keep.push_back(rd.bus(sec["retained"][i], "network.retained", n));
                n_out = keep.size();
                return kron_reduce(g, b, keep);
            }
            n_out = n;
            return NetworkModel(g, b);
        }
        std::vector<Branch> list;
        const auto br = sec["branches"];
        if (!br.IsSequence()) rd.fail(br, "network.branches", "expected a list of [from, to, r, x]");
        for (std::size_t j = 0; j < br.size(); ++j) {
            const std::string f = "network.branches[" + std::to_string(j) + "]";
            if (!br[j].IsSequence() || br[j].size() != 4)
                rd.fail(br[j], f, "expected [from, to, r, x]");
            Branch b{rd.bus(br[j][0], f + ".from", n), rd.bus(br[j][1], f + ".to", n),
                     rd.number(br[j][2], f + ".r"), rd.number(br[j][3], f + ".x")};
            if (b.from == b.to) rd.fail(br[j], f, "branch endpoints must differ");
            if (b.r == 0.0 && b.x == 0.0) rd.fail(br[j], f, "zero impedance");
            list.push_back(b);
        }
        std::vector<Shunt> shunts;
        if (const auto sh = sec["shunts"]) {
            for (std::size_t j = 0; j < sh.size(); ++j) {
                const std::string f = "network.shunts[" + std::to_string(j) + "]";
                if (!sh[j].IsSequence() || sh[j].size() != 3) rd.fail(sh[j], f, "expected [bus, g, b]");
                shunts.push_back({rd.bus(sh[j][0], f + ".bus", n), rd.number(sh[j][1], f + ".g"),
                                  rd.number(sh[j][2], f + ".b")});
            }
        }
        const auto full = assemble_network(n, list, shunts);
        if (const auto ret = sec["retained"]) {
            std::vector<std::size_t> keep;
            for (std::size_t i = 0; i < ret.size(); ++i)
                keep.push_back(rd.bus(ret[i], "network.retained", n));
            n_out = keep.size();
            return kron_reduce(full.conductance(), full.susceptance(), keep);
        }
        n_out = n;
        return full;
    } catch (const ModelError& e) {
        rd.fail(sec, "network", e.what());
    }
}

DroopParams read_droop(const Reader& rd, const YAML::Node& sec, std::size_t n) {
    rd.only_keys(sec, "droop", {"m_p", "n_q", "tau_v", "omega_nom", "f_nom", "v_nom", "p_ref",
                                "q_ref"});
    DroopParams p;
    p.m_p = rd.vector(rd.required(sec, "droop", "m_p"), "droop.m_p", n);
    p.n_q = rd.vector(rd.required(sec, "droop", "n_q"), "droop.n_q", n);
    p.tau_v = rd.vector(rd.required(sec, "droop", "tau_v"), "droop.tau_v", n);
    if (sec["omega_nom"]) p.omega_nom = rd.number(sec["omega_nom"], "droop.omega_nom");
    else if (sec["f_nom"]) p.omega_nom = 2.0 * std::numbers::pi * rd.number(sec["f_nom"], "droop.f_nom");
    p.v_nom = sec["v_nom"] ? rd.vector(sec["v_nom"], "droop.v_nom", n) : Vec::Ones(static_cast<Eigen::Index>(n));
    p.p_ref0 = sec["p_ref"] ? rd.vector(sec["p_ref"], "droop.p_ref", n) : Vec::Zero(static_cast<Eigen::Index>(n));
    p.q_ref0 = sec["q_ref"] ? rd.vector(sec["q_ref"], "droop.q_ref", n) : Vec::Zero(static_cast<Eigen::Index>(n));
    try {
        p.validate(n);
    } catch (const ModelError& e) {
        rd.fail(sec, "droop", e.what());
    }
    return p;
}

AdmissibleDomain read_domain(const Reader& rd, const YAML::Node& sec) {
    rd.only_keys(sec, "domain", {"v_min", "v_max", "gamma_max", "gamma_max_deg"});
    AdmissibleDomain d;
    d.v_min = rd.number(rd.required(sec, "domain", "v_min"), "domain.v_min");
    d.v_max = rd.number(rd.required(sec, "domain", "v_max"), "domain.v_max");
    if (sec["gamma_max"] && sec["gamma_max_deg"])
        rd.fail(sec, "domain", "give gamma_max or gamma_max_deg, not both");
    if (sec["gamma_max_deg"])
        d.gamma_max = rd.number(sec["gamma_max_deg"], "domain.gamma_max_deg") * std::numbers::pi / 180.0;
    else
        d.gamma_max = rd.number(rd.required(sec, "domain", "gamma_max"), "domain.gamma_max");
    try {
        d.validate();
    } catch (const ModelError& e) {
        rd.fail(sec, "domain", e.what());
    }
    return d;
}

Channel read_channel(const Reader& rd, const YAML::Node& node, const std::string& field) {
    const auto s = rd.text(node, field);
    if (s == "p") return Channel::p;
    if (s == "q") return Channel::q;
    rd.fail(node, field, "channel must be 'p' or 'q'");
}

DisturbanceSpec read_disturbance(const Reader& rd, const YAML::Node& sec, std::size_t n,
                                 std::uint64_t seed) {
    DisturbanceSpec spec;
    spec.n_buses = n;
    spec.seed = seed;
    if (!sec) return spec;
    rd.only_keys(sec, "disturbance", {"label", "epsilon", "delta", "steps", "ramps", "fast"});
    if (sec["label"]) spec.label = rd.text(sec["label"], "disturbance.label");
    if (sec["epsilon"]) spec.epsilon = rd.number(sec["epsilon"], "disturbance.epsilon");
    if (sec["delta"]) spec.delta = rd.number(sec["delta"], "disturbance.delta");
    if (const auto steps = sec["steps"]) {
        for (std::size_t j = 0; j < steps.size(); ++j) {
            const auto s = steps[j];
            const std::string f = "disturbance.steps[" + std::to_string(j) + "]";
            rd.only_keys(s, f, {"channel", "bus", "time", "magnitude"});
            spec.steps.push_back({read_channel(rd, rd.required(s, f, "channel"), f + ".channel"),
                                  rd.bus(rd.required(s, f, "bus"), f + ".bus", n),
                                  rd.number(rd.required(s, f, "time"), f + ".time"),
                                  rd.number(rd.required(s, f, "magnitude"), f + ".magnitude")});
        }
    }
    if (const auto ramps = sec["ramps"]) {
        for (std::size_t j = 0; j < ramps.size(); ++j) {
            const auto s = ramps[j];
            const std::string f = "disturbance.ramps[" + std::to_string(j) + "]";
            rd.only_keys(s, f, {"channel", "bus", "start", "stop", "slope"});
            spec.ramps.push_back({read_channel(rd, rd.required(s, f, "channel"), f + ".channel"),
                                  rd.bus(rd.required(s, f, "bus"), f + ".bus", n),
                                  rd.number(rd.required(s, f, "start"), f + ".start"),
                                  rd.number(rd.required(s, f, "stop"), f + ".stop"),
                                  rd.number(rd.required(s, f, "slope"), f + ".slope")});
        }
    }
    if (const auto fast = sec["fast"]) {
        for (std::size_t j = 0; j < fast.size(); ++j) {
            const auto s = fast[j];
            const std::string f = "disturbance.fast[" + std::to_string(j) + "]";
            rd.only_keys(s, f, {"channel", "bus", "amplitude", "waveform", "period", "start", "stop"});
            FastComponent c;
            c.channel = read_channel(rd, rd.required(s, f, "channel"), f + ".channel");
            c.bus = rd.bus(rd.required(s, f, "bus"), f + ".bus", n);
            c.amplitude = rd.number(rd.required(s, f, "amplitude"), f + ".amplitude");
            try {
                c.waveform = waveform_from_string(rd.text(rd.required(s, f, "waveform"), f + ".waveform"));
            } catch (const std::exception& e) {
                rd.fail(s["waveform"], f + ".waveform", e.what());
            }
            c.period = rd.number(rd.required(s, f, "period"), f + ".period");
            if (s["start"]) c.start = rd.number(s["start"], f + ".start");
            if (s["stop"]) c.stop = rd.number(s["stop"], f + ".stop");
            spec.fast.push_back(c);
        }
    }
    try {
        make_disturbance(spec);
    } catch (const std::exception& e) {
        rd.fail(sec, "disturbance", e.what());
    }
    return spec;
}

SolverSettings read_solver(const Reader& rd, const YAML::Node& sec) {
    SolverSettings s;
    if (!sec) return s;
    rd.only_keys(sec, "solver", {"rel_tol", "abs_tol", "output_dt", "t_end", "seed",
                                 "declared_rate", "grid_points", "max_grid_evaluations",
                                 "lhs_samples", "polish_starts", "polish_sweeps",
                                 "validation_states", "h_samples"});
    if (sec["rel_tol"]) s.rel_tol = rd.number(sec["rel_tol"], "solver.rel_tol");
    if (sec["abs_tol"]) s.abs_tol = rd.number(sec["abs_tol"], "solver.abs_tol");
    if (sec["output_dt"]) s.output_dt = rd.number(sec["output_dt"], "solver.output_dt");
    if (sec["t_end"]) s.t_end = rd.number(sec["t_end"], "solver.t_end");
    if (sec["seed"]) s.seed = rd.count(sec["seed"], "solver.seed");
    if (sec["declared_rate"]) s.declared_rate = rd.number(sec["declared_rate"], "solver.declared_rate");
    if (sec["grid_points"]) s.search.grid_points = rd.count(sec["grid_points"], "solver.grid_points");
    if (sec["max_grid_evaluations"])
        s.search.max_grid_evaluations = rd.count(sec["max_grid_evaluations"], "solver.max_grid_evaluations");
    if (sec["lhs_samples"]) s.search.lhs_samples = rd.count(sec["lhs_samples"], "solver.lhs_samples");
    if (sec["polish_starts"]) s.search.polish_starts = rd.count(sec["polish_starts"], "solver.polish_starts");
    if (sec["polish_sweeps"]) s.search.polish_sweeps = rd.count(sec["polish_sweeps"], "solver.polish_sweeps");
    if (sec["validation_states"])
        s.validation_states = rd.count(sec["validation_states"], "solver.validation_states");
    if (sec["h_samples"]) s.h_samples = rd.count(sec["h_samples"], "solver.h_samples");
    if (!(s.rel_tol > 0) || !(s.abs_tol > 0)) rd.fail(sec, "solver", "tolerances must be > 0");
    if (!(s.output_dt > 0) || !(s.t_end > 0)) rd.fail(sec, "solver", "output_dt and t_end must be > 0");
    if (s.declared_rate && !(*s.declared_rate > 0))
        rd.fail(sec["declared_rate"], "solver.declared_rate", "must be > 0");
    s.search.seed = s.seed;
    return s;
}

SystemState read_state(const Reader& rd, const YAML::Node& node, const std::string& field,
                       std::size_t n) {
    rd.only_keys(node, field, {"theta", "theta_deg", "v"});
    Vec theta;
    if (node["theta_deg"]) theta = rd.vector(node["theta_deg"], field + ".theta_deg", n) * (std::numbers::pi / 180.0);
    else theta = rd.vector(rd.required(node, field, "theta"), field + ".theta", n);
    SystemState x(theta, rd.vector(rd.required(node, field, "v"), field + ".v", n));
    if ((x.v.array() <= 0.0).any()) rd.fail(node, field + ".v", "voltages must be > 0");
    return x;
}

YAML::Node parse_yaml(const std::string& text, const std::string& source) {
    try {
        return YAML::Load(text);
    } catch (const YAML::ParserException& e) {
        std::ostringstream os;
        os << source << ":" << e.mark.line + 1 << ": parse error: " << e.msg;
        throw ScenarioError(os.str());
    }
}

}  // namespace

Scenario parse_scenario(const std::string& text, const std::string& source) {
    const Reader rd(source);
    const auto root = parse_yaml(text, source);
    if (!root.IsMap()) throw ScenarioError(source + ": expected a mapping at top level");
    rd.only_keys(root, "scenario", {"name", "description", "network", "droop", "domain",
                                    "disturbance", "solver", "reference"});
    Scenario sc;
    sc.source = source;
    sc.name = root["name"] ? rd.text(root["name"], "name") : source;
    if (root["description"]) sc.description = rd.text(root["description"], "description");
    std::size_t n = 0;
    sc.net = read_network(rd, rd.required(root, "scenario", "network"), n, sc.base);
    sc.params = read_droop(rd, rd.required(root, "scenario", "droop"), n);
    sc.domain = read_domain(rd, rd.required(root, "scenario", "domain"));
    sc.solver = read_solver(rd, root["solver"]);
    sc.disturbance = read_disturbance(rd, root["disturbance"], n, sc.solver.seed);
    if (root["reference"]) sc.reference = read_state(rd, root["reference"], "reference", n);
    return sc;
}

Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ScenarioError(path + ": cannot open scenario file");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_scenario(ss.str(), path);
}

SystemState load_state(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ScenarioError(path + ": cannot open state file");
    std::ostringstream ss;
    ss << in.rdbuf();
    const Reader rd(path);
    const auto root = parse_yaml(ss.str(), path);
    if (!root.IsMap() || !root["v"]) rd.fail(root, "state", "expected a mapping with theta and v");
    return read_state(rd, root, "state", root["v"].size());
}

}  // namespace droopcert
