#pragma once

#include "droopcert/disturbance.hpp"
#include "droopcert/domain_search.hpp"
#include "droopcert/grid_model.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>

namespace droopcert {

/// Parse failure or invariant violation, prefixed with "<source>:<line>:"
/// and the offending field when known.
class ScenarioError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct SolverSettings {
    double rel_tol = 1e-8;
    double abs_tol = 1e-10;
    double output_dt = 0.01;
    double t_end = 60.0;
    std::uint64_t seed = 42;
    std::optional<double> declared_rate;
    SearchOptions search;
    std::size_t validation_states = 10'000;
    std::size_t h_samples = 200;
};

struct Scenario {
    std::string name;
    std::string description;
    std::string source;
    NetworkModel net;
    DroopParams params;
    AdmissibleDomain domain;
    DisturbanceSpec disturbance;
    SolverSettings solver;
    /// Reference point for autonomous tubes; absent means "use the equilibrium".
    std::optional<SystemState> reference;
    /// Per-unit bases, reporting only.
    std::map<std::string, double> base;
};

Scenario load_scenario(const std::string& path);
Scenario parse_scenario(const std::string& text, const std::string& source = "<string>");

/// Reference state from a scenario-style YAML document with `theta` and `v`
/// lists, or one of the presets "flat" and "equilibrium" (resolved by callers).
SystemState load_state(const std::string& path);

}  // namespace droopcert
