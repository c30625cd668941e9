#pragma once

#include "droopcert/grid_model.hpp"

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace droopcert {

enum class SearchMethod { grid, multistart };

std::string to_string(SearchMethod m);

/// Settings for the sampled maximization of smooth objectives over D.
struct SearchOptions {
    std::size_t grid_points = 15;           // per dimension
    std::size_t max_grid_evaluations = 2'000'000;  // larger grids switch to LHS
    std::size_t lhs_samples = 100'000;
    std::size_t polish_starts = 10;
    std::size_t polish_sweeps = 40;
    std::size_t jobs = 1;
    std::uint64_t seed = 42;
};

struct SearchResult {
    double value = 0.0;
    SystemState argmax;
    SearchMethod method = SearchMethod::grid;
    std::size_t evaluations = 0;
    bool converged = true;
};

using StateObjective = std::function<double(const SystemState&)>;

/// Reduced coordinates of D: theta_0 is pinned to zero (objectives depend on
/// angle differences only), so z = [theta_1..theta_{N-1}, V_0..V_{N-1}].
/// Angle k ranges over +-gamma_max times its hop distance from bus 0; points
/// violating an edge constraint are rejected.
class DomainCoordinates {
public:
    DomainCoordinates(const NetworkModel& net, const AdmissibleDomain& dom);

    std::size_t dim() const { return lo_.size(); }
    std::size_t n_buses() const { return n_; }
    double lower(std::size_t j) const { return lo_[j]; }
    double upper(std::size_t j) const { return hi_[j]; }

    bool feasible(const std::vector<double>& z) const;
    SystemState state(const std::vector<double>& z) const;
    std::vector<double> coords(const SystemState& x) const;

    /// Feasible interval of coordinate j with the others held fixed.
    std::pair<double, double> interval(const std::vector<double>& z, std::size_t j) const;

    /// Uniform sample of D by rejection (theta_0 = 0).
    SystemState random_state(std::mt19937_64& rng) const;

private:
    std::size_t n_;
    std::vector<Edge> edges_;
    double gamma_;
    std::vector<double> lo_;
    std::vector<double> hi_;
};

/// Dense grid (or Latin hypercube for large N) followed by coordinate-wise
/// golden-section polishing of the best starts. Deterministic for a given
/// seed, independent of opts.jobs.
SearchResult maximize_over_domain(const NetworkModel& net, const AdmissibleDomain& dom,
                                  const StateObjective& objective, const SearchOptions& opts);

/// Polish a single start; returns the improved point and value.
SearchResult polish_start(const DomainCoordinates& coords, const StateObjective& objective,
                          const SystemState& start, double step, std::size_t sweeps);

/// `count` uniform states in D from `seed`; a random common angle offset is
/// added when `random_offset` is set.
std::vector<SystemState> sample_domain(const NetworkModel& net, const AdmissibleDomain& dom,
                                       std::size_t count, std::uint64_t seed,
                                       bool random_offset = true);

}  // namespace droopcert
