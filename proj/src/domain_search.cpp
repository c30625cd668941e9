#include "droopcert/domain_search.hpp"

#include "droopcert/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numbers>

namespace droopcert {

std::string to_string(SearchMethod m) { return m == SearchMethod::grid ? "grid" : "multistart"; }

DomainCoordinates::DomainCoordinates(const NetworkModel& net, const AdmissibleDomain& dom)
    : n_(net.size()), edges_(net.edges()), gamma_(dom.gamma_max) {
    dom.validate();
    // hop distance from bus 0 bounds each pinned angle
    std::vector<std::size_t> hops(n_, n_ > 0 ? n_ - 1 : 0);
    if (n_ > 0) {
        std::vector<bool> seen(n_, false);
        std::deque<std::size_t> queue{0};
        seen[0] = true;
        hops[0] = 0;
        while (!queue.empty()) {
            const auto b = queue.front();
            queue.pop_front();
            for (auto k : net.neighbors(b)) {
                if (seen[k]) continue;
                seen[k] = true;
                hops[k] = hops[b] + 1;
                queue.push_back(k);
            }
        }
    }
    for (std::size_t k = 1; k < n_; ++k) {
        lo_.push_back(-gamma_ * static_cast<double>(hops[k]));
        hi_.push_back(gamma_ * static_cast<double>(hops[k]));
    }
    for (std::size_t k = 0; k < n_; ++k) {
        lo_.push_back(dom.v_min);
        hi_.push_back(dom.v_max);
    }
}

namespace {

double angle_of(const std::vector<double>& z, std::size_t bus) { return bus == 0 ? 0.0 : z[bus - 1]; }

}  // namespace

bool DomainCoordinates::feasible(const std::vector<double>& z) const {
    for (std::size_t j = 0; j < z.size(); ++j)
        if (z[j] < lo_[j] || z[j] > hi_[j]) return false;
    for (const auto& e : edges_)
        if (std::abs(angle_of(z, e.i) - angle_of(z, e.k)) > gamma_ * (1.0 + 1e-14)) return false;
    return true;
}

SystemState DomainCoordinates::state(const std::vector<double>& z) const {
    const auto n = static_cast<Eigen::Index>(n_);
    SystemState x{Vec::Zero(n), Vec::Zero(n)};
    for (std::size_t k = 1; k < n_; ++k) x.theta[static_cast<Eigen::Index>(k)] = z[k - 1];
    for (std::size_t k = 0; k < n_; ++k) x.v[static_cast<Eigen::Index>(k)] = z[n_ - 1 + k];
    return x;
}

std::vector<double> DomainCoordinates::coords(const SystemState& x) const {
    std::vector<double> z;
    z.reserve(dim());
    for (std::size_t k = 1; k < n_; ++k)
        z.push_back(x.theta[static_cast<Eigen::Index>(k)] - x.theta[0]);
    for (std::size_t k = 0; k < n_; ++k) z.push_back(x.v[static_cast<Eigen::Index>(k)]);
    return z;
}

std::pair<double, double> DomainCoordinates::interval(const std::vector<double>& z,
                                                      std::size_t j) const {
    double lo = lo_[j];
    double hi = hi_[j];
    if (j + 1 < n_) {
        const std::size_t bus = j + 1;
        for (const auto& e : edges_) {
            std::size_t other;
            if (e.i == bus) other = e.k;
            else if (e.k == bus) other = e.i;
            else continue;
            const double t = angle_of(z, other);
            lo = std::max(lo, t - gamma_);
            hi = std::min(hi, t + gamma_);
        }
    }
    if (lo > hi) return {z[j], z[j]};
    return {lo, hi};
}

SystemState DomainCoordinates::random_state(std::mt19937_64& rng) const {
    std::vector<double> z(dim());
    for (int attempt = 0; attempt < 1'000'000; ++attempt) {
        for (std::size_t j = 0; j < z.size(); ++j) {
            std::uniform_real_distribution<double> d(lo_[j], hi_[j]);
            z[j] = d(rng);
        }
        if (feasible(z)) return state(z);
    }
    throw ModelError("domain: rejection sampling failed to find a feasible state");
}

namespace {

struct Ranked {
    double value;
    std::size_t index;
};

bool better(const Ranked& a, const Ranked& b) {
    if (a.value != b.value) return a.value > b.value;
    return a.index < b.index;
}

void keep_top(std::vector<Ranked>& top, const Ranked& r, std::size_t k) {
    if (top.size() == k && !better(r, top.back())) return;
    top.insert(std::upper_bound(top.begin(), top.end(), r, better), r);
    if (top.size() > k) top.pop_back();
}

// golden-section maximization of g on [a, b], endpoints included
std::pair<double, double> line_max(const std::function<double(double)>& g, double a, double b,
                                   double x0, double f0, std::size_t& evals) {
    double best_x = x0;
    double best_f = f0;
    auto consider = [&](double x, double f) {
        if (f > best_f) {
            best_f = f;
            best_x = x;
        }
    };
    if (!(b > a)) return {best_x, best_f};
    consider(a, g(a));
    consider(b, g(b));
    evals += 2;
    const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - gr * (b - a);
    double d = a + gr * (b - a);
    double fc = g(c);
    double fd = g(d);
    evals += 2;
    const double tol = 1e-13 * (1.0 + std::abs(a) + std::abs(b));
    for (int it = 0; it < 80 && (b - a) > tol; ++it) {
        if (fc >= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - gr * (b - a);
            fc = g(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + gr * (b - a);
            fd = g(d);
        }
        ++evals;
    }
    consider(c, fc);
    consider(d, fd);
    return {best_x, best_f};
}

SearchResult polish_impl(const DomainCoordinates& coords, const StateObjective& objective,
                         std::vector<double> z, std::vector<double> step, std::size_t sweeps) {
    SearchResult res;
    double current = objective(coords.state(z));
    res.evaluations = 1;
    bool converged = false;
    for (std::size_t s = 0; s < sweeps; ++s) {
        const double before = current;
        for (std::size_t j = 0; j < z.size(); ++j) {
            auto [lo, hi] = coords.interval(z, j);
            const double a = std::max(lo, z[j] - step[j]);
            const double b = std::min(hi, z[j] + step[j]);
            auto g = [&](double t) {
                auto trial = z;
                trial[j] = t;
                return objective(coords.state(trial));
            };
            auto [xj, fj] = line_max(g, a, b, z[j], current, res.evaluations);
            if (fj > current) {
                z[j] = xj;
                current = fj;
            }
        }
        const double gain = current - before;
        if (gain <= 1e-14 * (1.0 + std::abs(current))) {
            for (auto& h : step) h *= 0.25;
            const double hmax = *std::max_element(step.begin(), step.end());
            if (hmax < 1e-9) {
                converged = true;
                break;
            }
        }
    }
    res.value = current;
    res.argmax = coords.state(z);
    res.converged = converged;
    return res;
}

}  // namespace

SearchResult polish_start(const DomainCoordinates& coords, const StateObjective& objective,
                          const SystemState& start, double step, std::size_t sweeps) {
    std::vector<double> h(coords.dim());
    for (std::size_t j = 0; j < h.size(); ++j) h[j] = step * (coords.upper(j) - coords.lower(j));
    return polish_impl(coords, objective, coords.coords(start), h, sweeps);
}

SearchResult maximize_over_domain(const NetworkModel& net, const AdmissibleDomain& dom,
                                  const StateObjective& objective, const SearchOptions& opts) {
    const DomainCoordinates coords(net, dom);
    const std::size_t d = coords.dim();
    const std::size_t p = std::max<std::size_t>(2, opts.grid_points);
    const std::size_t k = std::max<std::size_t>(1, opts.polish_starts);

    std::size_t total = 1;
    bool use_grid = true;
    for (std::size_t j = 0; j < d; ++j) {
        if (total > opts.max_grid_evaluations / p) {
            use_grid = false;
            break;
        }
        total *= p;
    }

    std::vector<std::vector<double>> lhs;
    std::vector<double> step(d);
    if (use_grid) {
        for (std::size_t j = 0; j < d; ++j)
            step[j] = (coords.upper(j) - coords.lower(j)) / static_cast<double>(p - 1);
    } else {
        total = opts.lhs_samples;
        std::mt19937_64 rng(opts.seed);
        lhs.assign(total, std::vector<double>(d));
        std::vector<std::size_t> perm(total);
        for (std::size_t j = 0; j < d; ++j) {
            for (std::size_t i = 0; i < total; ++i) perm[i] = i;
            std::shuffle(perm.begin(), perm.end(), rng);
            std::uniform_real_distribution<double> u01(0.0, 1.0);
            const double w = (coords.upper(j) - coords.lower(j)) / static_cast<double>(total);
            for (std::size_t i = 0; i < total; ++i)
                lhs[i][j] = coords.lower(j) + (static_cast<double>(perm[i]) + u01(rng)) * w;
            step[j] = (coords.upper(j) - coords.lower(j)) /
                      std::pow(static_cast<double>(total), 1.0 / static_cast<double>(d));
        }
    }

    auto point = [&](std::size_t idx) {
        if (!use_grid) return lhs[idx];
        std::vector<double> z(d);
        for (std::size_t j = 0; j < d; ++j) {
            const std::size_t digit = idx % p;
            idx /= p;
            z[j] = coords.lower(j) +
                   (coords.upper(j) - coords.lower(j)) * static_cast<double>(digit) /
                       static_cast<double>(p - 1);
        }
        return z;
    };

    const std::size_t jobs = std::max<std::size_t>(1, opts.jobs);
    std::vector<std::vector<Ranked>> tops(jobs);
    std::vector<std::size_t> counts(jobs, 0);
    parallel_chunks(total, jobs, [&](std::size_t b, std::size_t e, std::size_t c) {
        auto& top = tops[c];
        for (std::size_t idx = b; idx < e; ++idx) {
            const auto z = point(idx);
            if (!coords.feasible(z)) continue;
            const double v = objective(coords.state(z));
            ++counts[c];
            if (std::isnan(v)) continue;
            keep_top(top, {v, idx}, k);
        }
    });
    std::vector<Ranked> merged;
    std::size_t evaluations = 0;
    for (std::size_t c = 0; c < jobs; ++c) {
        evaluations += counts[c];
        for (const auto& r : tops[c]) keep_top(merged, r, k);
    }
    if (merged.empty()) throw ModelError("domain search: no feasible evaluation point");

    std::vector<SearchResult> polished(merged.size());
    parallel_chunks(merged.size(), jobs, [&](std::size_t b, std::size_t e, std::size_t) {
        for (std::size_t i = b; i < e; ++i)
            polished[i] = polish_impl(coords, objective, point(merged[i].index), step,
                                      opts.polish_sweeps);
    });

    SearchResult best;
    best.value = -std::numeric_limits<double>::infinity();
    best.converged = true;
    for (const auto& r : polished) {
        evaluations += r.evaluations;
        if (r.value > best.value) {
            best.value = r.value;
            best.argmax = r.argmax;
        }
        best.converged = best.converged && r.converged;
    }
    best.method = use_grid ? SearchMethod::grid : SearchMethod::multistart;
    best.evaluations = evaluations;
    return best;
}

std::vector<SystemState> sample_domain(const NetworkModel& net, const AdmissibleDomain& dom,
                                       std::size_t count, std::uint64_t seed,
                                       bool random_offset) {
    const DomainCoordinates coords(net, dom);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> offset(-std::numbers::pi, std::numbers::pi);
    std::vector<SystemState> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        auto x = coords.random_state(rng);
        if (random_offset) x.theta.array() += offset(rng);
        out.push_back(std::move(x));
    }
    return out;
}

}  // namespace droopcert
