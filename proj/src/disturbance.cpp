#include "droopcert/disturbance.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <set>

namespace droopcert {

namespace {

constexpr double kOpenEnd = 1e299;

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// uniform in [0, 1) from (seed, component, slot)
double hashed_uniform(std::uint64_t seed, std::size_t comp, std::int64_t slot) {
    std::uint64_t h = splitmix64(seed);
    h = splitmix64(h ^ static_cast<std::uint64_t>(comp));
    h = splitmix64(h ^ static_cast<std::uint64_t>(slot));
    return static_cast<double>(h >> 11) * 0x1.0p-53;
}

bool switching(Waveform w) { return w != Waveform::sinusoid; }

}  // namespace

std::string to_string(Waveform w) {
    switch (w) {
        case Waveform::square: return "square";
        case Waveform::sinusoid: return "sinusoid";
        case Waveform::dither: return "dither";
        case Waveform::square_dither: return "square_dither";
    }
    return "?";
}

Waveform waveform_from_string(const std::string& s) {
    if (s == "square") return Waveform::square;
    if (s == "sinusoid") return Waveform::sinusoid;
    if (s == "dither") return Waveform::dither;
    if (s == "square_dither") return Waveform::square_dither;
    throw DisturbanceError("unknown waveform '" + s + "'");
}

Disturbance::Disturbance(DisturbanceSpec spec) : spec_(std::move(spec)) {
    auto check_bus = [&](std::size_t bus) {
        if (bus >= spec_.n_buses) throw DisturbanceError("disturbance: bus index out of range");
    };
    for (const auto& s : spec_.steps) check_bus(s.bus);
    for (const auto& r : spec_.ramps) {
        check_bus(r.bus);
        if (!(r.stop >= r.start)) throw DisturbanceError("disturbance: ramp stop before start");
    }
    for (const auto& f : spec_.fast) {
        check_bus(f.bus);
        if (!(f.period > 0.0)) throw DisturbanceError("disturbance: fast period must be > 0");
        if (!(f.amplitude >= 0.0)) throw DisturbanceError("disturbance: amplitude must be >= 0");
        if (!(f.stop > f.start)) throw DisturbanceError("disturbance: fast stop before start");
    }
    if (spec_.epsilon < 0.0 || spec_.delta < 0.0)
        throw DisturbanceError("disturbance: declared bounds must be >= 0");
}

std::size_t Disturbance::slot(Channel ch, std::size_t bus) const {
    return ch == Channel::p ? bus : spec_.n_buses + bus;
}

Vec Disturbance::slow(double t) const {
    Vec u = Vec::Zero(static_cast<Eigen::Index>(dim()));
    for (const auto& r : spec_.ramps) {
        const double span = std::clamp(t - r.start, 0.0, r.stop - r.start);
        u[slot(r.channel, r.bus)] += r.slope * span;
    }
    return u;
}

Vec Disturbance::slow_rate(double t) const {
    Vec u = Vec::Zero(static_cast<Eigen::Index>(dim()));
    for (const auto& r : spec_.ramps)
        if (t >= r.start && t < r.stop) u[slot(r.channel, r.bus)] += r.slope;
    return u;
}

double Disturbance::fast_value(std::size_t idx, double t) const {
    const auto& f = spec_.fast[idx];
    if (t < f.start || t >= f.stop) return 0.0;
    const double phase = (t - f.start) / f.period;
    const auto half = static_cast<std::int64_t>(std::floor(2.0 * phase));
    switch (f.waveform) {
        case Waveform::square: return (half % 2 == 0) ? f.amplitude : -f.amplitude;
        case Waveform::sinusoid: return f.amplitude * std::sin(2.0 * std::numbers::pi * phase);
        case Waveform::dither:
            return f.amplitude * (2.0 * hashed_uniform(spec_.seed, idx, half) - 1.0);
        case Waveform::square_dither:
            return hashed_uniform(spec_.seed, idx, half) < 0.5 ? -f.amplitude : f.amplitude;
    }
    return 0.0;
}

Vec Disturbance::fast(double t) const {
    Vec u = Vec::Zero(static_cast<Eigen::Index>(dim()));
    for (const auto& s : spec_.steps)
        if (t >= s.time) u[slot(s.channel, s.bus)] += s.magnitude;
    for (std::size_t i = 0; i < spec_.fast.size(); ++i)
        u[slot(spec_.fast[i].channel, spec_.fast[i].bus)] += fast_value(i, t);
    return u;
}

std::vector<double> Disturbance::breakpoints(double t0, double t1) const {
    std::set<double> pts;
    auto add = [&](double t) {
        if (t > t0 && t < t1) pts.insert(t);
    };
    for (const auto& s : spec_.steps) add(s.time);
    for (const auto& r : spec_.ramps) {
        add(r.start);
        add(r.stop);
    }
    for (const auto& f : spec_.fast) {
        add(f.start);
        if (f.stop < kOpenEnd) add(f.stop);
        if (!switching(f.waveform)) continue;
        const double lo = std::max(t0, f.start);
        const double hi = std::min(t1, f.stop);
        if (hi <= lo) continue;
        const double half = 0.5 * f.period;
        auto k = static_cast<std::int64_t>(std::ceil((lo - f.start) / half));
        for (double t = f.start + static_cast<double>(k) * half; t < hi;
             ++k, t = f.start + static_cast<double>(k) * half)
            add(t);
    }
    return {pts.begin(), pts.end()};
}

double Disturbance::settled_horizon() const {
    double h = 0.0;
    double max_period = 0.0;
    for (const auto& s : spec_.steps) h = std::max(h, s.time);
    for (const auto& r : spec_.ramps) h = std::max(h, r.stop);
    for (const auto& f : spec_.fast) {
        h = std::max(h, f.start);
        if (f.stop < kOpenEnd) h = std::max(h, f.stop);
        max_period = std::max(max_period, f.period);
    }
    return h + 10.0 * max_period + 1.0;
}

double Disturbance::max_slow_rate(double horizon) const {
    // slope is piecewise constant between ramp breakpoints
    auto bp = breakpoints(0.0, horizon);
    bp.insert(bp.begin(), 0.0);
    bp.push_back(horizon);
    double worst = 0.0;
    for (std::size_t i = 0; i + 1 < bp.size(); ++i)
        worst = std::max(worst, slow_rate(0.5 * (bp[i] + bp[i + 1])).norm());
    return worst;
}

double Disturbance::max_fast_amplitude(double horizon) const {
    auto bp = breakpoints(0.0, horizon);
    bp.insert(bp.begin(), 0.0);
    bp.push_back(horizon);
    std::vector<double> probes;
    for (std::size_t i = 0; i + 1 < bp.size(); ++i) {
        probes.push_back(bp[i]);
        probes.push_back(0.5 * (bp[i] + bp[i + 1]));
    }
    double min_sin_period = std::numeric_limits<double>::infinity();
    for (const auto& f : spec_.fast)
        if (f.waveform == Waveform::sinusoid) min_sin_period = std::min(min_sin_period, f.period);
    if (std::isfinite(min_sin_period)) {
        const double dt = min_sin_period / 400.0;
        for (double t = 0.0; t <= horizon; t += dt) probes.push_back(t);
    }
    double worst = 0.0;
    for (double t : probes) worst = std::max(worst, fast(t).norm());
    return worst;
}

bool Disturbance::is_zero() const {
    return spec_.steps.empty() && spec_.ramps.empty() && spec_.fast.empty();
}

Disturbance make_disturbance(const DisturbanceSpec& spec) {
    Disturbance d(spec);
    const double horizon = d.settled_horizon();
    const double tol = 1e-12;
    const double eps = d.max_slow_rate(horizon);
    if (eps > spec.epsilon * (1.0 + tol) + tol)
        throw DisturbanceError("disturbance: slow-rate bound violated (observed " +
                               std::to_string(eps) + " > declared epsilon " +
                               std::to_string(spec.epsilon) + ")");
    const double amp = d.max_fast_amplitude(horizon);
    if (amp > spec.delta * (1.0 + tol) + tol)
        throw DisturbanceError("disturbance: fast-amplitude bound violated (observed " +
                               std::to_string(amp) + " > declared delta " +
                               std::to_string(spec.delta) + ")");
    return d;
}

}  // namespace droopcert
