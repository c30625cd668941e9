#pragma once

#include "droopcert/grid_model.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace droopcert {

/// Which reference a disturbance channel perturbs.
enum class Channel { p, q };

enum class Waveform {
    square,         // deterministic +-A, switching every half period
    sinusoid,       // A sin(2 pi (t - start) / period)
    dither,         // seeded uniform level in [-A, A], held for half a period
    square_dither,  // seeded random sign +-A, held for half a period
};

/// Reference step at `time`. Counted with the fast (bounded-amplitude) part.
struct StepComponent {
    Channel channel = Channel::p;
    std::size_t bus = 0;
    double time = 0.0;
    double magnitude = 0.0;
};

/// Bounded ramp: rate `slope` on [start, stop], constant afterwards.
struct RampComponent {
    Channel channel = Channel::p;
    std::size_t bus = 0;
    double start = 0.0;
    double stop = 0.0;
    double slope = 0.0;
};

/// Bounded high-frequency component active on [start, stop).
struct FastComponent {
    Channel channel = Channel::p;
    std::size_t bus = 0;
    double amplitude = 0.0;
    Waveform waveform = Waveform::square;
    double period = 1.0;
    double start = 0.0;
    double stop = 1e300;
};

/// Per-node perturbations of the power references, u = [p; q].
/// The slow part (ramps) must satisfy |du/dt|_2 <= epsilon and the fast part
/// (steps plus fast components) |u_fast|_2 <= delta.
struct DisturbanceSpec {
    std::size_t n_buses = 0;
    std::vector<StepComponent> steps;
    std::vector<RampComponent> ramps;
    std::vector<FastComponent> fast;
    double epsilon = 0.0;
    double delta = 0.0;
    std::uint64_t seed = 42;
    std::string label;
};

class DisturbanceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Immutable evaluable signal built from a DisturbanceSpec.
class Disturbance {
public:
    Disturbance() = default;
    explicit Disturbance(DisturbanceSpec spec);

    std::size_t n_buses() const { return spec_.n_buses; }
    std::size_t dim() const { return 2 * spec_.n_buses; }
    const DisturbanceSpec& spec() const { return spec_; }
    double epsilon() const { return spec_.epsilon; }
    double delta() const { return spec_.delta; }

    Vec operator()(double t) const { return slow(t) + fast(t); }
    Vec slow(double t) const;
    Vec slow_rate(double t) const;
    Vec fast(double t) const;

    /// Times in (t0, t1) where the signal or its slope is discontinuous, sorted.
    std::vector<double> breakpoints(double t0, double t1) const;

    /// Largest |du_slow/dt|_2 and |u_fast|_2 observed on [0, horizon].
    double max_slow_rate(double horizon) const;
    double max_fast_amplitude(double horizon) const;

    /// A horizon past which every component is constant or periodic.
    double settled_horizon() const;

    bool is_zero() const;

private:
    double fast_value(std::size_t idx, double t) const;
    std::size_t slot(Channel ch, std::size_t bus) const;

    DisturbanceSpec spec_;
};

/// Validates the spec and checks the declared bounds on a dense grid.
/// Throws DisturbanceError on a bound violation.
Disturbance make_disturbance(const DisturbanceSpec& spec);

std::string to_string(Waveform w);
Waveform waveform_from_string(const std::string& s);

}  // namespace droopcert
