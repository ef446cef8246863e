#pragma once

#include <array>
#include <optional>
#include <string>

#include <nlohmann/json_fwd.hpp>

namespace qdds {

// The seven primitive gates the gate set is compiled to. Identity is a timed
// idle of one gate duration, not a zero-length no-op.
enum class PrimitiveGate {
    Identity,
    XHalf,       // +pi/2 about x
    XMinusHalf,  // -pi/2 about x
    XPi,
    YHalf,
    YMinusHalf,
    YPi,
};

inline constexpr std::array<PrimitiveGate, 7> kAllPrimitives = {
    PrimitiveGate::Identity,   PrimitiveGate::XHalf, PrimitiveGate::XMinusHalf,
    PrimitiveGate::XPi,        PrimitiveGate::YHalf, PrimitiveGate::YMinusHalf,
    PrimitiveGate::YPi,
};

const char* to_string(PrimitiveGate g);
PrimitiveGate primitive_from_string(const std::string& name);

struct IqSample {
    double i;
    double q;
};

// Baseline-subtracted truncated Gaussian with a derivative quadrature.
// Envelope span is truncation*sigma; the zero-amplitude buffer is appended
// after the span, so total gate duration = truncation*sigma + buffer.
struct PulseShape {
    double sigma_s = 6e-9;
    double truncation = 4.0;       // span in units of sigma
    double amplitude = 0.0;        // full-scale fraction, may be negative
    double drag_coefficient = 1.0; // beta
    double phase_rad = 0.0;        // 0 = x axis, pi/2 = y axis
    double buffer_after_s = 5e-9;

    double envelope_span_s() const { return truncation * sigma_s; }
    double duration_s() const { return envelope_span_s() + buffer_after_s; }

    // Throws std::invalid_argument on non-positive sigma/truncation,
    // negative buffer, or |amplitude| > 1.
    void validate() const;
};

// In-phase and quadrature value at time t (t measured from pulse start).
// Zero outside [0, span]. Before the phase rotation the quadrature is
// -beta * dI/dt / anharm_rad_s; the returned pair is that complex envelope
// rotated by exp(i phase_rad), so phase pi/2 drives the y axis.
IqSample envelope(const PulseShape& shape, double t_s, double anharm_rad_s);

// Area of the unit-amplitude envelope in seconds (closed form). The rotation
// angle of an ideal resonant pulse is rabi_rad_per_fullscale * amplitude *
// envelope_unit_area(sigma, truncation).
double envelope_unit_area(double sigma_s, double truncation);

// Amplitudes for pi and pi/2 rotations; absent entry = gate not tuned yet.
struct CalibrationTable {
    std::optional<double> a_pi;
    std::optional<double> a_pi_2;
    double beta = 1.0;
    double sigma_s = 6e-9;
    double truncation = 4.0;
    double buffer_s = 5e-9;

    double gate_duration_s() const { return truncation * sigma_s + buffer_s; }

    nlohmann::json to_json() const;
    static CalibrationTable from_json(const nlohmann::json& j);
};

// Throws UntunedGateError if the required amplitude entry is missing.
PulseShape primitive_to_shape(PrimitiveGate g, const CalibrationTable& cal);

}  // namespace qdds
