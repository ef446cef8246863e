#include "qdds/pulse.hpp"

#include <cmath>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "qdds/errors.hpp"

namespace qdds {

const char* to_string(PrimitiveGate g) {
    switch (g) {
        case PrimitiveGate::Identity: return "I";
        case PrimitiveGate::XHalf: return "X/2";
        case PrimitiveGate::XMinusHalf: return "-X/2";
        case PrimitiveGate::XPi: return "X";
        case PrimitiveGate::YHalf: return "Y/2";
        case PrimitiveGate::YMinusHalf: return "-Y/2";
        case PrimitiveGate::YPi: return "Y";
    }
    return "?";
}

PrimitiveGate primitive_from_string(const std::string& name) {
    for (PrimitiveGate g : kAllPrimitives) {
        if (name == to_string(g)) return g;
    }
    throw std::invalid_argument("unknown primitive gate: " + name);
}

void PulseShape::validate() const {
    if (!(sigma_s > 0)) throw std::invalid_argument("pulse sigma must be positive");
    if (!(truncation > 0)) throw std::invalid_argument("pulse truncation must be positive");
    if (buffer_after_s < 0) throw std::invalid_argument("pulse buffer must be non-negative");
    if (!(std::abs(amplitude) <= 1.0))
        throw std::invalid_argument("pulse amplitude exceeds full scale");
    if (!std::isfinite(phase_rad) || !std::isfinite(drag_coefficient))
        throw std::invalid_argument("pulse phase/drag must be finite");
}

IqSample envelope(const PulseShape& shape, double t_s, double anharm_rad_s) {
    const double span = shape.envelope_span_s();
    if (t_s < 0.0 || t_s > span) return {0.0, 0.0};
    const double t0 = 0.5 * span;
    const double sig2 = shape.sigma_s * shape.sigma_s;
    // Baseline g(0) = exp(-span^2 / 8 sigma^2); subtracting it and rescaling
    // keeps the envelope zero at both ends and unity at the center.
    const double base = std::exp(-span * span / (8.0 * sig2));
    const double norm = 1.0 - base;
    const double dt = t_s - t0;
    const double g = std::exp(-dt * dt / (2.0 * sig2));
    const double i = shape.amplitude * (g - base) / norm;
    const double di = shape.amplitude * (-dt / sig2) * g / norm;
    const double q = -shape.drag_coefficient * di / anharm_rad_s;
    // Drive phase rotates the complex envelope: (i + iq) * exp(i phase).
    const double c = std::cos(shape.phase_rad);
    const double s = std::sin(shape.phase_rad);
    return {i * c - q * s, i * s + q * c};
}

double envelope_unit_area(double sigma_s, double truncation) {
    const double span = truncation * sigma_s;
    const double base = std::exp(-truncation * truncation / 8.0);
    const double raw =
        sigma_s * std::sqrt(2.0 * M_PI) * std::erf(truncation / (2.0 * std::sqrt(2.0)));
    return (raw - span * base) / (1.0 - base);
}

nlohmann::json CalibrationTable::to_json() const {
    nlohmann::json j;
    if (a_pi) j["a_pi"] = *a_pi;
    if (a_pi_2) j["a_pi_2"] = *a_pi_2;
    j["beta"] = beta;
    j["sigma_s"] = sigma_s;
    j["truncation"] = truncation;
    j["buffer_s"] = buffer_s;
    return j;
}

CalibrationTable CalibrationTable::from_json(const nlohmann::json& j) {
    CalibrationTable c;
    if (j.contains("a_pi") && !j["a_pi"].is_null()) c.a_pi = j["a_pi"].get<double>();
    if (j.contains("a_pi_2") && !j["a_pi_2"].is_null()) c.a_pi_2 = j["a_pi_2"].get<double>();
    c.beta = j.value("beta", 1.0);
    c.sigma_s = j.value("sigma_s", 6e-9);
    c.truncation = j.value("truncation", 4.0);
    c.buffer_s = j.value("buffer_s", 5e-9);
    return c;
}

PulseShape primitive_to_shape(PrimitiveGate g, const CalibrationTable& cal) {
    PulseShape s;
    s.sigma_s = cal.sigma_s;
    s.truncation = cal.truncation;
    s.buffer_after_s = cal.buffer_s;
    s.drag_coefficient = cal.beta;

    const double half_pi = M_PI_2;
    auto need = [&](const std::optional<double>& a, const char* name) {
        if (!a) throw UntunedGateError(std::string("calibration missing ") + name);
        return *a;
    };

    switch (g) {
        case PrimitiveGate::Identity:
            s.amplitude = 0.0;
            s.phase_rad = 0.0;
            break;
        case PrimitiveGate::XPi:
            s.amplitude = need(cal.a_pi, "a_pi");
            s.phase_rad = 0.0;
            break;
        case PrimitiveGate::YPi:
            s.amplitude = need(cal.a_pi, "a_pi");
            s.phase_rad = half_pi;
            break;
        case PrimitiveGate::XHalf:
            s.amplitude = need(cal.a_pi_2, "a_pi_2");
            s.phase_rad = 0.0;
            break;
        case PrimitiveGate::XMinusHalf:
            s.amplitude = -need(cal.a_pi_2, "a_pi_2");
            s.phase_rad = 0.0;
            break;
        case PrimitiveGate::YHalf:
            s.amplitude = need(cal.a_pi_2, "a_pi_2");
            s.phase_rad = half_pi;
            break;
        case PrimitiveGate::YMinusHalf:
            s.amplitude = -need(cal.a_pi_2, "a_pi_2");
            s.phase_rad = half_pi;
            break;
    }
    return s;
}

}  // namespace qdds
