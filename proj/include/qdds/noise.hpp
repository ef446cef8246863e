#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace qdds {

struct SpectrumPoint {
    double freq_hz = 0.0;
    double l_dbc_hz = 0.0;  // single-sideband phase noise, dBc/Hz
};

struct PhaseNoiseSpectrum {
    std::vector<SpectrumPoint> points;  // strictly increasing frequency
    std::string source;

    // Linear interpolation of L in log10(f); clamped at the ends.
    double l_at(double freq_hz) const;
};

// Two-column CSV (frequency Hz, dBc/Hz). Comment lines start with '#'.
// Throws ParseError (with line number) on malformed rows, non-positive or
// non-increasing frequencies.
PhaseNoiseSpectrum load_spectrum(std::istream& in, const std::string& source);
PhaseNoiseSpectrum load_spectrum_file(const std::string& path);
void save_spectrum(const PhaseNoiseSpectrum& s, std::ostream& out);

// Extends the spectrum down to f_min by the straight line (in log10 f vs
// dBc/Hz) through the two lowest points. No-op if f_min is not below the
// lowest existing point. Requires >= 2 points.
PhaseNoiseSpectrum extrapolate_low(const PhaseNoiseSpectrum& s,
                                   double f_min_hz);

// One-sided dephasing-rate PSD: S(omega) = (1/2) omega^2 10^(L/10),
// omega = 2 pi f, units rad^2/s. Log-log interpolated between samples.
struct DephasingPsd {
    std::vector<double> omega_rad_s;
    std::vector<double> s_rad2_s;
    std::string source;

    double at(double omega) const;  // log-log interpolation, clamped
};

DephasingPsd to_dephasing_psd(const PhaseNoiseSpectrum& s);

// Piecewise-constant control: each segment is a constant Rabi drive about an
// equatorial axis (phase 0 = x) or free evolution when rabi = 0.
struct ControlSegment {
    double duration_s = 0.0;
    double rabi_rad_s = 0.0;
    double phase_rad = 0.0;
};

struct ControlSegmentList {
    std::vector<ControlSegment> segments;

    double total_duration_s() const;
    static ControlSegmentList free_evolution(double duration_s);
    static ControlSegmentList constant_x_pi(double duration_s);
};

// Dephasing filter function
//   F(omega) = omega^2 * sum_j |integral_0^tau e^{i omega t} R_zj(t) dt|^2
// where R(t) is the control rotation acting on the noise axis, evaluated in
// closed form per segment. Free evolution: F = 4 sin^2(omega tau / 2).
double filter_function(const ControlSegmentList& ctrl, double omega);

struct ChiOptions {
    double f_min_hz = 1.0;
    double f_max_hz = 1e8;
    int points_per_decade = 200;
};

// chi = (1/pi) * integral S(omega) F(omega) / omega^2 domega over the band,
// trapezoid on a log grid. White PSD + free evolution gives chi = S0 * tau.
double dephasing_chi(const DephasingPsd& psd, const ControlSegmentList& ctrl,
                     const ChiOptions& opts = {});

// Infidelity floor a = (1 - e^-chi) / 2.
double infidelity_floor(const DephasingPsd& psd,
                        const ControlSegmentList& ctrl,
                        const ChiOptions& opts = {});

// Synthetic single-sideband models L(f) = 10 log10(sum_k h_k f^-k), k=0..3.
struct PowerLawNoiseModel {
    double h0 = 0.0;  // white floor
    double h1 = 0.0;  // flicker
    double h2 = 0.0;  // white FM
    double h3 = 0.0;  // flicker FM

    double l_dbc_hz(double f) const;
    PhaseNoiseSpectrum sample(double f_min_hz, double f_max_hz,
                              int points_per_decade,
                              const std::string& source) const;

    static PowerLawNoiseModel dds_like();
    static PowerLawNoiseModel generator_like();
};

// Independent time-domain route for validation: phase variance <phi^2> of
// free evolution over tau, averaged over trajectories synthesized from the
// same band-limited PSD (sum of cosines with random phases on a log grid).
// Returns {mean, standard error of the mean}.
struct McVariance {
    double mean = 0.0;
    double se = 0.0;
};
McVariance mc_phase_variance(const DephasingPsd& psd, double tau_s,
                             int n_trajectories, std::uint64_t seed,
                             const ChiOptions& opts = {});

}  // namespace qdds
