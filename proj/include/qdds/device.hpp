#pragma once

#include <complex>
#include <cstdint>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "qdds/dds.hpp"
#include "qdds/rng.hpp"

namespace qdds {

struct DeviceModel {
    double f01_hz = 4.773e9;
    double anharmonicity_hz = 375e6;   // f01 - f12, positive
    double f_readout_hz = 10.166e9;
    double t1_s = 51e-6;
    double t2_s = 32e-6;               // echo; requires t2 <= 2*t1
    int levels = 3;                    // 2 or 3
    double rabi_rad_per_fullscale = default_rabi_rad_per_fullscale();
    double readout_fidelity = 0.93;
    double readout_s0 = 1.0;           // amplitude when in |0>
    double readout_s1 = 0.4;           // amplitude when excited

    double anharmonicity_rad_s() const {
        return 6.283185307179586476925286766559 * anharmonicity_hz;
    }
    // 1/T2 - 1/(2 T1); zero for T2 = 2 T1.
    double pure_dephasing_rate() const;

    void validate() const;
    nlohmann::json to_json() const;
    static DeviceModel from_json(const nlohmann::json& j);

    // Rabi rate per full-scale unit chosen so a 24 ns (sigma 6 ns, 4 sigma)
    // envelope at 8.49% of full scale is a pi rotation.
    static double default_rabi_rad_per_fullscale();
};

class QuantumState {
  public:
    static QuantumState ground(int levels);
    explicit QuantumState(Eigen::MatrixXcd rho);

    const Eigen::MatrixXcd& rho() const { return rho_; }
    Eigen::MatrixXcd& rho() { return rho_; }
    int levels() const { return static_cast<int>(rho_.rows()); }

    double population(int level) const;
    double p_ground() const { return population(0); }
    // Everything not in |0>, including leakage.
    double p_excited() const { return 1.0 - population(0); }

    // Trace within tol of 1, Hermitian within tol, eigenvalues >= -tol.
    bool is_physical(double tol = 1e-9) const;

  private:
    Eigen::MatrixXcd rho_;
};

// Rotating-frame evolution under the piecewise-constant drive given by the
// baseband stream: for each step, exact exponentiation of
//   H = Delta |1><1| + (2 Delta - delta) |2><2|
//       + (1/2)[Omega (|0><1| + sqrt(2) |1><2|) + h.c.]
// with Delta = 2 pi (f01 - frame_freq), Omega = rabi * (I + iQ), followed by
// completely positive relaxation (rate 1/T1, doubled on |2>->|1>) and pure
// dephasing (variance 4x on level 2) channels over the same step.
// Requires env.sample_rate_hz consistent with the bandwidth it carries:
// dt <= 1/(20 * cutoff) is the caller's contract from demodulate.
QuantumState evolve(const QuantumState& start, const BasebandStream& env,
                    double frame_freq_hz, const DeviceModel& device);

// Decoherence-only (zero drive) evolution for a time span; same channels.
QuantumState idle_evolve(const QuantumState& start, double duration_s,
                         const DeviceModel& device);

// One projective readout draw with symmetric assignment error
// 1 - readout_fidelity; level 2 counts as "not ground". Returns 0 or 1
// (1 = reported excited).
int measure(const QuantumState& state, const DeviceModel& device, Rng& rng);

// Deterministic expected survival (probability of *reporting* ground).
double expected_survival(const QuantumState& state, const DeviceModel& device);

// (1 - droop) * (s0 + (s1 - s0) * P_excited).
double readout_amplitude(const QuantumState& state, const DeviceModel& device,
                         double droop);

// Average-fidelity bound from T1/T2 over one gate of the given length:
// 1 - [1/2 + exp(-t/T2)/3 + exp(-t/T1)/6].
double coherence_limit_epg(double gate_length_s, const DeviceModel& device);

// Validation-mode integrator: resolves the carrier in the lab frame (no
// rotating-wave step), for waveform spans <= 100 ns. Drive couples as
// rabi * s(t) on the same ladder operators. Returns the final state rotated
// into the frame of frame_freq at t_end for comparison with evolve().
QuantumState evolve_lab_frame(const QuantumState& start,
                              const SampledWaveform& w, double frame_freq_hz,
                              const DeviceModel& device, int substeps);

// Per-step decoherence Kraus sets (exposed for channel property tests).
// Returns operators whose sum K^dag K is the identity within 1e-12.
std::vector<Eigen::MatrixXcd> relaxation_kraus(const DeviceModel& device,
                                               double dt_s);
std::vector<Eigen::MatrixXcd> dephasing_kraus(const DeviceModel& device,
                                              double dt_s);

}  // namespace qdds
