#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "qdds/clifford.hpp"
#include "qdds/device.hpp"
#include "qdds/dds.hpp"
#include "qdds/fit.hpp"
#include "qdds/pulse.hpp"

namespace qdds {

enum class RbMode {
    Ideal,    // table unitaries, no waveform chain, optional injected noise
    Hybrid,   // qubit tone through the DAC chain; readout modeled abstractly
    FullDds,  // qubit + readout tones on one channel, droop tracked
};

const char* to_string(RbMode m);
RbMode rb_mode_from_string(const std::string& s);

struct RbConfig {
    std::vector<int> lengths = {2, 4, 8, 16, 32, 64, 128, 256, 400};
    int n_seeds = 20;
    int shots = 1000;
    RbMode mode = RbMode::Hybrid;
    // Exact-population fast path: survival from expected values, no shot
    // sampling. Always on for Ideal mode result determinism in CI configs.
    bool exact_population = false;
    // Ideal-mode depolarizing channel strength per Clifford (0 = off);
    // strength lambda maps to p = 1 - lambda exactly.
    double depolarizing_inject = 0.0;
    // Ideal-mode decoherence over each Clifford's wall-clock duration.
    bool ideal_decoherence = false;

    double demod_cutoff_hz = 250e6;
    double readout_delay_s = 120e-9;     // gap between last gate and readout
    double readout_duration_s = 1e-6;    // readout pulse span (full DDS)
    double readout_amplitude_fs = 0.3;   // readout tone, full-scale units
    double background_shift_hz = 2e9;    // twin-waveform carrier offset
    DistortionModel distortion;          // used in FullDds mode
    bool distortion_enabled = false;

    int jobs = 1;  // worker threads; results independent of the value

    nlohmann::json to_json() const;
    static RbConfig from_json(const nlohmann::json& j);
};

struct RbResult {
    std::vector<int> lengths;
    std::vector<double> survival_mean;
    std::vector<double> survival_se;
    std::vector<std::vector<double>> survival_per_seed;  // [length][seed]
    DecayFit fit;
    double epc = 0.0;
    double epg = 0.0;
    double epc_sigma = 0.0;
    double epg_sigma = 0.0;
    static constexpr double kMeanPrimitives = CliffordGroup::kMeanPrimitives;

    nlohmann::json to_json() const;
    void write_csv(const std::string& path) const;
};

// epc = (1-p)/2, epg = (1 - p^(1/1.875))/2, sigmas by linear propagation.
void derive_error_rates(RbResult& r);

// Full pipeline: per (length, seed) substream -> sequence -> primitive
// program -> one continuous waveform -> [droop] -> demodulate -> evolve ->
// survival; weighted decay fit over per-length means.
RbResult run_rb(const RbConfig& cfg, const DeviceModel& device,
                const CalibrationTable& cal, const DacConfig& dac,
                std::uint64_t master_seed);

enum class BetaObjective {
    Leakage,  // minimize |2> population after repeated [Xpi, X-pi] pairs
    Phase,    // null the residual z-phase via [X+pi/2 X-pi/2]^n amplification
};

struct TuneUpOptions {
    int max_iterations = 20;
    double angle_tolerance_rad = 1e-4;  // per-pulse convergence target
    BetaObjective beta_objective = BetaObjective::Leakage;
    bool tune_beta = true;
    int shots = 0;  // 0 = exact populations
};

struct TuneUpReport {
    int iterations = 0;
    double final_angle_error_rad = 0.0;
    double rabi_scan_a_pi = 0.0;
    bool beta_tuned = false;
    bool beta_landscape_flat = false;  // leakage contrast below resolution
    std::vector<std::string> log;
};

// Automated calibration against the simulated device: coarse Rabi scan,
// repeated-pulse amplitude amplification for a_pi (n = 1,3,...,11), pair
// trains for a_pi/2, then the beta search. Throws TuneUpError if the angle
// error has not converged within max_iterations.
CalibrationTable tune_up(const DeviceModel& device, const DacConfig& dac,
                         const CalibrationTable& initial,
                         const TuneUpOptions& opts, std::uint64_t seed,
                         TuneUpReport* report = nullptr);

enum class SweepParameter { GateLength, FullScaleFraction, SampleRate };

const char* to_string(SweepParameter p);

struct SweepRow {
    double value = 0.0;
    double epg = 0.0;
    double epg_sigma = 0.0;
    std::optional<double> coherence_limit;  // gate-length sweeps only
};

// Re-tunes per value for gate length and full scale; reuses the calibration
// across sample rates. Full-scale sweeps adjust rabi_rad_per_fullscale so
// the tuned pi pulse occupies the requested fraction.
std::vector<SweepRow> sweep(SweepParameter param,
                            std::span<const double> values,
                            const RbConfig& base_cfg, const DeviceModel& device,
                            const CalibrationTable& cal, const DacConfig& dac,
                            std::uint64_t master_seed);

void write_sweep_csv(const std::vector<SweepRow>& rows,
                     SweepParameter param, const std::string& path);

struct DistortionStudy {
    RbResult raw;        // normalized amplitude signal, droop uncorrected
    RbResult corrected;  // twin-background ratio correction
    double droop_at_readout_longest = 0.0;
};

// Runs full-DDS RB once, extracting both the raw amplitude-signal decay and
// the background-corrected population decay from the same sequences. The
// twin background waveform repeats the qubit program shifted in carrier by
// background_shift_hz.
DistortionStudy background_subtract_run(const RbConfig& cfg,
                                        const DeviceModel& device,
                                        const CalibrationTable& cal,
                                        const DacConfig& dac,
                                        std::uint64_t master_seed);

}  // namespace qdds
