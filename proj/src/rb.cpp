#include "qdds/rb.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <nlohmann/json.hpp>

#include "qdds/errors.hpp"
#include "qdds/noise.hpp"

namespace qdds {

const char* to_string(RbMode m) {
    switch (m) {
        case RbMode::Ideal: return "ideal";
        case RbMode::Hybrid: return "hybrid";
        case RbMode::FullDds: return "full_dds";
    }
    return "?";
}

RbMode rb_mode_from_string(const std::string& s) {
    if (s == "ideal") return RbMode::Ideal;
    if (s == "hybrid") return RbMode::Hybrid;
    if (s == "full_dds") return RbMode::FullDds;
    throw std::invalid_argument("unknown rb mode '" + s + "'");
}

namespace {

void check_config(const RbConfig& cfg) {
    if (cfg.lengths.empty()) throw std::invalid_argument("no sequence lengths");
    for (std::size_t i = 0; i < cfg.lengths.size(); ++i) {
        if (cfg.lengths[i] < 1 ||
            (i > 0 && cfg.lengths[i] <= cfg.lengths[i - 1])) {
            throw std::invalid_argument(
                "sequence lengths must be strictly increasing and >= 1");
        }
    }
    if (cfg.n_seeds < 1) throw std::invalid_argument("n_seeds must be >= 1");
    if (cfg.shots < 1) throw std::invalid_argument("shots must be >= 1");
    if (!(cfg.demod_cutoff_hz > 0)) {
        throw std::invalid_argument("demodulation cutoff must be positive");
    }
    if (cfg.readout_delay_s < 0 || cfg.readout_duration_s <= 0) {
        throw std::invalid_argument("bad readout timing");
    }
    if (!(cfg.readout_amplitude_fs > 0) || cfg.readout_amplitude_fs > 1) {
        throw std::invalid_argument("readout amplitude must be in (0, 1]");
    }
    if (cfg.jobs < 1) throw std::invalid_argument("jobs must be >= 1");
}

// Runs fn(0..n-1) on `jobs` workers. Task outputs are written into
// preallocated slots by index, so the reduction is deterministic no matter
// how the tasks interleave.
template <typename Fn>
void run_tasks(std::size_t n, int jobs, Fn&& fn) {
    if (jobs <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n || failed.load()) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
                failed.store(true);
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    const int n_workers = int(std::min<std::size_t>(jobs, n));
    pool.reserve(n_workers);
    for (int t = 0; t < n_workers; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

// Synthesize -> demodulate -> evolve over [t0, t_end) in overlapping chunks.
// Chunk cores tile the span; each window is padded by a whole number of
// decimation strides covering the FIR half-width, so every kept baseband
// sample equals its one-shot value and the output grid is seamless.
QuantumState evolve_pulse_chain(const std::vector<TimedPulse>& pulses,
                                double t0_s, double t_end_s, double carrier_hz,
                                double frame_hz, const DeviceModel& device,
                                const DacConfig& dac, double cutoff_hz,
                                QuantumState state, DistortionModel* model) {
    const double fs = dac.sample_rate_hz;
    const std::int64_t s0 = std::llround(t0_s * fs);
    const std::int64_t s_end = std::llround(t_end_s * fs);
    const std::int64_t n = s_end - s0;
    if (n <= 0) return state;

    const std::int64_t decim =
        std::max<std::int64_t>(1, std::int64_t(fs / (20.0 * cutoff_hz)));
    const std::int64_t half = std::int64_t(std::ceil(2.0 * fs / cutoff_hz));
    const std::int64_t pad = (half + decim - 1) / decim * decim;
    const std::int64_t core = std::max<std::int64_t>((1 << 16) / decim, 1) * decim;

    ToneSpec tone;
    tone.carrier_frequency_hz = carrier_hz;
    tone.anharmonicity_rad_s = device.anharmonicity_rad_s();
    tone.pulses = pulses;
    const std::span<const ToneSpec> tones{&tone, 1};

    for (std::int64_t a = 0; a < n; a += core) {
        const std::int64_t b = std::min(n, a + core);
        const std::int64_t wa = std::max<std::int64_t>(0, a - pad);
        const std::int64_t wb = std::min(n, b + pad);
        const SampledWaveform w = synthesize(
            tones, dac, double(s0 + wa) / fs, double(s0 + wb) / fs);

        const BasebandStream full = demodulate(w, frame_hz, cutoff_hz);
        BasebandStream kept;
        kept.sample_rate_hz = full.sample_rate_hz;
        const std::int64_t j0 = (a - wa) / decim;
        const std::int64_t j1 =
            std::min<std::int64_t>(std::int64_t(full.samples.size()),
                                   (b - wa + decim - 1) / decim);
        kept.samples.assign(full.samples.begin() + j0,
                            full.samples.begin() + j1);
        state = evolve(state, kept, frame_hz, device);

        if (model) {
            model->droop = advance_droop(
                *model, model->droop,
                std::span<const std::uint8_t>(w.activity).subspan(a - wa, b - a),
                1.0 / fs);
        }
    }
    return state;
}

std::vector<TimedPulse> program_pulses(const std::vector<PrimitiveGate>& prog,
                                       const CalibrationTable& cal,
                                       double t0_s) {
    const double g = cal.gate_duration_s();
    std::vector<TimedPulse> pulses;
    pulses.reserve(prog.size());
    for (std::size_t k = 0; k < prog.size(); ++k) {
        if (prog[k] == PrimitiveGate::Identity) continue;
        pulses.push_back({t0_s + double(k) * g, primitive_to_shape(prog[k], cal)});
    }
    return pulses;
}

// Constant-amplitude tone segment on the synthesizer's global sample grid.
SampledWaveform flat_tone(double f_hz, double amp_fs, const DacConfig& dac,
                          double t0_s, double t1_s) {
    const double fs = dac.sample_rate_hz;
    if (f_hz >= fs / 2) {
        std::ostringstream msg;
        msg << "readout tone at " << f_hz << " Hz violates the Nyquist limit "
            << fs / 2 << " Hz of the " << fs << " S/s converter";
        throw NyquistError(msg.str());
    }
    SampledWaveform w;
    w.sample_rate_hz = fs;
    w.bits = dac.bits;
    w.start_index = std::llround(t0_s * fs);
    w.t_start_s = double(w.start_index) / fs;
    const std::int64_t n = std::llround(t1_s * fs) - w.start_index;
    w.ideal.resize(std::max<std::int64_t>(n, 0));
    w.codes.resize(w.ideal.size());
    w.activity.assign(w.ideal.size(), 1);
    const double scale = w.code_scale();
    for (std::int64_t k = 0; k < n; ++k) {
        const double t = double(w.start_index + k) / fs;
        w.ideal[k] = amp_fs * std::cos(2 * M_PI * f_hz * t);
        const long long raw = std::llround(w.ideal[k] * scale);
        w.codes[k] = std::int16_t(std::clamp<long long>(
            raw, -(1LL << (dac.bits - 1)), (1LL << (dac.bits - 1)) - 1));
    }
    return w;
}

// Mean demodulated magnitude over the central part of a readout segment
// (FIR edge transients skipped), in full-scale units.
double readout_tone_amplitude(const SampledWaveform& w, double f_hz,
                              double cutoff_hz) {
    const BasebandStream s = demodulate(w, f_hz, cutoff_hz);
    const std::int64_t decim =
        std::max<std::int64_t>(1, std::int64_t(w.sample_rate_hz / (20.0 * cutoff_hz)));
    const std::int64_t half_out =
        (std::int64_t(std::ceil(2.0 * w.sample_rate_hz / cutoff_hz)) + decim - 1) /
        decim;
    std::int64_t lo = half_out, hi = std::int64_t(s.samples.size()) - half_out;
    if (hi <= lo) {
        lo = 0;
        hi = std::int64_t(s.samples.size());
    }
    double acc = 0.0;
    for (std::int64_t j = lo; j < hi; ++j) acc += std::abs(s.samples[j]);
    return acc / double(hi - lo);
}

double binomial_fraction(double p, int shots, Rng& rng) {
    int k = 0;
    for (int s = 0; s < shots; ++s) k += rng.bernoulli(p) ? 1 : 0;
    return double(k) / double(shots);
}

struct FullDdsOutcome {
    double raw = 0.0;        // normalized readout amplitude signal
    double corrected = 0.0;  // background-ratio survival estimate
    double droop_at_readout = 0.0;
};

// One full-DDS sequence: gate chain, readout delay, flat readout tone with
// droop applied, plus (optionally) the twin background arm whose qubit tone
// is shifted off resonance. The background's drive activity is identical by
// construction, so its droop reproduces the signal arm's.
FullDdsOutcome simulate_full_dds(const std::vector<PrimitiveGate>& prog,
                                 const RbConfig& cfg, const DeviceModel& device,
                                 const CalibrationTable& cal,
                                 const DacConfig& dac, Rng& rng,
                                 bool with_background) {
    const double g = cal.gate_duration_s();
    const double t_chain_end = double(prog.size()) * g;
    const double t_ro = t_chain_end + cfg.readout_delay_s;
    const double s0 = device.readout_s0, s1 = device.readout_s1;

    DistortionModel signal_model = cfg.distortion;
    DistortionModel* model = cfg.distortion_enabled ? &signal_model : nullptr;

    const auto pulses = program_pulses(prog, cal, 0.0);
    QuantumState state = evolve_pulse_chain(
        pulses, 0.0, t_chain_end, device.f01_hz, device.f01_hz, device, dac,
        cfg.demod_cutoff_hz, QuantumState::ground(device.levels), model);
    state = idle_evolve(state, cfg.readout_delay_s, device);
    if (model) {
        model->droop *= std::exp(-cfg.readout_delay_s / model->tau_s);
    }

    FullDdsOutcome out;
    out.droop_at_readout = model ? model->droop : 0.0;

    SampledWaveform ro = flat_tone(device.f_readout_hz, cfg.readout_amplitude_fs,
                                   dac, t_ro, t_ro + cfg.readout_duration_s);
    if (model) ro = apply_distortion(ro, *model, ro.activity);
    const double a_wave =
        readout_tone_amplitude(ro, device.f_readout_hz, cfg.demod_cutoff_hz);

    const double p_exc = cfg.exact_population
                             ? state.p_excited()
                             : binomial_fraction(state.p_excited(), cfg.shots, rng);
    const double a_meas =
        a_wave / cfg.readout_amplitude_fs * (s0 + (s1 - s0) * p_exc);
    out.raw = a_meas / s0;

    if (!with_background) {
        // Instrument inversion without a background reference: exact when
        // the channel is undistorted, droop-biased otherwise.
        const double p_est =
            std::clamp((a_meas - s0) / (s1 - s0), 0.0, 1.0);
        out.corrected = 1.0 - p_est;
        return out;
    }

    // Background twin: identical program, qubit tone shifted off resonance.
    // Drive activity does not depend on carrier, so the twin's droop history
    // matches the signal arm's; its qubit stays (almost) in the ground state.
    const double f_bg = device.f01_hz + cfg.background_shift_hz;
    DistortionModel bg_model_storage = cfg.distortion;
    DistortionModel* bg_model = cfg.distortion_enabled ? &bg_model_storage : nullptr;
    QuantumState bg_state = evolve_pulse_chain(
        pulses, 0.0, t_chain_end, f_bg, f_bg, device, dac, cfg.demod_cutoff_hz,
        QuantumState::ground(device.levels), bg_model);
    bg_state = idle_evolve(bg_state, cfg.readout_delay_s, device);
    if (bg_model) {
        bg_model->droop *= std::exp(-cfg.readout_delay_s / bg_model->tau_s);
    }
    SampledWaveform bg_ro =
        flat_tone(device.f_readout_hz, cfg.readout_amplitude_fs, dac, t_ro,
                  t_ro + cfg.readout_duration_s);
    if (bg_model) bg_ro = apply_distortion(bg_ro, *bg_model, bg_ro.activity);
    const double bg_wave =
        readout_tone_amplitude(bg_ro, device.f_readout_hz, cfg.demod_cutoff_hz);
    const double p_exc_bg =
        cfg.exact_population
            ? bg_state.p_excited()
            : binomial_fraction(bg_state.p_excited(), cfg.shots, rng);
    const double a_bg =
        bg_wave / cfg.readout_amplitude_fs * (s0 + (s1 - s0) * p_exc_bg);
    if (!(a_bg > 0)) {
        throw std::runtime_error("background readout amplitude is not positive");
    }
    const double p_corr =
        std::clamp((a_meas / a_bg * s0 - s0) / (s1 - s0), 0.0, 1.0);
    out.corrected = 1.0 - p_corr;
    return out;
}

double simulate_ideal(const RbSequence& seq, const RbConfig& cfg,
                      const DeviceModel& device, const CalibrationTable& cal,
                      Rng& rng) {
    const auto& group = CliffordGroup::instance();
    Eigen::MatrixXcd rho = Eigen::MatrixXcd::Zero(2, 2);
    rho(0, 0) = 1.0;
    const double g = cal.gate_duration_s();
    DeviceModel dev2 = device;
    dev2.levels = 2;
    auto apply = [&](int index) {
        const Eigen::Matrix2cd& u = group.element(index).unitary;
        rho = u * rho * u.adjoint();
        if (cfg.ideal_decoherence) {
            const double span = double(group.decomposition(index).size()) * g;
            rho = idle_evolve(QuantumState(rho), span, dev2).rho();
        }
        if (cfg.depolarizing_inject > 0.0) {
            const double lam = cfg.depolarizing_inject;
            rho = (1.0 - lam) * rho +
                  lam * 0.5 * Eigen::MatrixXcd::Identity(2, 2);
        }
    };
    for (int idx : seq.indices) apply(idx);
    apply(seq.recovery);

    const QuantumState state{std::move(rho)};
    if (cfg.exact_population) return expected_survival(state, device);
    int survived = 0;
    for (int s = 0; s < cfg.shots; ++s) {
        survived += measure(state, device, rng) == 0 ? 1 : 0;
    }
    return double(survived) / double(cfg.shots);
}

double simulate_hybrid(const std::vector<PrimitiveGate>& prog,
                       const RbConfig& cfg, const DeviceModel& device,
                       const CalibrationTable& cal, const DacConfig& dac,
                       Rng& rng) {
    const double t_end = double(prog.size()) * cal.gate_duration_s();
    QuantumState state = evolve_pulse_chain(
        program_pulses(prog, cal, 0.0), 0.0, t_end, device.f01_hz,
        device.f01_hz, device, dac, cfg.demod_cutoff_hz,
        QuantumState::ground(device.levels), nullptr);
    state = idle_evolve(state, cfg.readout_delay_s, device);
    if (cfg.exact_population) return expected_survival(state, device);
    int survived = 0;
    for (int s = 0; s < cfg.shots; ++s) {
        survived += measure(state, device, rng) == 0 ? 1 : 0;
    }
    return double(survived) / double(cfg.shots);
}

void reduce_result(RbResult& r, const RbConfig& cfg,
                   const std::vector<std::vector<double>>& per_seed) {
    r.lengths = cfg.lengths;
    r.survival_per_seed = per_seed;
    const std::size_t nl = cfg.lengths.size();
    r.survival_mean.resize(nl);
    r.survival_se.resize(nl);
    for (std::size_t li = 0; li < nl; ++li) {
        const auto& row = per_seed[li];
        double mean = 0.0;
        for (double v : row) mean += v;
        mean /= double(row.size());
        double var = 0.0;
        for (double v : row) var += (v - mean) * (v - mean);
        var = row.size() > 1 ? var / double(row.size() - 1) : 0.0;
        r.survival_mean[li] = mean;
        r.survival_se[li] = std::sqrt(var / double(row.size()));
    }
    std::vector<double> m(nl), err(nl);
    for (std::size_t li = 0; li < nl; ++li) {
        m[li] = double(cfg.lengths[li]);
        err[li] = std::max(r.survival_se[li], 1e-9);
    }
    r.fit = fit_decay(m, r.survival_mean, err);
    derive_error_rates(r);
}

}  // namespace

void derive_error_rates(RbResult& r) {
    const double p = r.fit.p;
    const double inv_ng = 1.0 / RbResult::kMeanPrimitives;
    r.epc = 0.5 * (1.0 - p);
    r.epg = 0.5 * (1.0 - std::pow(p, inv_ng));
    r.epc_sigma = 0.5 * r.fit.sigma_p();
    r.epg_sigma = 0.5 * inv_ng * std::pow(p, inv_ng - 1.0) * r.fit.sigma_p();
}

RbResult run_rb(const RbConfig& cfg, const DeviceModel& device,
                const CalibrationTable& cal, const DacConfig& dac,
                std::uint64_t master_seed) {
    check_config(cfg);
    device.validate();
    dac.validate();
    CliffordGroup::instance();  // build tables before workers spawn

    const std::size_t nl = cfg.lengths.size();
    std::vector<std::vector<double>> per_seed(
        nl, std::vector<double>(cfg.n_seeds, 0.0));

    run_tasks(nl * cfg.n_seeds, cfg.jobs, [&](std::size_t task) {
        const std::size_t li = task / cfg.n_seeds;
        const std::size_t si = task % cfg.n_seeds;
        Rng rng = Rng::substream(master_seed, task);
        const RbSequence seq =
            generate_sequence(cfg.lengths[li], rng.next_u64());
        double survival = 0.0;
        switch (cfg.mode) {
            case RbMode::Ideal:
                survival = simulate_ideal(seq, cfg, device, cal, rng);
                break;
            case RbMode::Hybrid:
                survival = simulate_hybrid(sequence_primitives(seq), cfg,
                                           device, cal, dac, rng);
                break;
            case RbMode::FullDds:
                survival = simulate_full_dds(sequence_primitives(seq), cfg,
                                             device, cal, dac, rng, false)
                               .corrected;
                break;
        }
        per_seed[li][si] = survival;
    });

    RbResult r;
    reduce_result(r, cfg, per_seed);
    return r;
}

DistortionStudy background_subtract_run(const RbConfig& cfg,
                                        const DeviceModel& device,
                                        const CalibrationTable& cal,
                                        const DacConfig& dac,
                                        std::uint64_t master_seed) {
    check_config(cfg);
    device.validate();
    dac.validate();
    if (cfg.mode != RbMode::FullDds) {
        throw std::invalid_argument(
            "background subtraction requires full_dds mode");
    }
    CliffordGroup::instance();

    const std::size_t nl = cfg.lengths.size();
    std::vector<std::vector<double>> raw(nl,
                                         std::vector<double>(cfg.n_seeds, 0.0));
    std::vector<std::vector<double>> corr(
        nl, std::vector<double>(cfg.n_seeds, 0.0));
    std::vector<double> droops(nl * cfg.n_seeds, 0.0);

    run_tasks(nl * cfg.n_seeds, cfg.jobs, [&](std::size_t task) {
        const std::size_t li = task / cfg.n_seeds;
        const std::size_t si = task % cfg.n_seeds;
        Rng rng = Rng::substream(master_seed, task);
        const RbSequence seq =
            generate_sequence(cfg.lengths[li], rng.next_u64());
        const FullDdsOutcome o = simulate_full_dds(
            sequence_primitives(seq), cfg, device, cal, dac, rng, true);
        raw[li][si] = o.raw;
        corr[li][si] = o.corrected;
        droops[task] = o.droop_at_readout;
    });

    DistortionStudy study;
    reduce_result(study.raw, cfg, raw);
    reduce_result(study.corrected, cfg, corr);
    study.droop_at_readout_longest = droops[(nl - 1) * cfg.n_seeds];
    return study;
}

namespace {
// Linear least squares d = intercept + slope * x.
double fit_slope(std::span<const double> x, std::span<const double> d) {
    const double n = double(x.size());
    double sx = 0, sd = 0, sxx = 0, sxd = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sd += d[i];
        sxx += x[i] * x[i];
        sxd += x[i] * d[i];
    }
    return (n * sxd - sx * sd) / (n * sxx - sx * sx);
}

class TuneProbe {
  public:
    TuneProbe(const DeviceModel& device, const DacConfig& dac, double cutoff,
              int shots, std::uint64_t seed)
        : device_(device), dac_(dac), cutoff_(cutoff), shots_(shots),
          rng_(Rng::substream(seed, 0x70ull)) {}

    // Excited-state probability after the pulse train (one pulse per gate
    // slot), starting from the ground state. offset_slots shifts the train
    // on the global sample grid, changing each pulse's sampling phase.
    double p_excited(const std::vector<PulseShape>& train,
                     const CalibrationTable& cal, int offset_slots = 0) {
        std::vector<TimedPulse> pulses;
        const double g = cal.gate_duration_s();
        for (std::size_t k = 0; k < train.size(); ++k) {
            if (train[k].amplitude != 0.0) {
                pulses.push_back({double(offset_slots + k) * g, train[k]});
            }
        }
        QuantumState state = evolve_pulse_chain(
            pulses, double(offset_slots) * g,
            double(offset_slots + train.size()) * g, device_.f01_hz,
            device_.f01_hz, device_, dac_, cutoff_,
            QuantumState::ground(device_.levels), nullptr);
        const double p = state.p_excited();
        return shots_ > 0 ? binomial_fraction(p, shots_, rng_) : p;
    }

    // Number of distinct sampling-phase offsets available: 1 when the gate
    // spans an integer number of samples (every slot aliases to the same
    // phase), else a small average to smooth quantization staircase steps.
    int phase_offsets(const CalibrationTable& cal) const {
        const double g_samples = cal.gate_duration_s() * dac_.sample_rate_hz;
        return std::abs(g_samples - std::round(g_samples)) < 1e-9 ? 1 : 3;
    }

    double leakage(const std::vector<PulseShape>& train,
                   const CalibrationTable& cal) {
        std::vector<TimedPulse> pulses;
        const double g = cal.gate_duration_s();
        for (std::size_t k = 0; k < train.size(); ++k) {
            pulses.push_back({double(k) * g, train[k]});
        }
        QuantumState state = evolve_pulse_chain(
            pulses, 0.0, double(train.size()) * g, device_.f01_hz,
            device_.f01_hz, device_, dac_, cutoff_,
            QuantumState::ground(device_.levels), nullptr);
        return state.population(2);
    }

  private:
    const DeviceModel& device_;
    const DacConfig& dac_;
    double cutoff_;
    int shots_;
    Rng rng_;
};

PulseShape shaped(const CalibrationTable& cal, double amplitude,
                  double phase) {
    PulseShape s;
    s.sigma_s = cal.sigma_s;
    s.truncation = cal.truncation;
    s.buffer_after_s = cal.buffer_s;
    s.drag_coefficient = cal.beta;
    s.amplitude = amplitude;
    s.phase_rad = phase;
    return s;
}

// Drives the measured per-pulse angle error inside tolerance by adjusting
// the pulse amplitude. Proportional feedback until the error changes sign,
// then bisection of the bracket: quantization makes the response a fine
// staircase around a steep linear trend, and bisection homes onto a plateau
// below tolerance instead of hopping across the zero crossing.
template <typename Measure>
double converge_amplitude(double a, double target_angle, Measure&& measure,
                          const TuneUpOptions& opts, const char* name,
                          TuneUpReport& rep) {
    double lo = 0.0, hi = 0.0;  // bracket amplitudes: d(lo) < 0 < d(hi)
    bool have_lo = false, have_hi = false;
    for (int it = 0; it < opts.max_iterations; ++it) {
        const double d = measure(a);
        ++rep.iterations;
        rep.final_angle_error_rad = std::abs(d);
        rep.log.push_back(std::string(name) + " iteration: angle error " +
                          std::to_string(d));
        if (std::abs(d) < opts.angle_tolerance_rad) return a;
        if (d < 0) {
            lo = a;
            have_lo = true;
        } else {
            hi = a;
            have_hi = true;
        }
        double a_next;
        if (have_lo && have_hi) {
            a_next = 0.5 * (lo + hi);
        } else {
            a_next = std::clamp(a * target_angle / (target_angle + d),
                                a * 0.67, a * 1.5);
        }
        a = std::clamp(a_next, 0.0, 1.0);
    }
    throw TuneUpError(std::string(name) +
                      " amplitude did not converge within " +
                      std::to_string(opts.max_iterations) + " iterations");
}

// Steps 1-3 of the calibration: optional coarse Rabi scan, then repeated
// pulse trains amplifying the per-pulse angle error for a_pi and a_pi_2.
void tune_amplitudes(CalibrationTable& cal, TuneProbe& probe,
                     const DeviceModel& device, const TuneUpOptions& opts,
                     bool scan, TuneUpReport& rep) {
    const double unit_area = envelope_unit_area(cal.sigma_s, cal.truncation);
    if (scan || !cal.a_pi) {
        const double a_guess = cal.a_pi.value_or(
            M_PI / (device.rabi_rad_per_fullscale * unit_area));
        // +-50% grid keeps a +-30% initial error well inside, then a
        // parabolic refinement of the population peak.
        const int n_grid = 21;
        std::vector<double> amps(n_grid), pops(n_grid);
        int best = 0;
        for (int i = 0; i < n_grid; ++i) {
            const double a = std::min(
                1.0, a_guess * (0.5 + 1.0 * double(i) / double(n_grid - 1)));
            amps[i] = a;
            pops[i] = probe.p_excited({shaped(cal, a, 0.0)}, cal);
            if (pops[i] > pops[best]) best = i;
        }
        double a_best = amps[best];
        if (best > 0 && best + 1 < n_grid) {
            const double d1 = pops[best + 1] - pops[best - 1];
            const double d2 =
                pops[best + 1] - 2.0 * pops[best] + pops[best - 1];
            if (d2 < 0) {
                const double h = amps[best + 1] - amps[best];
                a_best = amps[best] - 0.5 * h * d1 / d2;
            }
        }
        cal.a_pi = std::clamp(a_best, 0.0, 1.0);
        rep.rabi_scan_a_pi = *cal.a_pi;
        rep.log.push_back("rabi scan: a_pi = " + std::to_string(*cal.a_pi));
    }

    const std::vector<double> reps = {1, 3, 5, 7, 9, 11};
    const int n_offsets = probe.phase_offsets(cal);

    // X/2 then n X pulses, n odd: 1 - 2 P_exc = sin(dtheta_half + n dtheta),
    // so the slope over n is the per-pulse angle error of the pi pulse.
    cal.a_pi = converge_amplitude(
        *cal.a_pi, M_PI,
        [&](double a) {
            double acc = 0.0;
            for (int off = 0; off < n_offsets; ++off) {
                std::vector<double> d(reps.size());
                for (std::size_t i = 0; i < reps.size(); ++i) {
                    std::vector<PulseShape> train = {shaped(cal, a / 2, 0.0)};
                    for (int k = 0; k < int(reps[i]); ++k) {
                        train.push_back(shaped(cal, a, 0.0));
                    }
                    d[i] = 1.0 - 2.0 * probe.p_excited(train, cal, off);
                }
                acc += fit_slope(reps, d);
            }
            return acc / n_offsets;
        },
        opts, "pi", rep);

    // Odd trains of X/2 pulses (an X/2 followed by pulse pairs): deviation
    // k * dtheta with a k-dependent sign.
    if (!cal.a_pi_2) cal.a_pi_2 = *cal.a_pi / 2;
    cal.a_pi_2 = converge_amplitude(
        *cal.a_pi_2, M_PI / 2,
        [&](double a) {
            double acc = 0.0;
            for (int off = 0; off < n_offsets; ++off) {
                std::vector<double> d(reps.size());
                for (std::size_t i = 0; i < reps.size(); ++i) {
                    const int k = int(reps[i]);
                    std::vector<PulseShape> train(k, shaped(cal, a, 0.0));
                    const double sign = (k % 4 == 1) ? 1.0 : -1.0;
                    d[i] = sign * (2.0 * probe.p_excited(train, cal, off) - 1.0);
                }
                acc += fit_slope(reps, d);
            }
            return acc / n_offsets;
        },
        opts, "pi/2", rep);
}
}  // namespace

CalibrationTable tune_up(const DeviceModel& device, const DacConfig& dac,
                         const CalibrationTable& initial,
                         const TuneUpOptions& opts, std::uint64_t seed,
                         TuneUpReport* report) {
    device.validate();
    dac.validate();
    CalibrationTable cal = initial;
    TuneUpReport local;
    TuneUpReport& rep = report ? *report : local;
    rep = TuneUpReport{};
    const double cutoff = 250e6;
    TuneProbe probe(device, dac, cutoff, opts.shots, seed);

    tune_amplitudes(cal, probe, device, opts, true, rep);

    if (opts.tune_beta && device.levels == 3) {
        if (opts.beta_objective == BetaObjective::Leakage) {
            // Minimize |2> population after repeated [X+pi, X-pi] pairs.
            auto leak_of = [&](double beta) {
                CalibrationTable c = cal;
                c.beta = beta;
                std::vector<PulseShape> train;
                for (int pair = 0; pair < 4; ++pair) {
                    train.push_back(shaped(c, *c.a_pi, 0.0));
                    train.push_back(shaped(c, -*c.a_pi, 0.0));
                }
                return probe.leakage(train, c);
            };
            double lo = 0.0, hi = 2.0;
            double probe_min = 1e300, probe_max = -1e300;
            for (double b : {0.0, 0.5, 1.0, 1.5, 2.0}) {
                const double v = leak_of(b);
                probe_min = std::min(probe_min, v);
                probe_max = std::max(probe_max, v);
            }
            const double resolution =
                opts.shots > 0 ? 1.0 / double(opts.shots) : 1e-14;
            if (probe_max - probe_min < resolution) {
                rep.beta_landscape_flat = true;
                rep.log.push_back("beta: leakage landscape flat, kept " +
                                  std::to_string(cal.beta));
            } else {
                const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
                double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
                double f1 = leak_of(x1), f2 = leak_of(x2);
                for (int it = 0; it < 40 && hi - lo > 1e-4; ++it) {
                    if (f1 < f2) {
                        hi = x2;
                        x2 = x1;
                        f2 = f1;
                        x1 = hi - gr * (hi - lo);
                        f1 = leak_of(x1);
                    } else {
                        lo = x1;
                        x1 = x2;
                        f1 = f2;
                        x2 = lo + gr * (hi - lo);
                        f2 = leak_of(x2);
                    }
                }
                cal.beta = 0.5 * (lo + hi);
                rep.beta_tuned = true;
                rep.log.push_back("beta (leakage objective): " +
                                  std::to_string(cal.beta));
            }
        } else {
            // Null the residual z-phase per pulse: prepare with Y/2, then n
            // [X+pi/2, X-pi/2] pairs. Amplitude errors cancel within a pair;
            // the per-pair phase error tips <z> proportionally to n near the
            // null. Far from it the accumulated phase wraps, so locate the
            // sign change on a coarse grid with short trains first, then
            // bisect with deeper trains.
            auto phase_slope = [&](double beta,
                                   const std::vector<double>& pairs) {
                CalibrationTable c = cal;
                c.beta = beta;
                std::vector<double> d(pairs.size());
                for (std::size_t i = 0; i < pairs.size(); ++i) {
                    std::vector<PulseShape> train = {
                        shaped(c, *c.a_pi_2, M_PI / 2)};
                    for (int k = 0; k < int(pairs[i]); ++k) {
                        train.push_back(shaped(c, *c.a_pi_2, 0.0));
                        train.push_back(shaped(c, -*c.a_pi_2, 0.0));
                    }
                    d[i] = 2.0 * probe.p_excited(train, c) - 1.0;
                }
                return fit_slope(pairs, d);
            };
            const std::vector<double> shallow = {1, 3, 5};
            const std::vector<double> deep = {2, 6, 10};
            const std::vector<double> grid = {0.0, 0.25, 0.5,  0.75,
                                              1.0, 1.25, 1.5};
            std::vector<double> s(grid.size());
            for (std::size_t i = 0; i < grid.size(); ++i) {
                s[i] = phase_slope(grid[i], shallow);
            }
            int bracket = -1;
            double bracket_mag = 1e300;
            for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
                if (s[i] == 0.0 || (s[i] < 0) != (s[i + 1] < 0)) {
                    const double mag =
                        std::min(std::abs(s[i]), std::abs(s[i + 1]));
                    if (mag < bracket_mag) {
                        bracket_mag = mag;
                        bracket = int(i);
                    }
                }
            }
            if (bracket < 0) {
                rep.beta_landscape_flat = true;
                rep.log.push_back("beta: phase signal has no zero crossing, "
                                  "kept " +
                                  std::to_string(cal.beta));
            } else {
                double lo = grid[bracket], hi = grid[bracket + 1];
                double s_lo = phase_slope(lo, deep);
                for (int it = 0; it < 12 && hi - lo > 1e-3; ++it) {
                    const double mid = 0.5 * (lo + hi);
                    const double s_mid = phase_slope(mid, deep);
                    if ((s_mid < 0) == (s_lo < 0)) {
                        lo = mid;
                        s_lo = s_mid;
                    } else {
                        hi = mid;
                    }
                }
                cal.beta = 0.5 * (lo + hi);
                rep.beta_tuned = true;
                rep.log.push_back("beta (phase objective): " +
                                  std::to_string(cal.beta));
            }
        }
        if (rep.beta_tuned) {
            // Opportunistic re-trim of both amplitudes at the final beta.
            // The official convergence already happened above; if the
            // re-trim cannot beat the quantization staircase floor at the
            // new beta, the last converged amplitudes stand.
            const double official_error = rep.final_angle_error_rad;
            try {
                tune_amplitudes(cal, probe, device, opts, false, rep);
            } catch (const TuneUpError&) {
                rep.final_angle_error_rad = official_error;
                rep.log.push_back(
                    "re-trim at tuned beta stalled on the quantization "
                    "staircase, keeping converged amplitudes");
            }
        }
    } else if (opts.tune_beta) {
        rep.beta_landscape_flat = true;
        rep.log.push_back("beta: 2-level device, leakage unobservable");
    }

    return cal;
}

const char* to_string(SweepParameter p) {
    switch (p) {
        case SweepParameter::GateLength: return "gate_length";
        case SweepParameter::FullScaleFraction: return "full_scale_fraction";
        case SweepParameter::SampleRate: return "sample_rate";
    }
    return "?";
}

std::vector<SweepRow> sweep(SweepParameter param,
                            std::span<const double> values,
                            const RbConfig& base_cfg, const DeviceModel& device,
                            const CalibrationTable& cal, const DacConfig& dac,
                            std::uint64_t master_seed) {
    std::vector<SweepRow> rows;
    rows.reserve(values.size());

    // One calibration for all sample rates; gate-length and full-scale
    // points are re-tuned at their own operating point.
    TuneUpOptions tune_opts;
    tune_opts.beta_objective = BetaObjective::Phase;
    std::optional<CalibrationTable> rate_shared_cal;

    for (std::size_t i = 0; i < values.size(); ++i) {
        const double v = values[i];
        try {
            DeviceModel dev = device;
            DacConfig d = dac;
            CalibrationTable c = cal;
            std::optional<double> limit;
            const std::uint64_t tune_seed =
                Rng::substream(master_seed, 1000000 + i).next_u64();
            const std::uint64_t rb_seed =
                Rng::substream(master_seed, 2000000 + i).next_u64();

            switch (param) {
                case SweepParameter::GateLength: {
                    const double span = v - c.buffer_s;
                    if (!(span > 0)) {
                        throw std::invalid_argument(
                            "gate length must exceed the buffer");
                    }
                    c.sigma_s = span / c.truncation;
                    c.a_pi.reset();
                    c.a_pi_2.reset();
                    c = tune_up(dev, d, c, tune_opts, tune_seed, nullptr);
                    limit = coherence_limit_epg(v, dev);
                    break;
                }
                case SweepParameter::FullScaleFraction: {
                    if (!(v > 0) || v > 1) {
                        throw std::invalid_argument(
                            "full-scale fraction must be in (0, 1]");
                    }
                    dev.rabi_rad_per_fullscale =
                        M_PI / (v * envelope_unit_area(c.sigma_s, c.truncation));
                    c.a_pi.reset();
                    c.a_pi_2.reset();
                    c = tune_up(dev, d, c, tune_opts, tune_seed, nullptr);
                    break;
                }
                case SweepParameter::SampleRate: {
                    d.sample_rate_hz = v;
                    if (!rate_shared_cal) {
                        CalibrationTable base = c;
                        base.a_pi.reset();
                        base.a_pi_2.reset();
                        rate_shared_cal = tune_up(
                            dev, dac, base, tune_opts,
                            Rng::substream(master_seed, 1000000).next_u64(),
                            nullptr);
                    }
                    c = *rate_shared_cal;
                    break;
                }
            }

            const RbResult r = run_rb(base_cfg, dev, c, d, rb_seed);
            rows.push_back({v, r.epg, r.epg_sigma, limit});
        } catch (const std::exception& e) {
            throw std::runtime_error(std::string(to_string(param)) + " = " +
                                     std::to_string(v) + ": " + e.what());
        }
    }
    return rows;
}

void write_sweep_csv(const std::vector<SweepRow>& rows, SweepParameter param,
                     const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << to_string(param) << ",epg,epg_sigma,coherence_limit_epg\n";
    char line[160];
    for (const auto& r : rows) {
        if (r.coherence_limit) {
            std::snprintf(line, sizeof line, "%.9e,%.9e,%.9e,%.9e\n", r.value,
                          r.epg, r.epg_sigma, *r.coherence_limit);
        } else {
            std::snprintf(line, sizeof line, "%.9e,%.9e,%.9e,\n", r.value,
                          r.epg, r.epg_sigma);
        }
        out << line;
    }
}

nlohmann::json RbConfig::to_json() const {
    return {{"lengths", lengths},
            {"n_seeds", n_seeds},
            {"shots", shots},
            {"mode", to_string(mode)},
            {"exact_population", exact_population},
            {"depolarizing_inject", depolarizing_inject},
            {"ideal_decoherence", ideal_decoherence},
            {"demod_cutoff_hz", demod_cutoff_hz},
            {"readout_delay_s", readout_delay_s},
            {"readout_duration_s", readout_duration_s},
            {"readout_amplitude_fs", readout_amplitude_fs},
            {"background_shift_hz", background_shift_hz},
            {"distortion",
             {{"tau_s", distortion.tau_s}, {"d_sat", distortion.d_sat}}},
            {"distortion_enabled", distortion_enabled},
            {"jobs", jobs}};
}

RbConfig RbConfig::from_json(const nlohmann::json& j) {
    static const std::vector<std::string> known = {
        "lengths",           "n_seeds",
        "shots",             "mode",
        "exact_population",  "depolarizing_inject",
        "ideal_decoherence", "demod_cutoff_hz",
        "readout_delay_s",   "readout_duration_s",
        "readout_amplitude_fs", "background_shift_hz",
        "distortion",        "distortion_enabled",
        "jobs"};
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (std::find(known.begin(), known.end(), it.key()) == known.end()) {
            throw std::invalid_argument("unknown rb config key '" + it.key() +
                                        "'");
        }
    }
    RbConfig c;
    c.lengths = j.value("lengths", c.lengths);
    c.n_seeds = j.value("n_seeds", c.n_seeds);
    c.shots = j.value("shots", c.shots);
    if (j.contains("mode")) {
        c.mode = rb_mode_from_string(j.at("mode").get<std::string>());
    }
    c.exact_population = j.value("exact_population", c.exact_population);
    c.depolarizing_inject =
        j.value("depolarizing_inject", c.depolarizing_inject);
    c.ideal_decoherence = j.value("ideal_decoherence", c.ideal_decoherence);
    c.demod_cutoff_hz = j.value("demod_cutoff_hz", c.demod_cutoff_hz);
    c.readout_delay_s = j.value("readout_delay_s", c.readout_delay_s);
    c.readout_duration_s = j.value("readout_duration_s", c.readout_duration_s);
    c.readout_amplitude_fs =
        j.value("readout_amplitude_fs", c.readout_amplitude_fs);
    c.background_shift_hz =
        j.value("background_shift_hz", c.background_shift_hz);
    if (j.contains("distortion")) {
        const auto& d = j.at("distortion");
        for (auto it = d.begin(); it != d.end(); ++it) {
            if (it.key() != "tau_s" && it.key() != "d_sat") {
                throw std::invalid_argument("unknown distortion key '" +
                                            it.key() + "'");
            }
        }
        c.distortion.tau_s = d.value("tau_s", c.distortion.tau_s);
        c.distortion.d_sat = d.value("d_sat", c.distortion.d_sat);
    }
    c.distortion_enabled = j.value("distortion_enabled", c.distortion_enabled);
    c.jobs = j.value("jobs", c.jobs);
    check_config(c);
    return c;
}

nlohmann::json RbResult::to_json() const {
    nlohmann::json cov = nlohmann::json::array();
    for (int r = 0; r < 3; ++r) {
        cov.push_back({fit.covariance(r, 0), fit.covariance(r, 1),
                       fit.covariance(r, 2)});
    }
    return {{"lengths", lengths},
            {"survival_mean", survival_mean},
            {"survival_se", survival_se},
            {"survival_per_seed", survival_per_seed},
            {"fit",
             {{"a", fit.a},
              {"p", fit.p},
              {"b", fit.b},
              {"sigma_a", fit.sigma_a()},
              {"sigma_p", fit.sigma_p()},
              {"sigma_b", fit.sigma_b()},
              {"chi2", fit.chi2},
              {"iterations", fit.iterations},
              {"converged", fit.converged},
              {"decay_resolved", fit.decay_resolved},
              {"at_bound", fit.at_bound},
              {"covariance", cov}}},
            {"epc", epc},
            {"epg", epg},
            {"epc_sigma", epc_sigma},
            {"epg_sigma", epg_sigma},
            {"n_g", kMeanPrimitives}};
}

void RbResult::write_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << "m,survival_mean,survival_se";
    const std::size_t n_seeds =
        survival_per_seed.empty() ? 0 : survival_per_seed[0].size();
    for (std::size_t s = 0; s < n_seeds; ++s) out << ",seed" << s;
    out << '\n';
    for (std::size_t li = 0; li < lengths.size(); ++li) {
        out << lengths[li] << ',' << survival_mean[li] << ','
            << survival_se[li];
        for (double v : survival_per_seed[li]) out << ',' << v;
        out << '\n';
    }
}

}  // namespace qdds
