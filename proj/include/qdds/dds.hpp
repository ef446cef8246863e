#pragma once

#include <complex>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "qdds/pulse.hpp"

namespace qdds {

// Hardware sample rates the synthesizer is known to support; any other
// positive rate is usable but flagged non-standard.
bool is_standard_sample_rate(double rate_hz);

struct DacConfig {
    double sample_rate_hz = 65e9;
    int bits = 8;             // vertical resolution; codes are 2's complement
    double full_scale = 1.0;  // amplitude units mapped onto the code range

    int code_min() const { return -(1 << (bits - 1)); }
    int code_max() const { return (1 << (bits - 1)) - 1; }

    // Throws std::invalid_argument for bits < 2 or bits > 16 or non-positive
    // rate/full_scale. Returns true if the rate is one of the standard ones.
    bool validate() const;
};

struct TimedPulse {
    double start_s = 0.0;
    PulseShape shape;
};

struct ToneSpec {
    double carrier_frequency_hz = 0.0;
    double phase_origin_rad = 0.0;
    // Anharmonicity for the DRAG quadrature of this tone's pulses.
    double anharmonicity_rad_s = 2.3561944901923448e9;  // 2*pi*375 MHz
    std::vector<TimedPulse> pulses;
};

enum class PhaseReference {
    Global,        // carrier phase from absolute time; segments concatenate
    SegmentLocal,  // phase restarts at the segment origin (deliberate reset)
};

struct SynthesisOptions {
    PhaseReference phase_reference = PhaseReference::Global;
    double activity_threshold = 1e-3;  // of full scale, on summed |envelope|
};

struct SampledWaveform {
    std::vector<std::int16_t> codes;
    std::vector<double> ideal;      // pre-quantization, full-scale units
    std::vector<std::uint8_t> activity;  // per-sample drive indicator
    double sample_rate_hz = 0.0;
    double t_start_s = 0.0;
    std::int64_t start_index = 0;   // global sample index of codes[0]
    int bits = 8;

    std::size_t size() const { return codes.size(); }
    double code_scale() const { return double(1 << (bits - 1)); }
};

// Samples sum(tones) over [t_start, t_end): sample k sits at global index
// start_index + k and time (start_index + k)/rate, which makes abutting
// segment synthesis bit-identical to one-shot synthesis.
// Sample value: I(t) cos(2 pi f t + phi0) + Q(t) sin(2 pi f t + phi0).
// Quantization: round half away from zero, clamped to the code range.
// Throws NyquistError if any carrier >= rate/2 (message names the tone);
// throws ClippingError (with first offending sample) if |sum| > full scale.
SampledWaveform synthesize(std::span<const ToneSpec> tones,
                           const DacConfig& dac,
                           double t_start_s,
                           double t_end_s,
                           const SynthesisOptions& opts = {});

// log2(fraction * 2^(bits+1)): vertical resolution actually exercised by a
// signal occupying the given full-scale fraction.
double effective_bits(double full_scale_fraction, int bits = 8);

// First-order saturable droop. State d relaxes toward d_sat*activity with
// time constant tau; output sample k is input scaled by (1 - d entering k).
struct DistortionModel {
    double tau_s = 31e-6;
    double d_sat = 0.2;
    double droop = 0.0;  // state; evolves as the model is applied
};

// Applies the droop to every sample; the activity span must match the
// waveform length. Codes are re-quantized from the drooped ideal samples.
SampledWaveform apply_distortion(const SampledWaveform& w,
                                 DistortionModel& model,
                                 std::span<const std::uint8_t> activity);

// Droop state after advancing over the activity mask without producing
// output samples (cheap bookkeeping for long idle/drive stretches).
double advance_droop(const DistortionModel& model, double droop,
                     std::span<const std::uint8_t> activity, double dt_s);

enum class DemodSource { Quantized, Ideal };

struct BasebandStream {
    std::vector<std::complex<double>> samples;
    double sample_rate_hz = 0.0;
    double t_start_s = 0.0;
};

// Mixes the waveform to baseband at f_ref (recovering I + iQ for a tone
// synthesized at f_ref), low-passes with a Hann-windowed sinc FIR of at
// least 4*rate/cutoff taps, and decimates so the output rate stays >=
// 20*cutoff. Output rate divides the input rate.
BasebandStream demodulate(const SampledWaveform& w, double f_ref_hz,
                          double cutoff_hz,
                          DemodSource source = DemodSource::Quantized);

// Raw little-endian codes (int8 when bits <= 8, else int16) plus a JSON
// sidecar carrying rate/bits/origin, plus a CSV of ideal vs quantized.
void write_waveform(const SampledWaveform& w, const std::string& path_base);
SampledWaveform read_waveform(const std::string& path_base);

nlohmann::json waveform_sidecar(const SampledWaveform& w);

}  // namespace qdds
