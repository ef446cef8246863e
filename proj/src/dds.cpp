#include "qdds/dds.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "qdds/errors.hpp"

namespace qdds {

bool is_standard_sample_rate(double rate_hz) {
    const double rel = 1e-9;
    auto near = [&](double ref) { return std::abs(rate_hz - ref) <= rel * ref; };
    if (near(14.44e9) || near(28.88e9)) return true;
    return rate_hz >= 57.76e9 * (1 - rel) && rate_hz <= 65e9 * (1 + rel);
}

bool DacConfig::validate() const {
    if (bits < 2 || bits > 16) {
        throw std::invalid_argument("dac bits must be in [2, 16]");
    }
    if (!(sample_rate_hz > 0)) {
        throw std::invalid_argument("dac sample rate must be positive");
    }
    if (!(full_scale > 0)) {
        throw std::invalid_argument("dac full scale must be positive");
    }
    return is_standard_sample_rate(sample_rate_hz);
}

namespace {
std::int16_t quantize(double normalized, int bits) {
    const double scale = double(1 << (bits - 1));
    const long long raw = std::llround(normalized * scale);
    const long long lo = -(1LL << (bits - 1));
    const long long hi = (1LL << (bits - 1)) - 1;
    return static_cast<std::int16_t>(std::clamp(raw, lo, hi));
}
}  // namespace

SampledWaveform synthesize(std::span<const ToneSpec> tones,
                           const DacConfig& dac,
                           double t_start_s,
                           double t_end_s,
                           const SynthesisOptions& opts) {
    dac.validate();
    const double fs = dac.sample_rate_hz;
    for (std::size_t ti = 0; ti < tones.size(); ++ti) {
        if (std::abs(tones[ti].carrier_frequency_hz) >= fs / 2) {
            std::ostringstream msg;
            msg << "tone " << ti << " at " << tones[ti].carrier_frequency_hz
                << " Hz violates the Nyquist limit " << fs / 2
                << " Hz of the " << fs << " S/s converter";
            throw NyquistError(msg.str());
        }
        for (const auto& p : tones[ti].pulses) p.shape.validate();
    }

    SampledWaveform w;
    w.sample_rate_hz = fs;
    w.bits = dac.bits;
    w.start_index = std::llround(t_start_s * fs);
    w.t_start_s = double(w.start_index) / fs;
    const std::int64_t end_index = std::llround(t_end_s * fs);
    const std::int64_t n = std::max<std::int64_t>(0, end_index - w.start_index);
    w.ideal.assign(n, 0.0);
    w.activity.assign(n, 0);
    std::vector<double> drive_mag(n, 0.0);

    for (const auto& tone : tones) {
        const double omega = 2 * M_PI * tone.carrier_frequency_hz;
        for (const auto& tp : tone.pulses) {
            const double span = tp.shape.envelope_span_s();
            const std::int64_t g_lo = std::max<std::int64_t>(
                w.start_index,
                static_cast<std::int64_t>(std::floor(tp.start_s * fs)));
            const std::int64_t g_hi = std::min<std::int64_t>(
                w.start_index + n,
                static_cast<std::int64_t>(std::ceil((tp.start_s + span) * fs)) + 1);
            for (std::int64_t g = g_lo; g < g_hi; ++g) {
                const double t = double(g) / fs;
                const auto iq =
                    envelope(tp.shape, t - tp.start_s, tone.anharmonicity_rad_s);
                if (iq.i == 0.0 && iq.q == 0.0) continue;
                const double t_phase =
                    opts.phase_reference == PhaseReference::Global
                        ? t
                        : double(g - w.start_index) / fs;
                const double theta = omega * t_phase + tone.phase_origin_rad;
                const std::int64_t k = g - w.start_index;
                w.ideal[k] += iq.i * std::cos(theta) + iq.q * std::sin(theta);
                drive_mag[k] += std::hypot(iq.i, iq.q);
            }
        }
    }

    w.codes.resize(n);
    const double inv_fs_amp = 1.0 / dac.full_scale;
    for (std::int64_t k = 0; k < n; ++k) {
        w.ideal[k] *= inv_fs_amp;
        if (std::abs(w.ideal[k]) > 1.0 + 1e-12) {
            throw ClippingError("synthesized amplitude exceeds full scale",
                                w.start_index + k);
        }
        w.codes[k] = quantize(w.ideal[k], dac.bits);
        w.activity[k] =
            drive_mag[k] * inv_fs_amp > opts.activity_threshold ? 1 : 0;
    }
    return w;
}

double effective_bits(double full_scale_fraction, int bits) {
    if (!(full_scale_fraction > 0)) {
        throw std::invalid_argument("full-scale fraction must be positive");
    }
    return std::log2(full_scale_fraction * std::pow(2.0, bits + 1));
}

SampledWaveform apply_distortion(const SampledWaveform& w,
                                 DistortionModel& model,
                                 std::span<const std::uint8_t> activity) {
    if (activity.size() != w.size()) {
        throw std::invalid_argument("distortion activity mask length mismatch");
    }
    if (!(model.tau_s > 0)) {
        throw std::invalid_argument("distortion tau must be positive");
    }
    const double dt = 1.0 / w.sample_rate_hz;
    const double decay = std::exp(-dt / model.tau_s);
    SampledWaveform out = w;
    double d = model.droop;
    for (std::size_t k = 0; k < out.size(); ++k) {
        out.ideal[k] = w.ideal[k] * (1.0 - d);
        out.codes[k] = quantize(out.ideal[k], w.bits);
        const double target = activity[k] ? model.d_sat : 0.0;
        d = target + (d - target) * decay;
    }
    model.droop = d;
    return out;
}

double advance_droop(const DistortionModel& model, double droop,
                     std::span<const std::uint8_t> activity, double dt_s) {
    const double log_decay = -dt_s / model.tau_s;
    std::size_t k = 0;
    while (k < activity.size()) {
        std::size_t run = k + 1;
        while (run < activity.size() && activity[run] == activity[k]) ++run;
        const double target = activity[k] ? model.d_sat : 0.0;
        droop = target + (droop - target) *
                             std::exp(log_decay * double(run - k));
        k = run;
    }
    return droop;
}

BasebandStream demodulate(const SampledWaveform& w, double f_ref_hz,
                          double cutoff_hz, DemodSource source) {
    if (!(cutoff_hz > 0) || cutoff_hz >= w.sample_rate_hz / 2) {
        throw std::invalid_argument("demodulation cutoff must sit below Nyquist");
    }
    const double fs = w.sample_rate_hz;
    const std::int64_t n = static_cast<std::int64_t>(w.size());

    const int decim =
        std::max(1, static_cast<int>(std::floor(fs / (20.0 * cutoff_hz))));
    BasebandStream out;
    out.sample_rate_hz = fs / decim;
    out.t_start_s = w.t_start_s;
    if (n == 0) return out;

    // Mix to baseband with the conjugate carrier so a tone synthesized at
    // f_ref comes back as its complex envelope I + iQ.
    std::vector<std::complex<double>> mixed(n);
    const double scale = 1.0 / w.code_scale();
    for (std::int64_t k = 0; k < n; ++k) {
        const double t = double(w.start_index + k) / fs;
        const double theta = 2 * M_PI * f_ref_hz * t;
        const double v = source == DemodSource::Quantized
                             ? double(w.codes[k]) * scale
                             : w.ideal[k];
        mixed[k] = 2.0 * v *
                   std::complex<double>(std::cos(theta), std::sin(theta));
    }

    const int half = static_cast<int>(std::ceil(2.0 * fs / cutoff_hz));
    const int taps = 2 * half + 1;
    std::vector<double> h(taps);
    double h_sum = 0.0;
    for (int i = 0; i < taps; ++i) {
        const double x = 2.0 * cutoff_hz / fs * (i - half);
        const double sinc = x == 0.0 ? 1.0 : std::sin(M_PI * x) / (M_PI * x);
        const double hann = 0.5 * (1.0 - std::cos(2 * M_PI * i / (taps - 1)));
        h[i] = sinc * hann;
        h_sum += h[i];
    }
    for (double& c : h) c /= h_sum;

    const std::int64_t n_out = (n + decim - 1) / decim;
    out.samples.resize(n_out);
    for (std::int64_t j = 0; j < n_out; ++j) {
        const std::int64_t center = j * decim;
        std::complex<double> acc{0.0, 0.0};
        const std::int64_t lo = std::max<std::int64_t>(0, center - half);
        const std::int64_t hi = std::min<std::int64_t>(n - 1, center + half);
        for (std::int64_t k = lo; k <= hi; ++k) {
            acc += h[k - center + half] * mixed[k];
        }
        out.samples[j] = acc;
    }
    return out;
}

nlohmann::json waveform_sidecar(const SampledWaveform& w) {
    nlohmann::json runs = nlohmann::json::array();
    std::size_t k = 0;
    while (k < w.activity.size()) {
        if (!w.activity[k]) {
            ++k;
            continue;
        }
        std::size_t run = k + 1;
        while (run < w.activity.size() && w.activity[run]) ++run;
        runs.push_back({k, run - k});
        k = run;
    }
    return {{"sample_rate_hz", w.sample_rate_hz},
            {"bits", w.bits},
            {"t_start_s", w.t_start_s},
            {"start_index", w.start_index},
            {"n_samples", w.size()},
            {"code_format", w.bits <= 8 ? "int8" : "int16le"},
            {"activity_runs", runs}};
}

void write_waveform(const SampledWaveform& w, const std::string& path_base) {
    {
        std::ofstream bin(path_base + ".bin", std::ios::binary);
        if (!bin) throw std::runtime_error("cannot open " + path_base + ".bin");
        if (w.bits <= 8) {
            for (std::int16_t c : w.codes) {
                const char b = static_cast<char>(static_cast<std::int8_t>(c));
                bin.write(&b, 1);
            }
        } else {
            for (std::int16_t c : w.codes) {
                const std::uint16_t u = static_cast<std::uint16_t>(c);
                const char b[2] = {static_cast<char>(u & 0xff),
                                   static_cast<char>(u >> 8)};
                bin.write(b, 2);
            }
        }
    }
    {
        std::ofstream js(path_base + ".json");
        if (!js) throw std::runtime_error("cannot open " + path_base + ".json");
        js << waveform_sidecar(w).dump(2) << '\n';
    }
    {
        std::ofstream csv(path_base + ".csv");
        if (!csv) throw std::runtime_error("cannot open " + path_base + ".csv");
        csv << "index,time_s,ideal,code,dequantized\n";
        const double scale = w.code_scale();
        char line[160];
        for (std::size_t k = 0; k < w.size(); ++k) {
            const double t = double(w.start_index + k) / w.sample_rate_hz;
            std::snprintf(line, sizeof line, "%zu,%.12e,%.9e,%d,%.9e\n", k, t,
                          w.ideal[k], int(w.codes[k]), w.codes[k] / scale);
            csv << line;
        }
    }
}

SampledWaveform read_waveform(const std::string& path_base) {
    std::ifstream js(path_base + ".json");
    if (!js) throw std::runtime_error("cannot open " + path_base + ".json");
    nlohmann::json side = nlohmann::json::parse(js);

    SampledWaveform w;
    w.sample_rate_hz = side.at("sample_rate_hz").get<double>();
    w.bits = side.at("bits").get<int>();
    w.t_start_s = side.at("t_start_s").get<double>();
    w.start_index = side.at("start_index").get<std::int64_t>();
    const std::size_t n = side.at("n_samples").get<std::size_t>();

    std::ifstream bin(path_base + ".bin", std::ios::binary);
    if (!bin) throw std::runtime_error("cannot open " + path_base + ".bin");
    w.codes.resize(n);
    if (w.bits <= 8) {
        for (std::size_t k = 0; k < n; ++k) {
            char b;
            if (!bin.read(&b, 1)) throw std::runtime_error("waveform file truncated");
            w.codes[k] = static_cast<std::int8_t>(b);
        }
    } else {
        for (std::size_t k = 0; k < n; ++k) {
            char b[2];
            if (!bin.read(b, 2)) throw std::runtime_error("waveform file truncated");
            w.codes[k] = static_cast<std::int16_t>(
                static_cast<std::uint16_t>(static_cast<std::uint8_t>(b[0])) |
                (static_cast<std::uint16_t>(static_cast<std::uint8_t>(b[1])) << 8));
        }
    }
    // The ideal trace is not persisted; the dequantized codes stand in.
    w.ideal.resize(n);
    const double scale = w.code_scale();
    for (std::size_t k = 0; k < n; ++k) w.ideal[k] = w.codes[k] / scale;
    w.activity.assign(n, 0);
    for (const auto& run : side.at("activity_runs")) {
        const std::size_t start = run.at(0).get<std::size_t>();
        const std::size_t len = run.at(1).get<std::size_t>();
        for (std::size_t k = start; k < std::min(n, start + len); ++k) {
            w.activity[k] = 1;
        }
    }
    return w;
}

}  // namespace qdds
