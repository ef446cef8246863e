// qdds: command-line frontend for the synthesis / benchmarking / noise
// pipeline. Every run is driven by a JSON config plus --set overrides and
// writes machine-readable outputs alongside a run manifest.
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "qdds/clifford.hpp"
#include "qdds/dds.hpp"
#include "qdds/device.hpp"
#include "qdds/errors.hpp"
#include "qdds/noise.hpp"
#include "qdds/pulse.hpp"
#include "qdds/rb.hpp"
#include "qdds/rng.hpp"

namespace {

constexpr const char* kVersion = "0.1.0";

using nlohmann::json;
using namespace qdds;

void require_keys(const json& j, std::initializer_list<const char*> allowed,
                  const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : allowed) {
            if (it.key() == k) {
                ok = true;
                break;
            }
        }
        if (!ok) {
            throw std::invalid_argument("unknown key '" + it.key() + "' in " +
                                        where);
        }
    }
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", (unsigned long long)v);
    return buf;
}

void write_file_atomic(const std::filesystem::path& path,
                       const std::string& content) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw std::runtime_error("cannot open " + tmp.string());
        out << content;
        if (!out) throw std::runtime_error("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

std::string utc_now() {
    const std::time_t t = std::time(nullptr);
    char buf[32];
    std::tm tm_utc{};
    gmtime_r(&t, &tm_utc);
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    return buf;
}

struct RunContext {
    json config;
    std::filesystem::path out_dir;
    std::uint64_t seed = 1;
    std::optional<int> jobs_override;

    DeviceModel device() const {
        return config.contains("device") ? DeviceModel::from_json(config["device"])
                                         : DeviceModel{};
    }

    DacConfig dac() const {
        DacConfig d;
        if (config.contains("dac")) {
            const json& j = config["dac"];
            require_keys(j, {"sample_rate_hz", "bits", "full_scale"}, "dac");
            d.sample_rate_hz = j.value("sample_rate_hz", d.sample_rate_hz);
            d.bits = j.value("bits", d.bits);
            d.full_scale = j.value("full_scale", d.full_scale);
        }
        d.validate();
        return d;
    }

    RbConfig rb() const {
        RbConfig cfg = config.contains("rb") ? RbConfig::from_json(config["rb"])
                                             : RbConfig{};
        if (jobs_override) cfg.jobs = *jobs_override;
        return cfg;
    }

    CalibrationTable calibration() const {
        return config.contains("calibration")
                   ? CalibrationTable::from_json(config["calibration"])
                   : CalibrationTable{};
    }

    TuneUpOptions tune_opts() const {
        TuneUpOptions o;
        if (!config.contains("tuneup")) return o;
        const json& j = config["tuneup"];
        require_keys(j,
                     {"max_iterations", "angle_tolerance_rad", "beta_objective",
                      "tune_beta", "shots"},
                     "tuneup");
        o.max_iterations = j.value("max_iterations", o.max_iterations);
        o.angle_tolerance_rad =
            j.value("angle_tolerance_rad", o.angle_tolerance_rad);
        if (j.contains("beta_objective")) {
            const std::string s = j["beta_objective"].get<std::string>();
            if (s == "leakage") {
                o.beta_objective = BetaObjective::Leakage;
            } else if (s == "phase") {
                o.beta_objective = BetaObjective::Phase;
            } else {
                throw std::invalid_argument("unknown beta objective '" + s + "'");
            }
        }
        o.tune_beta = j.value("tune_beta", o.tune_beta);
        o.shots = j.value("shots", o.shots);
        return o;
    }

    void write_manifest(const std::string& command,
                        const std::vector<std::string>& outputs) const {
        json m = {{"command", command},
                  {"config_hash", hex64(fnv1a(config.dump()))},
                  {"seed", seed},
                  {"version", kVersion},
                  {"timestamp_utc", utc_now()},
                  {"outputs", outputs}};
        write_file_atomic(out_dir / (command + ".manifest.json"),
                          m.dump(2) + "\n");
    }
};

RunContext load_context(const std::string& config_path,
                        const std::vector<std::string>& sets,
                        const std::optional<std::string>& out_dir_cli,
                        const std::optional<std::uint64_t>& seed_cli,
                        const std::optional<int>& jobs_cli) {
    RunContext ctx;
    if (!config_path.empty()) {
        std::ifstream in(config_path);
        if (!in) throw std::runtime_error("cannot open config " + config_path);
        ctx.config = json::parse(in);
    } else {
        ctx.config = json::object();
    }
    for (const std::string& kv : sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument("--set expects key=value, got '" + kv +
                                        "'");
        }
        const std::string path = kv.substr(0, eq);
        const std::string raw = kv.substr(eq + 1);
        json value;
        try {
            value = json::parse(raw);
        } catch (const json::parse_error&) {
            value = raw;  // bare strings allowed without quotes
        }
        json* node = &ctx.config;
        std::istringstream keys(path);
        std::string key, next;
        if (!std::getline(keys, key, '.')) {
            throw std::invalid_argument("--set key must not be empty");
        }
        while (std::getline(keys, next, '.')) {
            node = &(*node)[key];
            key = next;
        }
        (*node)[key] = value;
    }
    require_keys(ctx.config,
                 {"device", "dac", "rb", "calibration", "tuneup", "noise",
                  "sweep", "seed", "output_dir"},
                 "config");

    ctx.seed = ctx.config.value("seed", std::uint64_t{1});
    if (seed_cli) ctx.seed = *seed_cli;
    ctx.jobs_override = jobs_cli;

    std::string dir = ".";
    if (const char* env = std::getenv("QDDS_OUTPUT_DIR")) dir = env;
    if (ctx.config.contains("output_dir")) {
        dir = ctx.config["output_dir"].get<std::string>();
    }
    if (out_dir_cli) dir = *out_dir_cli;
    ctx.out_dir = dir;
    std::filesystem::create_directories(ctx.out_dir);
    return ctx;
}

// Tuned calibration for waveform-backed runs: taken from the config when both
// amplitudes are present, otherwise produced by the tune-up loop.
CalibrationTable resolve_calibration(const RunContext& ctx,
                                     const DeviceModel& device,
                                     const DacConfig& dac, bool needed) {
    CalibrationTable cal = ctx.calibration();
    if (!needed || (cal.a_pi && cal.a_pi_2)) return cal;
    std::cerr << "note: calibration incomplete, running tune-up first\n";
    return tune_up(device, dac, cal, ctx.tune_opts(),
                   Rng::substream(ctx.seed, 0x7e5eedull).next_u64());
}

PulseShape shape_from_json(const json& j) {
    require_keys(j,
                 {"t_start_s", "sigma_s", "truncation", "amplitude",
                  "drag_coefficient", "phase_rad", "buffer_after_s"},
                 "pulse");
    PulseShape s;
    s.sigma_s = j.value("sigma_s", s.sigma_s);
    s.truncation = j.value("truncation", s.truncation);
    s.amplitude = j.value("amplitude", s.amplitude);
    s.drag_coefficient = j.value("drag_coefficient", s.drag_coefficient);
    s.phase_rad = j.value("phase_rad", s.phase_rad);
    s.buffer_after_s = j.value("buffer_after_s", s.buffer_after_s);
    s.validate();
    return s;
}

int cmd_synth(const RunContext& ctx, const std::string& schedule_path,
              const std::string& name) {
    std::ifstream in(schedule_path);
    if (!in) throw std::runtime_error("cannot open schedule " + schedule_path);
    const json sched = json::parse(in);
    require_keys(sched,
                 {"t_start_s", "t_end_s", "phase_reference",
                  "activity_threshold", "tones"},
                 "schedule");

    const DeviceModel device = ctx.device();
    const DacConfig dac = ctx.dac();

    SynthesisOptions opts;
    if (sched.contains("phase_reference")) {
        const std::string s = sched["phase_reference"].get<std::string>();
        if (s == "global") {
            opts.phase_reference = PhaseReference::Global;
        } else if (s == "segment_local") {
            opts.phase_reference = PhaseReference::SegmentLocal;
        } else {
            throw std::invalid_argument("unknown phase reference '" + s + "'");
        }
    }
    opts.activity_threshold =
        sched.value("activity_threshold", opts.activity_threshold);

    std::vector<ToneSpec> tones;
    for (const json& jt : sched.at("tones")) {
        require_keys(jt,
                     {"carrier_frequency_hz", "phase_origin_rad",
                      "anharmonicity_rad_s", "pulses"},
                     "tone");
        ToneSpec t;
        t.carrier_frequency_hz = jt.at("carrier_frequency_hz").get<double>();
        t.phase_origin_rad = jt.value("phase_origin_rad", 0.0);
        t.anharmonicity_rad_s =
            jt.value("anharmonicity_rad_s", device.anharmonicity_rad_s());
        for (const json& jp : jt.at("pulses")) {
            t.pulses.push_back({jp.value("t_start_s", 0.0), shape_from_json(jp)});
        }
        tones.push_back(std::move(t));
    }

    const SampledWaveform w =
        synthesize(tones, dac, sched.value("t_start_s", 0.0),
                   sched.at("t_end_s").get<double>(), opts);

    const std::string base = (ctx.out_dir / name).string();
    write_waveform(w, base + ".tmp");
    for (const char* ext : {".bin", ".json", ".csv"}) {
        std::filesystem::rename(base + ".tmp" + ext, base + ext);
    }
    ctx.write_manifest("synth", {name + ".bin", name + ".json", name + ".csv"});
    std::cout << "wrote " << base << ".{bin,json,csv} (" << w.size()
              << " samples)\n";
    return 0;
}

int cmd_rb(const RunContext& ctx) {
    const DeviceModel device = ctx.device();
    const DacConfig dac = ctx.dac();
    const RbConfig cfg = ctx.rb();
    const CalibrationTable cal =
        resolve_calibration(ctx, device, dac, cfg.mode != RbMode::Ideal);

    const RbResult r = run_rb(cfg, device, cal, dac, ctx.seed);
    write_file_atomic(ctx.out_dir / "rb_result.json", r.to_json().dump(2) + "\n");
    r.write_csv((ctx.out_dir / "rb_result.csv").string());
    ctx.write_manifest("rb", {"rb_result.json", "rb_result.csv"});
    std::printf("p = %.6f  epc = %.3e +- %.1e  epg = %.3e +- %.1e\n", r.fit.p,
                r.epc, r.epc_sigma, r.epg, r.epg_sigma);
    return 0;
}

int cmd_sweep(const RunContext& ctx) {
    if (!ctx.config.contains("sweep")) {
        throw std::invalid_argument("config has no 'sweep' section");
    }
    const json& js = ctx.config["sweep"];
    require_keys(js, {"parameter", "values"}, "sweep");
    const std::string pname = js.at("parameter").get<std::string>();
    SweepParameter param;
    if (pname == "gate_length") {
        param = SweepParameter::GateLength;
    } else if (pname == "full_scale_fraction") {
        param = SweepParameter::FullScaleFraction;
    } else if (pname == "sample_rate") {
        param = SweepParameter::SampleRate;
    } else {
        throw std::invalid_argument("unknown sweep parameter '" + pname + "'");
    }
    const std::vector<double> values =
        js.at("values").get<std::vector<double>>();

    const DeviceModel device = ctx.device();
    const DacConfig dac = ctx.dac();
    const RbConfig cfg = ctx.rb();
    const CalibrationTable cal = ctx.calibration();

    const std::vector<SweepRow> rows =
        sweep(param, values, cfg, device, cal, dac, ctx.seed);

    const std::string csv_name = "sweep_" + pname + ".csv";
    write_sweep_csv(rows, param, (ctx.out_dir / csv_name).string());
    json jr = json::array();
    for (const auto& r : rows) {
        json row = {{"value", r.value}, {"epg", r.epg},
                    {"epg_sigma", r.epg_sigma}};
        if (r.coherence_limit) row["coherence_limit_epg"] = *r.coherence_limit;
        jr.push_back(row);
    }
    write_file_atomic(ctx.out_dir / ("sweep_" + pname + ".json"),
                      jr.dump(2) + "\n");
    ctx.write_manifest("sweep", {csv_name, "sweep_" + pname + ".json"});
    std::cout << "wrote " << csv_name << " (" << rows.size() << " rows)\n";
    return 0;
}

int cmd_noise(const RunContext& ctx) {
    json jn = ctx.config.value("noise", json::object());
    require_keys(jn,
                 {"model", "spectrum_file", "extrapolate_to_hz", "f_min_hz",
                  "f_max_hz", "points_per_decade", "durations_s"},
                 "noise");

    PhaseNoiseSpectrum spectrum;
    if (jn.contains("spectrum_file")) {
        spectrum = load_spectrum_file(jn["spectrum_file"].get<std::string>());
    } else {
        const std::string model = jn.value("model", std::string("generator"));
        const PowerLawNoiseModel m = model == "dds"
                                         ? PowerLawNoiseModel::dds_like()
                                         : PowerLawNoiseModel::generator_like();
        spectrum = m.sample(1.0, 1e8, 20, model);
    }
    if (jn.contains("extrapolate_to_hz")) {
        spectrum =
            extrapolate_low(spectrum, jn["extrapolate_to_hz"].get<double>());
    }
    const DephasingPsd psd = to_dephasing_psd(spectrum);

    ChiOptions copts;
    copts.f_min_hz = jn.value("f_min_hz", copts.f_min_hz);
    copts.f_max_hz = jn.value("f_max_hz", copts.f_max_hz);
    copts.points_per_decade =
        jn.value("points_per_decade", copts.points_per_decade);

    std::vector<double> durations;
    if (jn.contains("durations_s")) {
        durations = jn["durations_s"].get<std::vector<double>>();
    } else {
        for (int i = 0; i <= 24; ++i) {
            durations.push_back(1e-8 * std::pow(10.0, i / 6.0));
        }
    }

    std::ostringstream csv;
    csv << "duration_s,free_chi,free_infidelity,driven_chi,driven_infidelity\n";
    char line[200];
    for (double tau : durations) {
        const auto free_ctrl = ControlSegmentList::free_evolution(tau);
        const auto driven_ctrl = ControlSegmentList::constant_x_pi(tau);
        const double cf = dephasing_chi(psd, free_ctrl, copts);
        const double cd = dephasing_chi(psd, driven_ctrl, copts);
        std::snprintf(line, sizeof line, "%.9e,%.9e,%.9e,%.9e,%.9e\n", tau, cf,
                      0.5 * (-std::expm1(-cf)), cd, 0.5 * (-std::expm1(-cd)));
        csv << line;
    }
    write_file_atomic(ctx.out_dir / "noise_infidelity.csv", csv.str());

    std::ostringstream psd_csv;
    psd_csv << "omega_rad_s,s_rad2_s\n";
    for (std::size_t i = 0; i < psd.omega_rad_s.size(); ++i) {
        std::snprintf(line, sizeof line, "%.9e,%.9e\n", psd.omega_rad_s[i],
                      psd.s_rad2_s[i]);
        psd_csv << line;
    }
    write_file_atomic(ctx.out_dir / "noise_psd.csv", psd_csv.str());

    ctx.write_manifest("noise", {"noise_infidelity.csv", "noise_psd.csv"});
    std::cout << "wrote noise_infidelity.csv (" << durations.size()
              << " durations), noise_psd.csv\n";
    return 0;
}

int cmd_distortion(const RunContext& ctx) {
    const DeviceModel device = ctx.device();
    const DacConfig dac = ctx.dac();
    RbConfig cfg = ctx.rb();
    cfg.mode = RbMode::FullDds;
    if (!ctx.config.contains("rb") ||
        !ctx.config["rb"].contains("distortion_enabled")) {
        cfg.distortion_enabled = true;
    }
    const CalibrationTable cal = resolve_calibration(ctx, device, dac, true);

    const DistortionStudy study =
        background_subtract_run(cfg, device, cal, dac, ctx.seed);
    json out = {{"raw", study.raw.to_json()},
                {"corrected", study.corrected.to_json()},
                {"summary",
                 {{"raw_b", study.raw.fit.b},
                  {"corrected_b", study.corrected.fit.b},
                  {"droop_at_readout_longest", study.droop_at_readout_longest},
                  {"corrected_epg", study.corrected.epg},
                  {"corrected_epg_sigma", study.corrected.epg_sigma}}}};
    write_file_atomic(ctx.out_dir / "distortion.json", out.dump(2) + "\n");
    study.raw.write_csv((ctx.out_dir / "distortion_raw.csv").string());
    study.corrected.write_csv((ctx.out_dir / "distortion_corrected.csv").string());
    ctx.write_manifest(
        "distortion",
        {"distortion.json", "distortion_raw.csv", "distortion_corrected.csv"});
    std::printf("raw B = %.4f  corrected B = %.4f  droop at readout = %.4f\n",
                study.raw.fit.b, study.corrected.fit.b,
                study.droop_at_readout_longest);
    return 0;
}

int cmd_tuneup(const RunContext& ctx) {
    const DeviceModel device = ctx.device();
    const DacConfig dac = ctx.dac();
    TuneUpReport report;
    const CalibrationTable cal = tune_up(device, dac, ctx.calibration(),
                                         ctx.tune_opts(), ctx.seed, &report);
    write_file_atomic(ctx.out_dir / "calibration.json",
                      cal.to_json().dump(2) + "\n");
    json jr = {{"iterations", report.iterations},
               {"final_angle_error_rad", report.final_angle_error_rad},
               {"rabi_scan_a_pi", report.rabi_scan_a_pi},
               {"beta_tuned", report.beta_tuned},
               {"beta_landscape_flat", report.beta_landscape_flat},
               {"log", report.log}};
    write_file_atomic(ctx.out_dir / "tuneup_report.json", jr.dump(2) + "\n");
    ctx.write_manifest("tuneup", {"calibration.json", "tuneup_report.json"});
    std::printf("a_pi = %.6f  a_pi_2 = %.6f  beta = %.4f (%d iterations)\n",
                cal.a_pi.value_or(0.0), cal.a_pi_2.value_or(0.0), cal.beta,
                report.iterations);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"DDS control-chain simulator and analysis toolkit"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> sets;
    std::optional<std::string> out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<int> jobs;
    app.add_option("-c,--config", config_path, "JSON config file");
    app.add_option("--set", sets, "override config entry, dotted key=value");
    app.add_option("-o,--output-dir", out_dir,
                   "output directory (default: $QDDS_OUTPUT_DIR or .)");
    app.add_option("--seed", seed, "master seed override");
    app.add_option("-j,--jobs", jobs, "worker threads for sequence batches");

    std::string schedule_path, synth_name = "waveform";
    CLI::App* synth = app.add_subcommand("synth", "synthesize a tone schedule");
    synth->add_option("schedule", schedule_path, "schedule JSON file")
        ->required();
    synth->add_option("--name", synth_name, "output file base name");

    CLI::App* rb = app.add_subcommand("rb", "randomized benchmarking run");
    CLI::App* sweep =
        app.add_subcommand("sweep", "EPG sweep over an operating parameter");
    CLI::App* noise =
        app.add_subcommand("noise", "phase-noise to infidelity analysis");
    CLI::App* distortion = app.add_subcommand(
        "distortion", "raw vs background-corrected RB under droop");
    CLI::App* tuneup = app.add_subcommand("tuneup", "automated calibration");

    CLI11_PARSE(app, argc, argv);

    try {
        const RunContext ctx =
            load_context(config_path, sets, out_dir, seed, jobs);
        if (synth->parsed()) return cmd_synth(ctx, schedule_path, synth_name);
        if (rb->parsed()) return cmd_rb(ctx);
        if (sweep->parsed()) return cmd_sweep(ctx);
        if (noise->parsed()) return cmd_noise(ctx);
        if (distortion->parsed()) return cmd_distortion(ctx);
        if (tuneup->parsed()) return cmd_tuneup(ctx);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
