#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <doctest.h>
#include <nlohmann/json.hpp>

#include "qdds/dds.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::string kCli = QDDS_CLI_PATH;
const fs::path kData = QDDS_TEST_DATA_DIR;

int run_cli(const std::string& args, const fs::path& log) {
    const std::string cmd =
        kCli + " " + args + " >" + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream out(p);
    out << text;
}

fs::path fresh_dir(const std::string& name) {
    const fs::path d = kData / name;
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

json fast_rb_config() {
    return {{"rb",
             {{"mode", "ideal"},
              {"lengths", {2, 8, 32, 128}},
              {"n_seeds", 3},
              {"shots", 200},
              {"depolarizing_inject", 2e-3}}},
            {"seed", 99}};
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("rb runs write results, a manifest, and no temp files") {
    const fs::path dir = fresh_dir("cli_rb");
    const fs::path cfg = dir / "cfg.json";
    write_text(cfg, fast_rb_config().dump(2));

    const int rc = run_cli("-c " + cfg.string() + " -o " + dir.string() + " rb",
                           dir / "log.txt");
    CHECK(rc == 0);
    CHECK(fs::exists(dir / "rb_result.json"));
    CHECK(fs::exists(dir / "rb_result.csv"));

    const json manifest = json::parse(slurp(dir / "rb.manifest.json"));
    CHECK(manifest.at("command") == "rb");
    CHECK(manifest.at("seed") == 99);
    CHECK(manifest.at("version") == "0.1.0");
    CHECK(manifest.at("config_hash").get<std::string>().size() == 16);
    CHECK(manifest.at("outputs").size() == 2);

    for (const auto& e : fs::directory_iterator(dir)) {
        CHECK(e.path().extension() != ".tmp");
    }

    // plumbing smoke only: 3 seeds x 200 shots puts sigma near 4e-3, so the
    // injected 1e-3 is only bounded loosely here; statistics live in rb_tests
    const json result = json::parse(slurp(dir / "rb_result.json"));
    const double epc = result.at("epc").get<double>();
    CHECK(epc > 0.0);
    CHECK(epc < 2e-2);
}

TEST_CASE("reruns are byte-identical") {
    const fs::path a = fresh_dir("cli_rerun_a");
    const fs::path b = fresh_dir("cli_rerun_b");
    const fs::path cfg = kData / "cli_rerun_cfg.json";
    write_text(cfg, fast_rb_config().dump(2));

    REQUIRE(run_cli("-c " + cfg.string() + " -o " + a.string() + " rb",
                    a / "log.txt") == 0);
    REQUIRE(run_cli("-c " + cfg.string() + " -o " + b.string() + " rb",
                    b / "log.txt") == 0);
    CHECK(slurp(a / "rb_result.json") == slurp(b / "rb_result.json"));
    CHECK(slurp(a / "rb_result.csv") == slurp(b / "rb_result.csv"));
}

TEST_CASE("set overrides reach into the config") {
    const fs::path a = fresh_dir("cli_set_a");
    const fs::path b = fresh_dir("cli_set_b");
    const fs::path cfg = kData / "cli_set_cfg.json";
    write_text(cfg, fast_rb_config().dump(2));

    REQUIRE(run_cli("-c " + cfg.string() + " -o " + a.string() + " rb",
                    a / "log.txt") == 0);
    REQUIRE(run_cli("-c " + cfg.string() + " --set seed=100 -o " +
                        b.string() + " rb",
                    b / "log.txt") == 0);
    CHECK(slurp(a / "rb_result.json") != slurp(b / "rb_result.json"));

    // nested dotted path: a 20x stronger injection must dominate the fit
    // noise floor (sigma is a few 1e-3 at this tiny shot budget)
    const fs::path c = fresh_dir("cli_set_c");
    REQUIRE(run_cli("-c " + cfg.string() +
                        " --set rb.depolarizing_inject=4e-2 -o " + c.string() +
                        " rb",
                    c / "log.txt") == 0);
    const json rb_a = json::parse(slurp(a / "rb_result.json"));
    const json rb_c = json::parse(slurp(c / "rb_result.json"));
    CHECK(rb_c.at("epc").get<double>() >
          rb_a.at("epc").get<double>() + 5e-3);
}

TEST_CASE("unknown config keys abort with exit code 2") {
    const fs::path dir = fresh_dir("cli_badkey");
    const fs::path cfg = dir / "cfg.json";
    json j = fast_rb_config();
    j["rb"]["typo"] = 1;
    write_text(cfg, j.dump(2));

    const int rc = run_cli("-c " + cfg.string() + " -o " + dir.string() + " rb",
                           dir / "log.txt");
    CHECK(rc == 2);
    const std::string log = slurp(dir / "log.txt");
    CHECK(log.find("error:") != std::string::npos);
    CHECK(log.find("typo") != std::string::npos);
    CHECK(!fs::exists(dir / "rb_result.json"));
}

TEST_CASE("missing config files abort with exit code 2") {
    const fs::path dir = fresh_dir("cli_nofile");
    const int rc = run_cli("-c " + (dir / "absent.json").string() + " -o " +
                               dir.string() + " rb",
                           dir / "log.txt");
    CHECK(rc == 2);
    CHECK(slurp(dir / "log.txt").find("error:") != std::string::npos);
}

TEST_CASE("synthesized schedules round-trip through the waveform files") {
    const fs::path dir = fresh_dir("cli_synth");
    const json pulse = {{"t_start_s", 10e-9}, {"sigma_s", 6e-9},
                        {"truncation", 4.0},  {"amplitude", 0.2},
                        {"drag_coefficient", 1.0}, {"phase_rad", 0.0},
                        {"buffer_after_s", 5e-9}};
    const json schedule = {
        {"t_start_s", 0.0},
        {"t_end_s", 120e-9},
        {"phase_reference", "global"},
        {"activity_threshold", 1e-3},
        {"tones",
         {{{"carrier_frequency_hz", 4.773e9},
           {"phase_origin_rad", 0.0},
           {"anharmonicity_rad_s", 2.3561944901923448e9},
           {"pulses", {pulse}}},
          {{"carrier_frequency_hz", 10.166e9},
           {"phase_origin_rad", 0.5},
           {"anharmonicity_rad_s", 2.3561944901923448e9},
           {"pulses", json::array()}}}}};
    const fs::path sched_path = dir / "schedule.json";
    write_text(sched_path, schedule.dump(2));

    const int rc = run_cli("-o " + dir.string() + " synth " +
                               sched_path.string() + " --name wave",
                           dir / "log.txt");
    REQUIRE(rc == 0);

    const qdds::SampledWaveform back =
        qdds::read_waveform((dir / "wave").string());

    // re-synthesize in process and compare code for code
    qdds::ToneSpec tone;
    tone.carrier_frequency_hz = 4.773e9;
    qdds::PulseShape s;
    s.amplitude = 0.2;
    tone.pulses = {{10e-9, s}};
    const qdds::SampledWaveform expect =
        qdds::synthesize({&tone, 1}, qdds::DacConfig{}, 0.0, 120e-9);
    REQUIRE(back.codes.size() == expect.codes.size());
    CHECK(back.codes == expect.codes);
    CHECK(back.sample_rate_hz == expect.sample_rate_hz);
}

TEST_CASE("tune-up writes a calibration usable by a following rb run") {
    const fs::path dir = fresh_dir("cli_tune");
    const fs::path cfg = dir / "cfg.json";
    json j = {{"dac", {{"sample_rate_hz", 14.44e9}}},
              {"rb",
               {{"mode", "hybrid"},
                {"lengths", {2, 8, 20}},
                {"n_seeds", 2},
                {"exact_population", true}}},
              {"seed", 7}};
    write_text(cfg, j.dump(2));

    REQUIRE(run_cli("-c " + cfg.string() + " -o " + dir.string() + " tuneup",
                    dir / "log.txt") == 0);
    const json cal = json::parse(slurp(dir / "calibration.json"));
    CHECK(cal.at("a_pi").get<double>() == doctest::Approx(0.0849).epsilon(0.02).scale(0.0));
    const json rep = json::parse(slurp(dir / "tuneup_report.json"));
    CHECK(rep.at("log").size() > 3);

    // feed the tuned table back in; rb must use it instead of re-tuning
    j["calibration"] = cal;
    const fs::path cfg2 = dir / "cfg_tuned.json";
    write_text(cfg2, j.dump(2));
    REQUIRE(run_cli("-c " + cfg2.string() + " -o " + dir.string() + " rb",
                    dir / "rb_log.txt") == 0);
    CHECK(slurp(dir / "rb_log.txt").find("tune-up") == std::string::npos);
    const json rb = json::parse(slurp(dir / "rb_result.json"));
    CHECK(rb.at("fit").at("p").get<double>() > 0.99);
}

}  // TEST_SUITE
