#include <cmath>
#include <complex>
#include <vector>

#include <doctest.h>
#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "qdds/clifford.hpp"
#include "qdds/device.hpp"
#include "qdds/dds.hpp"
#include "qdds/rb.hpp"

using namespace qdds;
using Eigen::Matrix2cd;
using Eigen::MatrixXcd;
using Eigen::Vector2cd;

namespace {

// Implemented single-gate unitary through the synthesis/demodulation/
// evolution chain, reconstructed from three pure-state images.
Matrix2cd implemented_unitary(PrimitiveGate prim, const CalibrationTable& cal,
                              const DeviceModel& device, const DacConfig& dac) {
    auto evolve_one = [&](const MatrixXcd& rho0) {
        ToneSpec tone;
        tone.carrier_frequency_hz = device.f01_hz;
        tone.anharmonicity_rad_s = device.anharmonicity_rad_s();
        tone.pulses = {{0.0, primitive_to_shape(prim, cal)}};
        const SampledWaveform w =
            synthesize({&tone, 1}, dac, 0.0, cal.gate_duration_s());
        const BasebandStream env = demodulate(w, device.f01_hz, 250e6);
        return evolve(QuantumState(rho0), env, device.f01_hz, device).rho();
    };
    auto dominant = [](const MatrixXcd& rho) {
        Eigen::SelfAdjointEigenSolver<MatrixXcd> es(rho);
        int best = 0;
        for (int i = 1; i < rho.rows(); ++i) {
            if (es.eigenvalues()[i] > es.eigenvalues()[best]) best = i;
        }
        Vector2cd v;
        v << es.eigenvectors()(0, best), es.eigenvectors()(1, best);
        return Vector2cd(v.normalized());
    };
    const int n = device.levels;
    MatrixXcd b0 = MatrixXcd::Zero(n, n), b1 = MatrixXcd::Zero(n, n),
              bp = MatrixXcd::Zero(n, n);
    b0(0, 0) = 1;
    b1(1, 1) = 1;
    bp(0, 0) = bp(0, 1) = bp(1, 0) = bp(1, 1) = 0.5;
    const Vector2cd a = dominant(evolve_one(b0));
    const Vector2cd b = dominant(evolve_one(b1));
    const Vector2cd p = dominant(evolve_one(bp));
    const std::complex<double> ca = a.dot(p), cb = b.dot(p);
    Matrix2cd u;
    u.col(0) = a * (ca / std::abs(ca));
    u.col(1) = b * (cb / std::abs(cb));
    return u;
}

}  // namespace

TEST_SUITE("rb") {

TEST_CASE("error rates derive from the fitted decay") {
    RbResult r;
    r.fit.p = 0.998576;
    r.fit.covariance(1, 1) = 1e-8;
    derive_error_rates(r);
    CHECK(r.epc == doctest::Approx(7.12e-4).epsilon(1e-6).scale(0.0));
    CHECK(r.epg == doctest::Approx(3.7986e-4).epsilon(1e-4).scale(0.0));
    CHECK(r.epc_sigma == doctest::Approx(0.5e-4).epsilon(1e-9).scale(0.0));
    CHECK(r.epg_sigma > 0.0);
}

TEST_CASE("ideal gates alone survive at the readout fidelity") {
    RbConfig cfg;
    cfg.mode = RbMode::Ideal;
    cfg.lengths = {2, 16, 64, 200};
    cfg.n_seeds = 4;
    cfg.exact_population = true;
    DeviceModel dev;
    const RbResult r = run_rb(cfg, dev, CalibrationTable{}, DacConfig{}, 5);
    for (const auto& row : r.survival_per_seed) {
        for (double s : row) CHECK(s == doctest::Approx(0.93).epsilon(1e-12));
    }
    CHECK(r.epc < 1e-6);
}

TEST_CASE("injected depolarizing noise reproduces its closed form") {
    RbConfig cfg;
    cfg.mode = RbMode::Ideal;
    cfg.lengths = {2, 8, 32, 128, 300};
    cfg.n_seeds = 3;
    cfg.exact_population = true;
    cfg.depolarizing_inject = 4e-3;
    DeviceModel dev;
    const RbResult r = run_rb(cfg, dev, CalibrationTable{}, DacConfig{}, 6);

    // survival after m Cliffords + recovery, each followed by the channel:
    // 0.5 (2f - 1)(1 - lambda)^(m+1) + 0.5
    for (std::size_t li = 0; li < cfg.lengths.size(); ++li) {
        const double expect =
            0.5 * (2 * dev.readout_fidelity - 1) *
                std::pow(1.0 - cfg.depolarizing_inject, cfg.lengths[li] + 1) +
            0.5;
        for (double s : r.survival_per_seed[li]) {
            CHECK(s == doctest::Approx(expect).epsilon(1e-12));
        }
    }
    CHECK(r.fit.p ==
          doctest::Approx(1.0 - cfg.depolarizing_inject).epsilon(1e-6));
}

TEST_CASE("fitted decay is independent of readout fidelity") {
    RbConfig cfg;
    cfg.mode = RbMode::Ideal;
    cfg.lengths = {2, 8, 32, 128};
    cfg.n_seeds = 3;
    cfg.exact_population = true;
    cfg.depolarizing_inject = 2e-3;
    DeviceModel good, poor;
    poor.readout_fidelity = 0.75;
    const RbResult a = run_rb(cfg, good, CalibrationTable{}, DacConfig{}, 9);
    const RbResult b = run_rb(cfg, poor, CalibrationTable{}, DacConfig{}, 9);
    CHECK(a.fit.p == doctest::Approx(b.fit.p).epsilon(1e-7));
}

TEST_CASE("idle decoherence lands on the analytic coherence limit") {
    RbConfig cfg;
    cfg.mode = RbMode::Ideal;
    // a dense ladder keeps the free baseline from trading against p when
    // the decay only reaches p^400 = 0.55
    cfg.lengths = {2, 50, 100, 150, 200, 250, 300, 350, 400};
    cfg.n_seeds = 20;
    cfg.exact_population = true;
    cfg.ideal_decoherence = true;
    DeviceModel dev;
    CalibrationTable cal;  // 29 ns gate slots
    const RbResult r = run_rb(cfg, dev, cal, DacConfig{}, 17);
    const double limit = coherence_limit_epg(cal.gate_duration_s(), dev);
    CHECK(r.epg == doctest::Approx(limit).epsilon(0.10).scale(0.0));
}

TEST_CASE("results are reproducible and independent of worker count") {
    RbConfig cfg;
    cfg.lengths = {2, 6, 14, 30};
    cfg.n_seeds = 2;
    cfg.exact_population = true;
    cfg.mode = RbMode::Hybrid;
    DeviceModel dev;
    DacConfig dac;
    dac.sample_rate_hz = 14.44e9;
    CalibrationTable cal;
    cal.a_pi = 0.0849;
    cal.a_pi_2 = 0.04245;
    cal.beta = 0.5;

    const RbResult a = run_rb(cfg, dev, cal, dac, 321);
    const RbResult b = run_rb(cfg, dev, cal, dac, 321);
    cfg.jobs = 3;
    const RbResult c = run_rb(cfg, dev, cal, dac, 321);
    CHECK(a.survival_per_seed == b.survival_per_seed);
    CHECK(a.survival_per_seed == c.survival_per_seed);
    const RbResult d = run_rb(cfg, dev, cal, dac, 322);
    CHECK(a.survival_per_seed != d.survival_per_seed);
}

TEST_CASE("each primitive realizes its table unitary through the chain") {
    DeviceModel dev;
    dev.t1_s = 1.0;
    dev.t2_s = 2.0;
    DacConfig dac;
    dac.sample_rate_hz = 14.44e9;
    CalibrationTable cal;
    cal.a_pi = 0.0850173070635985;
    cal.a_pi_2 = 0.04283101776929892;
    cal.beta = 0.54;

    for (PrimitiveGate prim : kAllPrimitives) {
        if (prim == PrimitiveGate::Identity) continue;
        const Matrix2cd u = implemented_unitary(prim, cal, dev, dac);
        CHECK(phase_invariant_distance(u, primitive_unitary(prim)) < 1e-3);
    }
}

TEST_CASE("tune-up converges and recovers the analytic pi amplitude") {
    DeviceModel dev;
    DacConfig dac;
    dac.sample_rate_hz = 28.88e9;
    TuneUpOptions opts;
    TuneUpReport rep;
    const CalibrationTable cal =
        tune_up(dev, dac, CalibrationTable{}, opts, 42, &rep);

    REQUIRE(cal.a_pi.has_value());
    REQUIRE(cal.a_pi_2.has_value());
    // the default rabi rate puts the ideal pi pulse at 8.49% of full scale
    CHECK(*cal.a_pi == doctest::Approx(0.0849).epsilon(0.01).scale(0.0));
    CHECK(*cal.a_pi_2 == doctest::Approx(0.04245).epsilon(0.01).scale(0.0));
    CHECK(std::abs(rep.final_angle_error_rad) < opts.angle_tolerance_rad);
    CHECK(rep.rabi_scan_a_pi > 0.0);
    CHECK(rep.beta_tuned);
    CHECK(cal.beta >= 0.0);
    CHECK(cal.beta <= 2.0);
}

TEST_CASE("phase-objective beta lands close to the leakage optimum") {
    DeviceModel dev;
    DacConfig dac;
    dac.sample_rate_hz = 28.88e9;
    TuneUpOptions opts;
    opts.beta_objective = BetaObjective::Phase;
    TuneUpReport rep;
    const CalibrationTable cal =
        tune_up(dev, dac, CalibrationTable{}, opts, 42, &rep);
    CHECK(rep.beta_tuned);
    // z-phase cancellation sits near beta = 0.5 for these gate parameters
    CHECK(cal.beta > 0.2);
    CHECK(cal.beta < 0.9);
}

TEST_CASE("full-dds survival inverts the instrument response") {
    RbConfig cfg;
    cfg.mode = RbMode::FullDds;
    cfg.lengths = {2, 4, 8};
    cfg.n_seeds = 2;
    cfg.exact_population = true;
    DeviceModel dev;
    DacConfig dac;
    // readout tone must clear Nyquist in full-dds mode
    dac.sample_rate_hz = 28.88e9;
    CalibrationTable cal;
    cal.a_pi = 0.0849;
    cal.a_pi_2 = 0.04245;
    cal.beta = 0.5;
    const RbResult r = run_rb(cfg, dev, cal, dac, 77);
    // undistorted channel: population recovered without assignment error
    for (const auto& row : r.survival_per_seed) {
        for (double s : row) CHECK(s > 0.95);
    }
}

TEST_CASE("background subtraction corrects the droop bias") {
    RbConfig cfg;
    cfg.mode = RbMode::FullDds;
    cfg.lengths = {2, 15, 40};
    cfg.n_seeds = 2;
    cfg.exact_population = true;
    cfg.distortion_enabled = true;
    cfg.distortion.tau_s = 5e-6;  // fast droop so short sequences feel it
    cfg.distortion.d_sat = 0.2;
    DeviceModel dev;
    DacConfig dac;
    dac.sample_rate_hz = 28.88e9;
    CalibrationTable cal;
    cal.a_pi = 0.0849;
    cal.a_pi_2 = 0.04245;
    cal.beta = 0.5;

    const DistortionStudy study = background_subtract_run(cfg, dev, cal, dac, 31);
    CHECK(study.droop_at_readout_longest > 0.01);
    // raw amplitude signal droops well below the corrected survival
    const std::size_t last = cfg.lengths.size() - 1;
    CHECK(study.raw.survival_mean[last] <
          study.corrected.survival_mean[last] - 0.02);
    CHECK(study.corrected.survival_mean[last] > 0.9);
}

TEST_CASE("config json round-trips and rejects unknown keys") {
    RbConfig cfg;
    cfg.lengths = {2, 10};
    cfg.mode = RbMode::FullDds;
    cfg.distortion.tau_s = 7e-6;
    cfg.jobs = 4;
    const RbConfig back = RbConfig::from_json(cfg.to_json());
    CHECK(back.lengths == cfg.lengths);
    CHECK(back.mode == RbMode::FullDds);
    CHECK(back.distortion.tau_s == 7e-6);
    CHECK(back.jobs == 4);

    nlohmann::json j = cfg.to_json();
    j["typo_key"] = 1;
    CHECK_THROWS_AS(RbConfig::from_json(j), std::invalid_argument);
    nlohmann::json j2 = cfg.to_json();
    j2["distortion"]["bogus"] = 1;
    CHECK_THROWS_AS(RbConfig::from_json(j2), std::invalid_argument);
    CHECK_THROWS_AS(rb_mode_from_string("warp"), std::invalid_argument);
}

TEST_CASE("sweeps re-tune per gate length and report the coherence limit") {
    RbConfig cfg;
    cfg.lengths = {2, 8, 24};
    cfg.n_seeds = 3;
    cfg.exact_population = true;
    DeviceModel dev;
    DacConfig dac;
    dac.sample_rate_hz = 14.44e9;
    const std::vector<double> values = {29e-9};
    const auto rows = sweep(SweepParameter::GateLength, values, cfg, dev,
                            CalibrationTable{}, dac, 60);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].value == 29e-9);
    REQUIRE(rows[0].coherence_limit.has_value());
    CHECK(*rows[0].coherence_limit ==
          doctest::Approx(coherence_limit_epg(29e-9, dev)).epsilon(1e-9).scale(0.0));
    CHECK(rows[0].epg > 0.0);
    CHECK(rows[0].epg < 5e-3);
}

}  // TEST_SUITE
