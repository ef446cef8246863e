#include <cmath>
#include <complex>

#include <doctest.h>
#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "qdds/device.hpp"
#include "qdds/dds.hpp"
#include "qdds/pulse.hpp"
#include "qdds/rng.hpp"

using namespace qdds;
using Eigen::MatrixXcd;

namespace {
QuantumState superposition(int levels) {
    MatrixXcd rho = MatrixXcd::Zero(levels, levels);
    rho(0, 0) = rho(0, 1) = rho(1, 0) = rho(1, 1) = 0.5;
    return QuantumState(rho);
}
}  // namespace

TEST_SUITE("device") {

TEST_CASE("kraus sets are trace preserving") {
    DeviceModel dev;
    for (double dt : {1e-10, 1e-9, 1e-7, 1e-6}) {
        for (const auto& set :
             {relaxation_kraus(dev, dt), dephasing_kraus(dev, dt)}) {
            MatrixXcd sum = MatrixXcd::Zero(dev.levels, dev.levels);
            for (const auto& k : set) sum += k.adjoint() * k;
            CHECK((sum - MatrixXcd::Identity(dev.levels, dev.levels))
                      .cwiseAbs()
                      .maxCoeff() < 1e-12);
        }
    }
}

TEST_CASE("idle evolution matches the closed-form decay rates") {
    DeviceModel dev;
    const double t = 3e-6;
    const QuantumState out = idle_evolve(superposition(dev.levels), t, dev);

    // populations relax at 1/T1, the 0-1 coherence at 1/T2 total
    const double p1 = 0.5 * std::exp(-t / dev.t1_s);
    CHECK(out.population(1) == doctest::Approx(p1).epsilon(1e-12));
    CHECK(out.population(0) == doctest::Approx(1.0 - p1).epsilon(1e-12));
    CHECK(std::abs(out.rho()(0, 1)) ==
          doctest::Approx(0.5 * std::exp(-t / dev.t2_s)).epsilon(1e-12));
    CHECK(out.is_physical());
}

TEST_CASE("level 2 relaxes twice as fast and dephases four times harder") {
    DeviceModel dev;
    MatrixXcd rho = MatrixXcd::Zero(3, 3);
    rho(0, 0) = 0.5;
    rho(2, 2) = 0.5;
    rho(0, 2) = rho(2, 0) = 0.5;
    const double t = 2e-6;
    const QuantumState out = idle_evolve(QuantumState(rho), t, dev);

    CHECK(out.population(2) ==
          doctest::Approx(0.5 * std::exp(-2.0 * t / dev.t1_s)).epsilon(1e-12));
    const double gamma_phi = dev.pure_dephasing_rate() * t;
    // 0-2 coherence: amplitude factor sqrt(1 - p2) = exp(-t/T1) from the
    // doubled |2> decay, times the 4x-variance dephasing
    const double amp = 0.5 * std::exp(-t / dev.t1_s - 4.0 * gamma_phi);
    CHECK(std::abs(out.rho()(0, 2)) == doctest::Approx(amp).epsilon(1e-9));
    CHECK(out.is_physical());
}

TEST_CASE("t2 equal to 2 t1 leaves no pure dephasing") {
    DeviceModel dev;
    dev.t1_s = 40e-6;
    dev.t2_s = 80e-6;
    CHECK(dev.pure_dephasing_rate() == doctest::Approx(0.0).epsilon(1e-15));
    dev.t2_s = 81e-6;
    CHECK_THROWS_AS(dev.validate(), std::invalid_argument);
}

TEST_CASE("coherence limit reproduces the frozen 29 ns reference") {
    DeviceModel dev;  // T1 = 51 us, T2 = 32 us
    const double epg = coherence_limit_epg(29e-9, dev);
    CHECK(epg == doctest::Approx(3.96697e-4).epsilon(1e-4).scale(0.0));
    // limit vanishes for perfect coherence
    dev.t1_s = 1e6;
    dev.t2_s = 1e6;
    CHECK(coherence_limit_epg(29e-9, dev) < 1e-9);
}

TEST_CASE("rotating-frame evolution agrees with the lab-frame integrator") {
    DeviceModel dev;
    dev.t1_s = 1.0;  // effectively unitary over 29 ns
    dev.t2_s = 2.0;
    DacConfig dac;
    dac.sample_rate_hz = 65e9;

    ToneSpec tone;
    tone.carrier_frequency_hz = dev.f01_hz;
    tone.anharmonicity_rad_s = dev.anharmonicity_rad_s();
    PulseShape s;
    s.amplitude = 0.0425;
    s.drag_coefficient = 0.5;
    tone.pulses = {{0.0, s}};
    const double t_end = s.duration_s();
    const SampledWaveform w = synthesize({&tone, 1}, dac, 0.0, t_end);

    const BasebandStream env = demodulate(w, dev.f01_hz, 250e6);
    const QuantumState rot =
        evolve(QuantumState::ground(dev.levels), env, dev.f01_hz, dev);
    const QuantumState lab = evolve_lab_frame(QuantumState::ground(dev.levels),
                                              w, dev.f01_hz, dev, 8);

    // The lab integrator drives with the zero-order-hold staircase, whose
    // sinc rolloff at f01/fs = 0.073 weakens the carrier by 0.9%; that puts
    // an 8e-3 floor under the population gap for a pi/2 pulse.
    for (int l = 0; l < dev.levels; ++l) {
        CHECK(std::abs(rot.population(l) - lab.population(l)) < 1.2e-2);
    }
    CHECK(rot.population(1) > 0.45);  // a pi/2-ish rotation actually happened
}

TEST_CASE("a tone 2 GHz off resonance barely excites the qubit") {
    DeviceModel dev;
    DacConfig dac;
    dac.sample_rate_hz = 28.88e9;
    ToneSpec tone;
    tone.carrier_frequency_hz = dev.f01_hz + 2e9;
    tone.anharmonicity_rad_s = dev.anharmonicity_rad_s();
    PulseShape s;
    s.amplitude = 0.0849;  // a full pi pulse if it were resonant
    tone.pulses = {{0.0, s}};
    const SampledWaveform w = synthesize({&tone, 1}, dac, 0.0, s.duration_s());
    // demodulate in the tone's own frame, evolve the detuned qubit there
    const BasebandStream env = demodulate(w, tone.carrier_frequency_hz, 250e6);
    const QuantumState out = evolve(QuantumState::ground(dev.levels), env,
                                    tone.carrier_frequency_hz, dev);
    CHECK(out.p_excited() < 1e-3);
}

TEST_CASE("expected survival reflects symmetric readout error") {
    DeviceModel dev;
    CHECK(expected_survival(QuantumState::ground(dev.levels), dev) ==
          doctest::Approx(0.93).epsilon(1e-12));
    MatrixXcd rho = MatrixXcd::Zero(3, 3);
    rho(1, 1) = 1.0;
    CHECK(expected_survival(QuantumState(rho), dev) ==
          doctest::Approx(0.07).epsilon(1e-12));
}

TEST_CASE("measurement statistics follow the assignment fidelity") {
    DeviceModel dev;
    Rng rng(2024);
    int ones = 0;
    const int shots = 20000;
    for (int i = 0; i < shots; ++i) {
        ones += measure(QuantumState::ground(dev.levels), dev, rng);
    }
    // expect 7% misassignment, binomial 3 sigma ~ 0.55%
    CHECK(double(ones) / shots == doctest::Approx(0.07).epsilon(0.08));
}

TEST_CASE("readout amplitude interpolates between the level responses") {
    DeviceModel dev;
    CHECK(readout_amplitude(QuantumState::ground(dev.levels), dev, 0.0) ==
          doctest::Approx(1.0).epsilon(1e-12));
    MatrixXcd rho = MatrixXcd::Zero(3, 3);
    rho(1, 1) = 1.0;
    CHECK(readout_amplitude(QuantumState(rho), dev, 0.0) ==
          doctest::Approx(0.4).epsilon(1e-12));
    CHECK(readout_amplitude(QuantumState(rho), dev, 0.25) ==
          doctest::Approx(0.3).epsilon(1e-12));
}

TEST_CASE("device json round-trips and validates") {
    DeviceModel dev;
    dev.t1_s = 40e-6;
    dev.t2_s = 30e-6;
    dev.levels = 2;
    const DeviceModel back = DeviceModel::from_json(dev.to_json());
    CHECK(back.t1_s == dev.t1_s);
    CHECK(back.t2_s == dev.t2_s);
    CHECK(back.levels == 2);

    nlohmann::json j = dev.to_json();
    j["t2_s"] = 100e-6;  // violates t2 <= 2 t1
    CHECK_THROWS_AS(DeviceModel::from_json(j), std::invalid_argument);
}

}  // TEST_SUITE
