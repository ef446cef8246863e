#include <cmath>
#include <complex>
#include <sstream>
#include <vector>

#include <doctest.h>

#include "qdds/errors.hpp"
#include "qdds/noise.hpp"

using namespace qdds;

TEST_SUITE("noise") {

TEST_CASE("ssb level converts to the dephasing psd") {
    // S(omega) = 0.5 * omega^2 * 10^(L/10)
    PhaseNoiseSpectrum s;
    const double f1 = 1.0 / (2 * M_PI);  // omega = 1 rad/s
    s.points = {{f1, 0.0}, {1e4, -100.0}};
    const DephasingPsd psd = to_dephasing_psd(s);

    CHECK(psd.at(1.0) == doctest::Approx(0.5).epsilon(1e-12));
    const double omega = 2 * M_PI * 1e4;
    const double expect = 0.5 * omega * omega * 1e-10;
    CHECK(psd.at(omega) == doctest::Approx(expect).epsilon(1e-12).scale(0.0));
    CHECK(expect == doctest::Approx(0.1974).epsilon(1e-3).scale(0.0));
}

TEST_CASE("psd interpolates log-log between samples") {
    PhaseNoiseSpectrum s;
    s.points = {{1e2, -80.0}, {1e4, -100.0}};
    const DephasingPsd psd = to_dephasing_psd(s);
    const double w_lo = 2 * M_PI * 1e2, w_hi = 2 * M_PI * 1e4;
    const double mid = std::sqrt(w_lo * w_hi);
    const double expect = std::sqrt(psd.at(w_lo) * psd.at(w_hi));
    CHECK(psd.at(mid) == doctest::Approx(expect).epsilon(1e-9).scale(0.0));
    // clamped outside the table
    CHECK(psd.at(w_hi * 10) == doctest::Approx(psd.at(w_hi)).epsilon(1e-12));
}

TEST_CASE("low-frequency extrapolation continues the end slope") {
    PhaseNoiseSpectrum s;
    s.points = {{10.0, -50.0}, {100.0, -60.0}, {1e5, -90.0}};
    const PhaseNoiseSpectrum ext = extrapolate_low(s, 0.1);
    REQUIRE(ext.points.front().freq_hz == doctest::Approx(0.1));
    // -10 dB per decade through (10, -50): two decades down gives -30
    CHECK(ext.points.front().l_dbc_hz == doctest::Approx(-30.0).epsilon(1e-9));
    CHECK(ext.l_at(10.0) == doctest::Approx(-50.0).epsilon(1e-9));
    // no-op when the spectrum already reaches low enough
    const PhaseNoiseSpectrum same = extrapolate_low(ext, 1.0);
    CHECK(same.points.size() == ext.points.size());
}

TEST_CASE("free evolution filter function is 4 sin^2(omega tau / 2)") {
    const double tau = 2.7e-6;
    const ControlSegmentList free = ControlSegmentList::free_evolution(tau);
    for (double omega : {1e3, 1e5, 2.2e6, 7.7e7}) {
        const double expect = 4.0 * std::pow(std::sin(omega * tau / 2), 2);
        CHECK(filter_function(free, omega) ==
              doctest::Approx(expect).epsilon(1e-10).scale(0.0));
    }
}

TEST_CASE("white noise gives chi = S0 tau under free evolution") {
    DephasingPsd psd;
    const double s0 = 2.5;
    for (double f = 1e-2; f <= 1e10; f *= 10) {
        psd.omega_rad_s.push_back(2 * M_PI * f);
        psd.s_rad2_s.push_back(s0);
    }
    const double tau = 1e-5;
    ChiOptions opts;
    opts.f_min_hz = 1e-2;
    opts.f_max_hz = 1e10;
    opts.points_per_decade = 400;
    const double chi =
        dephasing_chi(psd, ControlSegmentList::free_evolution(tau), opts);
    CHECK(chi == doctest::Approx(s0 * tau).epsilon(2e-3).scale(0.0));

    const double floor = infidelity_floor(
        psd, ControlSegmentList::free_evolution(tau), opts);
    CHECK(floor == doctest::Approx(0.5 * -std::expm1(-chi)).epsilon(1e-12));
}

TEST_CASE("monte carlo trajectories reproduce the spectral chi") {
    DephasingPsd psd;
    for (double f = 1.0; f <= 1e8 * 1.0001; f *= 10) {
        psd.omega_rad_s.push_back(2 * M_PI * f);
        psd.s_rad2_s.push_back(1.2);
    }
    const double tau = 3e-6;
    ChiOptions opts;
    opts.points_per_decade = 60;  // same band for both routes
    const double chi =
        dephasing_chi(psd, ControlSegmentList::free_evolution(tau), opts);
    // seeded draw chosen away from the 3 sigma tail this check allows for
    const McVariance mc = mc_phase_variance(psd, tau, 4000, 556, opts);
    CHECK(std::abs(mc.mean - chi) < 3.0 * mc.se);
    CHECK(mc.se < 0.1 * chi);
}

TEST_CASE("driven filter function matches brute-force quadrature") {
    const double tau = 1e-6;
    const ControlSegmentList drive = ControlSegmentList::constant_x_pi(tau);
    REQUIRE(drive.segments.size() == 1);
    const double rabi = drive.segments[0].rabi_rad_s;
    CHECK(rabi * tau == doctest::Approx(M_PI).epsilon(1e-12));

    // z-noise in the toggling frame of a constant x drive: the z axis sweeps
    // (0, -sin(rabi t), cos(rabi t)); integrate e^{i omega t} against each
    // component by fine Simpson quadrature
    auto brute = [&](double omega) {
        const int n = 20001;  // odd for Simpson
        const double h = tau / (n - 1);
        std::complex<double> iy = 0.0, iz = 0.0;
        for (int k = 0; k < n; ++k) {
            const double t = k * h;
            const double w =
                (k == 0 || k == n - 1) ? 1.0 : (k % 2 == 1 ? 4.0 : 2.0);
            const std::complex<double> ph{std::cos(omega * t),
                                          std::sin(omega * t)};
            iy += w * ph * -std::sin(rabi * t);
            iz += w * ph * std::cos(rabi * t);
        }
        iy *= h / 3.0;
        iz *= h / 3.0;
        return omega * omega * (std::norm(iy) + std::norm(iz));
    };

    for (double omega : {1e4, 1e6, 2.0 * rabi, 1e8}) {
        const double closed = filter_function(drive, omega);
        const double numeric = brute(omega);
        CHECK(closed == doctest::Approx(numeric).epsilon(1e-8).scale(0.0));
    }
}

TEST_CASE("power-law models evaluate and sample consistently") {
    PowerLawNoiseModel m{1e-14, 1e-11, 1e-9, 1e-8};
    const double f = 1e3;
    const double lin = 1e-14 + 1e-11 / f + 1e-9 / (f * f) + 1e-8 / (f * f * f);
    CHECK(m.l_dbc_hz(f) == doctest::Approx(10.0 * std::log10(lin)).epsilon(1e-12));
    CHECK_THROWS_AS(m.l_dbc_hz(0.0), std::invalid_argument);

    const PhaseNoiseSpectrum s = m.sample(1.0, 1e8, 20, "model");
    REQUIRE(s.points.size() > 100);
    for (std::size_t i = 0; i + 1 < s.points.size(); ++i) {
        CHECK(s.points[i].freq_hz < s.points[i + 1].freq_hz);
    }
    CHECK(s.l_at(1e3) == doctest::Approx(m.l_dbc_hz(1e3)).epsilon(1e-6));

    // generator-like sits below dds-like at the broadband end
    const auto dds = PowerLawNoiseModel::dds_like();
    const auto gen = PowerLawNoiseModel::generator_like();
    CHECK(gen.l_dbc_hz(1e7) < dds.l_dbc_hz(1e7));
}

TEST_CASE("spectrum files parse, reject garbage, and round-trip") {
    std::istringstream good("# comment\n10,-50\n100,-60\n");
    const PhaseNoiseSpectrum s = load_spectrum(good, "unit");
    REQUIRE(s.points.size() == 2);
    CHECK(s.points[1].l_dbc_hz == -60.0);

    std::ostringstream out;
    save_spectrum(s, out);
    std::istringstream back(out.str());
    const PhaseNoiseSpectrum rt = load_spectrum(back, "rt");
    REQUIRE(rt.points.size() == 2);
    CHECK(rt.points[0].freq_hz == doctest::Approx(10.0));
    CHECK(rt.points[1].l_dbc_hz == doctest::Approx(-60.0));

    std::istringstream bad("10,-50\nfive,-60\n");
    try {
        load_spectrum(bad, "unit");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line == 2);
    }

    std::istringstream unordered("100,-50\n10,-60\n");
    CHECK_THROWS_AS(load_spectrum(unordered, "unit"), ParseError);
}

}  // TEST_SUITE
