#include "qdds/noise.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "qdds/errors.hpp"
#include "qdds/rng.hpp"

namespace qdds {

namespace {
constexpr double kPi = 3.14159265358979323846;

double interp_clamped(const std::vector<double>& xs,
                      const std::vector<double>& ys, double x) {
    if (xs.empty()) throw std::invalid_argument("empty table");
    if (x <= xs.front()) return ys.front();
    if (x >= xs.back()) return ys.back();
    const auto it = std::upper_bound(xs.begin(), xs.end(), x);
    const std::size_t hi = it - xs.begin();
    const std::size_t lo = hi - 1;
    const double t = (x - xs[lo]) / (xs[hi] - xs[lo]);
    return ys[lo] + t * (ys[hi] - ys[lo]);
}

// sin(y)/y with a series branch for small arguments.
double sinc(double y) {
    if (std::abs(y) < 1e-4) return 1.0 - y * y / 6.0;
    return std::sin(y) / y;
}

// integral_0^L e^{i x s} ds = L e^{i x L / 2} sinc(x L / 2)
std::complex<double> cis_integral(double x, double len) {
    const double half = 0.5 * x * len;
    return len * sinc(half) *
           std::complex<double>(std::cos(half), std::sin(half));
}
}  // namespace

double PhaseNoiseSpectrum::l_at(double freq_hz) const {
    if (points.empty()) throw std::invalid_argument("empty spectrum");
    std::vector<double> xs(points.size()), ys(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        xs[i] = std::log10(points[i].freq_hz);
        ys[i] = points[i].l_dbc_hz;
    }
    return interp_clamped(xs, ys, std::log10(freq_hz));
}

PhaseNoiseSpectrum load_spectrum(std::istream& in, const std::string& source) {
    PhaseNoiseSpectrum s;
    s.source = source;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto first = line.find_first_not_of(" \t");
        if (first == std::string::npos || line[first] == '#') continue;
        std::string fields = line;
        std::replace(fields.begin(), fields.end(), ',', ' ');
        std::istringstream row(fields);
        double f = 0.0, l = 0.0;
        std::string extra;
        if (!(row >> f >> l)) {
            throw ParseError("expected two numeric columns", line_no);
        }
        if (row >> extra) {
            throw ParseError("unexpected extra column", line_no);
        }
        if (!(f > 0) || !std::isfinite(f) || !std::isfinite(l)) {
            throw ParseError("frequency must be positive and finite", line_no);
        }
        if (!s.points.empty() && f <= s.points.back().freq_hz) {
            throw ParseError("frequencies must be strictly increasing", line_no);
        }
        s.points.push_back({f, l});
    }
    if (s.points.empty()) {
        throw ParseError("spectrum has no data rows", line_no);
    }
    return s;
}

PhaseNoiseSpectrum load_spectrum_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open spectrum file " + path);
    return load_spectrum(in, path);
}

void save_spectrum(const PhaseNoiseSpectrum& s, std::ostream& out) {
    out << "# frequency_hz,l_dbc_hz\n";
    for (const auto& p : s.points) {
        out << p.freq_hz << ',' << p.l_dbc_hz << '\n';
    }
}

PhaseNoiseSpectrum extrapolate_low(const PhaseNoiseSpectrum& s,
                                   double f_min_hz) {
    if (s.points.size() < 2) {
        throw std::invalid_argument("extrapolation needs at least 2 points");
    }
    if (!(f_min_hz > 0)) {
        throw std::invalid_argument("extrapolation floor must be positive");
    }
    if (f_min_hz >= s.points.front().freq_hz) return s;
    const auto& p0 = s.points[0];
    const auto& p1 = s.points[1];
    const double slope = (p1.l_dbc_hz - p0.l_dbc_hz) /
                         (std::log10(p1.freq_hz) - std::log10(p0.freq_hz));
    PhaseNoiseSpectrum out = s;
    const double l = p0.l_dbc_hz +
                     slope * (std::log10(f_min_hz) - std::log10(p0.freq_hz));
    out.points.insert(out.points.begin(), {f_min_hz, l});
    return out;
}

double DephasingPsd::at(double omega) const {
    if (omega_rad_s.empty()) throw std::invalid_argument("empty psd");
    std::vector<double> xs(omega_rad_s.size()), ys(omega_rad_s.size());
    for (std::size_t i = 0; i < omega_rad_s.size(); ++i) {
        xs[i] = std::log(omega_rad_s[i]);
        ys[i] = std::log(s_rad2_s[i]);
    }
    return std::exp(interp_clamped(xs, ys, std::log(omega)));
}

DephasingPsd to_dephasing_psd(const PhaseNoiseSpectrum& s) {
    DephasingPsd p;
    p.source = s.source;
    p.omega_rad_s.reserve(s.points.size());
    p.s_rad2_s.reserve(s.points.size());
    for (const auto& pt : s.points) {
        const double omega = 2 * kPi * pt.freq_hz;
        p.omega_rad_s.push_back(omega);
        p.s_rad2_s.push_back(0.5 * omega * omega *
                             std::pow(10.0, pt.l_dbc_hz / 10.0));
    }
    return p;
}

double ControlSegmentList::total_duration_s() const {
    double t = 0.0;
    for (const auto& s : segments) t += s.duration_s;
    return t;
}

ControlSegmentList ControlSegmentList::free_evolution(double duration_s) {
    return {{{duration_s, 0.0, 0.0}}};
}

ControlSegmentList ControlSegmentList::constant_x_pi(double duration_s) {
    return {{{duration_s, kPi / duration_s, 0.0}}};
}

double filter_function(const ControlSegmentList& ctrl, double omega) {
    // Track the noise axis v(t) (v(0) = z) through the control rotations and
    // accumulate J = integral e^{i omega t} v(t) dt segment by segment with
    // the Rodrigues closed form v(s) = a + b cos(W s) + c sin(W s).
    std::array<double, 3> v{0.0, 0.0, 1.0};
    std::array<std::complex<double>, 3> j{};
    double t0 = 0.0;
    for (const auto& seg : ctrl.segments) {
        if (!(seg.duration_s > 0)) {
            throw std::invalid_argument("control segments need a positive span");
        }
        const double len = seg.duration_s;
        const std::complex<double> lead{std::cos(omega * t0),
                                        std::sin(omega * t0)};
        if (seg.rabi_rad_s == 0.0) {
            const auto i0 = cis_integral(omega, len);
            for (int d = 0; d < 3; ++d) j[d] += lead * i0 * v[d];
        } else {
            const double w = seg.rabi_rad_s;
            const std::array<double, 3> u{std::cos(seg.phase_rad),
                                          std::sin(seg.phase_rad), 0.0};
            const double udotv = u[0] * v[0] + u[1] * v[1] + u[2] * v[2];
            std::array<double, 3> a, b, c;
            for (int d = 0; d < 3; ++d) {
                a[d] = u[d] * udotv;
                b[d] = v[d] - a[d];
            }
            c = {u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2],
                 u[0] * v[1] - u[1] * v[0]};
            const auto i0 = cis_integral(omega, len);
            const auto ip = cis_integral(omega + w, len);
            const auto im = cis_integral(omega - w, len);
            const auto ic = 0.5 * (ip + im);
            const auto is = (ip - im) / std::complex<double>(0.0, 2.0);
            for (int d = 0; d < 3; ++d) {
                j[d] += lead * (a[d] * i0 + b[d] * ic + c[d] * is);
            }
            const double cw = std::cos(w * len), sw = std::sin(w * len);
            for (int d = 0; d < 3; ++d) v[d] = a[d] + b[d] * cw + c[d] * sw;
        }
        t0 += len;
    }
    double sum = 0.0;
    for (const auto& comp : j) sum += std::norm(comp);
    return omega * omega * sum;
}

namespace {
std::vector<double> log_omega_grid(const ChiOptions& opts) {
    if (!(opts.f_min_hz > 0) || !(opts.f_max_hz > opts.f_min_hz) ||
        opts.points_per_decade < 2) {
        throw std::invalid_argument("bad integration band");
    }
    const double decades = std::log10(opts.f_max_hz / opts.f_min_hz);
    const int n =
        std::max(2, int(std::ceil(decades * opts.points_per_decade)) + 1);
    std::vector<double> omega(n);
    for (int i = 0; i < n; ++i) {
        const double f = opts.f_min_hz *
                         std::pow(10.0, decades * double(i) / double(n - 1));
        omega[i] = 2 * kPi * f;
    }
    return omega;
}
}  // namespace

double dephasing_chi(const DephasingPsd& psd, const ControlSegmentList& ctrl,
                     const ChiOptions& opts) {
    const auto omega = log_omega_grid(opts);
    std::vector<double> g(omega.size());
    for (std::size_t i = 0; i < omega.size(); ++i) {
        g[i] = psd.at(omega[i]) * filter_function(ctrl, omega[i]) /
               (omega[i] * omega[i]);
    }
    double chi = 0.0;
    for (std::size_t i = 0; i + 1 < omega.size(); ++i) {
        chi += 0.5 * (g[i] + g[i + 1]) * (omega[i + 1] - omega[i]);
    }
    return chi / kPi;
}

double infidelity_floor(const DephasingPsd& psd,
                        const ControlSegmentList& ctrl,
                        const ChiOptions& opts) {
    return 0.5 * -std::expm1(-dephasing_chi(psd, ctrl, opts));
}

double PowerLawNoiseModel::l_dbc_hz(double f) const {
    if (!(f > 0)) throw std::invalid_argument("frequency must be positive");
    const double lin = h0 + h1 / f + h2 / (f * f) + h3 / (f * f * f);
    return 10.0 * std::log10(lin);
}

PhaseNoiseSpectrum PowerLawNoiseModel::sample(double f_min_hz, double f_max_hz,
                                              int points_per_decade,
                                              const std::string& source) const {
    if (!(f_min_hz > 0) || !(f_max_hz > f_min_hz) || points_per_decade < 1) {
        throw std::invalid_argument("bad sampling band");
    }
    const double decades = std::log10(f_max_hz / f_min_hz);
    const int n = std::max(2, int(std::ceil(decades * points_per_decade)) + 1);
    PhaseNoiseSpectrum s;
    s.source = source;
    for (int i = 0; i < n; ++i) {
        const double f =
            f_min_hz * std::pow(10.0, decades * double(i) / double(n - 1));
        s.points.push_back({f, l_dbc_hz(f)});
    }
    return s;
}

PowerLawNoiseModel PowerLawNoiseModel::dds_like() {
    // Higher broadband floor, mild close-in rise.
    return {1e-14, 1e-11, 1e-9, 1e-8};
}

PowerLawNoiseModel PowerLawNoiseModel::generator_like() {
    // Lower floor, steeper close-in flicker.
    return {1e-15, 1e-12, 1e-9, 1e-7};
}

McVariance mc_phase_variance(const DephasingPsd& psd, double tau_s,
                             int n_trajectories, std::uint64_t seed,
                             const ChiOptions& opts) {
    if (n_trajectories < 2) {
        throw std::invalid_argument("need at least 2 trajectories");
    }
    if (!(tau_s > 0)) throw std::invalid_argument("tau must be positive");
    const auto omega = log_omega_grid(opts);
    const std::size_t n = omega.size();
    std::vector<double> amp(n), half_angle(n), weight(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double lo = k == 0 ? omega[0] : 0.5 * (omega[k - 1] + omega[k]);
        const double hi =
            k + 1 == n ? omega[n - 1] : 0.5 * (omega[k] + omega[k + 1]);
        const double domega = hi - lo;
        amp[k] = std::sqrt(2.0 * psd.at(omega[k]) * domega / kPi);
        half_angle[k] = 0.5 * omega[k] * tau_s;
        // integral_0^tau cos(w t + theta) dt = tau sinc(w tau/2) cos(theta + w tau/2)
        weight[k] = tau_s * sinc(half_angle[k]);
    }

    Rng rng(seed);
    double sum = 0.0, sum_sq = 0.0;
    for (int traj = 0; traj < n_trajectories; ++traj) {
        double phi = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            const double theta = 2 * kPi * rng.uniform();
            phi += amp[k] * weight[k] * std::cos(theta + half_angle[k]);
        }
        const double v = phi * phi;
        sum += v;
        sum_sq += v * v;
    }
    McVariance out;
    out.mean = sum / n_trajectories;
    const double var =
        (sum_sq - sum * sum / n_trajectories) / (n_trajectories - 1);
    out.se = std::sqrt(std::max(0.0, var) / n_trajectories);
    return out;
}

}  // namespace qdds
