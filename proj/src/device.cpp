#include "qdds/device.hpp"

#include <cmath>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "qdds/errors.hpp"

namespace qdds {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;

// Per-step amplitude damping: |2> -> |1> at twice the 1 -> 0 rate.
struct RelaxStep {
    double p1 = 0.0, p2 = 0.0;
    double c1 = 1.0, c2 = 1.0;  // sqrt(1 - p)
};

RelaxStep relax_step(const DeviceModel& d, double dt) {
    RelaxStep s;
    s.p1 = -std::expm1(-dt / d.t1_s);
    s.p2 = -std::expm1(-2.0 * dt / d.t1_s);
    s.c1 = std::sqrt(1.0 - s.p1);
    s.c2 = std::sqrt(1.0 - s.p2);
    return s;
}

// E(rho) = K0 rho K0^dag + K1 rho K1^dag (+ K2 rho K2^dag), closed form.
void apply_relaxation(Eigen::MatrixXcd& rho, const RelaxStep& s) {
    if (rho.rows() == 2) {
        rho(0, 0) += s.p1 * rho(1, 1).real();
        rho(1, 1) *= 1.0 - s.p1;
        rho(0, 1) *= s.c1;
        rho(1, 0) *= s.c1;
        return;
    }
    rho(0, 0) += s.p1 * rho(1, 1).real();
    rho(1, 1) = (1.0 - s.p1) * rho(1, 1) + s.p2 * rho(2, 2).real();
    rho(2, 2) *= 1.0 - s.p2;
    rho(0, 1) *= s.c1;
    rho(1, 0) *= s.c1;
    rho(0, 2) *= s.c2;
    rho(2, 0) *= s.c2;
    rho(1, 2) *= s.c1 * s.c2;
    rho(2, 1) *= s.c1 * s.c2;
}

// Gaussian phase diffusion: coherence (n,m) decays as exp(-gamma (n-m)^2).
void apply_dephasing(Eigen::MatrixXcd& rho, double gamma) {
    if (gamma <= 0.0) return;
    const double e1 = std::exp(-gamma);
    rho(0, 1) *= e1;
    rho(1, 0) *= e1;
    if (rho.rows() == 3) {
        const double e4 = std::exp(-4.0 * gamma);
        rho(1, 2) *= e1;
        rho(2, 1) *= e1;
        rho(0, 2) *= e4;
        rho(2, 0) *= e4;
    }
}

void apply_unitary_3(Eigen::MatrixXcd& rho, const Eigen::Matrix3cd& h,
                     double dt) {
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3cd> es;
    es.computeDirect(h);
    Eigen::Vector3cd phases;
    for (int i = 0; i < 3; ++i) {
        const double a = -es.eigenvalues()(i) * dt;
        phases(i) = {std::cos(a), std::sin(a)};
    }
    const Eigen::Matrix3cd u =
        es.eigenvectors() * phases.asDiagonal() * es.eigenvectors().adjoint();
    rho = u * rho * u.adjoint();
}

void apply_unitary_2(Eigen::MatrixXcd& rho, const Eigen::Matrix2cd& h,
                     double dt) {
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2cd> es;
    es.computeDirect(h);
    Eigen::Vector2cd phases;
    for (int i = 0; i < 2; ++i) {
        const double a = -es.eigenvalues()(i) * dt;
        phases(i) = {std::cos(a), std::sin(a)};
    }
    const Eigen::Matrix2cd u =
        es.eigenvectors() * phases.asDiagonal() * es.eigenvectors().adjoint();
    rho = u * rho * u.adjoint();
}

// Frame Hamiltonian step for a constant complex drive omega (rad/s).
void drive_step(Eigen::MatrixXcd& rho, std::complex<double> omega,
                double delta_frame, double anharm, double dt) {
    const bool three = rho.rows() == 3;
    if (omega == std::complex<double>(0.0, 0.0)) {
        // Diagonal Hamiltonian: pure phases on the coherences.
        const double a1 = -delta_frame * dt;
        const double a2 = -(2.0 * delta_frame - anharm) * dt;
        const std::complex<double> e1{std::cos(a1), std::sin(a1)};
        rho(0, 1) *= std::conj(e1);
        rho(1, 0) *= e1;
        if (three) {
            const std::complex<double> e2{std::cos(a2), std::sin(a2)};
            rho(0, 2) *= std::conj(e2);
            rho(2, 0) *= e2;
            rho(1, 2) *= e1 * std::conj(e2);
            rho(2, 1) *= std::conj(e1) * e2;
        }
        return;
    }
    if (three) {
        Eigen::Matrix3cd h = Eigen::Matrix3cd::Zero();
        h(1, 1) = delta_frame;
        h(2, 2) = 2.0 * delta_frame - anharm;
        h(0, 1) = 0.5 * omega;
        h(1, 0) = std::conj(h(0, 1));
        h(1, 2) = 0.5 * std::sqrt(2.0) * omega;
        h(2, 1) = std::conj(h(1, 2));
        apply_unitary_3(rho, h, dt);
    } else {
        Eigen::Matrix2cd h = Eigen::Matrix2cd::Zero();
        h(1, 1) = delta_frame;
        h(0, 1) = 0.5 * omega;
        h(1, 0) = std::conj(h(0, 1));
        apply_unitary_2(rho, h, dt);
    }
}
}  // namespace

double DeviceModel::pure_dephasing_rate() const {
    return 1.0 / t2_s - 0.5 / t1_s;
}

void DeviceModel::validate() const {
    if (levels != 2 && levels != 3) {
        throw std::invalid_argument("device must model 2 or 3 levels");
    }
    if (!(f01_hz > 0) || !(f_readout_hz > 0)) {
        throw std::invalid_argument("transition frequencies must be positive");
    }
    if (levels == 3 && !(anharmonicity_hz > 0)) {
        throw std::invalid_argument("anharmonicity must be positive");
    }
    if (!(t1_s > 0) || !(t2_s > 0) || t2_s > 2.0 * t1_s * (1 + 1e-12)) {
        throw std::invalid_argument("coherence times require 0 < t2 <= 2 t1");
    }
    if (!(rabi_rad_per_fullscale > 0)) {
        throw std::invalid_argument("rabi rate must be positive");
    }
    if (!(readout_fidelity > 0.5) || readout_fidelity > 1.0) {
        throw std::invalid_argument("readout fidelity must be in (0.5, 1]");
    }
    if (readout_s0 == readout_s1) {
        throw std::invalid_argument("readout levels must be distinguishable");
    }
}

double DeviceModel::default_rabi_rad_per_fullscale() {
    // A 24 ns truncated-Gaussian envelope at 8.49% of full scale integrates
    // to a pi rotation.
    return M_PI / (0.0849 * envelope_unit_area(6e-9, 4.0));
}

nlohmann::json DeviceModel::to_json() const {
    return {{"f01_hz", f01_hz},
            {"anharmonicity_hz", anharmonicity_hz},
            {"f_readout_hz", f_readout_hz},
            {"t1_s", t1_s},
            {"t2_s", t2_s},
            {"levels", levels},
            {"rabi_rad_per_fullscale", rabi_rad_per_fullscale},
            {"readout_fidelity", readout_fidelity},
            {"readout_s0", readout_s0},
            {"readout_s1", readout_s1}};
}

DeviceModel DeviceModel::from_json(const nlohmann::json& j) {
    DeviceModel d;
    d.f01_hz = j.value("f01_hz", d.f01_hz);
    d.anharmonicity_hz = j.value("anharmonicity_hz", d.anharmonicity_hz);
    d.f_readout_hz = j.value("f_readout_hz", d.f_readout_hz);
    d.t1_s = j.value("t1_s", d.t1_s);
    d.t2_s = j.value("t2_s", d.t2_s);
    d.levels = j.value("levels", d.levels);
    d.rabi_rad_per_fullscale =
        j.value("rabi_rad_per_fullscale", d.rabi_rad_per_fullscale);
    d.readout_fidelity = j.value("readout_fidelity", d.readout_fidelity);
    d.readout_s0 = j.value("readout_s0", d.readout_s0);
    d.readout_s1 = j.value("readout_s1", d.readout_s1);
    d.validate();
    return d;
}

QuantumState QuantumState::ground(int levels) {
    if (levels != 2 && levels != 3) {
        throw std::invalid_argument("state must have 2 or 3 levels");
    }
    Eigen::MatrixXcd rho = Eigen::MatrixXcd::Zero(levels, levels);
    rho(0, 0) = 1.0;
    return QuantumState(std::move(rho));
}

QuantumState::QuantumState(Eigen::MatrixXcd rho) : rho_(std::move(rho)) {
    if (rho_.rows() != rho_.cols() || (rho_.rows() != 2 && rho_.rows() != 3)) {
        throw std::invalid_argument("density matrix must be 2x2 or 3x3");
    }
}

double QuantumState::population(int level) const {
    if (level < 0 || level >= levels()) {
        throw std::out_of_range("level index out of range");
    }
    return rho_(level, level).real();
}

bool QuantumState::is_physical(double tol) const {
    if (std::abs(rho_.trace().real() - 1.0) > tol ||
        std::abs(rho_.trace().imag()) > tol) {
        return false;
    }
    if ((rho_ - rho_.adjoint()).cwiseAbs().maxCoeff() > tol) return false;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(rho_);
    return es.eigenvalues().minCoeff() >= -tol;
}

QuantumState evolve(const QuantumState& start, const BasebandStream& env,
                    double frame_freq_hz, const DeviceModel& device) {
    device.validate();
    if (!(env.sample_rate_hz > 0)) {
        throw std::invalid_argument("envelope stream needs a sample rate");
    }
    const double dt = 1.0 / env.sample_rate_hz;
    const double delta = kTwoPi * (device.f01_hz - frame_freq_hz);
    const double anharm = device.anharmonicity_rad_s();
    const RelaxStep rs = relax_step(device, dt);
    const double gamma = std::max(0.0, device.pure_dephasing_rate()) * dt;

    Eigen::MatrixXcd rho = start.rho();
    if (rho.rows() != device.levels) {
        throw std::invalid_argument("state dimension does not match device");
    }
    for (const auto& s : env.samples) {
        drive_step(rho, device.rabi_rad_per_fullscale * s, delta, anharm, dt);
        apply_relaxation(rho, rs);
        apply_dephasing(rho, gamma);
    }
    return QuantumState(std::move(rho));
}

QuantumState idle_evolve(const QuantumState& start, double duration_s,
                         const DeviceModel& device) {
    if (duration_s < 0) throw std::invalid_argument("negative idle duration");
    Eigen::MatrixXcd rho = start.rho();
    apply_relaxation(rho, relax_step(device, duration_s));
    apply_dephasing(rho,
                    std::max(0.0, device.pure_dephasing_rate()) * duration_s);
    return QuantumState(std::move(rho));
}

int measure(const QuantumState& state, const DeviceModel& device, Rng& rng) {
    const double p_exc = 1.0 - state.p_ground();
    const double p_report_1 = device.readout_fidelity * p_exc +
                              (1.0 - device.readout_fidelity) * (1.0 - p_exc);
    return rng.bernoulli(p_report_1) ? 1 : 0;
}

double expected_survival(const QuantumState& state, const DeviceModel& device) {
    const double p0 = state.p_ground();
    return device.readout_fidelity * p0 +
           (1.0 - device.readout_fidelity) * (1.0 - p0);
}

double readout_amplitude(const QuantumState& state, const DeviceModel& device,
                         double droop) {
    const double p_exc = 1.0 - state.p_ground();
    return (1.0 - droop) *
           (device.readout_s0 + (device.readout_s1 - device.readout_s0) * p_exc);
}

double coherence_limit_epg(double gate_length_s, const DeviceModel& device) {
    return 1.0 - (0.5 + std::exp(-gate_length_s / device.t2_s) / 3.0 +
                  std::exp(-gate_length_s / device.t1_s) / 6.0);
}

QuantumState evolve_lab_frame(const QuantumState& start,
                              const SampledWaveform& w, double frame_freq_hz,
                              const DeviceModel& device, int substeps) {
    device.validate();
    if (substeps < 1) throw std::invalid_argument("substeps must be >= 1");
    const double span = double(w.size()) / w.sample_rate_hz;
    if (span > 100e-9 + 1e-15) {
        throw std::invalid_argument(
            "lab-frame integration is restricted to spans <= 100 ns");
    }
    Eigen::MatrixXcd rho = start.rho();
    if (rho.rows() != device.levels) {
        throw std::invalid_argument("state dimension does not match device");
    }
    const double dt = 1.0 / w.sample_rate_hz / substeps;
    const double w1 = kTwoPi * device.f01_hz;
    const double w2 = 2.0 * w1 - device.anharmonicity_rad_s();
    const RelaxStep rs = relax_step(device, dt);
    const double gamma = std::max(0.0, device.pure_dephasing_rate()) * dt;
    const double code_scale = w.code_scale();
    const bool three = device.levels == 3;

    for (std::size_t k = 0; k < w.size(); ++k) {
        // Zero-order hold of the converter's actual (quantized) output.
        const double drive =
            device.rabi_rad_per_fullscale * (w.codes[k] / code_scale);
        for (int s = 0; s < substeps; ++s) {
            if (three) {
                Eigen::Matrix3cd h = Eigen::Matrix3cd::Zero();
                h(1, 1) = w1;
                h(2, 2) = w2;
                h(0, 1) = drive;
                h(1, 0) = drive;
                h(1, 2) = std::sqrt(2.0) * drive;
                h(2, 1) = h(1, 2);
                apply_unitary_3(rho, h, dt);
            } else {
                Eigen::Matrix2cd h = Eigen::Matrix2cd::Zero();
                h(1, 1) = w1;
                h(0, 1) = drive;
                h(1, 0) = drive;
                apply_unitary_2(rho, h, dt);
            }
            apply_relaxation(rho, rs);
            apply_dephasing(rho, gamma);
        }
    }

    // Rotate into the rotating frame at t_end so the result is comparable
    // with evolve(): rho_frame = R rho R^dag, R = diag(1, e^{-iwt}, e^{-2iwt}).
    const double t_end =
        double(w.start_index + std::int64_t(w.size())) / w.sample_rate_hz;
    const double wt = kTwoPi * frame_freq_hz * t_end;
    Eigen::MatrixXcd r = Eigen::MatrixXcd::Zero(rho.rows(), rho.cols());
    for (int n = 0; n < rho.rows(); ++n) {
        r(n, n) = std::complex<double>(std::cos(n * wt), -std::sin(n * wt));
    }
    rho = r * rho * r.adjoint();
    return QuantumState(std::move(rho));
}

std::vector<Eigen::MatrixXcd> relaxation_kraus(const DeviceModel& device,
                                               double dt_s) {
    const RelaxStep s = relax_step(device, dt_s);
    const int n = device.levels;
    std::vector<Eigen::MatrixXcd> ks;
    Eigen::MatrixXcd k0 = Eigen::MatrixXcd::Zero(n, n);
    k0(0, 0) = 1.0;
    k0(1, 1) = s.c1;
    if (n == 3) k0(2, 2) = s.c2;
    ks.push_back(k0);
    Eigen::MatrixXcd k1 = Eigen::MatrixXcd::Zero(n, n);
    k1(0, 1) = std::sqrt(s.p1);
    ks.push_back(k1);
    if (n == 3) {
        Eigen::MatrixXcd k2 = Eigen::MatrixXcd::Zero(n, n);
        k2(1, 2) = std::sqrt(s.p2);
        ks.push_back(k2);
    }
    return ks;
}

std::vector<Eigen::MatrixXcd> dephasing_kraus(const DeviceModel& device,
                                              double dt_s) {
    const int n = device.levels;
    const double gamma = std::max(0.0, device.pure_dephasing_rate()) * dt_s;
    // Coefficient matrix C(a,b) = exp(-gamma (a-b)^2) is the Gram matrix of
    // a Gaussian phase characteristic function, hence PSD; its eigenvectors
    // give diagonal Kraus operators.
    Eigen::MatrixXd c(n, n);
    for (int a = 0; a < n; ++a) {
        for (int b = 0; b < n; ++b) {
            c(a, b) = std::exp(-gamma * double((a - b) * (a - b)));
        }
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c);
    std::vector<Eigen::MatrixXcd> ks;
    for (int j = 0; j < n; ++j) {
        const double mu = std::max(0.0, es.eigenvalues()(j));
        Eigen::MatrixXcd k = Eigen::MatrixXcd::Zero(n, n);
        for (int a = 0; a < n; ++a) {
            k(a, a) = std::sqrt(mu) * es.eigenvectors()(a, j);
        }
        ks.push_back(k);
    }
    return ks;
}

}  // namespace qdds
