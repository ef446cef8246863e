#include "qdds/fit.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include "qdds/errors.hpp"

namespace qdds {

namespace {
constexpr double kPLow = 1e-9;
constexpr double kPHigh = 1.0 - 1e-9;
constexpr int kMaxIterations = 500;

double clamp(double x, double lo, double hi) {
    return std::min(hi, std::max(lo, x));
}

double chi2_of(std::span<const double> m, std::span<const double> y,
               const std::vector<double>& w, double a, double p, double b) {
    double c = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double r = y[i] - (a * std::pow(p, m[i]) + b);
        c += w[i] * r * r;
    }
    return c;
}

std::string dump_data(std::span<const double> m, std::span<const double> y,
                      std::span<const double> e) {
    std::ostringstream os;
    os << "m,survival,error";
    for (std::size_t i = 0; i < m.size(); ++i) {
        os << "; " << m[i] << ',' << y[i] << ',' << e[i];
    }
    return os.str();
}
}  // namespace

DecayFit fit_decay(std::span<const double> lengths,
                   std::span<const double> survivals,
                   std::span<const double> errors) {
    const std::size_t n = lengths.size();
    if (survivals.size() != n || errors.size() != n) {
        throw FitError("decay fit: mismatched input lengths");
    }
    if (n < 3) throw FitError("decay fit: need at least 3 points");
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!(errors[i] > 0.0) || !std::isfinite(survivals[i]) ||
            !std::isfinite(lengths[i])) {
            throw FitError("decay fit: errors must be positive and data finite");
        }
        w[i] = 1.0 / (errors[i] * errors[i]);
    }

    DecayFit fit;
    const auto [mn, mx] = std::minmax_element(survivals.begin(), survivals.end());
    if (*mx - *mn <= 1e-12) {
        // Exactly flat data carries no information about p. Report the mean
        // level and flag that no decay was resolved.
        double sw = 0.0, sy = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            sw += w[i];
            sy += w[i] * survivals[i];
        }
        fit.a = 0.0;
        fit.p = kPHigh;
        fit.b = clamp(sy / sw, 0.0, 1.0);
        fit.covariance.setZero();
        fit.covariance(2, 2) = 1.0 / sw;
        fit.chi2 = chi2_of(lengths, survivals, w, fit.a, fit.p, fit.b);
        fit.converged = true;
        fit.decay_resolved = false;
        fit.at_bound = true;
        return fit;
    }

    double a = survivals.front() - survivals.back();
    double b = clamp(survivals.back(), 0.0, 1.0);
    double p = 0.99;
    double chi2 = chi2_of(lengths, survivals, w, a, p, b);
    double lambda = 1e-3;

    Eigen::Matrix3d jtj;
    Eigen::Vector3d jtr;
    int it = 0;
    bool converged = false;
    for (; it < kMaxIterations && !converged; ++it) {
        jtj.setZero();
        jtr.setZero();
        for (std::size_t i = 0; i < n; ++i) {
            const double pm = std::pow(p, lengths[i]);
            const double r = survivals[i] - (a * pm + b);
            Eigen::Vector3d j;
            j << pm, a * lengths[i] * std::pow(p, lengths[i] - 1.0), 1.0;
            jtj += w[i] * j * j.transpose();
            jtr += w[i] * r * j;
        }
        bool accepted = false;
        for (int attempt = 0; attempt < 40; ++attempt) {
            Eigen::Matrix3d damped = jtj;
            for (int d = 0; d < 3; ++d) {
                damped(d, d) += lambda * std::max(jtj(d, d), 1e-30);
            }
            const Eigen::Vector3d step = damped.ldlt().solve(jtr);
            const double a2 = a + step(0);
            const double p2 = clamp(p + step(1), kPLow, kPHigh);
            const double b2 = clamp(b + step(2), 0.0, 1.0);
            const double c2 = chi2_of(lengths, survivals, w, a2, p2, b2);
            if (c2 <= chi2) {
                const double drop = chi2 - c2;
                a = a2;
                p = p2;
                b = b2;
                chi2 = c2;
                lambda = std::max(lambda / 3.0, 1e-12);
                accepted = true;
                if (drop <= 1e-12 * std::max(chi2, 1.0) ||
                    step.norm() <= 1e-14) {
                    converged = true;
                }
                break;
            }
            lambda *= 5.0;
            if (lambda > 1e12) break;
        }
        if (!accepted) {
            // No downhill step exists at machine precision: a local optimum.
            converged = true;
        }
    }
    if (!converged) {
        throw FitError("decay fit did not converge: " +
                       dump_data(lengths, survivals, errors));
    }

    fit.a = a;
    fit.p = p;
    fit.b = b;
    fit.chi2 = chi2;
    fit.iterations = it;
    fit.converged = true;
    fit.at_bound = (p <= kPLow || p >= kPHigh || b <= 0.0 || b >= 1.0);

    jtj.setZero();
    for (std::size_t i = 0; i < n; ++i) {
        const double pm = std::pow(p, lengths[i]);
        Eigen::Vector3d j;
        j << pm, a * lengths[i] * std::pow(p, lengths[i] - 1.0), 1.0;
        jtj += w[i] * j * j.transpose();
    }
    const Eigen::Matrix3d cov = jtj.inverse();
    fit.covariance = cov.allFinite() ? cov : Eigen::Matrix3d::Zero();
    fit.decay_resolved = p < kPHigh && std::abs(a) > fit.sigma_a();
    return fit;
}

}  // namespace qdds
