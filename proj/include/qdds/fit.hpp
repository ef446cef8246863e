#pragma once

#include <span>

#include <Eigen/Dense>

namespace qdds {

// Weighted least-squares fit of survival = A * p^m + B.
struct DecayFit {
    double a = 0.0;
    double p = 0.0;
    double b = 0.0;
    Eigen::Matrix3d covariance = Eigen::Matrix3d::Zero();  // order (A, p, B)
    double chi2 = 0.0;
    int iterations = 0;
    bool converged = false;
    // False when the data shows no resolvable decay (flat survival); p is
    // then reported as 1 - 1e-9 with a covariance reflecting the bound.
    bool decay_resolved = true;
    // Set if the optimizer pinned p or B at a box boundary.
    bool at_bound = false;

    double sigma_a() const { return std::sqrt(covariance(0, 0)); }
    double sigma_p() const { return std::sqrt(covariance(1, 1)); }
    double sigma_b() const { return std::sqrt(covariance(2, 2)); }
};

// Levenberg-Marquardt with analytic Jacobian. Initial guesses:
// A = first - last survival, B = last, p = 0.99. Box constraints
// 0 < p < 1 and 0 <= B <= 1; at most 500 iterations. Covariance is
// (J^T W J)^-1 with W = diag(1/err^2). Throws FitError when inputs are
// inconsistent (size mismatch, < 3 points, non-positive errors) and on
// non-convergence (message carries the raw data).
DecayFit fit_decay(std::span<const double> lengths,
                   std::span<const double> survivals,
                   std::span<const double> errors);

}  // namespace qdds
