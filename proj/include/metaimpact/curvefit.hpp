#pragma once

#include <Eigen/Dense>

#include <functional>
#include <string>
#include <vector>

namespace metaimpact::fit {

struct LinearFit {
    Eigen::VectorXd coefficients;
    Eigen::VectorXd standard_errors;
    Eigen::MatrixXd covariance;
    double rss = 0.0;        // weighted residual sum of squares
    std::size_t dof = 0;     // rows - columns
};

/// Weighted linear least squares via column-pivoted Householder QR.
/// Empty `weights` means unit weights. Standard errors use the residual
/// variance rss / dof (zero when dof == 0). Throws RankDeficientError naming
/// the dependent columns when the numerical rank falls short.
LinearFit linear_lsq(const Eigen::MatrixXd& design, const Eigen::VectorXd& response,
                     const Eigen::VectorXd& weights = {}, double rank_tolerance = 1e-10);

using Model = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;
using Jacobian = std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>;

struct FitProblem {
    Model model;
    Eigen::VectorXd observed;
    Eigen::VectorXd weights;  // empty: unit weights
    Eigen::VectorXd lower;    // empty: unbounded
    Eigen::VectorXd upper;
    Eigen::VectorXd initial;
    Jacobian jacobian;        // optional; finite differences otherwise
    double step_tolerance = 1e-10;
    double gradient_tolerance = 1e-10;
    int max_iterations = 200;
    double fd_relative_step = 1e-6;
};

struct FitResult {
    Eigen::VectorXd params;
    /// (J^T W J)^-1 at the solution; weights are treated as inverse variances.
    Eigen::MatrixXd covariance;
    double cost = 0.0;            // sum of weighted squared residuals
    double residual_norm = 0.0;   // sqrt(cost)
    bool converged = false;
    int iterations = 0;
    std::vector<bool> at_lower;
    std::vector<bool> at_upper;
    /// Cost after every accepted iteration (first entry is the initial guess).
    std::vector<double> cost_trace;
    std::string termination;

    bool boundary_hit() const;
    Eigen::VectorXd errors() const;
    /// Covariance rescaled by cost / (n - p), for weights known only up to a constant.
    Eigen::MatrixXd scaled_covariance(std::size_t n_observations) const;
};

/// Central-difference Jacobian of `model`, stepping one-sided near a bound.
Eigen::MatrixXd finite_difference_jacobian(const Model& model, const Eigen::VectorXd& params,
                                           const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                                           double relative_step = 1e-6);

/// Damped Gauss-Newton (Levenberg-Marquardt) with projection onto box bounds.
/// Never throws on non-convergence; inspect `converged`.
FitResult nonlinear_lsq(const FitProblem& problem);

} // namespace metaimpact::fit
