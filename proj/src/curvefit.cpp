#include "metaimpact/curvefit.hpp"

#include "metaimpact/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace metaimpact::fit {

LinearFit linear_lsq(const Eigen::MatrixXd& design, const Eigen::VectorXd& response,
                     const Eigen::VectorXd& weights, double rank_tolerance)
{
    const Eigen::Index m = design.rows();
    const Eigen::Index n = design.cols();
    if (response.size() != m)
        throw DataError("linear_lsq: response length does not match design rows");
    if (weights.size() != 0 && weights.size() != m)
        throw DataError("linear_lsq: weight length does not match design rows");
    if (m < n) {
        std::vector<std::size_t> all(static_cast<std::size_t>(n));
        for (Eigen::Index j = 0; j < n; ++j)
            all[static_cast<std::size_t>(j)] = static_cast<std::size_t>(j);
        throw RankDeficientError("linear_lsq: fewer rows (" + std::to_string(m) + ") than columns (" +
                                     std::to_string(n) + ")",
                                 std::move(all));
    }
    if (!design.allFinite() || !response.allFinite())
        throw DataError("linear_lsq: non-finite entries");

    Eigen::MatrixXd a = design;
    Eigen::VectorXd y = response;
    if (weights.size() != 0) {
        if ((weights.array() < 0.0).any())
            throw DataError("linear_lsq: negative weight");
        const Eigen::VectorXd root = weights.array().sqrt();
        a = root.asDiagonal() * a;
        y = y.cwiseProduct(root);
    }

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
    qr.setThreshold(rank_tolerance);
    if (qr.rank() < n) {
        // Columns pivoted past the numerical rank are the dependent ones.
        std::vector<std::size_t> dependent;
        const auto& perm = qr.colsPermutation().indices();
        for (Eigen::Index k = qr.rank(); k < n; ++k)
            dependent.push_back(static_cast<std::size_t>(perm[k]));
        std::sort(dependent.begin(), dependent.end());
        std::ostringstream msg;
        msg << "linear_lsq: rank deficient design (rank " << qr.rank() << " of " << n << "); dependent columns:";
        for (auto c : dependent)
            msg << ' ' << c;
        throw RankDeficientError(msg.str(), std::move(dependent));
    }

    LinearFit out;
    out.coefficients = qr.solve(y);
    const Eigen::VectorXd resid = y - a * out.coefficients;
    out.rss = resid.squaredNorm();
    out.dof = static_cast<std::size_t>(m - n);

    // (A^T A)^-1 = P R^-1 R^-T P^T
    const Eigen::MatrixXd r = qr.matrixR().topLeftCorner(n, n).template triangularView<Eigen::Upper>();
    const Eigen::MatrixXd r_inv =
        r.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(n, n));
    const Eigen::MatrixXd unscaled = r_inv * r_inv.transpose();
    const auto& perm = qr.colsPermutation();
    const Eigen::MatrixXd xtx_inv = perm * unscaled * perm.transpose();
    const double sigma2 = out.dof > 0 ? out.rss / static_cast<double>(out.dof) : 0.0;
    out.covariance = sigma2 * xtx_inv;
    out.standard_errors = out.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
    return out;
}

bool FitResult::boundary_hit() const
{
    return std::any_of(at_lower.begin(), at_lower.end(), [](bool b) { return b; }) ||
           std::any_of(at_upper.begin(), at_upper.end(), [](bool b) { return b; });
}

Eigen::VectorXd FitResult::errors() const
{
    return covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
}

Eigen::MatrixXd FitResult::scaled_covariance(std::size_t n_observations) const
{
    const auto p = static_cast<std::size_t>(params.size());
    if (n_observations <= p)
        return covariance;
    return covariance * (cost / static_cast<double>(n_observations - p));
}

namespace {

Eigen::VectorXd bound_or(const Eigen::VectorXd& v, Eigen::Index n, double fill)
{
    return v.size() == 0 ? Eigen::VectorXd::Constant(n, fill) : v;
}

Eigen::VectorXd project(const Eigen::VectorXd& p, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi)
{
    return p.cwiseMax(lo).cwiseMin(hi);
}

} // namespace

Eigen::MatrixXd finite_difference_jacobian(const Model& model, const Eigen::VectorXd& params,
                                           const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                                           double relative_step)
{
    const Eigen::Index n = params.size();
    const Eigen::VectorXd lo = bound_or(lower, n, -std::numeric_limits<double>::infinity());
    const Eigen::VectorXd hi = bound_or(upper, n, std::numeric_limits<double>::infinity());
    const Eigen::VectorXd f0 = model(params);
    Eigen::MatrixXd jac(f0.size(), n);
    for (Eigen::Index j = 0; j < n; ++j) {
        const double h = relative_step * std::max(std::abs(params[j]), 1e-3);
        Eigen::VectorXd plus = params;
        Eigen::VectorXd minus = params;
        const bool room_up = params[j] + h <= hi[j];
        const bool room_down = params[j] - h >= lo[j];
        if (room_up && room_down) {
            plus[j] += h;
            minus[j] -= h;
            jac.col(j) = (model(plus) - model(minus)) / (2.0 * h);
        } else if (room_up) {
            plus[j] += h;
            jac.col(j) = (model(plus) - f0) / h;
        } else {
            minus[j] -= h;
            jac.col(j) = (f0 - model(minus)) / h;
        }
    }
    return jac;
}

FitResult nonlinear_lsq(const FitProblem& problem)
{
    const Eigen::Index n = problem.initial.size();
    const Eigen::Index m = problem.observed.size();
    if (n == 0 || m == 0)
        throw ConfigError("nonlinear_lsq: empty problem");
    const Eigen::VectorXd lo = bound_or(problem.lower, n, -std::numeric_limits<double>::infinity());
    const Eigen::VectorXd hi = bound_or(problem.upper, n, std::numeric_limits<double>::infinity());
    const Eigen::VectorXd w = problem.weights.size() == 0 ? Eigen::VectorXd::Ones(m) : problem.weights;
    if (w.size() != m || (w.array() < 0.0).any())
        throw ConfigError("nonlinear_lsq: weights must be non-negative, one per observation");
    if ((problem.initial.array() < lo.array()).any() || (problem.initial.array() > hi.array()).any())
        throw ConfigError("nonlinear_lsq: initial guess outside bounds");
    const Eigen::VectorXd sqrt_w = w.array().sqrt();

    auto residual = [&](const Eigen::VectorXd& p) -> Eigen::VectorXd {
        Eigen::VectorXd pred = problem.model(p);
        if (pred.size() != m)
            throw ConfigError("nonlinear_lsq: model returned wrong length");
        return (pred - problem.observed).cwiseProduct(sqrt_w);
    };
    auto jacobian = [&](const Eigen::VectorXd& p) -> Eigen::MatrixXd {
        Eigen::MatrixXd j = problem.jacobian ? problem.jacobian(p)
                                             : finite_difference_jacobian(problem.model, p, lo, hi,
                                                                          problem.fd_relative_step);
        return sqrt_w.asDiagonal() * j;
    };

    FitResult out;
    Eigen::VectorXd p = problem.initial;
    Eigen::VectorXd r = residual(p);
    double cost = r.squaredNorm();
    if (!std::isfinite(cost))
        throw ConfigError("nonlinear_lsq: model not finite at the initial guess");
    out.cost_trace.push_back(cost);

    double lambda = -1.0;
    double nu = 2.0;
    Eigen::MatrixXd j = jacobian(p);
    int iter = 0;
    bool done = false;

    // Gradient test: largest cosine between the residual and a free column.
    auto gradient_small = [&](const Eigen::MatrixXd& jac, const Eigen::VectorXd& res, const Eigen::VectorXd& par) {
        const double rn = res.norm();
        if (rn == 0.0)
            return true;
        const Eigen::VectorXd g = jac.transpose() * res;
        double worst = 0.0;
        for (Eigen::Index k = 0; k < n; ++k) {
            // A component pushing against an active bound is not free to move.
            if ((par[k] <= lo[k] && g[k] > 0.0) || (par[k] >= hi[k] && g[k] < 0.0))
                continue;
            const double cn = jac.col(k).norm();
            if (cn == 0.0)
                continue;
            worst = std::max(worst, std::abs(g[k]) / (cn * rn));
        }
        return worst <= problem.gradient_tolerance;
    };

    if (gradient_small(j, r, p)) {
        out.termination = "gradient below tolerance";
        done = true;
        out.converged = true;
    }

    while (!done && iter < problem.max_iterations) {
        ++iter;
        const Eigen::MatrixXd a = j.transpose() * j;
        const Eigen::VectorXd g = j.transpose() * r;
        Eigen::VectorXd diag = a.diagonal().cwiseMax(1e-300);
        if (lambda < 0.0)
            lambda = 1e-3 * diag.maxCoeff();

        // Components pressed against a bound stay put; the step is solved over the rest.
        std::vector<Eigen::Index> free;
        for (Eigen::Index k = 0; k < n; ++k)
            if (!((p[k] <= lo[k] && g[k] > 0.0) || (p[k] >= hi[k] && g[k] < 0.0)))
                free.push_back(k);
        const auto nf = static_cast<Eigen::Index>(free.size());
        if (nf == 0) {
            out.termination = "gradient below tolerance";
            out.converged = true;
            done = true;
            break;
        }

        bool accepted = false;
        while (!accepted) {
            Eigen::MatrixXd damped(nf, nf);
            Eigen::VectorXd rhs(nf);
            for (Eigen::Index u = 0; u < nf; ++u) {
                rhs[u] = -g[free[static_cast<std::size_t>(u)]];
                for (Eigen::Index v = 0; v < nf; ++v)
                    damped(u, v) = a(free[static_cast<std::size_t>(u)], free[static_cast<std::size_t>(v)]);
                damped(u, u) += lambda * diag[free[static_cast<std::size_t>(u)]];
            }
            const Eigen::VectorXd reduced = damped.ldlt().solve(rhs);
            Eigen::VectorXd step = Eigen::VectorXd::Zero(n);
            for (Eigen::Index u = 0; u < nf; ++u)
                step[free[static_cast<std::size_t>(u)]] = reduced[u];
            const Eigen::VectorXd trial = project(p + step, lo, hi);
            const Eigen::VectorXd actual_step = trial - p;
            const double step_norm = actual_step.norm();
            const bool tiny_step =
                step_norm <= problem.step_tolerance * (p.norm() + problem.step_tolerance);

            const Eigen::VectorXd r_trial = residual(trial);
            const double cost_trial = r_trial.squaredNorm();
            const double predicted =
                -(2.0 * g.dot(actual_step) + actual_step.dot(a * actual_step));
            if (std::isfinite(cost_trial) && cost_trial < cost) {
                const double rho = predicted > 0.0 ? (cost - cost_trial) / predicted : 1.0;
                p = trial;
                r = r_trial;
                cost = cost_trial;
                out.cost_trace.push_back(cost);
                lambda *= std::max(1.0 / 3.0, 1.0 - std::pow(2.0 * rho - 1.0, 3));
                nu = 2.0;
                accepted = true;
                if (tiny_step) {
                    out.termination = "step below tolerance";
                    out.converged = true;
                    done = true;
                }
            } else {
                if (tiny_step) {
                    // No decrease is possible along any representable step.
                    out.termination = "step below tolerance";
                    out.converged = true;
                    done = true;
                    break;
                }
                lambda *= nu;
                nu *= 2.0;
                if (!std::isfinite(lambda) || lambda > 1e300) {
                    out.termination = "damping overflow";
                    done = true;
                    break;
                }
            }
        }
        if (done)
            break;
        j = jacobian(p);
        if (gradient_small(j, r, p)) {
            out.termination = "gradient below tolerance";
            out.converged = true;
            done = true;
        }
    }
    if (!done)
        out.termination = "maximum iterations reached";

    // Round-off can leave a parameter a hair inside the bound it converged onto.
    {
        Eigen::VectorXd snapped = p;
        for (Eigen::Index k = 0; k < n; ++k) {
            const double tol = problem.step_tolerance * std::max(1.0, p.norm());
            if (std::isfinite(lo[k]) && p[k] > lo[k] && p[k] - lo[k] <= tol)
                snapped[k] = lo[k];
            else if (std::isfinite(hi[k]) && p[k] < hi[k] && hi[k] - p[k] <= tol)
                snapped[k] = hi[k];
        }
        if (snapped != p) {
            const Eigen::VectorXd rs = residual(snapped);
            const double cs = rs.squaredNorm();
            if (cs <= cost + 1e-12 * (cost + 1e-300)) {
                p = snapped;
                r = rs;
                cost = std::min(cost, cs);
            }
        }
    }

    out.params = p;
    out.cost = cost;
    out.residual_norm = std::sqrt(cost);
    out.iterations = iter;
    out.at_lower.resize(static_cast<std::size_t>(n));
    out.at_upper.resize(static_cast<std::size_t>(n));
    for (Eigen::Index k = 0; k < n; ++k) {
        out.at_lower[static_cast<std::size_t>(k)] = std::isfinite(lo[k]) && p[k] <= lo[k];
        out.at_upper[static_cast<std::size_t>(k)] = std::isfinite(hi[k]) && p[k] >= hi[k];
    }
    const Eigen::MatrixXd jf = jacobian(p);
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(jf.transpose() * jf);
    out.covariance = cod.pseudoInverse();
    return out;
}

} // namespace metaimpact::fit
