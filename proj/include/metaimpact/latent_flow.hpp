#pragma once

#include "metaimpact/random.hpp"
#include "metaimpact/simulator.hpp"

#include <span>
#include <vector>

namespace metaimpact::sim {

/// Monotone odd map from a standard normal x to the daily imbalance.
/// |x| below the threshold gives an inactive day (Phi = 0); above it the
/// half-normal probability is mapped onto the daily-fraction law.
class FlowTransform {
public:
    FlowTransform(double activity, TruncatedPareto law);

    double net_fraction(double x) const;
    double signed_root(double x) const;
    double threshold() const noexcept { return threshold_; }
    /// E[signed_root(X)^2] = activity * E[phi].
    double second_moment() const;

private:
    double activity_;
    TruncatedPareto law_;
    double threshold_;
};

/// corr(h(X), h(Y)) as a function of corr(X, Y) = rho, from the Hermite
/// expansion of h = FlowTransform::signed_root.
class HermiteCorrelation {
public:
    explicit HermiteCorrelation(const FlowTransform& transform, std::size_t terms = 400);

    double operator()(double rho) const;
    /// Latent rho giving the requested output correlation.
    double invert(double target) const;
    /// Squared normalized Hermite coefficients, a_k = E[h He_k / sqrt(k!)]^2.
    const std::vector<double>& coefficients() const noexcept { return coef_; }
    double variance() const noexcept { return variance_; }

private:
    std::vector<double> coef_;
    double variance_;
};

/// Stationary Gaussian process with unit variance and autocorrelation rho(1..L),
/// extended beyond L as the order-L autoregression (Durbin-Levinson).
class LatentProcess {
public:
    /// Throws ConfigError naming the first lag where the covariance is not
    /// positive definite.
    explicit LatentProcess(std::vector<double> rho);

    std::size_t order() const noexcept { return rho_.size(); }
    std::vector<double> sample(std::size_t n, Rng& rng) const;

private:
    std::vector<double> rho_;
    std::vector<double> table_;     // row k holds phi_{k,1..k}, packed
    std::vector<double> innovation_; // prediction variance v_k, k = 0..L
};

/// Transform + latent process for a given horizon; shared by all stocks.
class FlowModel {
public:
    FlowModel(const FlowParams& params, std::size_t n_days);

    const FlowTransform& transform() const noexcept { return transform_; }
    const std::vector<double>& latent_autocorr() const noexcept { return rho_; }
    std::vector<double> sample_latent(std::size_t n, Rng& rng) const { return process_.sample(n, rng); }

private:
    FlowTransform transform_;
    std::vector<double> rho_;
    LatentProcess process_;
};

} // namespace metaimpact::sim
