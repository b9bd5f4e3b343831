#include "metaimpact/latent_flow.hpp"

#include "metaimpact/errors.hpp"

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/special_functions/erf.hpp>

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

namespace metaimpact::sim {

namespace {

constexpr double kUpperAbscissa = 12.0;
constexpr double kPanelWidth = 0.05;
constexpr double kNegligibleAutocorr = 1e-10;
constexpr std::size_t kMaxLatentOrder = 2000;

} // namespace

FlowTransform::FlowTransform(double activity, TruncatedPareto law) : activity_(activity), law_(law)
{
    if (!(activity > 0.0) || activity > 1.0)
        throw ConfigError("flow activity must lie in (0, 1]");
    law_.validate("daily_fraction");
    // P(|X| > threshold) = activity
    threshold_ = std::sqrt(2.0) * boost::math::erfc_inv(activity);
}

double FlowTransform::net_fraction(double x) const
{
    const double ax = std::abs(x);
    if (ax < threshold_)
        return 0.0;
    const double tail = std::min(1.0, std::erfc(ax / std::sqrt(2.0)) / activity_);
    return std::copysign(law_.from_tail(tail), x);
}

double FlowTransform::signed_root(double x) const
{
    const double phi = net_fraction(x);
    return std::copysign(std::sqrt(std::abs(phi)), x);
}

double FlowTransform::second_moment() const
{
    return activity_ * law_.mean();
}

HermiteCorrelation::HermiteCorrelation(const FlowTransform& transform, std::size_t terms)
    : coef_(terms, 0.0), variance_(transform.second_moment())
{
    using Rule = boost::math::quadrature::gauss<double, 20>;
    const auto& nodes = Rule::abscissa();
    const auto& weights = Rule::weights();

    const double lo = transform.threshold();
    std::vector<double> sums(terms, 0.0);
    std::vector<double> he(terms, 0.0);
    if (lo < kUpperAbscissa) {
        const auto panels = static_cast<std::size_t>(std::ceil((kUpperAbscissa - lo) / kPanelWidth));
        const double width = (kUpperAbscissa - lo) / static_cast<double>(panels);
        const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * M_PI);
        auto accumulate = [&](double x, double w) {
            const double weight = w * transform.signed_root(x) * std::exp(-0.5 * x * x) * inv_sqrt_2pi;
            // Normalized probabilists' Hermite polynomials He_k / sqrt(k!).
            he[0] = 1.0;
            if (terms > 1)
                he[1] = x;
            for (std::size_t k = 1; k + 1 < terms; ++k)
                he[k + 1] = (x * he[k] - std::sqrt(static_cast<double>(k)) * he[k - 1]) /
                            std::sqrt(static_cast<double>(k + 1));
            for (std::size_t k = 1; k < terms; k += 2)
                sums[k] += weight * he[k];
        };
        for (std::size_t p = 0; p < panels; ++p) {
            const double mid = lo + (static_cast<double>(p) + 0.5) * width;
            const double half = 0.5 * width;
            for (std::size_t i = 0; i < nodes.size(); ++i) {
                if (nodes[i] == 0.0) {
                    accumulate(mid, half * weights[i]);
                } else {
                    accumulate(mid + half * nodes[i], half * weights[i]);
                    accumulate(mid - half * nodes[i], half * weights[i]);
                }
            }
        }
    }
    // h is odd, so only odd coefficients survive and the integral over the
    // real line is twice the one over [threshold, inf).
    for (std::size_t k = 1; k < terms; k += 2)
        coef_[k] = 4.0 * sums[k] * sums[k];
}

double HermiteCorrelation::operator()(double rho) const
{
    double acc = 0.0;
    for (std::size_t k = coef_.size(); k-- > 0;)
        acc = acc * rho + coef_[k];
    return acc / variance_;
}

double HermiteCorrelation::invert(double target) const
{
    if (target == 0.0)
        return 0.0;
    if (target < 0.0)
        return -invert(-target);
    const double reachable = (*this)(1.0);
    if (!(target < reachable)) {
        std::ostringstream msg;
        msg << "flow autocorrelation " << target << " exceeds the largest attainable value " << reachable;
        throw ConfigError(msg.str());
    }
    double lo = 0.0;
    double hi = 1.0;
    for (int i = 0; i < 200 && hi - lo > 1e-15; ++i) {
        const double mid = 0.5 * (lo + hi);
        if ((*this)(mid) < target)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

LatentProcess::LatentProcess(std::vector<double> rho) : rho_(std::move(rho))
{
    const std::size_t order = rho_.size();
    table_.resize(order * (order + 1) / 2);
    innovation_.resize(order + 1);
    innovation_[0] = 1.0;
    // Row k starts at k(k-1)/2 and holds phi_{k,1..k}.
    auto row = [&](std::size_t k) { return table_.data() + k * (k - 1) / 2; };
    for (std::size_t k = 1; k <= order; ++k) {
        double* cur = row(k);
        const double* prev = k > 1 ? row(k - 1) : nullptr;
        double num = rho_[k - 1];
        for (std::size_t j = 1; j < k; ++j)
            num -= prev[j - 1] * rho_[k - j - 1];
        const double pacf = num / innovation_[k - 1];
        if (!(std::abs(pacf) < 1.0)) {
            std::ostringstream msg;
            msg << "target autocorrelation is not positive definite at lag " << k;
            throw ConfigError(msg.str());
        }
        for (std::size_t j = 1; j < k; ++j)
            cur[j - 1] = prev[j - 1] - pacf * prev[k - j - 1];
        cur[k - 1] = pacf;
        innovation_[k] = innovation_[k - 1] * (1.0 - pacf * pacf);
    }
}

std::vector<double> LatentProcess::sample(std::size_t n, Rng& rng) const
{
    std::normal_distribution<double> normal;
    const std::size_t order = rho_.size();
    std::vector<double> x(n);
    for (std::size_t t = 0; t < n; ++t) {
        const std::size_t k = std::min(t, order);
        const double* coeffs = k > 0 ? table_.data() + k * (k - 1) / 2 : nullptr;
        double mean = 0.0;
        for (std::size_t j = 1; j <= k; ++j)
            mean += coeffs[j - 1] * x[t - j];
        x[t] = mean + std::sqrt(innovation_[k]) * normal(rng);
    }
    return x;
}

namespace {

std::vector<double> latent_targets(const FlowParams& params, const FlowTransform& transform, std::size_t n_days)
{
    std::size_t order = 0;
    const std::size_t cap = std::min<std::size_t>(kMaxLatentOrder, n_days > 0 ? n_days - 1 : 0);
    for (std::size_t lag = 1; lag <= cap; ++lag)
        if (std::abs(params.target_autocorr(static_cast<double>(lag))) >= kNegligibleAutocorr)
            order = lag;
    std::vector<double> rho(order, 0.0);
    if (order == 0)
        return rho;
    const HermiteCorrelation corr(transform);
    for (std::size_t lag = 1; lag <= order; ++lag)
        rho[lag - 1] = corr.invert(params.target_autocorr(static_cast<double>(lag)));
    return rho;
}

} // namespace

FlowModel::FlowModel(const FlowParams& params, std::size_t n_days)
    : transform_(params.activity(), params.daily_fraction),
      rho_(latent_targets(params, transform_, n_days)),
      process_(rho_)
{
}

} // namespace metaimpact::sim
