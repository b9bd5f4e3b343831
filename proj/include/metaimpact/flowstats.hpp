#pragma once

#include "metaimpact/curvefit.hpp"
#include "metaimpact/datamodel.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace metaimpact::flow {

struct StockDayFlow {
    std::string stock_id;
    data::Day day{};
    double net_fraction = 0.0; // Phi = sum eps_i phi_i
    double signed_root = 0.0;  // Phi^{1/2}, signed
    double adjusted = 0.0;     // after cross-sectional correction
};

/// Daily imbalance on the full panel calendar. Stock-days without orders
/// carry zero; `active` marks stock-days that have a bar.
struct FlowPanel {
    std::vector<std::string> stocks;
    std::vector<data::Day> calendar;
    data::StockDayGrid<double> net;
    data::StockDayGrid<double> root;
    data::StockDayGrid<double> adjusted;
    data::StockDayGrid<unsigned char> active;
    data::StockDayGrid<double> gross; // sum |phi_i|

    std::size_t n_stocks() const { return stocks.size(); }
    std::size_t n_days() const { return calendar.size(); }
    /// Stock-days with at least one metaorder.
    std::vector<StockDayFlow> records() const;
};

FlowPanel daily_imbalance(const data::Panel& panel);

/// adjusted = root - beta * mean(root over active stocks that day).
/// Throws DataError if some day has no active stock.
void cross_sectional_adjust(FlowPanel& flows, const data::StockDayGrid<double>& betas);

enum class FlowSeries { SignedRoot, Adjusted };

struct AutocorrSeries {
    std::vector<double> mean;   // index 0 is lag 1
    std::vector<double> stderr_;
    std::size_t n_stocks = 0;
    std::size_t series_length = 0; // days per stock series
    Eigen::MatrixXd covariance;     // lag-by-lag covariance of `mean` from the cross-stock dispersion
    std::vector<std::string> warnings;

    std::size_t max_lag() const { return mean.size(); }
};

/// Biased sample autocorrelation (full-sample variance in every lag),
/// lags 1..max_lag. Empty when the series has zero variance.
std::vector<double> sample_autocorrelation(std::span<const double> series, std::size_t max_lag);

/// Expected value of sample_autocorrelation (ratio of expectations) for a
/// stationary series of length g.size() + 1 whose true autocorrelation at
/// lags 1..T-1 is `g`; lags 1..max_lag.
std::vector<double> expected_sample_autocorrelation(std::span<const double> g, std::size_t max_lag);

/// Per-stock autocorrelation then equal-weight average across stocks.
/// Throws ConfigError when max_lag >= series length.
AutocorrSeries flow_autocorrelation(const FlowPanel& flows, std::size_t max_lag,
                                    FlowSeries series = FlowSeries::SignedRoot);

/// g(tau) = a tau^-gamma exp(-b tau)
double truncated_power_law(double tau, double a, double gamma, double b);
/// Gradient of g with respect to (a, b, gamma).
Eigen::Vector3d truncated_power_law_gradient(double tau, double a, double gamma, double b);

struct AutocorrFitOptions {
    bool free_gamma = false;
    double gamma = 1.0 - 2.0 * 0.22; // used when gamma is fixed, seed otherwise
    std::size_t max_lag = 0;         // 0: all available lags
    // Fit the expectation of the biased estimator on series of
    // `series_length` days instead of g itself; removes the pull of the
    // mean subtraction on b.
    bool finite_sample = false;
    std::size_t series_length = 0; // 0 with the series overload: taken from the series
};

struct AutocorrFit {
    double a = 0.0;
    double b = 0.0;
    double gamma = 0.0;
    double a_err = 0.0;
    double b_err = 0.0;
    double gamma_err = 0.0;
    Eigen::Matrix2d cov_ab = Eigen::Matrix2d::Zero();
    bool gamma_fixed = true;
    std::string weighting;
    std::string error_model; // "fit" or "cross_stock_sandwich"
    fit::FitResult fit;
};

/// Weighted non-linear fit of g(tau); throws DataError when no lag is positive.
/// finite_sample needs series_length > max lag.
AutocorrFit fit_autocorr(std::span<const double> corr, std::span<const double> stderrs,
                         const AutocorrFitOptions& options = {});
/// Parameter errors come from the lag covariance of the series when it has
/// one (sandwich form), since neighbouring lags are far from independent.
AutocorrFit fit_autocorr(const AutocorrSeries& series, const AutocorrFitOptions& options = {});

} // namespace metaimpact::flow
