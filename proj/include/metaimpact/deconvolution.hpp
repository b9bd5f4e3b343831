#pragma once

#include "metaimpact/curvefit.hpp"
#include "metaimpact/datamodel.hpp"
#include "metaimpact/flowstats.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace metaimpact::deconv {

struct DeconvConfig {
    std::size_t horizon = 50;       // H, kernel lags 0..H
    std::size_t replicates = 200;   // 0 disables the bootstrap
    std::size_t beta_half_width = 20;
    std::size_t min_beta_observations = 10;
    bool alpha_regressors = false;
    std::size_t alpha_lags = 5;
    double ridge = 0.0;
    std::uint64_t seed = 0;
    std::size_t threads = 1;

    void validate() const;
};

/// log(close_t / close_{t-1}); NaN where either bar is missing.
data::StockDayGrid<double> stock_returns(const data::Panel& panel);
/// sigma_d per stock-day; NaN where the bar is missing.
data::StockDayGrid<double> volatility_grid(const data::Panel& panel);

struct BetaPanel {
    data::StockDayGrid<double> beta;
    data::StockDayGrid<unsigned char> fallback; // 1 where beta fell back to 1
    std::size_t fallback_count = 0;
};

/// OLS slope of stock on market returns over [t-w, t+w], truncated at the
/// panel edges. Falls back to 1 (flagged) with fewer than `min_obs` pairs or
/// zero market variance.
BetaPanel rolling_beta(const data::StockDayGrid<double>& returns, std::span<const double> market,
                       std::size_t half_width, std::size_t min_obs = 10);
BetaPanel rolling_beta(const data::Panel& panel, std::size_t half_width, std::size_t min_obs = 10);

/// r - beta * r_M
data::StockDayGrid<double> residual_returns(const data::StockDayGrid<double>& returns,
                                            std::span<const double> market, const BetaPanel& betas);

/// Rows of one stock: response r~(t), regressors sigma(t-l) * flow(t-l),
/// l = 0..H, then optional lagged r~ columns.
struct DesignBlock {
    std::size_t stock = 0;
    std::vector<std::size_t> days;
    Eigen::MatrixXd design;
    Eigen::VectorXd response;
};

struct RegressionSystem {
    std::vector<DesignBlock> blocks;
    std::size_t kernel_columns = 0; // H + 1
    std::size_t alpha_columns = 0;

    std::size_t rows() const;
    std::size_t columns() const { return kernel_columns + alpha_columns; }
    Eigen::MatrixXd stacked_design() const;
    Eigen::VectorXd stacked_response() const;
};

/// Pools all stocks; rows lacking full lag history or any finite input are
/// dropped. Throws RankDeficientError when rows < columns.
RegressionSystem build_design(const data::StockDayGrid<double>& adjusted_flow,
                              const data::StockDayGrid<double>& sigma,
                              const data::StockDayGrid<double>& residual,
                              const DeconvConfig& config);

struct BootstrapBands {
    std::size_t replicates = 0;
    std::vector<double> mean;   // of the normalized kernel, per tau
    std::vector<double> stddev;
    std::vector<double> lo;     // 5th percentile
    std::vector<double> hi;     // 95th percentile
};

struct KernelEstimate {
    std::vector<double> coefficients;  // G(l), l = 0..H
    std::vector<double> coefficient_err;
    std::vector<double> cumulative;    // G(tau) = sum_{l<=tau} G(l)
    std::vector<double> cumulative_err; // sqrt of cumulated variances
    std::vector<double> normalized;    // G(tau) / G(0)
    std::vector<double> normalized_err; // cumulative_err / |G(0)|
    std::vector<double> alpha_coefficients;
    std::size_t rows = 0;
    double residual_variance = 0.0;
    double ridge = 0.0;
    std::optional<BootstrapBands> bands;

    std::size_t horizon() const { return coefficients.empty() ? 0 : coefficients.size() - 1; }
};

/// QR least squares on the stacked system; throws RankDeficientError naming
/// collinear lags.
KernelEstimate solve_kernel(const RegressionSystem& system, double ridge = 0.0);

enum class KernelFitMode { OneParam, TwoParam, BZeroFreeBeta };
std::string to_string(KernelFitMode mode);
KernelFitMode parse_fit_mode(std::string_view text);

struct KernelFitParams {
    KernelFitMode mode = KernelFitMode::OneParam;
    double i_inf = 0.0;
    double b = 0.0;
    double beta = 0.0;
    double i_inf_err = 0.0;
    double b_err = 0.0;
    double beta_err = 0.0;
    bool converged = false;
    std::string weighting;
    fit::FitResult fit;
};

/// I_m(tau) = I_inf + (1 - I_inf) I_prop(tau; beta) exp(-b tau)
double modified_propagator(double tau, double i_inf, double b, double beta);
/// Gradient with respect to (I_inf, b, beta).
Eigen::Vector3d modified_propagator_gradient(double tau, double i_inf, double b, double beta);

struct AsymptoteOptions {
    KernelFitMode mode = KernelFitMode::OneParam;
    double b_fixed = 0.038;    // one_param
    double beta_fixed = 0.22;  // one_param, two_param
    std::size_t first_tau = 1;
};

/// Fits the modified propagator to a kernel normalized to 1 at tau = 0.
/// `errors` (same length, may be empty) become inverse-variance weights.
KernelFitParams fit_kernel_asymptote(std::span<const double> normalized, std::span<const double> errors,
                                     const AsymptoteOptions& options);

struct ResponseFunction {
    std::vector<double> raw;        // R(tau), tau = 0..max_lag
    std::vector<double> normalized; // R(tau) / R(0)
};

/// Cumulative cross-covariance of adjusted flow with subsequent residual
/// returns, pooled over stocks.
ResponseFunction response_function(const data::StockDayGrid<double>& adjusted_flow,
                                   const data::StockDayGrid<double>& residual, std::size_t max_lag);

/// Stock-level bootstrap of the normalized kernel. Replicate 0 is the
/// original sample; replicate r > 0 resamples stocks with replacement using
/// sub_seed(seed, Stream::Bootstrap, r).
BootstrapBands bootstrap_kernel(const RegressionSystem& system, const DeconvConfig& config);

/// Full deconvolution chain on a cleaned panel.
struct DeconvolutionResult {
    flow::FlowPanel flows;
    BetaPanel betas;
    RegressionSystem system;
    KernelEstimate kernel;
    ResponseFunction response;
};

DeconvolutionResult deconvolve(const data::Panel& panel, const DeconvConfig& config,
                               std::size_t response_lags);

} // namespace metaimpact::deconv
