#pragma once

#include "metaimpact/datamodel.hpp"
#include "metaimpact/random.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace metaimpact::sim {

struct PropagatorParams {
    double beta = 0.22;      // decay exponent, G(t) ~ t^-beta
    double prefactor = 0.5;  // Y in I = Y sigma_d sqrt(phi)

    void validate() const;
};

/// Power law with density proportional to x^(-1-exponent) on [lower, upper].
struct TruncatedPareto {
    double exponent = 0.5;
    double lower = 1e-4;
    double upper = 0.3;

    /// Inverse of the survival function: the x with P(X > x) = tail.
    double from_tail(double tail) const;
    double survival(double x) const;
    double mean() const;
    /// Draw restricted to [lo, hi] (clamped to the support) from one uniform.
    double sample_between(double lo, double hi, double uniform) const;
    void validate(const std::string& name) const;
};

enum class StartPlacement { Uniform, ZGrid };

struct FlowParams {
    // Target autocorrelation of the signed square-root daily imbalance.
    double a = 0.24;
    double gamma = 0.56;
    double b = 0.038;
    double intensity = 1.0;         // mean metaorders per stock-day
    bool single_order_days = false; // at most one order per stock-day
    TruncatedPareto daily_fraction{0.5, 1e-4, 0.3};
    TruncatedPareto participation{0.5, 0.005, 0.45};
    StartPlacement placement = StartPlacement::Uniform;
    std::vector<double> z_grid; // candidate V_EC / V_SE values for ZGrid

    /// Probability that a stock-day carries at least one order.
    double activity() const;
    double target_autocorr(double lag) const;
    void validate() const;
};

struct KernelSpec {
    enum class Kind { Propagator, Explicit };
    Kind kind = Kind::Propagator;
    // Propagator-derived kernel: cumulative G*(tau) = Y * I_m(tau) with
    // I_m(tau) = i_inf + (1 - i_inf) I_prop(tau; beta) exp(-b tau).
    double i_inf = 0.42;
    double b = 0.038;
    std::size_t horizon = 50;
    std::vector<double> lags; // explicit G*(l), l = 0..horizon

    /// G*(l) for l = 0..horizon. Throws ConfigError if an explicit list is
    /// shorter than the horizon.
    std::vector<double> coefficients(const PropagatorParams& propagator) const;
};

struct NoiseParams {
    double xi_scale = 1.0;   // xi ~ N(0, (xi_scale * sigma_d)^2)
    double market_vol = 0.01;
    double intraday = 0.25;  // Brownian bridge scale, units of sigma_d
};

struct SimConfig {
    std::size_t n_stocks = 100;
    std::size_t n_days = 880;
    std::uint64_t seed = 1;
    std::string start_date = "2007-01-03";
    FlowParams flow;
    PropagatorParams propagator;
    KernelSpec kernel;
    NoiseParams noise;
    double beta_capm = 1.0;
    double sigma_median = 0.02;
    double sigma_stock_dispersion = 0.3; // log-sd across stocks
    double sigma_day_dispersion = 0.2;   // log-sd across days
    double volume_median = 1e6;
    double volume_dispersion = 0.5;
    double violation_rate = 0.0;         // extra invalid orders, fraction of valid ones
    std::vector<std::string> tranche_labels;
    std::size_t threads = 1;

    void validate() const;
};

/// Business days (Mon-Fri) starting at `start`.
std::vector<data::Day> business_calendar(data::Day start, std::size_t n_days);

/// Intraday cumulative volume profile for a day of total volume `total`:
/// half-hour checkpoints 09:30-16:00, U-shaped intensity.
data::VolumeCurve standard_volume_curve(double total);

/// Daily imbalance Phi(tau) per stock, n_stocks x n_days. The signed square
/// root of each row is a stationary series with autocorrelation g(tau).
/// Throws ConfigError naming the first lag at which the implied latent
/// covariance stops being positive definite.
data::StockDayGrid<double> generate_sign_series(const FlowParams& params, std::size_t n_stocks,
                                                std::size_t n_days, std::uint64_t seed);

struct PanelShape {
    std::size_t n_stocks = 100;
    std::size_t n_days = 880;
    std::size_t burn_in = 0; // flow-only days preceding the calendar
    std::string start_date = "2007-01-03";
    double sigma_median = 0.02;
    double sigma_stock_dispersion = 0.3;
    double sigma_day_dispersion = 0.2;
    double volume_median = 1e6;
    double volume_dispersion = 0.5;
    std::size_t threads = 1;
};

struct SimOrder {
    std::size_t stock = 0;
    std::size_t day = 0; // calendar index (burn-in excluded)
    int sign = 0;
    double phi = 0.0;
    double u_start = 0.0; // volume-time fractions of the day
    double u_end = 0.0;
    data::Metaorder record;
};

struct SyntheticFlow {
    std::vector<data::Day> calendar;
    std::size_t burn_in = 0;
    // Grids span burn_in + n_days columns.
    data::StockDayGrid<double> net;
    data::StockDayGrid<double> sigma;
    data::StockDayGrid<double> day_volume;
    std::vector<double> initial_price;   // close before the first burn-in day
    std::vector<double> latent_autocorr; // rho(tau) of the Gaussian driver
    std::vector<SimOrder> orders; // calendar days only, grouped by stock then day
};

SyntheticFlow generate_metaorders(const FlowParams& params, const PanelShape& shape, std::uint64_t seed);

struct InjectedViolation {
    std::size_t index = 0; // row in the panel's order list
    std::string filter;
};

struct GroundTruth {
    std::vector<double> kernel;            // G*(l)
    std::vector<double> kernel_cumulative;
    std::vector<double> kernel_normalized;
    std::vector<double> target_autocorr;   // g(tau), tau = 1..horizon
    std::vector<double> latent_autocorr;   // rho(tau) of the Gaussian driver
    double activity = 0.0;
    double implied_zeta = 0.0;             // 1 / (1 + g(1))
    std::size_t n_orders = 0;
    std::vector<InjectedViolation> violations;
};

struct Simulation {
    data::Panel panel;
    GroundTruth truth;
    data::StockDayGrid<double> returns; // model close-to-close returns, calendar days
};

/// Prices for a synthetic flow: daily returns follow
///   r = beta_capm r_M + sum_l G*(l) sigma(t-l) PhiTilde(t-l) + xi,
/// intraday marks follow the propagator so an isolated order peaks at
/// Y sigma_d sqrt(phi) and relaxes as I_prop(z).
Simulation simulate_prices(const SyntheticFlow& flow, const PropagatorParams& propagator,
                           const SimConfig& config);

/// generate_metaorders + simulate_prices + violation injection.
Simulation simulate(const SimConfig& config);

} // namespace metaimpact::sim
