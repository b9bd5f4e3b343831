#pragma once

#include "metaimpact/curvefit.hpp"
#include "metaimpact/datamodel.hpp"

#include <span>
#include <string>
#include <vector>

namespace metaimpact::impact {

enum class PricePair { StartToEnd, StartToClose, StartToNextClose };

std::string to_string(PricePair pair);
PricePair parse_price_pair(std::string_view text);

/// Per-order quantities every impact/decay statistic is built from.
/// Impacts are in rescaled log-price units, epsilon * (s(t_b) - s(t_a)).
struct OrderImpact {
    std::size_t stock = 0;
    std::size_t day = 0;
    int sign = 0;
    double phi = 0.0;
    double participation = 0.0;
    double duration = 0.0;
    double sigma = 0.0;
    double start_to_end = data::kNaN;
    double start_to_close = data::kNaN;
    double start_to_next_close = data::kNaN; // NaN when the next bar is missing
    double z_same_day = data::kNaN;          // V_EC / V_SE
    double z_next_day = data::kNaN;          // (V_EC + V_d(next)) / V_SE
    double zc_same_day = data::kNaN;         // T_EC / T, wall-clock variant
    double zc_next_day = data::kNaN;
};

/// One entry per order that has prices and a usable bar, in panel order.
std::vector<OrderImpact> order_impacts(const data::Panel& panel);

struct ImpactBin {
    double lower = 0.0;  // smallest phi in the bin
    double upper = 0.0;  // largest phi in the bin
    double center = 0.0; // mean phi
    double mean = 0.0;
    double stderr_ = 0.0;
    std::size_t count = 0;
};

struct ImpactCurve {
    PricePair pair = PricePair::StartToEnd;
    std::vector<ImpactBin> bins;
    std::size_t n_orders = 0;
};

/// Equal-population binning of orders by phi; ties broken by (phi, stock, day,
/// input order). Throws ConfigError when n_bins exceeds the number of distinct
/// phi values.
ImpactCurve impact_curve(const data::Panel& panel, PricePair pair, std::size_t n_bins);
ImpactCurve impact_curve(std::span<const OrderImpact> orders, PricePair pair, std::size_t n_bins);

/// Generic plot-ready point, exported as bin_center,value,stderr,count.
struct CurvePoint {
    double center = 0.0;
    double value = 0.0;
    double stderr_ = 0.0;
    std::size_t count = 0;
};

std::vector<CurvePoint> to_points(const ImpactCurve& curve);

/// Per-bin ratio numerator/denominator of two curves built on the same bins;
/// errors combine both relative errors in quadrature.
std::vector<CurvePoint> impact_ratio(const ImpactCurve& numerator, const ImpactCurve& denominator);
double mean_value(std::span<const CurvePoint> points);

struct PowerLawFit {
    double exponent = 0.0;
    double exponent_err = 0.0;
    double prefactor = 0.0;
    std::size_t n_points = 0;
};

/// Weighted log-log regression of bin means on bin centers restricted to
/// [phi_lo, phi_hi]; bins with non-positive means are skipped.
PowerLawFit fit_power_law(const ImpactCurve& curve, double phi_lo, double phi_hi);

/// (1+z)^(1-beta) - z^(1-beta) for beta in [0, 1]; beta = 1 is the limit
/// (0 for z > 0).
double propagator_decay(double z, double beta);
/// d/d beta of propagator_decay.
double propagator_decay_dbeta(double z, double beta);

enum class DecayHorizon { SameDay, NextDay };
enum class DecayClock { Volume, WallClock };

struct DecayOptions {
    DecayHorizon horizon = DecayHorizon::SameDay;
    DecayClock clock = DecayClock::Volume;
    std::size_t n_bins = 20;   // total, linear + logarithmic
    double zeta = 1.0;         // next-day correction; forced to 1 for same-day
    double linear_limit = 0.1; // linear bins below, logarithmic above
    std::size_t linear_bins = 2;
};

struct DecayPoint {
    double z = 0.0; // mean z of the orders in the bin
    double value = 0.0;
    double stderr_ = 0.0;
    std::size_t count = 0;
};

struct DecayCurve {
    std::vector<DecayPoint> points;
    std::vector<double> edges;
    std::vector<std::string> warnings;
    std::size_t n_orders = 0;
};

/// Bin edges on [0, z_max]: `linear_bins` equal bins below linear_limit, the
/// rest logarithmic up to z_max.
std::vector<double> decay_bin_edges(double z_max, const DecayOptions& options);

/// Relaxation R(z): per z-bin mean(numerator) / mean(I_SE), times zeta for
/// the next-day horizon.
DecayCurve decay_curve(const data::Panel& panel, const DecayOptions& options);
DecayCurve decay_curve(std::span<const OrderImpact> orders, const DecayOptions& options);

/// 1 / (1 + C(1)); throws ConfigError for C(1) <= -1.
double zeta_from_autocorr(double c1);

struct NextCloseRegression {
    std::vector<CurvePoint> bins; // center = mean I_SC, value = mean I_SC2
    double slope = 0.0;
    double slope_err = 0.0;
    std::size_t n_pairs = 0;
};

/// I_SC2 against I_SC: equal-population bins plus zero-intercept slope over
/// all order pairs. Throws ConfigError for fewer than 2 bins.
NextCloseRegression conditional_next_close(const data::Panel& panel, std::size_t n_bins);
NextCloseRegression conditional_next_close(std::span<const OrderImpact> orders, std::size_t n_bins);

struct DecayExponentFit {
    double beta = 0.0;
    double beta_err = 0.0;
    bool boundary_hit = false;
    std::string weighting;
    fit::FitResult fit;
};

/// One-parameter fit of propagator_decay(z; beta) with inverse-variance
/// weights (unit weights if any stderr is zero). Throws ConvergenceError.
DecayExponentFit fit_decay_exponent(std::span<const DecayPoint> points, double initial_beta = 0.22);

struct PlateauFit {
    double plateau = 0.0;
    double plateau_err = 0.0;
    double rate = 0.0;
    fit::FitResult fit;
};

/// Exponential relaxation to a plateau, R(z) = P + (1-P) exp(-k z), over the
/// points with z <= z_max.
PlateauFit fit_decay_plateau(std::span<const DecayPoint> points, double z_max);

} // namespace metaimpact::impact
