#include "metaimpact/impact.hpp"

#include "metaimpact/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

namespace metaimpact::impact {

std::string to_string(PricePair pair)
{
    switch (pair) {
    case PricePair::StartToEnd:
        return "start_to_end";
    case PricePair::StartToClose:
        return "start_to_close";
    case PricePair::StartToNextClose:
        return "start_to_next_close";
    }
    return "start_to_end";
}

PricePair parse_price_pair(std::string_view text)
{
    if (text == "start_to_end" || text == "SE")
        return PricePair::StartToEnd;
    if (text == "start_to_close" || text == "SC")
        return PricePair::StartToClose;
    if (text == "start_to_next_close" || text == "SC2")
        return PricePair::StartToNextClose;
    throw ConfigError("unknown price pair '" + std::string(text) + "'");
}

std::vector<OrderImpact> order_impacts(const data::Panel& panel)
{
    std::vector<OrderImpact> out;
    for (const auto& o : panel.orders()) {
        if (!o.has_prices() || (o.sign != 1 && o.sign != -1))
            continue;
        const auto loc = panel.locate(o);
        if (!loc)
            continue;
        const auto [s, t] = *loc;
        const data::DailyBar* bar = panel.bar(s, t);
        if (!bar || !bar->validate().empty() || !(bar->volatility() > 0.0))
            continue;
        data::MetaorderStats st;
        try {
            st = data::metaorder_stats(o, *bar);
        } catch (const DataError&) {
            continue;
        }
        OrderImpact r;
        r.stock = s;
        r.day = t;
        r.sign = o.sign;
        r.phi = st.daily_fraction;
        r.participation = st.participation;
        r.duration = st.duration;
        r.sigma = bar->volatility();
        const double eps = o.sign;
        const double log_start = std::log(o.price_at_start);
        r.start_to_end = eps * (std::log(o.price_at_end) - log_start) / r.sigma;
        r.start_to_close = eps * (std::log(bar->close) - log_start) / r.sigma;

        const double v_se = o.interval_volume();
        const double v_ec = std::max(0.0, bar->total_volume - o.vol_at_end);
        r.z_same_day = v_ec / v_se;
        double t_ec = data::kNaN;
        const auto t_se = static_cast<double>(o.end.micros - o.start.micros);
        if (!bar->curve.empty() && t_se > 0.0) {
            t_ec = static_cast<double>(bar->curve.close_time().micros - o.end.micros);
            r.zc_same_day = std::max(0.0, t_ec) / t_se;
        }

        if (t + 1 < panel.n_days()) {
            if (const data::DailyBar* next = panel.bar(s, t + 1); next && next->validate().empty()) {
                r.start_to_next_close = eps * (std::log(next->close) - log_start) / r.sigma;
                r.z_next_day = (v_ec + next->total_volume) / v_se;
                if (!std::isnan(r.zc_same_day) && !next->curve.empty()) {
                    const double next_session =
                        static_cast<double>(next->curve.close_time().micros - next->curve.open_time().micros);
                    r.zc_next_day = (std::max(0.0, t_ec) + next_session) / t_se;
                }
            }
        }
        out.push_back(r);
    }
    return out;
}

namespace {

double pair_value(const OrderImpact& o, PricePair pair)
{
    switch (pair) {
    case PricePair::StartToEnd:
        return o.start_to_end;
    case PricePair::StartToClose:
        return o.start_to_close;
    case PricePair::StartToNextClose:
        return o.start_to_next_close;
    }
    return data::kNaN;
}

struct Moments {
    double mean = 0.0;
    double stderr_ = 0.0;
};

template <typename It, typename F>
Moments moments(It first, It last, F value)
{
    const auto n = static_cast<double>(std::distance(first, last));
    Moments m;
    if (n == 0.0)
        return m;
    for (It it = first; it != last; ++it)
        m.mean += value(*it);
    m.mean /= n;
    if (n > 1.0) {
        double ss = 0.0;
        for (It it = first; it != last; ++it) {
            const double d = value(*it) - m.mean;
            ss += d * d;
        }
        m.stderr_ = std::sqrt(ss / (n - 1.0) / n);
    }
    return m;
}

// Equal-population partition of [0, n) into k contiguous ranges.
std::vector<std::size_t> equal_population_bounds(std::size_t n, std::size_t k)
{
    std::vector<std::size_t> bounds(k + 1);
    for (std::size_t i = 0; i <= k; ++i)
        bounds[i] = i * n / k;
    return bounds;
}

} // namespace

ImpactCurve impact_curve(std::span<const OrderImpact> orders, PricePair pair, std::size_t n_bins)
{
    if (n_bins == 0)
        throw ConfigError("impact_curve: n_bins must be positive");
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < orders.size(); ++i)
        if (std::isfinite(pair_value(orders[i], pair)) && std::isfinite(orders[i].phi))
            idx.push_back(i);
    std::set<double> distinct;
    for (auto i : idx)
        distinct.insert(orders[i].phi);
    if (n_bins > distinct.size()) {
        std::ostringstream msg;
        msg << "impact_curve: " << n_bins << " bins requested but only " << distinct.size()
            << " distinct daily fractions";
        throw ConfigError(msg.str());
    }
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        const auto& x = orders[a];
        const auto& y = orders[b];
        if (x.phi != y.phi)
            return x.phi < y.phi;
        if (x.stock != y.stock)
            return x.stock < y.stock;
        return x.day < y.day;
    });

    ImpactCurve curve;
    curve.pair = pair;
    curve.n_orders = idx.size();
    const auto bounds = equal_population_bounds(idx.size(), n_bins);
    for (std::size_t b = 0; b < n_bins; ++b) {
        const auto first = idx.begin() + static_cast<std::ptrdiff_t>(bounds[b]);
        const auto last = idx.begin() + static_cast<std::ptrdiff_t>(bounds[b + 1]);
        ImpactBin bin;
        bin.count = bounds[b + 1] - bounds[b];
        bin.lower = orders[*first].phi;
        bin.upper = orders[*(last - 1)].phi;
        bin.center = moments(first, last, [&](std::size_t i) { return orders[i].phi; }).mean;
        const auto m = moments(first, last, [&](std::size_t i) { return pair_value(orders[i], pair); });
        bin.mean = m.mean;
        bin.stderr_ = m.stderr_;
        curve.bins.push_back(bin);
    }
    return curve;
}

ImpactCurve impact_curve(const data::Panel& panel, PricePair pair, std::size_t n_bins)
{
    const auto orders = order_impacts(panel);
    return impact_curve(orders, pair, n_bins);
}

std::vector<CurvePoint> to_points(const ImpactCurve& curve)
{
    std::vector<CurvePoint> pts;
    for (const auto& b : curve.bins)
        pts.push_back({b.center, b.mean, b.stderr_, b.count});
    return pts;
}

namespace {

double ratio_error(double ratio, double num, double num_err, double den, double den_err)
{
    const double rn = num != 0.0 ? num_err / num : 0.0;
    const double rd = den != 0.0 ? den_err / den : 0.0;
    return std::abs(ratio) * std::sqrt(rn * rn + rd * rd);
}

} // namespace

std::vector<CurvePoint> impact_ratio(const ImpactCurve& numerator, const ImpactCurve& denominator)
{
    if (numerator.bins.size() != denominator.bins.size())
        throw ConfigError("impact_ratio: curves have different bin counts");
    std::vector<CurvePoint> pts;
    for (std::size_t i = 0; i < numerator.bins.size(); ++i) {
        const auto& n = numerator.bins[i];
        const auto& d = denominator.bins[i];
        CurvePoint p;
        p.center = d.center;
        p.value = n.mean / d.mean;
        p.stderr_ = ratio_error(p.value, n.mean, n.stderr_, d.mean, d.stderr_);
        p.count = std::min(n.count, d.count);
        pts.push_back(p);
    }
    return pts;
}

double mean_value(std::span<const CurvePoint> points)
{
    if (points.empty())
        throw DataError("mean_value: no points");
    double acc = 0.0;
    for (const auto& p : points)
        acc += p.value;
    return acc / static_cast<double>(points.size());
}

PowerLawFit fit_power_law(const ImpactCurve& curve, double phi_lo, double phi_hi)
{
    std::vector<const ImpactBin*> use;
    for (const auto& b : curve.bins)
        if (b.center >= phi_lo && b.center <= phi_hi && b.mean > 0.0)
            use.push_back(&b);
    if (use.size() < 3)
        throw DataError("fit_power_law: fewer than 3 usable bins in range");
    const bool weighted = std::all_of(use.begin(), use.end(), [](const ImpactBin* b) { return b->stderr_ > 0.0; });
    const auto n = static_cast<Eigen::Index>(use.size());
    Eigen::MatrixXd x(n, 2);
    Eigen::VectorXd y(n);
    Eigen::VectorXd w(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto* b = use[static_cast<std::size_t>(i)];
        x(i, 0) = 1.0;
        x(i, 1) = std::log(b->center);
        y(i) = std::log(b->mean);
        const double rel = b->stderr_ / b->mean;
        w(i) = weighted ? 1.0 / (rel * rel) : 1.0;
    }
    const auto lin = fit::linear_lsq(x, y, w);
    PowerLawFit out;
    out.exponent = lin.coefficients(1);
    out.exponent_err = lin.standard_errors(1);
    out.prefactor = std::exp(lin.coefficients(0));
    out.n_points = use.size();
    return out;
}

double propagator_decay(double z, double beta)
{
    if (!(z >= 0.0))
        throw DataError("propagator_decay: z must be non-negative");
    if (!(beta >= 0.0 && beta <= 1.0))
        throw ConfigError("propagator_decay: beta must lie in [0, 1]");
    if (z == 0.0)
        return 1.0;
    if (beta == 1.0)
        return 0.0;
    if (std::isinf(z))
        return beta == 0.0 ? 1.0 : 0.0;
    const double e = 1.0 - beta;
    // z^e ((1 + 1/z)^e - 1), stable for large z
    return std::pow(z, e) * std::expm1(e * std::log1p(1.0 / z));
}

double propagator_decay_dbeta(double z, double beta)
{
    if (!(z >= 0.0))
        throw DataError("propagator_decay_dbeta: z must be non-negative");
    if (z == 0.0)
        return 0.0;
    const double e = 1.0 - beta;
    return -(std::pow(1.0 + z, e) * std::log1p(z) - std::pow(z, e) * std::log(z));
}

std::vector<double> decay_bin_edges(double z_max, const DecayOptions& options)
{
    if (options.n_bins == 0)
        throw ConfigError("decay_curve: n_bins must be positive");
    if (!(options.linear_limit > 0.0))
        throw ConfigError("decay_curve: linear_limit must be positive");
    std::vector<double> edges{0.0};
    if (z_max <= options.linear_limit) {
        const std::size_t k = options.n_bins;
        const double top = z_max > 0.0 ? z_max : options.linear_limit;
        for (std::size_t i = 1; i <= k; ++i)
            edges.push_back(top * static_cast<double>(i) / static_cast<double>(k));
        return edges;
    }
    const std::size_t lin = std::min(options.linear_bins, options.n_bins - 1);
    for (std::size_t i = 1; i <= lin; ++i)
        edges.push_back(options.linear_limit * static_cast<double>(i) / static_cast<double>(lin));
    if (lin == 0)
        edges.push_back(options.linear_limit);
    const std::size_t logs = options.n_bins - std::max<std::size_t>(lin, 1);
    const double l0 = std::log(options.linear_limit);
    const double l1 = std::log(z_max);
    for (std::size_t i = 1; i <= logs; ++i)
        edges.push_back(i == logs ? z_max : std::exp(l0 + (l1 - l0) * static_cast<double>(i) / static_cast<double>(logs)));
    return edges;
}

DecayCurve decay_curve(std::span<const OrderImpact> orders, const DecayOptions& options)
{
    const bool next_day = options.horizon == DecayHorizon::NextDay;
    const bool wall = options.clock == DecayClock::WallClock;
    const double zeta = next_day ? options.zeta : 1.0;
    if (!(zeta > 0.0) || !std::isfinite(zeta))
        throw ConfigError("decay_curve: zeta must be positive");

    struct Sample {
        double z, num, den;
    };
    std::vector<Sample> samples;
    for (const auto& o : orders) {
        const double z = next_day ? (wall ? o.zc_next_day : o.z_next_day) : (wall ? o.zc_same_day : o.z_same_day);
        const double num = next_day ? o.start_to_next_close : o.start_to_close;
        if (std::isfinite(z) && std::isfinite(num) && std::isfinite(o.start_to_end))
            samples.push_back({z, num, o.start_to_end});
    }
    if (samples.empty())
        throw DataError("decay_curve: no orders with the required prices");

    double z_max = 0.0;
    for (const auto& s : samples)
        z_max = std::max(z_max, s.z);

    DecayCurve curve;
    curve.n_orders = samples.size();
    curve.edges = decay_bin_edges(z_max, options);
    const std::size_t k = curve.edges.size() - 1;
    std::vector<std::vector<const Sample*>> bins(k);
    for (const auto& s : samples) {
        auto it = std::upper_bound(curve.edges.begin(), curve.edges.end(), s.z);
        auto b = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, it - curve.edges.begin() - 1));
        bins[std::min(b, k - 1)].push_back(&s);
    }
    for (std::size_t b = 0; b < k; ++b) {
        const auto& members = bins[b];
        if (members.empty()) {
            std::ostringstream msg;
            msg << "decay bin [" << curve.edges[b] << ", " << curve.edges[b + 1] << ") is empty; dropped";
            curve.warnings.push_back(msg.str());
            continue;
        }
        const auto mz = moments(members.begin(), members.end(), [](const Sample* s) { return s->z; });
        const auto mn = moments(members.begin(), members.end(), [](const Sample* s) { return s->num; });
        const auto md = moments(members.begin(), members.end(), [](const Sample* s) { return s->den; });
        DecayPoint p;
        p.z = mz.mean;
        p.value = zeta * mn.mean / md.mean;
        p.stderr_ = ratio_error(p.value, mn.mean, mn.stderr_, md.mean, md.stderr_);
        p.count = members.size();
        curve.points.push_back(p);
    }
    return curve;
}

DecayCurve decay_curve(const data::Panel& panel, const DecayOptions& options)
{
    const auto orders = order_impacts(panel);
    return decay_curve(orders, options);
}

double zeta_from_autocorr(double c1)
{
    if (!(c1 > -1.0) || !std::isfinite(c1))
        throw ConfigError("zeta_from_autocorr: C(1) must be finite and greater than -1");
    return 1.0 / (1.0 + c1);
}

NextCloseRegression conditional_next_close(std::span<const OrderImpact> orders, std::size_t n_bins)
{
    if (n_bins < 2)
        throw ConfigError("conditional_next_close: need at least 2 bins");
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < orders.size(); ++i)
        if (std::isfinite(orders[i].start_to_close) && std::isfinite(orders[i].start_to_next_close))
            idx.push_back(i);
    std::set<double> distinct;
    for (auto i : idx)
        distinct.insert(orders[i].start_to_close);
    if (distinct.size() < n_bins)
        throw ConfigError("conditional_next_close: fewer distinct same-day impacts than bins");
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return orders[a].start_to_close < orders[b].start_to_close;
    });

    NextCloseRegression out;
    out.n_pairs = idx.size();
    const auto bounds = equal_population_bounds(idx.size(), n_bins);
    for (std::size_t b = 0; b < n_bins; ++b) {
        const auto first = idx.begin() + static_cast<std::ptrdiff_t>(bounds[b]);
        const auto last = idx.begin() + static_cast<std::ptrdiff_t>(bounds[b + 1]);
        const auto mx = moments(first, last, [&](std::size_t i) { return orders[i].start_to_close; });
        const auto my = moments(first, last, [&](std::size_t i) { return orders[i].start_to_next_close; });
        out.bins.push_back({mx.mean, my.mean, my.stderr_, bounds[b + 1] - bounds[b]});
    }

    double sxx = 0.0;
    double sxy = 0.0;
    for (auto i : idx) {
        sxx += orders[i].start_to_close * orders[i].start_to_close;
        sxy += orders[i].start_to_close * orders[i].start_to_next_close;
    }
    if (!(sxx > 0.0))
        throw DataError("conditional_next_close: same-day impacts are all zero");
    out.slope = sxy / sxx;
    double rss = 0.0;
    for (auto i : idx) {
        const double r = orders[i].start_to_next_close - out.slope * orders[i].start_to_close;
        rss += r * r;
    }
    out.slope_err = idx.size() > 1 ? std::sqrt(rss / static_cast<double>(idx.size() - 1) / sxx) : 0.0;
    return out;
}

NextCloseRegression conditional_next_close(const data::Panel& panel, std::size_t n_bins)
{
    const auto orders = order_impacts(panel);
    return conditional_next_close(orders, n_bins);
}

namespace {

// Inverse-variance weights when every point carries a positive error.
std::pair<Eigen::VectorXd, std::string> decay_weights(std::span<const DecayPoint* const> pts)
{
    const bool ok = std::all_of(pts.begin(), pts.end(),
                                [](const DecayPoint* p) { return p->stderr_ > 0.0 && std::isfinite(p->stderr_); });
    Eigen::VectorXd w(static_cast<Eigen::Index>(pts.size()));
    for (std::size_t i = 0; i < pts.size(); ++i)
        w(static_cast<Eigen::Index>(i)) = ok ? 1.0 / (pts[i]->stderr_ * pts[i]->stderr_) : 1.0;
    return {w, ok ? "inverse_variance" : "unit"};
}

} // namespace

DecayExponentFit fit_decay_exponent(std::span<const DecayPoint> points, double initial_beta)
{
    if (points.size() < 3)
        throw ConfigError("fit_decay_exponent: need at least 3 points");
    std::vector<const DecayPoint*> pts;
    for (const auto& p : points)
        pts.push_back(&p);
    const auto n = static_cast<Eigen::Index>(pts.size());
    Eigen::VectorXd z(n);
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        z(i) = pts[static_cast<std::size_t>(i)]->z;
        y(i) = pts[static_cast<std::size_t>(i)]->value;
    }
    auto [w, weighting] = decay_weights(pts);

    fit::FitProblem prob;
    prob.model = [z](const Eigen::VectorXd& p) {
        Eigen::VectorXd out(z.size());
        for (Eigen::Index i = 0; i < z.size(); ++i)
            out(i) = propagator_decay(z(i), p(0));
        return out;
    };
    prob.jacobian = [z](const Eigen::VectorXd& p) {
        Eigen::MatrixXd j(z.size(), 1);
        for (Eigen::Index i = 0; i < z.size(); ++i)
            j(i, 0) = propagator_decay_dbeta(z(i), p(0));
        return j;
    };
    prob.observed = y;
    prob.weights = w;
    prob.lower = Eigen::VectorXd::Constant(1, 0.0);
    prob.upper = Eigen::VectorXd::Constant(1, 1.0);
    prob.initial = Eigen::VectorXd::Constant(1, std::clamp(initial_beta, 0.0, 1.0));

    DecayExponentFit out;
    out.fit = fit::nonlinear_lsq(prob);
    if (!out.fit.converged)
        throw ConvergenceError("fit_decay_exponent: " + out.fit.termination, out.fit.cost_trace);
    out.beta = out.fit.params(0);
    const Eigen::MatrixXd cov = weighting == "unit" ? out.fit.scaled_covariance(pts.size()) : out.fit.covariance;
    out.beta_err = std::sqrt(std::max(0.0, cov(0, 0)));
    out.boundary_hit = out.fit.boundary_hit();
    out.weighting = weighting;
    return out;
}

PlateauFit fit_decay_plateau(std::span<const DecayPoint> points, double z_max)
{
    std::vector<const DecayPoint*> pts;
    for (const auto& p : points)
        if (p.z <= z_max)
            pts.push_back(&p);
    if (pts.size() < 3)
        throw ConfigError("fit_decay_plateau: need at least 3 points below z_max");
    const auto n = static_cast<Eigen::Index>(pts.size());
    Eigen::VectorXd z(n);
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        z(i) = pts[static_cast<std::size_t>(i)]->z;
        y(i) = pts[static_cast<std::size_t>(i)]->value;
    }
    auto [w, weighting] = decay_weights(pts);

    fit::FitProblem prob;
    prob.model = [z](const Eigen::VectorXd& p) {
        Eigen::VectorXd out(z.size());
        for (Eigen::Index i = 0; i < z.size(); ++i)
            out(i) = p(0) + (1.0 - p(0)) * std::exp(-p(1) * z(i));
        return out;
    };
    prob.observed = y;
    prob.weights = w;
    prob.lower = Eigen::Vector2d(0.0, 0.0);
    prob.upper = Eigen::Vector2d(1.0, std::numeric_limits<double>::infinity());
    const double zmax_seen = z.maxCoeff();
    prob.initial = Eigen::Vector2d(std::clamp(y(n - 1), 0.0, 1.0), zmax_seen > 0.0 ? 3.0 / zmax_seen : 1.0);

    PlateauFit out;
    out.fit = fit::nonlinear_lsq(prob);
    if (!out.fit.converged)
        throw ConvergenceError("fit_decay_plateau: " + out.fit.termination, out.fit.cost_trace);
    out.plateau = out.fit.params(0);
    out.rate = out.fit.params(1);
    const Eigen::MatrixXd cov = weighting == "unit" ? out.fit.scaled_covariance(pts.size()) : out.fit.covariance;
    out.plateau_err = std::sqrt(std::max(0.0, cov(0, 0)));
    return out;
}

} // namespace metaimpact::impact
