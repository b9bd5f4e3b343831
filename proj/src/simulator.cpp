#include "metaimpact/simulator.hpp"

#include "metaimpact/errors.hpp"
#include "metaimpact/impact.hpp"
#include "metaimpact/latent_flow.hpp"
#include "parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

namespace metaimpact::sim {

using data::Day;
using data::StockDayGrid;

void PropagatorParams::validate() const
{
    if (!(beta > 0.0 && beta < 1.0))
        throw ConfigError("propagator beta must lie in (0, 1)");
    if (!(prefactor > 0.0) || !std::isfinite(prefactor))
        throw ConfigError("propagator prefactor Y must be positive");
}

double TruncatedPareto::from_tail(double tail) const
{
    tail = std::clamp(tail, 0.0, 1.0);
    const double lo = std::pow(lower, -exponent);
    const double hi = std::pow(upper, -exponent);
    const double x = std::pow(hi + tail * (lo - hi), -1.0 / exponent);
    return std::clamp(x, lower, upper);
}

double TruncatedPareto::survival(double x) const
{
    if (x <= lower)
        return 1.0;
    if (x >= upper)
        return 0.0;
    const double lo = std::pow(lower, -exponent);
    const double hi = std::pow(upper, -exponent);
    return (std::pow(x, -exponent) - hi) / (lo - hi);
}

double TruncatedPareto::mean() const
{
    const double norm = std::pow(lower, -exponent) - std::pow(upper, -exponent);
    if (std::abs(exponent - 1.0) < 1e-12)
        return std::log(upper / lower) / norm;
    return exponent / (1.0 - exponent) * (std::pow(upper, 1.0 - exponent) - std::pow(lower, 1.0 - exponent)) / norm;
}

double TruncatedPareto::sample_between(double lo, double hi, double uniform) const
{
    lo = std::max(lo, lower);
    hi = std::min(hi, upper);
    if (!(lo < hi))
        return hi;
    const double a = std::pow(lo, -exponent);
    const double b = std::pow(hi, -exponent);
    return std::clamp(std::pow(a - uniform * (a - b), -1.0 / exponent), lo, hi);
}

void TruncatedPareto::validate(const std::string& name) const
{
    if (!(exponent > 0.0) || !std::isfinite(exponent))
        throw ConfigError(name + ": tail exponent must be positive");
    if (!(lower > 0.0 && lower < upper) || !std::isfinite(upper))
        throw ConfigError(name + ": need 0 < lower < upper");
}

double FlowParams::activity() const
{
    return single_order_days ? std::min(intensity, 1.0) : -std::expm1(-intensity);
}

double FlowParams::target_autocorr(double lag) const
{
    return a * std::pow(lag, -gamma) * std::exp(-b * lag);
}

void FlowParams::validate() const
{
    if (!(a >= 0.0) || !(b > 0.0) || !(gamma > 0.0))
        throw ConfigError("flow autocorrelation needs a >= 0, b > 0, gamma > 0");
    if (!(target_autocorr(1.0) < 1.0))
        throw ConfigError("flow autocorrelation at lag 1 must be below 1");
    if (!(intensity > 0.0) || !std::isfinite(intensity))
        throw ConfigError("flow intensity must be positive");
    daily_fraction.validate("daily_fraction");
    participation.validate("participation");
    if (daily_fraction.upper > 1.0 || participation.upper > 1.0)
        throw ConfigError("daily fraction and participation are bounded by 1");
    if (daily_fraction.upper > participation.upper)
        throw ConfigError("daily_fraction.upper must not exceed participation.upper");
    if (placement == StartPlacement::ZGrid) {
        if (z_grid.empty())
            throw ConfigError("z-grid placement needs a non-empty z_grid");
        for (double z : z_grid)
            if (!(z >= 0.0) || !std::isfinite(z))
                throw ConfigError("z_grid values must be finite and non-negative");
    }
}

std::vector<double> KernelSpec::coefficients(const PropagatorParams& propagator) const
{
    std::vector<double> g(horizon + 1);
    if (kind == Kind::Explicit) {
        if (lags.size() < horizon + 1)
            throw ConfigError("explicit kernel has " + std::to_string(lags.size()) + " lags, horizon needs " +
                              std::to_string(horizon + 1));
        std::copy_n(lags.begin(), horizon + 1, g.begin());
        return g;
    }
    if (!(i_inf >= 0.0 && i_inf <= 1.0) || !(b >= 0.0))
        throw ConfigError("kernel needs 0 <= i_inf <= 1 and b >= 0");
    double prev = 0.0;
    for (std::size_t tau = 0; tau <= horizon; ++tau) {
        const double t = static_cast<double>(tau);
        const double cum = propagator.prefactor *
                           (i_inf + (1.0 - i_inf) * impact::propagator_decay(t, propagator.beta) * std::exp(-b * t));
        g[tau] = cum - prev;
        prev = cum;
    }
    return g;
}

void SimConfig::validate() const
{
    if (n_stocks < 1 || n_days < 2)
        throw ConfigError("simulation needs at least 1 stock and 2 days");
    flow.validate();
    propagator.validate();
    (void)data::parse_day(start_date);
    if (!(sigma_median > 0.0) || !(volume_median > 0.0))
        throw ConfigError("sigma_median and volume_median must be positive");
    if (sigma_stock_dispersion < 0.0 || sigma_day_dispersion < 0.0 || volume_dispersion < 0.0)
        throw ConfigError("dispersions must be non-negative");
    if (!(noise.xi_scale >= 0.0) || !(noise.market_vol >= 0.0) || !(noise.intraday >= 0.0))
        throw ConfigError("noise scales must be non-negative");
    if (!(violation_rate >= 0.0 && violation_rate <= 1.0))
        throw ConfigError("violation_rate must lie in [0, 1]");
    (void)kernel.coefficients(propagator);
}

std::vector<Day> business_calendar(Day start, std::size_t n_days)
{
    std::vector<Day> days;
    days.reserve(n_days);
    Day d = start;
    while (days.size() < n_days) {
        const std::chrono::weekday wd{d};
        if (wd != std::chrono::Saturday && wd != std::chrono::Sunday)
            days.push_back(d);
        d += std::chrono::days{1};
    }
    return days;
}

data::VolumeCurve standard_volume_curve(double total)
{
    constexpr int kIntervals = 13; // 09:30 .. 16:00 in half hours
    std::vector<double> weight(kIntervals);
    for (int i = 0; i < kIntervals; ++i) {
        const double x = (i - 6) / 6.0;
        weight[static_cast<std::size_t>(i)] = 1.0 + 2.0 * x * x;
    }
    const double sum = std::accumulate(weight.begin(), weight.end(), 0.0);
    std::vector<std::pair<data::TimeOfDay, double>> pts;
    double cum = 0.0;
    const std::int64_t open = (9 * 3600 + 30 * 60) * 1'000'000LL;
    const std::int64_t step = 30 * 60 * 1'000'000LL;
    pts.emplace_back(data::TimeOfDay{open}, 0.0);
    for (int i = 0; i < kIntervals; ++i) {
        cum += weight[static_cast<std::size_t>(i)];
        const double v = i + 1 == kIntervals ? total : total * (cum / sum);
        pts.emplace_back(data::TimeOfDay{open + (i + 1) * step}, v);
    }
    return data::VolumeCurve(std::move(pts));
}

namespace {

StockDayGrid<double> sign_series(const FlowModel& model, std::size_t n_stocks, std::size_t n_days,
                                 std::uint64_t seed, std::size_t threads)
{
    StockDayGrid<double> net(n_stocks, n_days);
    detail::parallel_for(n_stocks, threads, [&](std::size_t s) {
        auto rng = make_rng(seed, Stream::LatentFlow, s);
        const auto x = model.sample_latent(n_days, rng);
        for (std::size_t t = 0; t < n_days; ++t)
            net(s, t) = model.transform().net_fraction(x[t]);
    });
    return net;
}

std::string stock_name(std::size_t s)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "S%04zu", s);
    return buf;
}

// Zero-truncated Poisson by inverse CDF.
std::size_t orders_on_active_day(double intensity, double uniform)
{
    const double norm = -std::expm1(-intensity);
    double pk = std::exp(-intensity);
    double cdf = 0.0;
    for (std::size_t k = 1; k < 1000; ++k) {
        pk *= intensity / static_cast<double>(k);
        cdf += pk / norm;
        if (uniform <= cdf)
            return k;
    }
    return 1000;
}

} // namespace

StockDayGrid<double> generate_sign_series(const FlowParams& params, std::size_t n_stocks, std::size_t n_days,
                                          std::uint64_t seed)
{
    params.validate();
    return sign_series(FlowModel(params, n_days), n_stocks, n_days, seed, 1);
}

SyntheticFlow generate_metaorders(const FlowParams& params, const PanelShape& shape, std::uint64_t seed)
{
    if (shape.n_stocks < 1 || shape.n_days < 1)
        throw ConfigError("panel shape needs at least one stock and one day");
    const std::size_t total_days = shape.burn_in + shape.n_days;

    SyntheticFlow out;
    out.calendar = business_calendar(data::parse_day(shape.start_date), shape.n_days);
    out.burn_in = shape.burn_in;
    params.validate();
    const FlowModel model(params, total_days);
    out.latent_autocorr = model.latent_autocorr();
    out.net = sign_series(model, shape.n_stocks, total_days, seed, shape.threads);
    out.sigma = StockDayGrid<double>(shape.n_stocks, total_days);
    out.day_volume = StockDayGrid<double>(shape.n_stocks, total_days);
    out.initial_price.assign(shape.n_stocks, 0.0);

    std::vector<std::vector<SimOrder>> per_stock(shape.n_stocks);
    detail::parallel_for(shape.n_stocks, shape.threads, [&](std::size_t s) {
        std::normal_distribution<double> normal;
        std::uniform_real_distribution<double> unif;
        std::exponential_distribution<double> expo;

        auto levels = make_rng(seed, Stream::StockLevels, s);
        const double log_sigma = std::log(shape.sigma_median) + shape.sigma_stock_dispersion * normal(levels);
        const double log_volume = std::log(shape.volume_median) + shape.volume_dispersion * normal(levels);
        out.initial_price[s] = 20.0 * std::exp(0.5 * normal(levels));
        for (std::size_t t = 0; t < total_days; ++t) {
            out.sigma(s, t) = std::exp(log_sigma + shape.sigma_day_dispersion * normal(levels));
            out.day_volume(s, t) = std::exp(log_volume + 0.5 * shape.volume_dispersion * normal(levels));
        }

        auto rng = make_rng(seed, Stream::Orders, s);
        const std::string id = stock_name(s);
        auto& orders = per_stock[s];
        for (std::size_t t = 0; t < shape.n_days; ++t) {
            const std::size_t col = shape.burn_in + t;
            const double net = out.net(s, col);
            if (net == 0.0)
                continue;
            const int sign = net > 0.0 ? 1 : -1;
            const double volume = out.day_volume(s, col);
            const auto curve = standard_volume_curve(volume);

            const std::size_t n = params.single_order_days ? 1 : orders_on_active_day(params.intensity, unif(rng));
            std::vector<double> weight(n);
            for (auto& w : weight)
                w = expo(rng);
            const double wsum = std::accumulate(weight.begin(), weight.end(), 0.0);

            for (std::size_t i = 0; i < n; ++i) {
                const double phi = std::abs(net) * weight[i] / wsum;
                const double eta = params.participation.sample_between(
                    std::max(params.participation.lower, phi), std::min(params.participation.upper, phi / 1.05e-4),
                    unif(rng));
                const double duration = std::min(1.0, phi / eta);

                double u_start = 0.0;
                double u_end = 0.0;
                if (params.placement == StartPlacement::Uniform) {
                    u_start = unif(rng) * (1.0 - duration);
                    u_end = u_start + duration;
                } else {
                    std::vector<double> feasible;
                    for (double z : params.z_grid)
                        if (z * duration <= 1.0 - duration)
                            feasible.push_back(z);
                    double z = 0.0;
                    if (!feasible.empty()) {
                        const auto pick = std::min(feasible.size() - 1,
                                                   static_cast<std::size_t>(unif(rng) * static_cast<double>(feasible.size())));
                        z = feasible[pick];
                    }
                    u_end = 1.0 - z * duration;
                    u_start = std::max(0.0, u_end - duration);
                }

                SimOrder o;
                o.stock = s;
                o.day = t;
                o.sign = sign;
                o.phi = phi;
                o.u_start = u_start;
                o.u_end = u_end;
                auto& m = o.record;
                m.stock_id = id;
                m.day = out.calendar[t];
                m.sign = sign;
                m.volume = phi * volume;
                m.vol_at_start = u_start * volume;
                m.vol_at_end = u_end == 1.0 ? volume : u_end * volume;
                m.start = curve.time_at(m.vol_at_start);
                m.end = curve.time_at(m.vol_at_end);
                orders.push_back(std::move(o));
            }
        }
    });
    for (auto& v : per_stock)
        for (auto& o : v)
            out.orders.push_back(std::move(o));
    return out;
}

namespace {

struct StockPrices {
    std::vector<data::DailyBar> bars;
    std::vector<std::pair<double, double>> order_prices; // aligned with the stock's orders
    std::vector<double> returns;
};

double order_path(const SimOrder& o, double u, double beta, double prefactor)
{
    const double e = 1.0 - beta;
    const double d = o.u_end - o.u_start;
    const double rise = u > o.u_start ? std::pow(u - o.u_start, e) : 0.0;
    const double fall = u > o.u_end ? std::pow(u - o.u_end, e) : 0.0;
    return o.sign * prefactor * std::sqrt(o.phi) * (rise - fall) / std::pow(d, e);
}

} // namespace

Simulation simulate_prices(const SyntheticFlow& flow, const PropagatorParams& propagator, const SimConfig& config)
{
    propagator.validate();
    const std::vector<double> kernel = config.kernel.coefficients(propagator);
    const std::size_t horizon = config.kernel.horizon;
    const std::size_t n_stocks = flow.net.n_stocks();
    const std::size_t total_days = flow.net.n_days();
    const std::size_t burn = flow.burn_in;
    const std::size_t n_days = flow.calendar.size();
    if (burn + n_days != total_days)
        throw ConfigError("synthetic flow grid does not match its calendar");

    std::vector<double> market(total_days);
    {
        auto rng = make_rng(config.seed, Stream::Market, 0);
        std::normal_distribution<double> normal(0.0, 1.0);
        for (auto& r : market)
            r = config.noise.market_vol * normal(rng);
    }

    StockDayGrid<double> adjusted(n_stocks, total_days);
    for (std::size_t t = 0; t < total_days; ++t) {
        double mean = 0.0;
        for (std::size_t s = 0; s < n_stocks; ++s)
            mean += data::signed_sqrt(flow.net(s, t));
        mean /= static_cast<double>(n_stocks);
        for (std::size_t s = 0; s < n_stocks; ++s)
            adjusted(s, t) = data::signed_sqrt(flow.net(s, t)) - config.beta_capm * mean;
    }

    // Orders are grouped by stock then day.
    std::vector<std::size_t> stock_begin(n_stocks + 1, 0);
    for (const auto& o : flow.orders)
        ++stock_begin[o.stock + 1];
    std::partial_sum(stock_begin.begin(), stock_begin.end(), stock_begin.begin());

    std::vector<StockPrices> per_stock(n_stocks);
    detail::parallel_for(n_stocks, config.threads, [&](std::size_t s) {
        auto noise_rng = make_rng(config.seed, Stream::DailyNoise, s);
        auto intra_rng = make_rng(config.seed, Stream::Intraday, s);
        std::normal_distribution<double> normal;
        auto& out = per_stock[s];
        out.order_prices.resize(stock_begin[s + 1] - stock_begin[s]);
        out.returns.resize(n_days);

        std::size_t next = stock_begin[s];
        double log_close = std::log(flow.initial_price[s]);
        const std::string id = stock_name(s);
        for (std::size_t t = 0; t < n_days; ++t) {
            const std::size_t col = burn + t;
            const double sigma = flow.sigma(s, col);
            double r = config.beta_capm * market[col];
            for (std::size_t l = 0; l <= horizon && l <= col; ++l)
                r += kernel[l] * flow.sigma(s, col - l) * adjusted(s, col - l);
            r += config.noise.xi_scale * sigma * normal(noise_rng);
            out.returns[t] = r;
            log_close += r;

            std::size_t first = next;
            while (next < stock_begin[s + 1] && flow.orders[next].day == t)
                ++next;

            // Bridge noise at every order endpoint, pinned to zero at open and close.
            std::vector<double> marks;
            for (std::size_t i = first; i < next; ++i) {
                marks.push_back(flow.orders[i].u_start);
                marks.push_back(flow.orders[i].u_end);
            }
            std::sort(marks.begin(), marks.end());
            marks.erase(std::unique(marks.begin(), marks.end()), marks.end());
            std::vector<double> bridge(marks.size(), 0.0);
            if (config.noise.intraday > 0.0) {
                double u_prev = 0.0;
                double b_prev = 0.0;
                for (std::size_t k = 0; k < marks.size(); ++k) {
                    const double u = marks[k];
                    if (u >= 1.0 || u <= u_prev) {
                        bridge[k] = u >= 1.0 ? 0.0 : b_prev;
                        continue;
                    }
                    const double mean = b_prev * (1.0 - u) / (1.0 - u_prev);
                    const double var = (u - u_prev) * (1.0 - u) / (1.0 - u_prev);
                    b_prev = mean + std::sqrt(var) * normal(intra_rng);
                    u_prev = u;
                    bridge[k] = b_prev;
                }
            }
            auto path = [&](double u) {
                double p = 0.0;
                for (std::size_t i = first; i < next; ++i)
                    p += order_path(flow.orders[i], u, propagator.beta, propagator.prefactor);
                const auto k = static_cast<std::size_t>(std::lower_bound(marks.begin(), marks.end(), u) - marks.begin());
                if (k < marks.size() && marks[k] == u)
                    p += config.noise.intraday * bridge[k];
                return p;
            };

            const double log_open = log_close - sigma * path(1.0);
            const double open = std::exp(log_open);
            const double close = std::exp(log_close);
            double hi = std::max(open, close);
            double lo = std::min(open, close);
            for (std::size_t i = first; i < next; ++i) {
                const auto& o = flow.orders[i];
                const double ps = std::exp(log_open + sigma * path(o.u_start));
                const double pe = o.u_end == 1.0 ? close : std::exp(log_open + sigma * path(o.u_end));
                out.order_prices[i - stock_begin[s]] = {ps, pe};
                hi = std::max({hi, ps, pe});
                lo = std::min({lo, ps, pe});
            }
            double spare = sigma * open - (hi - lo);
            if (spare < 0.0) {
                hi = std::max(open, close);
                lo = std::min(open, close);
                spare = std::max(0.0, sigma * open - (hi - lo));
            }

            data::DailyBar bar;
            bar.stock_id = id;
            bar.day = flow.calendar[t];
            bar.open = open;
            bar.close = close;
            bar.high = hi + 0.5 * spare;
            bar.low = lo - 0.5 * spare;
            bar.total_volume = flow.day_volume(s, col);
            bar.curve = standard_volume_curve(bar.total_volume);
            out.bars.push_back(std::move(bar));
        }
    });

    Simulation sim;
    sim.returns = StockDayGrid<double>(n_stocks, n_days);
    std::vector<data::DailyBar> bars;
    std::vector<data::Metaorder> orders;
    orders.reserve(flow.orders.size());
    for (std::size_t s = 0; s < n_stocks; ++s) {
        for (std::size_t t = 0; t < n_days; ++t)
            sim.returns(s, t) = per_stock[s].returns[t];
        for (auto& b : per_stock[s].bars)
            bars.push_back(std::move(b));
        for (std::size_t i = stock_begin[s]; i < stock_begin[s + 1]; ++i) {
            data::Metaorder m = flow.orders[i].record;
            std::tie(m.price_at_start, m.price_at_end) = per_stock[s].order_prices[i - stock_begin[s]];
            orders.push_back(std::move(m));
        }
    }

    std::vector<std::pair<Day, double>> market_series;
    for (std::size_t t = 0; t < n_days; ++t)
        market_series.emplace_back(flow.calendar[t], market[burn + t]);

    std::map<std::string, std::string> tranches;
    if (!config.tranche_labels.empty())
        for (std::size_t s = 0; s < n_stocks; ++s)
            tranches[stock_name(s)] = config.tranche_labels[s * config.tranche_labels.size() / n_stocks];

    auto& truth = sim.truth;
    truth.kernel = kernel;
    truth.kernel_cumulative.resize(kernel.size());
    std::partial_sum(kernel.begin(), kernel.end(), truth.kernel_cumulative.begin());
    truth.kernel_normalized.resize(kernel.size());
    for (std::size_t l = 0; l < kernel.size(); ++l)
        truth.kernel_normalized[l] = truth.kernel_cumulative[l] / truth.kernel_cumulative[0];
    for (std::size_t tau = 1; tau <= std::max<std::size_t>(horizon, 1); ++tau)
        truth.target_autocorr.push_back(config.flow.target_autocorr(static_cast<double>(tau)));
    truth.activity = config.flow.activity();
    truth.implied_zeta = 1.0 / (1.0 + config.flow.target_autocorr(1.0));
    truth.n_orders = orders.size();

    sim.panel = data::Panel::assemble(std::move(bars), std::move(orders), std::move(market_series),
                                      std::move(tranches));
    return sim;
}

namespace {

const std::vector<std::string>& violation_kinds()
{
    static const std::vector<std::string> kinds = {"zero_duration", "participation_cap", "nonpositive_volume",
                                                   "inverted_interval", "invalid_sign"};
    return kinds;
}

data::Metaorder corrupt(data::Metaorder m, const std::string& kind)
{
    if (kind == "zero_duration") {
        m.end = m.start;
        m.vol_at_end = m.vol_at_start;
    } else if (kind == "participation_cap") {
        m.volume = 0.9 * m.interval_volume();
    } else if (kind == "nonpositive_volume") {
        m.volume = 0.0;
    } else if (kind == "inverted_interval") {
        std::swap(m.start, m.end);
        std::swap(m.vol_at_start, m.vol_at_end);
    } else {
        m.sign = 0;
    }
    return m;
}

} // namespace

Simulation simulate(const SimConfig& config)
{
    config.validate();
    PanelShape shape;
    shape.n_stocks = config.n_stocks;
    shape.n_days = config.n_days;
    shape.burn_in = config.kernel.horizon;
    shape.start_date = config.start_date;
    shape.sigma_median = config.sigma_median;
    shape.sigma_stock_dispersion = config.sigma_stock_dispersion;
    shape.sigma_day_dispersion = config.sigma_day_dispersion;
    shape.volume_median = config.volume_median;
    shape.volume_dispersion = config.volume_dispersion;
    shape.threads = std::max<std::size_t>(1, config.threads);

    const SyntheticFlow flow = generate_metaorders(config.flow, shape, config.seed);
    Simulation sim = simulate_prices(flow, config.propagator, config);

    for (std::size_t tau = 1; tau <= sim.truth.target_autocorr.size(); ++tau)
        sim.truth.latent_autocorr.push_back(tau <= flow.latent_autocorr.size() ? flow.latent_autocorr[tau - 1] : 0.0);

    const auto valid = sim.panel.orders();
    const auto n_bad = static_cast<std::size_t>(std::llround(config.violation_rate * static_cast<double>(valid.size())));
    if (n_bad > 0 && !valid.empty()) {
        auto rng = make_rng(config.seed, Stream::Violations, 0);
        const std::size_t total = valid.size() + n_bad;
        std::vector<std::size_t> slots(total);
        std::iota(slots.begin(), slots.end(), 0);
        for (std::size_t i = 0; i < n_bad; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, total - 1);
            std::swap(slots[i], slots[pick(rng)]);
        }
        std::vector<char> is_bad(total, 0);
        for (std::size_t i = 0; i < n_bad; ++i)
            is_bad[slots[i]] = 1;

        std::uniform_int_distribution<std::size_t> base(0, valid.size() - 1);
        std::uniform_int_distribution<std::size_t> kind(0, violation_kinds().size() - 1);
        std::vector<data::Metaorder> orders;
        orders.reserve(total);
        std::size_t next_valid = 0;
        for (std::size_t i = 0; i < total; ++i) {
            if (is_bad[i]) {
                const auto& k = violation_kinds()[kind(rng)];
                orders.push_back(corrupt(valid[base(rng)], k));
                sim.truth.violations.push_back({i, k});
            } else {
                orders.push_back(valid[next_valid++]);
            }
        }
        sim.panel = data::Panel::assemble(sim.panel.all_bars(), std::move(orders), sim.panel.market_series(),
                                          sim.panel.tranche_map());
    }
    return sim;
}

} // namespace metaimpact::sim
