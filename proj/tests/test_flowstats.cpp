#include "doctest.h"
#include "fixtures.hpp"

#include "metaimpact/errors.hpp"
#include "metaimpact/flowstats.hpp"
#include "metaimpact/random.hpp"

#include <algorithm>
#include <cmath>

using namespace metaimpact;
using fixtures::bar;
using fixtures::order;

namespace {

data::Panel two_stock_panel()
{
    std::vector<data::DailyBar> bars;
    for (int d = 0; d < 3; ++d) {
        bars.push_back(bar("AAA", d, 10, 11, 9, 10, 1e6));
        bars.push_back(bar("BBB", d, 20, 21, 19, 20, 1e6));
    }
    std::vector<data::Metaorder> orders{
        order("AAA", 0, 1, 40000, 0, 200000),
        order("AAA", 0, -1, 10000, 200000, 400000),
        order("BBB", 0, 1, 40000, 0, 200000),
        order("BBB", 1, -1, 40000, 0, 200000),
    };
    return data::Panel::assemble(bars, orders, {{fixtures::day(0), 0.0}, {fixtures::day(1), 0.0}, {fixtures::day(2), 0.0}});
}

} // namespace

TEST_CASE("daily imbalance sums signed fractions")
{
    const auto f = flow::daily_imbalance(two_stock_panel());
    CHECK(f.net(0, 0) == doctest::Approx(0.03));
    CHECK(f.root(0, 0) == doctest::Approx(std::sqrt(0.03)));
    CHECK(f.gross(0, 0) == doctest::Approx(0.05));
    CHECK(f.root(1, 0) == doctest::Approx(0.2));
    CHECK(f.root(1, 1) == doctest::Approx(-0.2));
    CHECK(f.net(0, 2) == 0.0);
    CHECK(f.root(0, 2) == 0.0);
    CHECK(f.records().size() == 3);
}

TEST_CASE("cross-sectional adjustment")
{
    auto f = flow::daily_imbalance(two_stock_panel());
    const std::size_t S = f.n_stocks();
    const std::size_t T = f.n_days();

    flow::cross_sectional_adjust(f, data::StockDayGrid<double>(S, T, 0.0));
    CHECK(f.adjusted.values() == f.root.values());

    // Day 1: +0 for AAA, -0.2 for BBB; mean -0.1
    flow::cross_sectional_adjust(f, data::StockDayGrid<double>(S, T, 1.0));
    CHECK(f.adjusted(0, 1) == doctest::Approx(0.1));
    CHECK(f.adjusted(1, 1) == doctest::Approx(-0.1));

    // Opposite values: mean zero, unchanged
    f.root(0, 2) = 0.3;
    f.root(1, 2) = -0.3;
    flow::cross_sectional_adjust(f, data::StockDayGrid<double>(S, T, 1.0));
    CHECK(f.adjusted(0, 2) == doctest::Approx(0.3));
    CHECK(f.adjusted(1, 2) == doctest::Approx(-0.3));

    CHECK_THROWS_AS(flow::cross_sectional_adjust(f, data::StockDayGrid<double>(1, T, 1.0)), ConfigError);
}

TEST_CASE("single-stock adjustment with unit beta vanishes")
{
    auto c = fixtures::quiet_config(1, 40, 2);
    const auto sim = sim::simulate(c);
    auto f = flow::daily_imbalance(sim.panel);
    flow::cross_sectional_adjust(f, data::StockDayGrid<double>(1, f.n_days(), 1.0));
    for (double v : f.adjusted.values())
        CHECK(v == 0.0);
}

TEST_CASE("sample autocorrelation is unchanged by time reversal")
{
    Rng rng(4);
    std::normal_distribution<double> n01;
    std::vector<double> x(300);
    double prev = 0.0;
    for (auto& v : x) {
        v = 0.6 * prev + n01(rng);
        prev = v;
    }
    const auto fwd = flow::sample_autocorrelation(x, 10);
    std::reverse(x.begin(), x.end());
    const auto bwd = flow::sample_autocorrelation(x, 10);
    for (std::size_t k = 0; k < fwd.size(); ++k)
        CHECK(fwd[k] == doctest::Approx(bwd[k]).epsilon(1e-12));
    CHECK(flow::sample_autocorrelation(std::vector<double>(10, 1.0), 3).empty());
}

TEST_CASE("white flow autocorrelation is within noise")
{
    auto c = fixtures::quiet_config(20, 500, 6);
    c.flow.a = 0.0;
    const auto sim = sim::simulate(c);
    const auto s = flow::flow_autocorrelation(flow::daily_imbalance(sim.panel), 20);
    const double n = static_cast<double>(s.n_stocks * 500);
    for (double v : s.mean)
        CHECK(std::abs(v) < 3.0 / std::sqrt(n));
}

TEST_CASE("flow autocorrelation averages stocks and checks the lag range")
{
    const auto f = flow::daily_imbalance(two_stock_panel());
    const auto s = flow::flow_autocorrelation(f, 1);
    CHECK(s.n_stocks == 2);
    const auto a = flow::sample_autocorrelation(std::vector<double>{f.root(0, 0), f.root(0, 1), f.root(0, 2)}, 1);
    const auto b = flow::sample_autocorrelation(std::vector<double>{f.root(1, 0), f.root(1, 1), f.root(1, 2)}, 1);
    CHECK(s.mean[0] == doctest::Approx((a[0] + b[0]) / 2));
    CHECK_THROWS_AS(flow::flow_autocorrelation(f, 3), ConfigError);
}

TEST_CASE("autocorrelation fit is exact on noiseless samples")
{
    std::vector<double> g;
    for (int tau = 1; tau <= 50; ++tau)
        g.push_back(0.24 * std::pow(tau, -0.56) * std::exp(-0.038 * tau));

    flow::AutocorrFitOptions fixed;
    fixed.gamma = 0.56;
    const auto f = flow::fit_autocorr(g, {}, fixed);
    CHECK(std::abs(f.a - 0.24) < 1e-8);
    CHECK(std::abs(f.b - 0.038) < 1e-8);
    CHECK(f.gamma == 0.56);

    flow::AutocorrFitOptions free;
    free.free_gamma = true;
    free.gamma = 0.3;
    const auto h = flow::fit_autocorr(g, {}, free);
    CHECK(std::abs(h.a - 0.24) < 1e-8);
    CHECK(std::abs(h.b - 0.038) < 1e-8);
    CHECK(std::abs(h.gamma - 0.56) < 1e-8);
}

TEST_CASE("autocorrelation fit with gamma fixed at zero is exponential")
{
    std::vector<double> g;
    for (int tau = 1; tau <= 40; ++tau)
        g.push_back(0.3 * std::exp(-0.1 * tau));
    flow::AutocorrFitOptions opt;
    opt.gamma = 0.0;
    const auto f = flow::fit_autocorr(g, {}, opt);
    CHECK(std::abs(f.a - 0.3) < 1e-8);
    CHECK(std::abs(f.b - 0.1) < 1e-8);
}

TEST_CASE("autocorrelation fit errors")
{
    CHECK_THROWS_AS(flow::fit_autocorr(std::vector<double>(10, -0.1), {}, {}), DataError);
    CHECK_THROWS_AS(flow::fit_autocorr(std::vector<double>(3, 0.1), {}, {}), ConfigError);
}

TEST_CASE("truncated power-law gradient")
{
    const auto grad = flow::truncated_power_law_gradient(3.0, 0.24, 0.56, 0.038);
    const double h = 1e-7;
    CHECK(grad(0) == doctest::Approx((flow::truncated_power_law(3, 0.24 + h, 0.56, 0.038) -
                                      flow::truncated_power_law(3, 0.24 - h, 0.56, 0.038)) / (2 * h)).epsilon(1e-6));
    CHECK(grad(1) == doctest::Approx((flow::truncated_power_law(3, 0.24, 0.56, 0.038 + h) -
                                      flow::truncated_power_law(3, 0.24, 0.56, 0.038 - h)) / (2 * h)).epsilon(1e-6));
    CHECK(grad(2) == doctest::Approx((flow::truncated_power_law(3, 0.24, 0.56 + h, 0.038) -
                                      flow::truncated_power_law(3, 0.24, 0.56 - h, 0.038)) / (2 * h)).epsilon(1e-6));
}

TEST_CASE("expected sample autocorrelation of white noise")
{
    const std::size_t T = 40;
    const auto m = flow::expected_sample_autocorrelation(std::vector<double>(T - 1, 0.0), 10);
    REQUIRE(m.size() == 10);
    for (std::size_t k = 1; k <= 10; ++k)
        CHECK(m[k - 1] == doctest::Approx(-double(T - k) / double(T * (T - 1))).epsilon(1e-12));
    CHECK_THROWS_AS(flow::expected_sample_autocorrelation(std::vector<double>(9, 0.0), 10), ConfigError);
}

TEST_CASE("expected sample autocorrelation matches AR(1) simulation")
{
    const std::size_t T = 200, lags = 10, reps = 4000;
    const double phi = 0.6;
    std::vector<double> g(T - 1);
    for (std::size_t k = 0; k < g.size(); ++k)
        g[k] = std::pow(phi, double(k + 1));
    const auto expected = flow::expected_sample_autocorrelation(g, lags);

    auto rng = make_rng(11, Stream::LatentFlow, 0);
    std::normal_distribution<double> eps(0.0, 1.0);
    std::vector<double> mean(lags, 0.0), x(T);
    for (std::size_t r = 0; r < reps; ++r) {
        x[0] = eps(rng) / std::sqrt(1 - phi * phi);
        for (std::size_t t = 1; t < T; ++t)
            x[t] = phi * x[t - 1] + eps(rng);
        const auto s = flow::sample_autocorrelation(x, lags);
        for (std::size_t k = 0; k < lags; ++k)
            mean[k] += s[k] / reps;
    }
    for (std::size_t k = 0; k < lags; ++k) {
        // at least half the bias is captured; the rest is the ratio nonlinearity
        CHECK(std::abs(mean[k] - expected[k]) < 0.5 * std::abs(mean[k] - g[k]));
        CHECK(expected[k] < g[k]);
    }
}

TEST_CASE("finite-sample autocorrelation fit removes the mean-subtraction bias")
{
    const std::size_t T = 300, lags = 50;
    std::vector<double> g(T - 1);
    for (std::size_t k = 0; k < g.size(); ++k)
        g[k] = flow::truncated_power_law(double(k + 1), 0.24, 0.56, 0.038);
    const auto m = flow::expected_sample_autocorrelation(g, lags);

    flow::AutocorrFitOptions opt;
    opt.gamma = 0.56;
    const auto raw = flow::fit_autocorr(m, {}, opt);
    CHECK(raw.b > 0.045);

    opt.finite_sample = true;
    opt.series_length = T;
    const auto f = flow::fit_autocorr(m, {}, opt);
    CHECK(std::abs(f.a - 0.24) < 1e-7);
    CHECK(std::abs(f.b - 0.038) < 1e-7);

    flow::AutocorrSeries s;
    s.mean = m;
    s.series_length = T;
    flow::AutocorrFitOptions from_series;
    from_series.gamma = 0.56;
    from_series.finite_sample = true;
    CHECK(std::abs(flow::fit_autocorr(s, from_series).b - 0.038) < 1e-7);

    opt.series_length = lags;
    CHECK_THROWS_AS(flow::fit_autocorr(m, {}, opt), ConfigError);
}

TEST_CASE("sandwich errors reduce to the fit covariance for independent lags")
{
    flow::AutocorrSeries s;
    const std::size_t lags = 30;
    s.covariance = Eigen::MatrixXd::Zero(lags, lags);
    for (std::size_t k = 0; k < lags; ++k) {
        const double tau = double(k + 1);
        s.mean.push_back(flow::truncated_power_law(tau, 0.24, 0.56, 0.038) + 0.002 * std::sin(3.0 * tau));
        s.stderr_.push_back(0.004 + 0.0001 * tau);
        s.covariance(k, k) = s.stderr_.back() * s.stderr_.back();
    }
    flow::AutocorrFitOptions opt;
    opt.gamma = 0.56;
    const auto plain = flow::fit_autocorr(s.mean, s.stderr_, opt);
    const auto sandwich = flow::fit_autocorr(s, opt);
    CHECK(plain.error_model == "fit");
    CHECK(sandwich.error_model == "cross_stock_sandwich");
    CHECK(sandwich.a == plain.a);
    CHECK(sandwich.a_err == doctest::Approx(plain.a_err).epsilon(1e-5));
    CHECK(sandwich.b_err == doctest::Approx(plain.b_err).epsilon(1e-5));
}

TEST_CASE("flow autocorrelation lag covariance has the standard errors on its diagonal")
{
    auto c = fixtures::quiet_config(10, 200, 4);
    const auto s = flow::flow_autocorrelation(flow::daily_imbalance(sim::simulate(c).panel), 8);
    REQUIRE(s.covariance.rows() == 8);
    for (Eigen::Index k = 0; k < 8; ++k)
        CHECK(std::sqrt(s.covariance(k, k)) == doctest::Approx(s.stderr_[static_cast<std::size_t>(k)]).epsilon(1e-12));
    CHECK((s.covariance - s.covariance.transpose()).norm() < 1e-15);
}
