#include "doctest.h"
#include "fixtures.hpp"

#include "metaimpact/csv_io.hpp"
#include "metaimpact/errors.hpp"
#include "metaimpact/flowstats.hpp"
#include "metaimpact/impact.hpp"
#include "metaimpact/simulator.hpp"

#include <algorithm>
#include <cmath>

using namespace metaimpact;

namespace {

std::vector<double> roots(const data::StockDayGrid<double>& net, std::size_t s)
{
    std::vector<double> out(net.n_days());
    for (std::size_t t = 0; t < net.n_days(); ++t)
        out[t] = data::signed_sqrt(net(s, t));
    return out;
}

} // namespace

TEST_CASE("white sign series has no autocorrelation")
{
    sim::FlowParams p;
    p.a = 0.0;
    const std::size_t n = 20000;
    const auto net = sim::generate_sign_series(p, 1, n, 42);
    const auto c = flow::sample_autocorrelation(roots(net, 0), 20);
    REQUIRE(c.size() == 20);
    for (double v : c)
        CHECK(std::abs(v) < 3.0 / std::sqrt(double(n)));
}

TEST_CASE("correlated sign series matches g(1)")
{
    sim::FlowParams p;
    const double g1 = 0.24 * std::exp(-0.038);
    CHECK(p.target_autocorr(1.0) == doctest::Approx(g1).epsilon(1e-14));
    CHECK(g1 == doctest::Approx(0.2311).epsilon(1e-4));
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        const auto net = sim::generate_sign_series(p, 1, 100000, seed);
        const auto c = flow::sample_autocorrelation(roots(net, 0), 5);
        CHECK(std::abs(c[0] - g1) < 0.02);
    }
}

TEST_CASE("sign series is deterministic per seed")
{
    sim::FlowParams p;
    const auto a = sim::generate_sign_series(p, 3, 500, 9);
    const auto b = sim::generate_sign_series(p, 3, 500, 9);
    const auto c = sim::generate_sign_series(p, 3, 500, 10);
    CHECK(a.values() == b.values());
    CHECK(a.values() != c.values());
}

TEST_CASE("order count follows the intensity")
{
    sim::FlowParams p;
    p.intensity = 1.0;
    sim::PanelShape shape;
    shape.n_stocks = 100;
    shape.n_days = 100;
    const auto flow = sim::generate_metaorders(p, shape, 5);
    const double n = static_cast<double>(flow.orders.size());
    CHECK(std::abs(n - 1e4) < 0.05 * 1e4);
}

TEST_CASE("daily fraction tail exponent by rank-size regression")
{
    sim::FlowParams p;
    p.single_order_days = true;
    sim::PanelShape shape;
    shape.n_stocks = 50;
    shape.n_days = 400;
    const auto flow = sim::generate_metaorders(p, shape, 8);
    std::vector<double> phi;
    for (const auto& o : flow.orders)
        phi.push_back(o.phi);
    std::sort(phi.begin(), phi.end(), std::greater<>());
    // log survival against log phi over the lower decade, away from the upper cutoff
    const double n = static_cast<double>(phi.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0, m = 0;
    for (std::size_t i = 0; i < phi.size(); ++i) {
        if (phi[i] > 1e-3 || phi[i] < 1.2e-4)
            continue;
        const double x = std::log(phi[i]);
        const double y = std::log((static_cast<double>(i) + 1.0) / n);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        m += 1;
    }
    REQUIRE(m > 100);
    const double slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    CHECK(std::abs(-slope - p.daily_fraction.exponent) < 0.1);
}

TEST_CASE("noiseless isolated orders: peak impact and relaxation are exact")
{
    auto c = fixtures::quiet_config(5, 40, 21);
    c.flow.single_order_days = true;
    c.flow.placement = sim::StartPlacement::ZGrid;
    c.flow.z_grid = {0.0, 0.3, 1.0, 4.0};
    const auto sim = sim::simulate(c);
    const auto orders = impact::order_impacts(sim.panel);
    REQUIRE(orders.size() == sim.panel.orders().size());
    for (const auto& o : orders) {
        const double peak = c.propagator.prefactor * std::sqrt(o.phi);
        CHECK(std::abs(o.start_to_end - peak) <= 1e-10 * peak);
        const double e = 1.0 - c.propagator.beta;
        const double iprop = std::pow(1.0 + o.z_same_day, e) - std::pow(o.z_same_day, e);
        CHECK(std::abs(o.start_to_close / o.start_to_end - iprop) <= 1e-10);
    }
}

TEST_CASE("simulation is deterministic")
{
    auto c = fixtures::quiet_config(6, 60, 4);
    c.noise = {};
    c.violation_rate = 0.02;
    const auto a = io::render_panel(sim::simulate(c).panel);
    const auto b = io::render_panel(sim::simulate(c).panel);
    CHECK(a == b);
    c.threads = 3;
    CHECK(io::render_panel(sim::simulate(c).panel) == a);
}

TEST_CASE("explicit kernel needs enough lags")
{
    auto c = fixtures::quiet_config(2, 30);
    c.kernel.kind = sim::KernelSpec::Kind::Explicit;
    c.kernel.horizon = 5;
    c.kernel.lags = {1.0, 0.5};
    CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("propagator kernel cumulates to the modified propagator")
{
    sim::KernelSpec k;
    sim::PropagatorParams p;
    const auto g = k.coefficients(p);
    double cum = 0.0;
    for (std::size_t tau = 0; tau < g.size(); ++tau) {
        cum += g[tau];
        const double t = static_cast<double>(tau);
        const double iprop = std::pow(1.0 + t, 0.78) - std::pow(t, 0.78);
        CHECK(cum == doctest::Approx(0.5 * (0.42 + 0.58 * iprop * std::exp(-0.038 * t))).epsilon(1e-12));
    }
}
