#include "doctest.h"
#include "fixtures.hpp"

#include "metaimpact/errors.hpp"
#include "metaimpact/simulator.hpp"

#include <cmath>
#include <set>

using namespace metaimpact;
using fixtures::bar;
using fixtures::order;

TEST_CASE("signed_sqrt")
{
    CHECK(data::signed_sqrt(4.0) == 2.0);
    CHECK(data::signed_sqrt(0.0) == 0.0);
    CHECK(data::signed_sqrt(-9.0) == -3.0);
    CHECK_THROWS_AS(data::signed_sqrt(std::nan("")), DataError);
}

TEST_CASE("metaorder_stats ratios")
{
    const auto b = bar("AAA", 0, 10, 11, 9, 10, 100000);
    auto st = data::metaorder_stats(order("AAA", 0, 1, 1000, 20000, 30000), b);
    CHECK(st.participation == doctest::Approx(0.1).epsilon(1e-15));
    CHECK(st.duration == doctest::Approx(0.1).epsilon(1e-15));
    CHECK(st.daily_fraction == doctest::Approx(0.01).epsilon(1e-15));

    st = data::metaorder_stats(order("AAA", 0, 1, 5000, 0, 50000), b);
    CHECK(st.participation == doctest::Approx(0.1));
    CHECK(st.duration == doctest::Approx(0.5));
    CHECK(st.daily_fraction == doctest::Approx(st.participation * st.duration));

    st = data::metaorder_stats(order("AAA", 0, -1, 10000, 0, 10000), b);
    CHECK(st.participation == 1.0);

    CHECK_THROWS_AS(data::metaorder_stats(order("AAA", 0, 1, 10, 500, 500), b), DegenerateExecutionError);
    CHECK_THROWS_AS(data::metaorder_stats(order("AAA", 0, 1, 600, 0, 500), b), ParticipationOverflowError);
}

TEST_CASE("rescaled_log_price")
{
    CHECK(data::rescaled_log_price(std::exp(1.0), 1.0) == doctest::Approx(1.0));
    CHECK(data::rescaled_log_price(1.0, 0.37) == 0.0);
    CHECK(data::rescaled_log_price(std::exp(2.0), 2.0) == doctest::Approx(1.0));
    CHECK_THROWS_AS(data::rescaled_log_price(-1.0, 1.0), DataError);
    CHECK_THROWS_AS(data::rescaled_log_price(1.0, 0.0), DataError);
}

TEST_CASE("TimeOfDay parse and format")
{
    const auto t = data::TimeOfDay::parse("09:30:00.250000");
    CHECK(t.seconds() == doctest::Approx(9 * 3600 + 30 * 60 + 0.25));
    CHECK(data::TimeOfDay::parse(t.format()) == t);
}

TEST_CASE("VolumeCurve interpolation")
{
    data::VolumeCurve c({{data::TimeOfDay::from_seconds(0), 0.0}, {data::TimeOfDay::from_seconds(100), 1000.0}});
    CHECK(c.volume_at(data::TimeOfDay::from_seconds(25)) == doctest::Approx(250.0));
    CHECK(c.time_at(500.0).seconds() == doctest::Approx(50.0));
    CHECK(c.total() == 1000.0);
}

TEST_CASE("clean_panel removes zero-duration orders")
{
    std::vector<data::DailyBar> bars{bar("AAA", 0, 10, 11, 9, 10)};
    std::vector<data::Metaorder> orders{order("AAA", 0, 1, 1000, 1000, 20000),
                                        order("AAA", 0, 1, 1000, 5000, 5000, 36000, 36000)};
    const auto raw = data::Panel::assemble(bars, orders, {{fixtures::day(0), 0.0}});
    const auto out = data::clean_panel(raw);
    CHECK(out.panel.orders().size() == 1);
    CHECK(out.report.at("zero_duration") == 1);
    REQUIRE(out.rejected.size() == 1);
    CHECK(out.rejected[0].first == 1);
}

TEST_CASE("clean_panel keeps a valid panel unchanged")
{
    std::vector<data::DailyBar> bars{bar("AAA", 0, 10, 11, 9, 10), bar("BBB", 0, 20, 21, 19, 20)};
    std::vector<data::Metaorder> orders{order("AAA", 0, 1, 1000, 1000, 20000), order("BBB", 0, -1, 10, 0, 500)};
    const auto raw = data::Panel::assemble(bars, orders, {{fixtures::day(0), 0.01}});
    const auto out = data::clean_panel(raw);
    CHECK(out.panel == raw);
    for (const auto& [name, n] : out.report)
        CHECK_MESSAGE(n == 0, name);
}

TEST_CASE("clean_panel errors")
{
    std::vector<data::DailyBar> bars{bar("AAA", 0, 10, 11, 9, 10)};
    const auto empty = data::Panel::assemble(bars, {}, {});
    CHECK_THROWS_AS(data::clean_panel(empty), DataError);
    const auto bad = data::Panel::assemble(bars, {order("AAA", 0, 0, 1000, 1000, 20000)}, {});
    CHECK_THROWS_AS(data::clean_panel(bad), ConfigError);
}

TEST_CASE("clean_panel recovers injected violations exactly and is idempotent")
{
    auto c = fixtures::quiet_config(20, 60, 11);
    c.violation_rate = 0.05;
    const auto sim = sim::simulate(c);
    REQUIRE(!sim.truth.violations.empty());

    const auto out = data::clean_panel(sim.panel);
    std::set<std::pair<std::size_t, std::string>> injected;
    for (const auto& v : sim.truth.violations)
        injected.emplace(v.index, v.filter);
    const std::set<std::pair<std::size_t, std::string>> rejected(out.rejected.begin(), out.rejected.end());
    CHECK(rejected == injected);
    CHECK(out.panel.orders().size() == sim.panel.orders().size() - injected.size());

    const auto again = data::clean_panel(out.panel);
    CHECK(again.rejected.empty());
    CHECK(again.panel == out.panel);
}

TEST_CASE("simulated records pass cleaning")
{
    const auto sim = sim::simulate(fixtures::quiet_config(10, 50, 3));
    const auto out = data::clean_panel(sim.panel);
    CHECK(out.rejected.empty());
}

TEST_CASE("tranche selection")
{
    std::vector<data::DailyBar> bars{bar("AAA", 0, 10, 11, 9, 10), bar("BBB", 0, 20, 21, 19, 20)};
    std::vector<data::Metaorder> orders{order("AAA", 0, 1, 1000, 1000, 20000), order("BBB", 0, -1, 10, 0, 500)};
    const auto p = data::Panel::assemble(bars, orders, {{fixtures::day(0), 0.0}}, {{"AAA", "large"}, {"BBB", "small"}});
    const auto large = p.select_tranche("large");
    CHECK(large.n_stocks() == 1);
    CHECK(large.orders().size() == 1);
    CHECK(large.stocks()[0] == "AAA");
}
