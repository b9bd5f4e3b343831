#pragma once

#include "metaimpact/datamodel.hpp"
#include "metaimpact/simulator.hpp"

#include <string>
#include <vector>

namespace fixtures {

using namespace metaimpact;

inline data::Day day(int offset) { return data::parse_day("2020-01-06") + std::chrono::days(offset); }

inline data::DailyBar bar(const std::string& stock, int d, double open, double high, double low, double close,
                          double volume = 1e6)
{
    data::DailyBar b;
    b.stock_id = stock;
    b.day = day(d);
    b.open = open;
    b.high = high;
    b.low = low;
    b.close = close;
    b.total_volume = volume;
    return b;
}

inline data::Metaorder order(const std::string& stock, int d, int sign, double volume, double v0, double v1,
                             double t0 = 36000.0, double t1 = 39600.0)
{
    data::Metaorder o;
    o.stock_id = stock;
    o.day = day(d);
    o.sign = sign;
    o.volume = volume;
    o.vol_at_start = v0;
    o.vol_at_end = v1;
    o.start = data::TimeOfDay::from_seconds(t0);
    o.end = data::TimeOfDay::from_seconds(t1);
    return o;
}

/// Small panel without any noise source: flat market, no daily noise,
/// no intraday bridge.
inline sim::SimConfig quiet_config(std::size_t stocks, std::size_t days, std::uint64_t seed = 7)
{
    sim::SimConfig c;
    c.n_stocks = stocks;
    c.n_days = days;
    c.seed = seed;
    c.noise.xi_scale = 0.0;
    c.noise.market_vol = 0.0;
    c.noise.intraday = 0.0;
    c.kernel.horizon = 10;
    return c;
}

} // namespace fixtures
