#include "metaimpact/datamodel.hpp"

#include "metaimpact/errors.hpp"

#include <cmath>

namespace metaimpact::data {

const std::vector<std::string>& order_filter_names()
{
    static const std::vector<std::string> names = {
        "missing_bar",      "invalid_bar",       "zero_volatility",    "invalid_sign",
        "nonpositive_volume", "inverted_interval", "zero_duration",      "participation_cap",
        "daily_fraction_cap", "min_duration",      "interval_exceeds_day", "invalid_price",
    };
    return names;
}

namespace {

bool bad_bar(const DailyBar* bar) { return bar && !bar->validate().empty(); }

bool flat_bar(const DailyBar* bar) { return bar && bar->validate().empty() && !(bar->volatility() > 0.0); }

// First filter the order fails, or nullptr.
const char* first_failure(const Metaorder& o, const DailyBar* bar, const CleaningConfig& cfg)
{
    if (!bar)
        return "missing_bar";
    if (bad_bar(bar))
        return "invalid_bar";
    if (flat_bar(bar))
        return "zero_volatility";
    if (o.sign != 1 && o.sign != -1)
        return "invalid_sign";
    if (!std::isfinite(o.volume) || o.volume <= 0.0)
        return "nonpositive_volume";
    if (o.end < o.start || !(o.vol_at_end >= o.vol_at_start))
        return "inverted_interval";
    if (o.end == o.start || !(o.interval_volume() > 0.0))
        return "zero_duration";
    const MetaorderStats st{o.volume / o.interval_volume(), o.interval_volume() / bar->total_volume,
                            o.volume / bar->total_volume};
    if (st.participation > cfg.max_participation || st.participation > 1.0)
        return "participation_cap";
    if (st.daily_fraction > cfg.max_daily_fraction)
        return "daily_fraction_cap";
    if (st.duration < cfg.min_duration)
        return "min_duration";
    if (o.vol_at_start < 0.0 || o.vol_at_end > bar->total_volume * (1.0 + 1e-12))
        return "interval_exceeds_day";
    if (!bar->curve.empty() && (o.start < bar->curve.open_time() || o.end > bar->curve.close_time()))
        return "interval_exceeds_day";
    const bool p0 = !std::isnan(o.price_at_start);
    const bool p1 = !std::isnan(o.price_at_end);
    if (p0 != p1)
        return "invalid_price";
    if (p0 && (!std::isfinite(o.price_at_start) || o.price_at_start <= 0.0 || !std::isfinite(o.price_at_end) ||
               o.price_at_end <= 0.0))
        return "invalid_price";
    return nullptr;
}

} // namespace

CleanResult clean_panel(const Panel& raw, const CleaningConfig& config)
{
    if (!(config.max_participation > 0.0) || !(config.max_daily_fraction > 0.0) || !(config.min_duration >= 0.0))
        throw ConfigError("cleaning caps must be positive");
    if (raw.orders().empty())
        throw DataError("panel has no metaorders");

    CleanResult out;
    for (const auto& name : order_filter_names())
        out.report[name] = 0;
    out.report["dropped_bars_invalid"] = 0;
    out.report["dropped_bars_zero_volatility"] = 0;

    std::vector<DailyBar> bars;
    for (const auto& b : raw.all_bars()) {
        if (!b.validate().empty())
            ++out.report["dropped_bars_invalid"];
        else if (!(b.volatility() > 0.0))
            ++out.report["dropped_bars_zero_volatility"];
        else
            bars.push_back(b);
    }

    std::vector<Metaorder> orders;
    const auto& raw_orders = raw.orders();
    for (std::size_t i = 0; i < raw_orders.size(); ++i) {
        const auto& o = raw_orders[i];
        if (const char* why = first_failure(o, raw.bar_for(o), config)) {
            ++out.report[why];
            out.rejected.emplace_back(i, why);
        } else {
            orders.push_back(o);
        }
    }
    if (orders.empty())
        throw ConfigError("cleaning rejected every metaorder");
    if (bars.empty())
        throw ConfigError("cleaning rejected every bar");

    out.panel = Panel::assemble(std::move(bars), std::move(orders), raw.market_series(), raw.tranche_map());
    return out;
}

} // namespace metaimpact::data
