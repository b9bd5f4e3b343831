#include "metaimpact/datamodel.hpp"

#include "metaimpact/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <set>

namespace metaimpact::data {

namespace {

int parse_int(std::string_view text, std::string_view what)
{
    int value = 0;
    const auto* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc{} || ptr != end || text.empty())
        throw DataError("malformed " + std::string(what) + ": '" + std::string(text) + "'");
    return value;
}

bool same_number(double a, double b)
{
    return (std::isnan(a) && std::isnan(b)) || a == b;
}

} // namespace

Day parse_day(std::string_view text)
{
    if (text.size() != 10 || text[4] != '-' || text[7] != '-')
        throw DataError("malformed date (want YYYY-MM-DD): '" + std::string(text) + "'");
    const int y = parse_int(text.substr(0, 4), "year");
    const int m = parse_int(text.substr(5, 2), "month");
    const int d = parse_int(text.substr(8, 2), "day");
    const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(m)},
                                          std::chrono::day{static_cast<unsigned>(d)}};
    if (!ymd.ok())
        throw DataError("invalid date: '" + std::string(text) + "'");
    return Day{ymd};
}

std::string format_day(Day day)
{
    const std::chrono::year_month_day ymd{day};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
    return buf;
}

TimeOfDay TimeOfDay::from_seconds(double seconds)
{
    if (!std::isfinite(seconds))
        throw DataError("non-finite time of day");
    return TimeOfDay{static_cast<std::int64_t>(std::llround(seconds * 1e6))};
}

TimeOfDay TimeOfDay::parse(std::string_view text)
{
    if (text.size() < 8 || text[2] != ':' || text[5] != ':')
        throw DataError("malformed time (want HH:MM:SS[.ffffff]): '" + std::string(text) + "'");
    const int h = parse_int(text.substr(0, 2), "hour");
    const int m = parse_int(text.substr(3, 2), "minute");
    const int s = parse_int(text.substr(6, 2), "second");
    if (h > 23 || m > 59 || s > 59)
        throw DataError("time out of range: '" + std::string(text) + "'");
    std::int64_t micros = (static_cast<std::int64_t>(h) * 3600 + m * 60 + s) * 1'000'000;
    if (text.size() > 8) {
        if (text[8] != '.' || text.size() == 9 || text.size() > 15)
            throw DataError("malformed fractional seconds: '" + std::string(text) + "'");
        std::string frac(text.substr(9));
        frac.resize(6, '0');
        micros += parse_int(frac, "fractional seconds");
    }
    return TimeOfDay{micros};
}

std::string TimeOfDay::format() const
{
    const std::int64_t total_s = micros / 1'000'000;
    const std::int64_t frac = micros % 1'000'000;
    char buf[32];
    if (frac == 0)
        std::snprintf(buf, sizeof buf, "%02lld:%02lld:%02lld", static_cast<long long>(total_s / 3600),
                      static_cast<long long>(total_s / 60 % 60), static_cast<long long>(total_s % 60));
    else
        std::snprintf(buf, sizeof buf, "%02lld:%02lld:%02lld.%06lld", static_cast<long long>(total_s / 3600),
                      static_cast<long long>(total_s / 60 % 60), static_cast<long long>(total_s % 60),
                      static_cast<long long>(frac));
    return buf;
}

bool Metaorder::has_prices() const noexcept
{
    return !std::isnan(price_at_start) && !std::isnan(price_at_end);
}

bool Metaorder::operator==(const Metaorder& o) const
{
    return stock_id == o.stock_id && day == o.day && sign == o.sign && volume == o.volume && start == o.start &&
           end == o.end && vol_at_start == o.vol_at_start && vol_at_end == o.vol_at_end &&
           same_number(price_at_start, o.price_at_start) && same_number(price_at_end, o.price_at_end);
}

VolumeCurve::VolumeCurve(std::vector<std::pair<TimeOfDay, double>> checkpoints) : points_(std::move(checkpoints))
{
    for (std::size_t i = 0; i < points_.size(); ++i) {
        if (!std::isfinite(points_[i].second) || points_[i].second < 0.0)
            throw DataError("volume curve: negative or non-finite cumulative volume");
        if (i > 0 && (points_[i].first <= points_[i - 1].first || points_[i].second < points_[i - 1].second))
            throw DataError("volume curve: checkpoints must be time-increasing and volume non-decreasing");
    }
}

double VolumeCurve::volume_at(TimeOfDay t) const
{
    if (points_.empty())
        throw DataError("volume curve is empty");
    if (t <= points_.front().first)
        return points_.front().second;
    if (t >= points_.back().first)
        return points_.back().second;
    auto it = std::upper_bound(points_.begin(), points_.end(), t,
                               [](TimeOfDay x, const auto& p) { return x < p.first; });
    const auto& [t1, v1] = *it;
    const auto& [t0, v0] = *(it - 1);
    const double w = static_cast<double>(t.micros - t0.micros) / static_cast<double>(t1.micros - t0.micros);
    return v0 + w * (v1 - v0);
}

TimeOfDay VolumeCurve::time_at(double volume) const
{
    if (points_.empty())
        throw DataError("volume curve is empty");
    if (volume <= points_.front().second)
        return points_.front().first;
    if (volume >= points_.back().second)
        return points_.back().first;
    auto it = std::lower_bound(points_.begin(), points_.end(), volume,
                               [](const auto& p, double v) { return p.second < v; });
    const auto& [t1, v1] = *it;
    const auto& [t0, v0] = *(it - 1);
    const double w = (volume - v0) / (v1 - v0);
    const double micros = static_cast<double>(t0.micros) + w * static_cast<double>(t1.micros - t0.micros);
    return TimeOfDay{static_cast<std::int64_t>(std::llround(micros))};
}

TimeOfDay VolumeCurve::open_time() const
{
    if (points_.empty())
        throw DataError("volume curve is empty");
    return points_.front().first;
}

TimeOfDay VolumeCurve::close_time() const
{
    if (points_.empty())
        throw DataError("volume curve is empty");
    return points_.back().first;
}

double VolumeCurve::total() const
{
    return points_.empty() ? 0.0 : points_.back().second;
}

std::string DailyBar::validate() const
{
    for (double p : {open, high, low, close})
        if (!std::isfinite(p) || p <= 0.0)
            return "non-positive or non-finite price";
    if (high < std::max(open, close))
        return "high below open/close";
    if (low > std::min(open, close))
        return "low above open/close";
    if (!std::isfinite(total_volume) || total_volume <= 0.0)
        return "non-positive total volume";
    if (!curve.empty()) {
        const double tail = curve.total();
        if (std::abs(tail - total_volume) > 1e-9 * total_volume)
            return "volume curve does not end at total volume";
    }
    return {};
}

Panel Panel::assemble(std::vector<DailyBar> bars, std::vector<Metaorder> orders,
                      std::vector<std::pair<Day, double>> market, std::map<std::string, std::string> tranches)
{
    Panel p;
    std::set<std::string> stock_set;
    std::set<Day> day_set;
    for (const auto& b : bars) {
        stock_set.insert(b.stock_id);
        day_set.insert(b.day);
    }
    for (const auto& [d, r] : market)
        day_set.insert(d);
    p.stocks_.assign(stock_set.begin(), stock_set.end());
    p.calendar_.assign(day_set.begin(), day_set.end());

    const std::size_t n_days = p.calendar_.size();
    p.bars_.assign(p.stocks_.size() * n_days, std::nullopt);
    for (auto& b : bars) {
        const std::size_t s = *p.stock_index(b.stock_id);
        const std::size_t t = *p.day_index(b.day);
        auto& slot = p.bars_[s * n_days + t];
        if (slot)
            throw DataError("duplicate bar for " + b.stock_id + " on " + format_day(b.day));
        slot = std::move(b);
    }

    p.market_.assign(n_days, kNaN);
    std::vector<bool> seen(n_days, false);
    for (const auto& [d, r] : market) {
        const std::size_t t = *p.day_index(d);
        if (seen[t])
            throw DataError("duplicate market return on " + format_day(d));
        seen[t] = true;
        p.market_[t] = r;
    }

    p.tranches_.assign(p.stocks_.size(), std::string{});
    for (const auto& [stock, label] : tranches)
        if (auto s = p.stock_index(stock))
            p.tranches_[*s] = label;

    p.orders_ = std::move(orders);
    return p;
}

std::optional<std::size_t> Panel::stock_index(std::string_view stock) const
{
    auto it = std::lower_bound(stocks_.begin(), stocks_.end(), stock);
    if (it == stocks_.end() || *it != stock)
        return std::nullopt;
    return static_cast<std::size_t>(it - stocks_.begin());
}

std::optional<std::size_t> Panel::day_index(Day day) const
{
    auto it = std::lower_bound(calendar_.begin(), calendar_.end(), day);
    if (it == calendar_.end() || *it != day)
        return std::nullopt;
    return static_cast<std::size_t>(it - calendar_.begin());
}

std::optional<std::pair<std::size_t, std::size_t>> Panel::locate(const Metaorder& order) const
{
    auto s = stock_index(order.stock_id);
    auto t = day_index(order.day);
    if (!s || !t)
        return std::nullopt;
    return std::pair{*s, *t};
}

const DailyBar* Panel::bar(std::size_t s, std::size_t t) const
{
    const auto& slot = bars_[s * calendar_.size() + t];
    return slot ? &*slot : nullptr;
}

const DailyBar* Panel::bar_for(const Metaorder& order) const
{
    auto loc = locate(order);
    return loc ? bar(loc->first, loc->second) : nullptr;
}

bool Panel::has_tranches() const
{
    return std::any_of(tranches_.begin(), tranches_.end(), [](const auto& t) { return !t.empty(); });
}

std::vector<DailyBar> Panel::all_bars() const
{
    std::vector<DailyBar> out;
    for (const auto& slot : bars_)
        if (slot)
            out.push_back(*slot);
    return out;
}

std::vector<std::pair<Day, double>> Panel::market_series() const
{
    std::vector<std::pair<Day, double>> out;
    for (std::size_t t = 0; t < calendar_.size(); ++t)
        if (!std::isnan(market_[t]))
            out.emplace_back(calendar_[t], market_[t]);
    return out;
}

std::map<std::string, std::string> Panel::tranche_map() const
{
    std::map<std::string, std::string> out;
    for (std::size_t s = 0; s < stocks_.size(); ++s)
        if (!tranches_[s].empty())
            out.emplace(stocks_[s], tranches_[s]);
    return out;
}

Panel Panel::select_tranche(std::string_view label) const
{
    std::set<std::string> keep;
    for (std::size_t s = 0; s < stocks_.size(); ++s)
        if (tranches_[s] == label)
            keep.insert(stocks_[s]);
    if (keep.empty())
        throw ConfigError("no stock carries tranche label '" + std::string(label) + "'");
    std::vector<DailyBar> bars;
    for (const auto& slot : bars_)
        if (slot && keep.count(slot->stock_id))
            bars.push_back(*slot);
    std::vector<Metaorder> orders;
    for (const auto& o : orders_)
        if (keep.count(o.stock_id))
            orders.push_back(o);
    std::map<std::string, std::string> labels;
    for (const auto& s : keep)
        labels.emplace(s, std::string(label));
    return assemble(std::move(bars), std::move(orders), market_series(), std::move(labels));
}

double signed_sqrt(double x)
{
    if (!std::isfinite(x))
        throw DataError("signed_sqrt: non-finite input");
    return std::copysign(std::sqrt(std::abs(x)), x);
}

MetaorderStats metaorder_stats(const Metaorder& order, const DailyBar& bar)
{
    const double interval = order.interval_volume();
    if (!(bar.total_volume > 0.0))
        throw DataError("metaorder_stats: non-positive day volume");
    if (!(interval > 0.0))
        throw DegenerateExecutionError("metaorder_stats: zero interval volume for " + order.stock_id + " on " +
                                       format_day(order.day));
    if (order.volume > interval)
        throw ParticipationOverflowError("metaorder_stats: volume exceeds interval volume for " + order.stock_id +
                                         " on " + format_day(order.day));
    MetaorderStats st;
    st.participation = order.volume / interval;
    st.duration = interval / bar.total_volume;
    st.daily_fraction = order.volume / bar.total_volume;
    return st;
}

double rescaled_log_price(double price, double sigma)
{
    if (!(price > 0.0) || !std::isfinite(price))
        throw DataError("rescaled_log_price: price must be positive");
    if (!(sigma > 0.0) || !std::isfinite(sigma))
        throw DataError("rescaled_log_price: volatility must be positive");
    return std::log(price) / sigma;
}

} // namespace metaimpact::data
