#pragma once

#include <chrono>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace metaimpact::data {

using Day = std::chrono::sys_days;

Day parse_day(std::string_view text);
std::string format_day(Day day);

/// Intraday timestamp with microsecond resolution.
struct TimeOfDay {
    std::int64_t micros = 0;

    static TimeOfDay from_seconds(double seconds);
    static TimeOfDay parse(std::string_view text); // "HH:MM:SS[.ffffff]"
    double seconds() const noexcept { return static_cast<double>(micros) * 1e-6; }
    std::string format() const;

    auto operator<=>(const TimeOfDay&) const = default;
};

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct Metaorder {
    std::string stock_id;
    Day day{};
    int sign = 0;            // +1 buy, -1 sell
    double volume = 0.0;     // Q, shares
    TimeOfDay start;
    TimeOfDay end;
    double vol_at_start = 0.0; // V(t_s)
    double vol_at_end = 0.0;   // V(t_e)
    // Optional execution-window marks; NaN when the feed does not carry them.
    double price_at_start = kNaN;
    double price_at_end = kNaN;

    bool has_prices() const noexcept;
    double interval_volume() const noexcept { return vol_at_end - vol_at_start; }

    bool operator==(const Metaorder&) const;
};

struct MetaorderStats {
    double participation = 0.0; // eta
    double duration = 0.0;      // D, volume-time fraction of the day
    double daily_fraction = 0.0; // phi = Q / V_d
};

/// Piecewise-linear cumulative volume curve V(t) given by checkpoints.
class VolumeCurve {
public:
    VolumeCurve() = default;
    explicit VolumeCurve(std::vector<std::pair<TimeOfDay, double>> checkpoints);

    bool empty() const noexcept { return points_.empty(); }
    const std::vector<std::pair<TimeOfDay, double>>& checkpoints() const noexcept { return points_; }

    double volume_at(TimeOfDay t) const;
    /// Earliest time at which the cumulative volume reaches `volume`.
    TimeOfDay time_at(double volume) const;
    TimeOfDay open_time() const;
    TimeOfDay close_time() const;
    double total() const;

    bool operator==(const VolumeCurve&) const = default;

private:
    std::vector<std::pair<TimeOfDay, double>> points_;
};

struct DailyBar {
    std::string stock_id;
    Day day{};
    double open = 0.0;
    double high = 0.0;
    double low = 0.0;
    double close = 0.0;
    double total_volume = 0.0; // V_d
    VolumeCurve curve;

    /// sigma_d = (high - low) / open
    double volatility() const noexcept { return (high - low) / open; }
    /// Empty string when OHLC/volume invariants hold, else the reason.
    std::string validate() const;

    bool operator==(const DailyBar&) const = default;
};

/// Dense stock x day matrix, row-major by stock.
template <typename T>
class StockDayGrid {
public:
    StockDayGrid() = default;
    StockDayGrid(std::size_t n_stocks, std::size_t n_days, T fill = T{})
        : n_stocks_(n_stocks), n_days_(n_days), values_(n_stocks * n_days, fill) {}

    std::size_t n_stocks() const noexcept { return n_stocks_; }
    std::size_t n_days() const noexcept { return n_days_; }

    T& operator()(std::size_t s, std::size_t t) { return values_[s * n_days_ + t]; }
    const T& operator()(std::size_t s, std::size_t t) const { return values_[s * n_days_ + t]; }

    const T* row(std::size_t s) const { return values_.data() + s * n_days_; }
    T* row(std::size_t s) { return values_.data() + s * n_days_; }
    const std::vector<T>& values() const noexcept { return values_; }

private:
    std::size_t n_stocks_ = 0;
    std::size_t n_days_ = 0;
    std::vector<T> values_;
};

/// Stock panel over a common trading calendar. Immutable once assembled;
/// estimation code takes it by const reference and may share it across threads.
class Panel {
public:
    Panel() = default;

    /// Builds stocks and calendar from the bars and market days. Orders are
    /// kept as given, including ones whose (stock, day) has no bar.
    static Panel assemble(std::vector<DailyBar> bars, std::vector<Metaorder> orders,
                          std::vector<std::pair<Day, double>> market,
                          std::map<std::string, std::string> tranches = {});

    const std::vector<std::string>& stocks() const noexcept { return stocks_; }
    const std::vector<Day>& calendar() const noexcept { return calendar_; }
    const std::vector<Metaorder>& orders() const noexcept { return orders_; }
    const std::vector<double>& market_returns() const noexcept { return market_; }
    std::size_t n_stocks() const noexcept { return stocks_.size(); }
    std::size_t n_days() const noexcept { return calendar_.size(); }

    std::optional<std::size_t> stock_index(std::string_view stock) const;
    std::optional<std::size_t> day_index(Day day) const;
    /// (stock, day) indices of an order, if both resolve.
    std::optional<std::pair<std::size_t, std::size_t>> locate(const Metaorder& order) const;

    const DailyBar* bar(std::size_t s, std::size_t t) const;
    const DailyBar* bar_for(const Metaorder& order) const;

    /// Tranche label per stock; empty when unlabeled.
    const std::string& tranche(std::size_t s) const { return tranches_[s]; }
    bool has_tranches() const;

    std::vector<DailyBar> all_bars() const;
    std::vector<std::pair<Day, double>> market_series() const;
    std::map<std::string, std::string> tranche_map() const;

    /// Sub-panel restricted to stocks carrying `label`.
    Panel select_tranche(std::string_view label) const;

    bool operator==(const Panel&) const = default;

private:
    std::vector<std::string> stocks_;
    std::vector<Day> calendar_;
    std::vector<std::optional<DailyBar>> bars_; // n_stocks x n_days
    std::vector<Metaorder> orders_;
    std::vector<double> market_; // NaN where missing
    std::vector<std::string> tranches_;
};

/// sign(x) * sqrt(|x|); throws DataError for non-finite input.
double signed_sqrt(double x);

/// Participation rate, duration and daily fraction of one metaorder.
/// Throws DegenerateExecutionError / ParticipationOverflowError.
MetaorderStats metaorder_stats(const Metaorder& order, const DailyBar& bar);

/// log(price) / sigma_d
double rescaled_log_price(double price, double sigma);

struct CleaningConfig {
    double max_participation = 0.5;
    double max_daily_fraction = 1.0;
    double min_duration = 1e-4;
};

/// Filter name -> number of rejected records. Every filter is listed, zero or not.
using RejectionReport = std::map<std::string, std::size_t>;

struct CleanResult {
    Panel panel;
    RejectionReport report;
    /// Indices (into the raw order list) of rejected orders and the filter that fired.
    std::vector<std::pair<std::size_t, std::string>> rejected;
};

/// Names of the order filters, in the order they are applied.
const std::vector<std::string>& order_filter_names();

/// Removes orders violating the metaorder invariants or the configured caps,
/// and stock-days with zero volatility or broken bars. Throws ConfigError if
/// nothing survives.
CleanResult clean_panel(const Panel& raw, const CleaningConfig& config = {});

} // namespace metaimpact::data
