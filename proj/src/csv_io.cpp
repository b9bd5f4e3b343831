#include "metaimpact/csv_io.hpp"

#include "metaimpact/errors.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_map>

namespace metaimpact::io {

std::string format_number(double value)
{
    if (std::isnan(value))
        return {};
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
    if (ec != std::errc{})
        throw IoError("cannot format number");
    return std::string(buf, ptr);
}

double parse_number(std::string_view text)
{
    while (!text.empty() && text.front() == ' ')
        text.remove_prefix(1);
    while (!text.empty() && text.back() == ' ')
        text.remove_suffix(1);
    if (!text.empty() && text.front() == '+')
        text.remove_prefix(1);
    double value = 0.0;
    const auto* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (text.empty() || ec != std::errc{} || ptr != end)
        throw DataError("malformed number: '" + std::string(text) + "'");
    return value;
}

std::vector<std::string> split_csv_line(std::string_view line)
{
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    if (quoted)
        throw DataError("unterminated quote in CSV line");
    fields.push_back(std::move(cur));
    return fields;
}

namespace {

class Table {
public:
    Table(std::istream& in, std::string name, const std::vector<std::string>& required)
        : in_(in), name_(std::move(name))
    {
        std::string header;
        if (!std::getline(in_, header))
            throw DataError(name_ + ": missing header");
        auto cols = split_csv_line(header);
        for (std::size_t i = 0; i < cols.size(); ++i)
            index_[cols[i]] = i;
        for (const auto& r : required)
            if (!index_.count(r))
                throw DataError(name_ + ": missing column '" + r + "'");
        width_ = cols.size();
    }

    bool next()
    {
        std::string line;
        while (std::getline(in_, line)) {
            ++line_no_;
            if (line.find_first_not_of(" \r\t") == std::string::npos)
                continue;
            row_ = split_csv_line(line);
            if (row_.size() != width_)
                fail("expected " + std::to_string(width_) + " fields, got " + std::to_string(row_.size()));
            return true;
        }
        return false;
    }

    bool has(const std::string& col) const { return index_.count(col) != 0; }
    const std::string& text(const std::string& col) const { return row_[index_.at(col)]; }

    double number(const std::string& col) const
    {
        try {
            return parse_number(text(col));
        } catch (const DataError& e) {
            fail(col + ": " + e.what());
        }
    }

    double optional_number(const std::string& col) const
    {
        if (!has(col) || text(col).empty())
            return data::kNaN;
        return number(col);
    }

    template <typename F>
    auto wrap(const std::string& col, F f) const -> decltype(f(std::string_view{}))
    {
        try {
            return f(text(col));
        } catch (const DataError& e) {
            fail(col + ": " + e.what());
        }
    }

    [[noreturn]] void fail(const std::string& msg) const
    {
        throw DataError(name_ + " line " + std::to_string(line_no_ + 1) + ": " + msg);
    }

private:
    std::istream& in_;
    std::string name_;
    std::unordered_map<std::string, std::size_t> index_;
    std::size_t width_ = 0;
    std::vector<std::string> row_;
    std::size_t line_no_ = 0;
};

data::VolumeCurve parse_checkpoints(std::string_view text)
{
    std::vector<std::pair<data::TimeOfDay, double>> pts;
    while (!text.empty()) {
        const auto semi = text.find(';');
        const auto item = text.substr(0, semi);
        if (!item.empty()) {
            const auto colon = item.rfind(':');
            if (colon == std::string_view::npos)
                throw DataError("malformed checkpoint '" + std::string(item) + "'");
            pts.emplace_back(data::TimeOfDay::parse(item.substr(0, colon)), parse_number(item.substr(colon + 1)));
        }
        if (semi == std::string_view::npos)
            break;
        text.remove_prefix(semi + 1);
    }
    return data::VolumeCurve(std::move(pts));
}

} // namespace

std::vector<data::Metaorder> read_metaorders(std::istream& in)
{
    Table t(in, kMetaordersFile,
            {"stock_id", "day", "sign", "volume", "start_time", "end_time", "vol_at_start", "vol_at_end"});
    std::vector<data::Metaorder> out;
    while (t.next()) {
        data::Metaorder m;
        m.stock_id = t.text("stock_id");
        m.day = t.wrap("day", data::parse_day);
        const double sign = t.number("sign");
        if (sign != std::trunc(sign) || std::abs(sign) > 1e6)
            t.fail("sign must be an integer");
        m.sign = static_cast<int>(sign);
        m.volume = t.number("volume");
        m.start = t.wrap("start_time", data::TimeOfDay::parse);
        m.end = t.wrap("end_time", data::TimeOfDay::parse);
        m.vol_at_start = t.number("vol_at_start");
        m.vol_at_end = t.number("vol_at_end");
        m.price_at_start = t.optional_number("price_at_start");
        m.price_at_end = t.optional_number("price_at_end");
        out.push_back(std::move(m));
    }
    return out;
}

std::vector<data::DailyBar> read_bars(std::istream& in)
{
    Table t(in, kBarsFile, {"stock_id", "day", "open", "high", "low", "close", "total_volume"});
    std::vector<data::DailyBar> out;
    while (t.next()) {
        data::DailyBar b;
        b.stock_id = t.text("stock_id");
        b.day = t.wrap("day", data::parse_day);
        b.open = t.number("open");
        b.high = t.number("high");
        b.low = t.number("low");
        b.close = t.number("close");
        b.total_volume = t.number("total_volume");
        if (t.has("checkpoints") && !t.text("checkpoints").empty())
            b.curve = t.wrap("checkpoints", parse_checkpoints);
        out.push_back(std::move(b));
    }
    return out;
}

std::vector<std::pair<data::Day, double>> read_market(std::istream& in)
{
    Table t(in, kMarketFile, {"day", "index_return"});
    std::vector<std::pair<data::Day, double>> out;
    while (t.next())
        out.emplace_back(t.wrap("day", data::parse_day), t.number("index_return"));
    return out;
}

std::map<std::string, std::string> read_tranches(std::istream& in)
{
    Table t(in, kTranchesFile, {"stock_id", "tranche"});
    std::map<std::string, std::string> out;
    while (t.next())
        if (!out.emplace(t.text("stock_id"), t.text("tranche")).second)
            t.fail("duplicate stock '" + t.text("stock_id") + "'");
    return out;
}

void write_metaorders(std::ostream& out, const std::vector<data::Metaorder>& orders)
{
    bool prices = false;
    for (const auto& o : orders)
        prices = prices || !std::isnan(o.price_at_start) || !std::isnan(o.price_at_end);
    out << "stock_id,day,sign,volume,start_time,end_time,vol_at_start,vol_at_end";
    if (prices)
        out << ",price_at_start,price_at_end";
    out << '\n';
    for (const auto& o : orders) {
        out << o.stock_id << ',' << data::format_day(o.day) << ',' << o.sign << ',' << format_number(o.volume) << ','
            << o.start.format() << ',' << o.end.format() << ',' << format_number(o.vol_at_start) << ','
            << format_number(o.vol_at_end);
        if (prices)
            out << ',' << format_number(o.price_at_start) << ',' << format_number(o.price_at_end);
        out << '\n';
    }
}

void write_bars(std::ostream& out, const std::vector<data::DailyBar>& bars)
{
    bool curves = false;
    for (const auto& b : bars)
        curves = curves || !b.curve.empty();
    out << "stock_id,day,open,high,low,close,total_volume";
    if (curves)
        out << ",checkpoints";
    out << '\n';
    for (const auto& b : bars) {
        out << b.stock_id << ',' << data::format_day(b.day) << ',' << format_number(b.open) << ','
            << format_number(b.high) << ',' << format_number(b.low) << ',' << format_number(b.close) << ','
            << format_number(b.total_volume);
        if (curves) {
            out << ",\"";
            bool first = true;
            for (const auto& [t, v] : b.curve.checkpoints()) {
                if (!first)
                    out << ';';
                first = false;
                out << t.format() << ':' << format_number(v);
            }
            out << '"';
        }
        out << '\n';
    }
}

void write_market(std::ostream& out, const std::vector<std::pair<data::Day, double>>& market)
{
    out << "day,index_return\n";
    for (const auto& [d, r] : market)
        out << data::format_day(d) << ',' << format_number(r) << '\n';
}

void write_tranches(std::ostream& out, const std::map<std::string, std::string>& tranches)
{
    out << "stock_id,tranche\n";
    for (const auto& [s, t] : tranches)
        out << s << ',' << t << '\n';
}

namespace {

std::ifstream open_input(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open " + path.string());
    return in;
}

} // namespace

data::Panel load_panel(const std::filesystem::path& dir)
{
    auto orders_in = open_input(dir / kMetaordersFile);
    auto orders = read_metaorders(orders_in);
    auto bars_in = open_input(dir / kBarsFile);
    auto bars = read_bars(bars_in);
    auto market_in = open_input(dir / kMarketFile);
    auto market = read_market(market_in);
    std::map<std::string, std::string> tranches;
    if (std::filesystem::exists(dir / kTranchesFile)) {
        auto tranches_in = open_input(dir / kTranchesFile);
        tranches = read_tranches(tranches_in);
    }
    return data::Panel::assemble(std::move(bars), std::move(orders), std::move(market), std::move(tranches));
}

std::map<std::string, std::string> render_panel(const data::Panel& panel)
{
    std::map<std::string, std::string> files;
    std::ostringstream o, b, m;
    write_metaorders(o, panel.orders());
    write_bars(b, panel.all_bars());
    write_market(m, panel.market_series());
    files[kMetaordersFile] = o.str();
    files[kBarsFile] = b.str();
    files[kMarketFile] = m.str();
    if (panel.has_tranches()) {
        std::ostringstream t;
        write_tranches(t, panel.tranche_map());
        files[kTranchesFile] = t.str();
    }
    return files;
}

void save_panel(const data::Panel& panel, const std::filesystem::path& dir)
{
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec)
        throw IoError("cannot create " + dir.string() + ": " + ec.message());
    for (const auto& [name, contents] : render_panel(panel))
        write_text_file(dir / name, contents);
}

void write_text_file(const std::filesystem::path& path, std::string_view contents)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw IoError("cannot write " + path.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out)
        throw IoError("write failed: " + path.string());
}

std::string read_text_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace metaimpact::io
