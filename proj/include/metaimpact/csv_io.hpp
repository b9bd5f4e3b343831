#pragma once

#include "metaimpact/datamodel.hpp"

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace metaimpact::io {

/// Shortest decimal text that parses back to exactly `value`.
std::string format_number(double value);
double parse_number(std::string_view text);

/// Splits one CSV record; double quotes protect commas.
std::vector<std::string> split_csv_line(std::string_view line);

std::vector<data::Metaorder> read_metaorders(std::istream& in);
std::vector<data::DailyBar> read_bars(std::istream& in);
std::vector<std::pair<data::Day, double>> read_market(std::istream& in);
std::map<std::string, std::string> read_tranches(std::istream& in);

void write_metaorders(std::ostream& out, const std::vector<data::Metaorder>& orders);
void write_bars(std::ostream& out, const std::vector<data::DailyBar>& bars);
void write_market(std::ostream& out, const std::vector<std::pair<data::Day, double>>& market);
void write_tranches(std::ostream& out, const std::map<std::string, std::string>& tranches);

inline constexpr const char* kMetaordersFile = "metaorders.csv";
inline constexpr const char* kBarsFile = "bars.csv";
inline constexpr const char* kMarketFile = "market.csv";
inline constexpr const char* kTranchesFile = "tranches.csv";

/// Reads metaorders.csv, bars.csv, market.csv and (if present) tranches.csv.
data::Panel load_panel(const std::filesystem::path& dir);

/// In-memory rendering of the panel files: file name -> contents.
std::map<std::string, std::string> render_panel(const data::Panel& panel);

void save_panel(const data::Panel& panel, const std::filesystem::path& dir);

void write_text_file(const std::filesystem::path& path, std::string_view contents);
std::string read_text_file(const std::filesystem::path& path);

} // namespace metaimpact::io
