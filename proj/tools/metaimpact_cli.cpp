// Command-line front end. Talks to the library only through the C API.
//
// Config precedence: built-in defaults < --config file < command-line flags.

#include "metaimpact/metaimpact.h"

#include "CLI11.hpp"
#include "json.hpp"

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

namespace {

struct Options {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> threads;
    std::optional<std::string> tranche;
    std::optional<std::string> input;
    std::string out = "out";
    bool force = false;
    bool print_config = false;
};

std::string utc_timestamp()
{
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

int fail(int code, const std::string& message)
{
    std::cerr << "metaimpact: " << message << '\n';
    return code;
}

int run(const std::string& command, const Options& opt)
{
    Json config = Json::object();
    if (!opt.config_path.empty()) {
        std::ifstream in(opt.config_path);
        if (!in)
            return fail(MI_ERR_IO, "cannot read config file " + opt.config_path);
        try {
            config = Json::parse(in);
        } catch (const Json::parse_error& e) {
            return fail(MI_ERR_CONFIG, "config file " + opt.config_path + ": " + e.what());
        }
        if (!config.is_object())
            return fail(MI_ERR_CONFIG, "config file must hold a JSON object");
    }
    if (opt.seed)
        config["seed"] = *opt.seed;
    if (opt.threads)
        config["threads"] = *opt.threads;
    if (opt.tranche)
        config["tranche"] = *opt.tranche;
    if (opt.input)
        config["input"] = *opt.input;

    if (opt.print_config) {
        char* resolved = nullptr;
        const mi_status st = mi_config_resolve(config.dump().c_str(), &resolved);
        if (st != MI_OK)
            return fail(st, mi_last_error());
        std::cout << resolved << '\n';
        mi_string_free(resolved);
        return 0;
    }

    mi_result* result = nullptr;
    const mi_status st = mi_run(command.c_str(), config.dump().c_str(), &result);
    if (!result)
        return fail(st == MI_OK ? MI_ERR_INTERNAL : st, mi_last_error());
    const std::string convergence_message = st == MI_ERR_CONVERGENCE ? mi_last_error() : "";

    const fs::path out_dir(opt.out);
    std::vector<std::pair<fs::path, std::string>> writes;
    for (std::size_t i = 0; i < mi_result_file_count(result); ++i) {
        std::size_t len = 0;
        const char* data = mi_result_file_data(result, i, &len);
        writes.emplace_back(out_dir / mi_result_file_name(result, i), std::string(data, len));
    }
    Json report = Json::parse(mi_result_report(result));
    report["generated_at"] = utc_timestamp();
    writes.emplace_back(out_dir / mi_result_report_name(result), report.dump(2) + "\n");
    const bool converged = mi_result_converged(result) != 0;
    mi_result_free(result);

    if (!opt.force)
        for (const auto& [path, _] : writes)
            if (fs::exists(path)) {
                return fail(MI_ERR_IO, "refusing to overwrite " + path.string() + " (use --force)");
            }
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec)
        return fail(MI_ERR_IO, "cannot create " + out_dir.string() + ": " + ec.message());
    for (const auto& [path, contents] : writes) {
        std::ofstream f(path, std::ios::binary | std::ios::trunc);
        f.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!f)
            return fail(MI_ERR_IO, "cannot write " + path.string());
    }
    std::cout << command << ": wrote " << writes.size() << " files to " << out_dir.string() << '\n';
    if (!converged)
        return fail(MI_ERR_CONVERGENCE, "fit did not converge: " + convergence_message);
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Metaorder impact estimation and synthetic market simulation"};
    app.set_version_flag("--version", mi_version());
    app.require_subcommand(1);

    Options opt;
    const std::vector<std::pair<std::string, std::string>> commands{
        {"simulate", "Generate a synthetic panel with ground truth"},
        {"estimate", "Impact curves, same-day decay and flow autocorrelation"},
        {"decay", "Same-day and next-day impact decay curves"},
        {"deconvolve", "Reaction kernel, response function and bootstrap bands"},
        {"report", "Summarize the reports in a directory (--input)"},
    };
    std::string chosen;
    for (const auto& [name, help] : commands) {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("--config", opt.config_path, "JSON config file")->check(CLI::ExistingFile);
        sub->add_option("--seed", opt.seed, "Master seed");
        sub->add_option("--out", opt.out, "Output directory")->capture_default_str();
        sub->add_flag("--force", opt.force, "Overwrite existing outputs");
        sub->add_option("--threads", opt.threads, "Worker threads")->check(CLI::PositiveNumber);
        sub->add_option("--tranche", opt.tranche, "Restrict to stocks with this tranche label");
        sub->add_option("--input", opt.input, "Input panel directory (report: directory of reports)");
        sub->add_flag("--print-config", opt.print_config, "Print the resolved config and exit");
        sub->callback([&chosen, n = name] { chosen = n; });
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : MI_ERR_CONFIG;
    }
    try {
        return run(chosen, opt);
    } catch (const std::exception& e) {
        return fail(MI_ERR_INTERNAL, e.what());
    }
}
