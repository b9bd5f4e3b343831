#pragma once

#include "metaimpact/config.hpp"
#include "metaimpact/datamodel.hpp"

#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace metaimpact {

enum class Command { Simulate, Estimate, Decay, Deconvolve, Report };

Command parse_command(std::string_view text);
std::string to_string(Command command);
/// File name the command's JSON report is written under.
std::string report_file_name(Command command);

struct RunOutput {
    std::map<std::string, std::string> files; // name -> contents
    Json report;
    /// Fits that did not converge; the outputs are still written.
    std::vector<std::string> convergence_failures;

    bool converged() const { return convergence_failures.empty(); }
};

/// Cleaning plus optional tranche selection.
data::CleanResult prepare_panel(const data::Panel& raw, const RunConfig& config);

RunOutput run_simulate(const RunConfig& config);
RunOutput run_estimate(const RunConfig& config, const data::Panel& raw);
RunOutput run_decay(const RunConfig& config, const data::Panel& raw);
RunOutput run_deconvolve(const RunConfig& config, const data::Panel& raw);
/// Collects the reports found in `config.input` into one summary.
RunOutput run_report(const RunConfig& config);

/// Dispatches on the command, loading the raw panel from `config.input`.
RunOutput run(Command command, const RunConfig& config);

} // namespace metaimpact
