#pragma once

#include "metaimpact/datamodel.hpp"
#include "metaimpact/deconvolution.hpp"
#include "metaimpact/impact.hpp"
#include "metaimpact/simulator.hpp"

#include "json.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace metaimpact {

using Json = nlohmann::ordered_json;

struct EstimateOptions {
    std::size_t impact_bins = 20;
    double fit_phi_lo = 1e-3;
    double fit_phi_hi = 1e-1;
    std::size_t autocorr_lags = 50;
    bool free_gamma = false;
    bool autocorr_finite_sample = true; // fit the expectation of the biased estimator
    double gamma = 0.56;
    std::size_t next_close_bins = 10;
};

struct DecayRunOptions {
    impact::DecayClock clock = impact::DecayClock::Volume;
    std::size_t n_bins = 20;
    double linear_limit = 0.1;
    std::size_t linear_bins = 2;
    std::optional<double> zeta;  // unset: 1 / (1 + C(1)) from the panel's flow
    double initial_beta = 0.22;
    std::vector<double> plateau_windows{2.0, 20.0};

    impact::DecayOptions options(impact::DecayHorizon horizon, double zeta_value) const;
};

struct DeconvRunOptions {
    deconv::DeconvConfig solver;
    std::size_t response_lags = 20;
    std::vector<deconv::KernelFitMode> fit_modes{deconv::KernelFitMode::OneParam, deconv::KernelFitMode::TwoParam,
                                                 deconv::KernelFitMode::BZeroFreeBeta};
    double b_fixed = 0.038;
    double beta_fixed = 0.22;
};

/// Everything a subcommand needs. `seed` and `threads` are the master values
/// and overwrite the per-module copies in normalize().
struct RunConfig {
    std::uint64_t seed = 1;
    std::size_t threads = 1;
    std::string input;
    std::string tranche;
    sim::SimConfig simulate;
    data::CleaningConfig cleaning;
    EstimateOptions estimate;
    DecayRunOptions decay;
    DeconvRunOptions deconvolve;

    void normalize();
    void validate() const;
};

/// Applies `j` on top of the defaults. Unknown keys and wrong types throw
/// ConfigError naming the key.
RunConfig config_from_json(const Json& j);
Json to_json(const RunConfig& config);

Json to_json(const sim::GroundTruth& truth);
Json to_json(const data::RejectionReport& report);

std::string to_string(sim::StartPlacement placement);
std::string to_string(impact::DecayClock clock);

} // namespace metaimpact
