#include "metaimpact/pipeline.hpp"

#include "metaimpact/csv_io.hpp"
#include "metaimpact/deconvolution.hpp"
#include "metaimpact/errors.hpp"
#include "metaimpact/flowstats.hpp"
#include "metaimpact/impact.hpp"
#include "metaimpact/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <sstream>

namespace metaimpact {

namespace {

using io::format_number;

class Csv {
public:
    explicit Csv(std::initializer_list<std::string_view> header) { line(header.begin(), header.end()); }

    void row(std::initializer_list<std::string> cells) { line(cells.begin(), cells.end()); }
    const std::string& str() const { return text_; }

private:
    template <typename It>
    void line(It first, It last)
    {
        for (It it = first; it != last; ++it) {
            if (it != first)
                text_ += ',';
            text_ += *it;
        }
        text_ += '\n';
    }

    std::string text_;
};

std::string num(double v) { return format_number(v); }
std::string num(std::size_t v) { return std::to_string(v); }

std::string points_csv(const std::vector<impact::CurvePoint>& pts)
{
    Csv csv{"bin_center", "value", "stderr", "count"};
    for (const auto& p : pts)
        csv.row({num(p.center), num(p.value), num(p.stderr_), num(p.count)});
    return csv.str();
}

std::string decay_csv(const impact::DecayCurve& curve, double beta)
{
    Csv csv{"bin_center", "value", "stderr", "count", "propagator_fit"};
    for (const auto& p : curve.points)
        csv.row({num(p.z), num(p.value), num(p.stderr_), num(p.count),
                 std::isfinite(beta) ? num(impact::propagator_decay(p.z, beta)) : std::string()});
    return csv.str();
}

Json base_report(Command command, const RunConfig& config)
{
    return Json{{"command", to_string(command)},
                {"version", METAIMPACT_VERSION},
                {"seed", config.seed},
                {"config", to_json(config)}};
}

Json panel_summary(const data::Panel& raw, const data::CleanResult& clean)
{
    return Json{{"raw_orders", raw.orders().size()},
                {"orders", clean.panel.orders().size()},
                {"stocks", clean.panel.n_stocks()},
                {"days", clean.panel.n_days()},
                {"rejections", to_json(clean.report)}};
}

std::string rejections_csv(const data::RejectionReport& report)
{
    Csv csv{"filter", "count"};
    for (const auto& [k, v] : report)
        csv.row({k, num(v)});
    return csv.str();
}

Json fit_status(const fit::FitResult& f)
{
    return Json{{"converged", f.converged}, {"iterations", f.iterations}, {"termination", f.termination},
                {"cost", f.cost}, {"boundary_hit", f.boundary_hit()}};
}

struct DecayFitOutcome {
    Json json;
    double beta = data::kNaN;
};

DecayFitOutcome decay_fit(const impact::DecayCurve& curve, double initial_beta, const std::string& label,
                          RunOutput& out)
{
    DecayFitOutcome r;
    try {
        const auto f = impact::fit_decay_exponent(curve.points, initial_beta);
        r.beta = f.beta;
        r.json = Json{{"beta", f.beta},
                      {"beta_err", f.beta_err},
                      {"boundary_hit", f.boundary_hit},
                      {"weighting", f.weighting},
                      {"status", fit_status(f.fit)}};
    } catch (const ConvergenceError& e) {
        out.convergence_failures.push_back(label + ": " + e.what());
        r.json = Json{{"error", e.what()}};
    }
    return r;
}

Json autocorr_fit_json(const flow::AutocorrFit& f)
{
    return Json{{"a", f.a},
                {"b", f.b},
                {"gamma", f.gamma},
                {"a_err", f.a_err},
                {"b_err", f.b_err},
                {"gamma_err", f.gamma_err},
                {"gamma_fixed", f.gamma_fixed},
                {"weighting", f.weighting},
                {"error_model", f.error_model},
                {"status", fit_status(f.fit)}};
}

} // namespace

Command parse_command(std::string_view text)
{
    if (text == "simulate")
        return Command::Simulate;
    if (text == "estimate")
        return Command::Estimate;
    if (text == "decay")
        return Command::Decay;
    if (text == "deconvolve")
        return Command::Deconvolve;
    if (text == "report")
        return Command::Report;
    throw ConfigError("unknown command '" + std::string(text) + "'");
}

std::string to_string(Command command)
{
    switch (command) {
    case Command::Simulate:
        return "simulate";
    case Command::Estimate:
        return "estimate";
    case Command::Decay:
        return "decay";
    case Command::Deconvolve:
        return "deconvolve";
    case Command::Report:
        return "report";
    }
    return "report";
}

std::string report_file_name(Command command)
{
    return command == Command::Report ? "summary.json" : to_string(command) + "_report.json";
}

data::CleanResult prepare_panel(const data::Panel& raw, const RunConfig& config)
{
    auto clean = data::clean_panel(raw, config.cleaning);
    if (!config.tranche.empty())
        clean.panel = clean.panel.select_tranche(config.tranche);
    return clean;
}

RunOutput run_simulate(const RunConfig& config)
{
    config.validate();
    RunConfig c = config;
    c.normalize();
    c.simulate.validate();
    auto sim = sim::simulate(c.simulate);
    if (!c.tranche.empty())
        sim.panel = sim.panel.select_tranche(c.tranche);

    RunOutput out;
    out.files = io::render_panel(sim.panel);
    out.files["ground_truth.json"] = to_json(sim.truth).dump(2) + "\n";
    out.report = base_report(Command::Simulate, c);
    out.report["orders"] = sim.panel.orders().size();
    out.report["stocks"] = sim.panel.n_stocks();
    out.report["days"] = sim.panel.n_days();
    out.report["injected_violations"] = sim.truth.violations.size();
    out.report["activity"] = sim.truth.activity;
    out.report["implied_zeta"] = sim.truth.implied_zeta;
    return out;
}

RunOutput run_estimate(const RunConfig& config, const data::Panel& raw)
{
    config.validate();
    const auto& opt = config.estimate;
    const auto clean = prepare_panel(raw, config);
    const auto& panel = clean.panel;
    RunOutput out;
    out.report = base_report(Command::Estimate, config);
    out.report["panel"] = panel_summary(raw, clean);
    out.files["rejections.csv"] = rejections_csv(clean.report);

    const auto orders = impact::order_impacts(panel);
    out.report["orders_with_prices"] = orders.size();
    const auto se = impact::impact_curve(orders, impact::PricePair::StartToEnd, opt.impact_bins);
    const auto sc = impact::impact_curve(orders, impact::PricePair::StartToClose, opt.impact_bins);
    const auto sc2 = impact::impact_curve(orders, impact::PricePair::StartToNextClose, opt.impact_bins);
    const auto ratio = impact::impact_ratio(sc, se);
    out.files["impact_se.csv"] = points_csv(impact::to_points(se));
    out.files["impact_sc.csv"] = points_csv(impact::to_points(sc));
    out.files["impact_sc2.csv"] = points_csv(impact::to_points(sc2));
    out.files["impact_ratio.csv"] = points_csv(ratio);

    try {
        const auto law = impact::fit_power_law(se, opt.fit_phi_lo, opt.fit_phi_hi);
        out.report["square_root_fit"] = Json{{"exponent", law.exponent},
                                             {"exponent_err", law.exponent_err},
                                             {"prefactor", law.prefactor},
                                             {"points", law.n_points},
                                             {"phi_range", {opt.fit_phi_lo, opt.fit_phi_hi}}};
    } catch (const DataError& e) {
        // Too few bins in the phi range; the curves are still written.
        out.report["square_root_fit"] = Json{{"error", e.what()}, {"phi_range", {opt.fit_phi_lo, opt.fit_phi_hi}}};
    }
    out.report["ratio_sc_se_mean"] = impact::mean_value(ratio);

    const auto same_day = impact::decay_curve(orders, config.decay.options(impact::DecayHorizon::SameDay, 1.0));
    const auto dfit = decay_fit(same_day, config.decay.initial_beta, "decay exponent (same day)", out);
    out.files["decay_same_day.csv"] = decay_csv(same_day, dfit.beta);
    out.report["decay_fit"] = dfit.json;
    out.report["decay_warnings"] = same_day.warnings;

    const auto flows = flow::daily_imbalance(panel);
    const auto corr = flow::flow_autocorrelation(flows, std::min(opt.autocorr_lags, panel.n_days() - 1));
    flow::AutocorrFitOptions aopt;
    aopt.free_gamma = opt.free_gamma;
    aopt.gamma = opt.gamma;
    aopt.finite_sample = opt.autocorr_finite_sample;
    Json afit_json;
    double fa = data::kNaN, fb = data::kNaN, fg = data::kNaN;
    std::vector<double> expected;
    try {
        const auto afit = flow::fit_autocorr(corr, aopt);
        afit_json = autocorr_fit_json(afit);
        afit_json["finite_sample"] = aopt.finite_sample;
        if (aopt.finite_sample) {
            std::vector<double> rho(corr.series_length - 1);
            for (std::size_t k = 0; k < rho.size(); ++k)
                rho[k] = flow::truncated_power_law(static_cast<double>(k + 1), afit.a, afit.gamma, afit.b);
            expected = flow::expected_sample_autocorrelation(rho, corr.mean.size());
        }
        fa = afit.a;
        fb = afit.b;
        fg = afit.gamma;
        if (!afit.fit.converged)
            out.convergence_failures.push_back("autocorrelation fit: " + afit.fit.termination);
    } catch (const DataError& e) {
        afit_json = Json{{"error", e.what()}};
    }
    Csv acsv{"lag", "mean_corr", "stderr", "fit", "fit_expected"};
    for (std::size_t k = 0; k < corr.mean.size(); ++k) {
        const double tau = static_cast<double>(k + 1);
        acsv.row({num(k + 1), num(corr.mean[k]), num(corr.stderr_[k]),
                  std::isfinite(fa) ? num(flow::truncated_power_law(tau, fa, fg, fb)) : std::string(),
                  expected.empty() ? std::string() : num(expected[k])});
    }
    out.files["autocorr.csv"] = acsv.str();
    out.report["autocorr_fit"] = afit_json;
    out.report["autocorr_stocks"] = corr.n_stocks;
    out.report["autocorr_warnings"] = corr.warnings;
    if (!corr.mean.empty() && corr.mean[0] > -1.0)
        out.report["zeta_from_c1"] = impact::zeta_from_autocorr(corr.mean[0]);

    if (opt.next_close_bins >= 2) {
        const auto nc = impact::conditional_next_close(orders, opt.next_close_bins);
        out.files["next_close.csv"] = points_csv(nc.bins);
        out.report["next_close"] = Json{{"slope", nc.slope}, {"slope_err", nc.slope_err}, {"pairs", nc.n_pairs}};
    }
    return out;
}

RunOutput run_decay(const RunConfig& config, const data::Panel& raw)
{
    config.validate();
    const auto clean = prepare_panel(raw, config);
    const auto& panel = clean.panel;
    RunOutput out;
    out.report = base_report(Command::Decay, config);
    out.report["panel"] = panel_summary(raw, clean);

    double zeta = 0.0;
    if (config.decay.zeta) {
        zeta = *config.decay.zeta;
        out.report["zeta_source"] = "config";
    } else {
        const auto flows = flow::daily_imbalance(panel);
        const auto corr = flow::flow_autocorrelation(flows, 1);
        zeta = impact::zeta_from_autocorr(corr.mean[0]);
        out.report["zeta_source"] = "autocorrelation";
        out.report["c1"] = corr.mean[0];
    }
    out.report["zeta"] = zeta;

    const auto orders = impact::order_impacts(panel);
    const auto same = impact::decay_curve(orders, config.decay.options(impact::DecayHorizon::SameDay, zeta));
    const auto next = impact::decay_curve(orders, config.decay.options(impact::DecayHorizon::NextDay, zeta));
    const auto fsame = decay_fit(same, config.decay.initial_beta, "decay exponent (same day)", out);
    const auto fnext = decay_fit(next, config.decay.initial_beta, "decay exponent (next day)", out);
    out.files["decay_same_day.csv"] = decay_csv(same, fsame.beta);
    out.files["decay_next_day.csv"] = decay_csv(next, fnext.beta);
    out.report["same_day"] = Json{{"fit", fsame.json}, {"points", same.points.size()}, {"warnings", same.warnings}};
    out.report["next_day"] = Json{{"fit", fnext.json}, {"points", next.points.size()}, {"warnings", next.warnings}};

    Json plateaus = Json::array();
    for (double w : config.decay.plateau_windows) {
        try {
            const auto p = impact::fit_decay_plateau(same.points, w);
            plateaus.push_back(Json{{"z_max", w},
                                    {"plateau", p.plateau},
                                    {"plateau_err", p.plateau_err},
                                    {"rate", p.rate},
                                    {"status", fit_status(p.fit)}});
            if (!p.fit.converged)
                out.convergence_failures.push_back("plateau fit z <= " + num(w) + ": " + p.fit.termination);
        } catch (const Error& e) {
            plateaus.push_back(Json{{"z_max", w}, {"error", e.what()}});
        }
    }
    out.report["plateau_fits"] = plateaus;
    return out;
}

RunOutput run_deconvolve(const RunConfig& config, const data::Panel& raw)
{
    config.validate();
    RunConfig c = config;
    c.normalize();
    const auto& solver = c.deconvolve.solver;
    const auto clean = prepare_panel(raw, c);
    const auto& panel = clean.panel;
    const auto res = deconv::deconvolve(panel, solver, c.deconvolve.response_lags);
    const auto& k = res.kernel;

    RunOutput out;
    out.report = base_report(Command::Deconvolve, c);
    out.report["panel"] = panel_summary(raw, clean);
    out.report["rows"] = k.rows;
    out.report["residual_variance"] = k.residual_variance;
    out.report["beta_fallbacks"] = res.betas.fallback_count;
    out.report["alpha_coefficients"] = k.alpha_coefficients;

    std::string kcsv = "tau,G_cum,G_norm,reg_err,G,G_err,G_norm_err";
    if (k.bands)
        kcsv += ",boot_lo,boot_hi,boot_mean,boot_sd";
    kcsv += '\n';
    for (std::size_t t = 0; t < k.coefficients.size(); ++t) {
        kcsv += num(t) + ',' + num(k.cumulative[t]) + ',' + num(k.normalized[t]) + ',' + num(k.cumulative_err[t]) +
                ',' + num(k.coefficients[t]) + ',' + num(k.coefficient_err[t]) + ',' + num(k.normalized_err[t]);
        if (k.bands)
            kcsv += ',' + num(k.bands->lo[t]) + ',' + num(k.bands->hi[t]) + ',' + num(k.bands->mean[t]) + ',' +
                    num(k.bands->stddev[t]);
        kcsv += '\n';
    }
    out.files["kernel.csv"] = kcsv;

    Csv rcsv{"tau", "R_norm", "R"};
    for (std::size_t t = 0; t < res.response.raw.size(); ++t)
        rcsv.row({num(t), num(res.response.normalized[t]), num(res.response.raw[t])});
    out.files["response.csv"] = rcsv.str();

    // Bootstrap spread when there is one, analytic errors otherwise.
    std::vector<double> errors = k.normalized_err;
    if (k.bands && k.bands->replicates > 1)
        errors = k.bands->stddev;
    out.report["fit_errors"] = k.bands && k.bands->replicates > 1 ? "bootstrap" : "analytic";
    Json fits = Json::array();
    if (std::isfinite(k.normalized[0])) {
        for (auto mode : c.deconvolve.fit_modes) {
            deconv::AsymptoteOptions aopt;
            aopt.mode = mode;
            aopt.b_fixed = c.deconvolve.b_fixed;
            aopt.beta_fixed = c.deconvolve.beta_fixed;
            const auto f = deconv::fit_kernel_asymptote(k.normalized, errors, aopt);
            fits.push_back(Json{{"mode", deconv::to_string(mode)},
                                {"i_inf", f.i_inf},
                                {"i_inf_err", f.i_inf_err},
                                {"b", f.b},
                                {"b_err", f.b_err},
                                {"beta", f.beta},
                                {"beta_err", f.beta_err},
                                {"weighting", f.weighting},
                                {"status", fit_status(f.fit)}});
            if (!f.converged)
                out.convergence_failures.push_back("kernel fit " + deconv::to_string(mode) + ": " + f.fit.termination);
        }
    } else {
        out.report["fit_skipped"] = "kernel has G(0) = 0";
    }
    out.report["asymptote_fits"] = fits;
    return out;
}

RunOutput run_report(const RunConfig& config)
{
    namespace fs = std::filesystem;
    if (config.input.empty())
        throw ConfigError("report: no input directory given");
    const fs::path dir(config.input);
    if (!fs::is_directory(dir))
        throw IoError("report: '" + config.input + "' is not a directory");
    std::vector<fs::path> found;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const auto name = entry.path().filename().string();
        if (entry.is_regular_file() && name.size() > 12 && name.ends_with("_report.json"))
            found.push_back(entry.path());
    }
    std::sort(found.begin(), found.end());
    if (found.empty())
        throw DataError("report: no *_report.json files in '" + config.input + "'");

    RunOutput out;
    out.report = base_report(Command::Report, config);
    Json reports = Json::object();
    std::ostringstream md;
    md << "# metaimpact summary\n";
    for (const auto& path : found) {
        Json r;
        try {
            r = Json::parse(io::read_text_file(path));
        } catch (const Json::parse_error& e) {
            throw DataError("report: " + path.string() + " is not valid JSON: " + e.what());
        }
        const std::string cmd = r.value("command", path.stem().string());
        Json key = Json::object();
        md << "\n## " << cmd << "\n\n";
        auto add = [&](const std::string& label, const Json& v) {
            if (v.is_null())
                return;
            key[label] = v;
            md << "- " << label << ": " << v.dump() << '\n';
        };
        auto at = [&](std::initializer_list<const char*> path_keys) -> Json {
            const Json* cur = &r;
            for (const char* p : path_keys) {
                if (!cur->is_object() || !cur->contains(p))
                    return nullptr;
                cur = &(*cur)[p];
            }
            return *cur;
        };
        add("seed", at({"seed"}));
        add("orders", at({"orders"}));
        add("orders", at({"panel", "orders"}));
        add("square_root_exponent", at({"square_root_fit", "exponent"}));
        add("ratio_sc_se_mean", at({"ratio_sc_se_mean"}));
        add("decay_beta", at({"decay_fit", "beta"}));
        add("decay_beta_same_day", at({"same_day", "fit", "beta"}));
        add("decay_beta_next_day", at({"next_day", "fit", "beta"}));
        add("zeta", at({"zeta"}));
        add("autocorr_a", at({"autocorr_fit", "a"}));
        add("autocorr_b", at({"autocorr_fit", "b"}));
        if (const Json fits = at({"asymptote_fits"}); fits.is_array())
            for (const auto& f : fits)
                add("i_inf_" + f.value("mode", std::string("fit")), f.contains("i_inf") ? f["i_inf"] : Json(nullptr));
        reports[cmd] = key;
    }
    out.report["reports"] = reports;
    out.files["summary.md"] = md.str();
    return out;
}

RunOutput run(Command command, const RunConfig& config)
{
    switch (command) {
    case Command::Simulate:
        return run_simulate(config);
    case Command::Report:
        return run_report(config);
    default:
        break;
    }
    if (config.input.empty())
        throw ConfigError(to_string(command) + ": no input directory given");
    const auto raw = io::load_panel(config.input);
    switch (command) {
    case Command::Estimate:
        return run_estimate(config, raw);
    case Command::Decay:
        return run_decay(config, raw);
    default:
        return run_deconvolve(config, raw);
    }
}

} // namespace metaimpact
