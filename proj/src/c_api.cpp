#include "metaimpact/metaimpact.h"

#include "metaimpact/config.hpp"
#include "metaimpact/csv_io.hpp"
#include "metaimpact/deconvolution.hpp"
#include "metaimpact/errors.hpp"
#include "metaimpact/flowstats.hpp"
#include "metaimpact/impact.hpp"
#include "metaimpact/pipeline.hpp"

#include <cstring>
#include <string>
#include <vector>

struct mi_panel {
    metaimpact::data::Panel panel;
};

struct mi_result {
    std::vector<std::pair<std::string, std::string>> files;
    std::string report;
    std::string report_name;
    bool converged = true;
};

namespace {

thread_local std::string last_error;

mi_status status_of(metaimpact::ErrorKind kind)
{
    switch (kind) {
    case metaimpact::ErrorKind::Config:
        return MI_ERR_CONFIG;
    case metaimpact::ErrorKind::Data:
        return MI_ERR_DATA;
    case metaimpact::ErrorKind::Convergence:
        return MI_ERR_CONVERGENCE;
    case metaimpact::ErrorKind::Io:
        return MI_ERR_IO;
    }
    return MI_ERR_INTERNAL;
}

template <typename F>
mi_status guarded(F&& f)
{
    try {
        last_error.clear();
        return f();
    } catch (const metaimpact::Error& e) {
        last_error = e.what();
        return status_of(e.kind());
    } catch (const metaimpact::Json::exception& e) {
        last_error = std::string("invalid JSON: ") + e.what();
        return MI_ERR_CONFIG;
    } catch (const std::exception& e) {
        last_error = e.what();
        return MI_ERR_INTERNAL;
    } catch (...) {
        last_error = "unknown error";
        return MI_ERR_INTERNAL;
    }
}

char* dup_string(const std::string& s)
{
    char* out = new char[s.size() + 1];
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

metaimpact::Json parse_or_empty(const char* text)
{
    if (text == nullptr || *text == '\0')
        return metaimpact::Json::object();
    return metaimpact::Json::parse(text);
}

mi_status null_argument(const char* what)
{
    last_error = std::string("null argument: ") + what;
    return MI_ERR_CONFIG;
}

} // namespace

extern "C" {

const char* mi_version(void) { return METAIMPACT_VERSION; }

const char* mi_last_error(void) { return last_error.c_str(); }

void mi_string_free(char* s) { delete[] s; }

mi_status mi_config_resolve(const char* overrides_json, char** resolved_json)
{
    if (!resolved_json)
        return null_argument("resolved_json");
    return guarded([&] {
        const auto config = metaimpact::config_from_json(parse_or_empty(overrides_json));
        *resolved_json = dup_string(metaimpact::to_json(config).dump(2));
        return MI_OK;
    });
}

mi_status mi_run(const char* command, const char* config_json, mi_result** out)
{
    if (!command || !out)
        return null_argument("command/out");
    *out = nullptr;
    return guarded([&] {
        const auto cmd = metaimpact::parse_command(command);
        const auto config = metaimpact::config_from_json(parse_or_empty(config_json));
        auto run = metaimpact::run(cmd, config);
        auto* r = new mi_result;
        for (auto& [name, data] : run.files)
            r->files.emplace_back(name, std::move(data));
        r->report_name = metaimpact::report_file_name(cmd);
        if (!run.converged())
            run.report["convergence_failures"] = run.convergence_failures;
        r->report = run.report.dump(2);
        r->converged = run.converged();
        *out = r;
        if (!r->converged) {
            last_error = run.convergence_failures.front();
            return MI_ERR_CONVERGENCE;
        }
        return MI_OK;
    });
}

size_t mi_result_file_count(const mi_result* result) { return result ? result->files.size() : 0; }

const char* mi_result_file_name(const mi_result* result, size_t index)
{
    if (!result || index >= result->files.size())
        return nullptr;
    return result->files[index].first.c_str();
}

const char* mi_result_file_data(const mi_result* result, size_t index, size_t* length)
{
    if (!result || index >= result->files.size())
        return nullptr;
    if (length)
        *length = result->files[index].second.size();
    return result->files[index].second.c_str();
}

const char* mi_result_report(const mi_result* result) { return result ? result->report.c_str() : nullptr; }

const char* mi_result_report_name(const mi_result* result)
{
    return result ? result->report_name.c_str() : nullptr;
}

int mi_result_converged(const mi_result* result) { return result && result->converged ? 1 : 0; }

void mi_result_free(mi_result* result) { delete result; }

mi_status mi_panel_load(const char* directory, mi_panel** out)
{
    if (!directory || !out)
        return null_argument("directory/out");
    *out = nullptr;
    return guarded([&] {
        *out = new mi_panel{metaimpact::io::load_panel(directory)};
        return MI_OK;
    });
}

mi_status mi_panel_clean(const mi_panel* raw, const char* cleaning_json, mi_panel** out, char** rejections_json)
{
    if (!raw || !out)
        return null_argument("raw/out");
    *out = nullptr;
    return guarded([&] {
        metaimpact::Json j = metaimpact::Json::object();
        j["cleaning"] = parse_or_empty(cleaning_json);
        const auto config = metaimpact::config_from_json(j);
        auto clean = metaimpact::data::clean_panel(raw->panel, config.cleaning);
        if (rejections_json)
            *rejections_json = dup_string(metaimpact::to_json(clean.report).dump());
        *out = new mi_panel{std::move(clean.panel)};
        return MI_OK;
    });
}

size_t mi_panel_stock_count(const mi_panel* panel) { return panel ? panel->panel.n_stocks() : 0; }
size_t mi_panel_day_count(const mi_panel* panel) { return panel ? panel->panel.n_days() : 0; }
size_t mi_panel_order_count(const mi_panel* panel) { return panel ? panel->panel.orders().size() : 0; }
void mi_panel_free(mi_panel* panel) { delete panel; }

double mi_propagator_decay(double z, double beta)
{
    try {
        return metaimpact::impact::propagator_decay(z, beta);
    } catch (const std::exception& e) {
        last_error = e.what();
        return metaimpact::data::kNaN;
    }
}

mi_status mi_zeta_from_autocorr(double c1, double* zeta)
{
    if (!zeta)
        return null_argument("zeta");
    return guarded([&] {
        *zeta = metaimpact::impact::zeta_from_autocorr(c1);
        return MI_OK;
    });
}

mi_status mi_fit_autocorr(const double* corr, const double* stderrs, size_t n, int free_gamma, double gamma,
                          double* a, double* b, double* gamma_out)
{
    if (!corr || !a || !b || !gamma_out)
        return null_argument("corr/a/b/gamma_out");
    return guarded([&] {
        metaimpact::flow::AutocorrFitOptions opt;
        opt.free_gamma = free_gamma != 0;
        opt.gamma = gamma;
        const std::span<const double> errs = stderrs ? std::span<const double>(stderrs, n) : std::span<const double>();
        const auto f = metaimpact::flow::fit_autocorr(std::span<const double>(corr, n), errs, opt);
        *a = f.a;
        *b = f.b;
        *gamma_out = f.gamma;
        if (!f.fit.converged) {
            last_error = "autocorrelation fit did not converge: " + f.fit.termination;
            return MI_ERR_CONVERGENCE;
        }
        return MI_OK;
    });
}

mi_status mi_fit_kernel_asymptote(const double* normalized, const double* errors, size_t n, const char* mode,
                                  double b_fixed, double beta_fixed, double* i_inf, double* b, double* beta)
{
    if (!normalized || !mode || !i_inf || !b || !beta)
        return null_argument("normalized/mode/i_inf/b/beta");
    return guarded([&] {
        metaimpact::deconv::AsymptoteOptions opt;
        opt.mode = metaimpact::deconv::parse_fit_mode(mode);
        opt.b_fixed = b_fixed;
        opt.beta_fixed = beta_fixed;
        const std::span<const double> errs = errors ? std::span<const double>(errors, n) : std::span<const double>();
        const auto f = metaimpact::deconv::fit_kernel_asymptote(std::span<const double>(normalized, n), errs, opt);
        *i_inf = f.i_inf;
        *b = f.b;
        *beta = f.beta;
        if (!f.converged) {
            last_error = "kernel asymptote fit did not converge: " + f.fit.termination;
            return MI_ERR_CONVERGENCE;
        }
        return MI_OK;
    });
}

} // extern "C"
