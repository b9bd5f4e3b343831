// Exercises the shared library through its C header only.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "metaimpact/metaimpact.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

const char* kSmall = R"({"seed": 5, "simulate": {"n_stocks": 6, "n_days": 120, "kernel": {"horizon": 10}},
                         "deconvolve": {"horizon": 10, "replicates": 0, "response_lags": 10},
                         "estimate": {"autocorr_lags": 20, "impact_bins": 8}})";

fs::path write_result(const mi_result* r, const std::string& name)
{
    const fs::path dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    for (size_t i = 0; i < mi_result_file_count(r); ++i) {
        size_t len = 0;
        const char* data = mi_result_file_data(r, i, &len);
        std::ofstream(dir / mi_result_file_name(r, i), std::ios::binary).write(data, static_cast<std::streamsize>(len));
    }
    return dir;
}

} // namespace

TEST_CASE("version and scalar helpers")
{
    CHECK(std::string(mi_version()).size() > 0);
    CHECK(mi_propagator_decay(0.0, 0.22) == 1.0);
    CHECK(std::abs(mi_propagator_decay(1.0, 0.22) - (std::pow(2.0, 0.78) - 1.0)) < 1e-15);
    CHECK(std::isnan(mi_propagator_decay(-1.0, 0.22)));
    CHECK(std::string(mi_last_error()).find("non-negative") != std::string::npos);

    double zeta = 0.0;
    CHECK(mi_zeta_from_autocorr(0.25, &zeta) == MI_OK);
    CHECK(zeta == 0.8);
    CHECK(mi_zeta_from_autocorr(-2.0, &zeta) == MI_ERR_CONFIG);
    CHECK(mi_zeta_from_autocorr(0.1, nullptr) == MI_ERR_CONFIG);
}

TEST_CASE("fit helpers")
{
    std::vector<double> g;
    for (int tau = 1; tau <= 50; ++tau)
        g.push_back(0.24 * std::pow(tau, -0.56) * std::exp(-0.038 * tau));
    double a = 0, b = 0, gamma = 0;
    REQUIRE(mi_fit_autocorr(g.data(), nullptr, g.size(), 0, 0.56, &a, &b, &gamma) == MI_OK);
    CHECK(std::abs(a - 0.24) < 1e-8);
    CHECK(std::abs(b - 0.038) < 1e-8);

    std::vector<double> k;
    for (int tau = 0; tau <= 50; ++tau)
        k.push_back(0.42 + 0.58 * mi_propagator_decay(tau, 0.22) * std::exp(-0.038 * tau));
    double i_inf = 0, kb = 0, beta = 0;
    REQUIRE(mi_fit_kernel_asymptote(k.data(), nullptr, k.size(), "two_param", 0.0, 0.22, &i_inf, &kb, &beta) == MI_OK);
    CHECK(std::abs(i_inf - 0.42) < 1e-6);
    CHECK(std::abs(kb - 0.038) < 1e-6);
    CHECK(mi_fit_kernel_asymptote(k.data(), nullptr, k.size(), "nope", 0.0, 0.22, &i_inf, &kb, &beta) ==
          MI_ERR_CONFIG);
}

TEST_CASE("config resolution")
{
    char* text = nullptr;
    REQUIRE(mi_config_resolve(R"({"seed": 9})", &text) == MI_OK);
    CHECK(std::string(text).find("\"seed\": 9") != std::string::npos);
    mi_string_free(text);
    CHECK(mi_config_resolve(R"({"bogus": 1})", &text) == MI_ERR_CONFIG);
    CHECK(std::string(mi_last_error()).find("bogus") != std::string::npos);
    CHECK(mi_config_resolve("{not json", &text) == MI_ERR_CONFIG);
}

TEST_CASE("simulate, load, clean and analyse")
{
    mi_result* sim = nullptr;
    REQUIRE(mi_run("simulate", kSmall, &sim) == MI_OK);
    CHECK(mi_result_converged(sim) == 1);
    CHECK(std::string(mi_result_report_name(sim)) == "simulate_report.json");
    CHECK(std::string(mi_result_report(sim)).find("\"command\": \"simulate\"") != std::string::npos);
    const fs::path dir = write_result(sim, "metaimpact_capi_panel");
    mi_result_free(sim);

    mi_panel* raw = nullptr;
    REQUIRE(mi_panel_load(dir.c_str(), &raw) == MI_OK);
    CHECK(mi_panel_stock_count(raw) == 6);
    CHECK(mi_panel_day_count(raw) == 120);
    mi_panel* clean = nullptr;
    char* rejections = nullptr;
    REQUIRE(mi_panel_clean(raw, nullptr, &clean, &rejections) == MI_OK);
    CHECK(mi_panel_order_count(clean) == mi_panel_order_count(raw));
    CHECK(std::string(rejections).find("zero_duration") != std::string::npos);
    mi_string_free(rejections);
    mi_panel_free(clean);
    mi_panel_free(raw);

    std::string cfg = kSmall;
    cfg.insert(1, "\"input\": \"" + dir.string() + "\", ");
    mi_result* dec = nullptr;
    const mi_status st = mi_run("deconvolve", cfg.c_str(), &dec);
    REQUIRE(dec != nullptr);
    CHECK((st == MI_OK || st == MI_ERR_CONVERGENCE));
    CHECK(mi_result_file_count(dec) >= 2);
    mi_result_free(dec);
    fs::remove_all(dir);
}

TEST_CASE("error statuses")
{
    mi_result* r = nullptr;
    CHECK(mi_run("plot", "{}", &r) == MI_ERR_CONFIG);
    CHECK(r == nullptr);
    CHECK(mi_run("estimate", R"({"input": "/nonexistent/dir"})", &r) == MI_ERR_IO);
    CHECK(r == nullptr);
    mi_panel* p = nullptr;
    CHECK(mi_panel_load("/nonexistent/dir", &p) == MI_ERR_IO);
    CHECK(mi_panel_load(nullptr, &p) == MI_ERR_CONFIG);
    CHECK(mi_result_file_count(nullptr) == 0);
    CHECK(mi_result_file_name(nullptr, 0) == nullptr);
}
