#include "doctest.h"
#include "fixtures.hpp"

#include "metaimpact/config.hpp"
#include "metaimpact/csv_io.hpp"
#include "metaimpact/errors.hpp"
#include "metaimpact/pipeline.hpp"

#include <filesystem>
#include <string>

using namespace metaimpact;

namespace {

RunConfig small_run(std::uint64_t seed = 3)
{
    RunConfig c;
    c.seed = seed;
    c.simulate.n_stocks = 10;
    c.simulate.n_days = 150;
    c.simulate.kernel.horizon = 10;
    c.deconvolve.solver.horizon = 10;
    c.deconvolve.solver.replicates = 20;
    c.deconvolve.response_lags = 10;
    c.estimate.autocorr_lags = 20;
    c.estimate.impact_bins = 10;
    return c;
}

data::Panel panel_of(const RunOutput& sim)
{
    const auto dir = std::filesystem::temp_directory_path() / "metaimpact_pipeline_panel";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    for (const auto& [name, text] : sim.files)
        io::write_text_file(dir / name, text);
    auto p = io::load_panel(dir);
    std::filesystem::remove_all(dir);
    return p;
}

} // namespace

TEST_CASE("config defaults round-trip through JSON")
{
    const auto c = config_from_json(Json::object());
    const auto j = to_json(c);
    CHECK(to_json(config_from_json(j)) == j);
    CHECK(j["deconvolve"]["horizon"] == 50);
    CHECK(j["decay"]["zeta"].is_null());
}

TEST_CASE("config rejects unknown keys and wrong types by name")
{
    auto expect_config_error = [](const Json& j, const std::string& key) {
        try {
            config_from_json(j);
            FAIL("expected ConfigError for " << key);
        } catch (const ConfigError& e) {
            CHECK_MESSAGE(std::string(e.what()).find(key) != std::string::npos, e.what());
        }
    };
    expect_config_error(Json{{"sead", 1}}, "sead");
    expect_config_error(Json{{"deconvolve", {{"horizen", 3}}}}, "horizen");
    expect_config_error(Json{{"deconvolve", {{"horizon", -3}}}}, "horizon");
    expect_config_error(Json{{"simulate", {{"noise", {{"xi_scale", "big"}}}}}}, "xi_scale");
    expect_config_error(Json{{"deconvolve", {{"fit_modes", {"bogus"}}}}}, "bogus");
}

TEST_CASE("master seed and threads overwrite module copies")
{
    auto c = config_from_json(Json{{"seed", 42}, {"threads", 2}});
    c.normalize();
    CHECK(c.simulate.seed == 42);
    CHECK(c.deconvolve.solver.seed == 42);
    CHECK(c.deconvolve.solver.threads == 2);
}

TEST_CASE("command names")
{
    for (auto cmd : {Command::Simulate, Command::Estimate, Command::Decay, Command::Deconvolve, Command::Report})
        CHECK(parse_command(to_string(cmd)) == cmd);
    CHECK_THROWS_AS(parse_command("plot"), ConfigError);
    CHECK(report_file_name(Command::Report) == "summary.json");
}

TEST_CASE("simulate output is deterministic and embeds the config")
{
    const auto a = run_simulate(small_run());
    const auto b = run_simulate(small_run());
    CHECK(a.files == b.files);
    CHECK(a.report == b.report);
    CHECK(a.files.count("ground_truth.json") == 1);
    CHECK(a.report["seed"] == 3);
    CHECK(a.report["config"]["simulate"]["n_stocks"] == 10);
    CHECK(run_simulate(small_run(4)).files != a.files);
}

TEST_CASE("analysis commands are deterministic")
{
    const auto cfg = small_run();
    const auto panel = panel_of(run_simulate(cfg));
    for (auto cmd : {Command::Estimate, Command::Decay, Command::Deconvolve}) {
        auto once = [&] {
            switch (cmd) {
            case Command::Estimate:
                return run_estimate(cfg, panel);
            case Command::Decay:
                return run_decay(cfg, panel);
            default:
                return run_deconvolve(cfg, panel);
            }
        };
        const auto a = once();
        const auto b = once();
        CHECK(a.files == b.files);
        CHECK(a.report == b.report);
        CHECK(!a.files.empty());
    }
}

TEST_CASE("deconvolve without bootstrap omits the bands")
{
    auto cfg = small_run();
    const auto panel = panel_of(run_simulate(cfg));
    cfg.deconvolve.solver.replicates = 0;
    const auto out = run_deconvolve(cfg, panel);
    const auto& kernel = out.files.at("kernel.csv");
    CHECK(kernel.find("boot_lo") == std::string::npos);
    CHECK(kernel.rfind("tau,G_cum,G_norm", 0) == 0);
}

TEST_CASE("deconvolve checks the horizon against the panel length")
{
    auto cfg = small_run();
    const auto panel = panel_of(run_simulate(cfg));
    cfg.deconvolve.solver.horizon = 500;
    CHECK_THROWS_AS(run_deconvolve(cfg, panel), ConfigError);
}

TEST_CASE("estimate reports the fitted decay exponent")
{
    auto cfg = small_run();
    cfg.simulate.n_stocks = 60;
    cfg.simulate.n_days = 200;
    cfg.simulate.flow.single_order_days = true;
    const auto sim = run_simulate(cfg);
    const auto out = run_estimate(cfg, panel_of(sim));
    const double beta = out.report["decay_fit"]["beta"].get<double>();
    const double err = out.report["decay_fit"]["beta_err"].get<double>();
    CHECK(std::abs(beta - cfg.simulate.propagator.beta) < 3.0 * err);
}
