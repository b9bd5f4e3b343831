// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
// Usage: acceptance [criterion numbers...]

#include "metaimpact/config.hpp"
#include "metaimpact/deconvolution.hpp"
#include "metaimpact/flowstats.hpp"
#include "metaimpact/impact.hpp"
#include "metaimpact/pipeline.hpp"
#include "metaimpact/simulator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace metaimpact;

namespace {

constexpr double kBeta = 0.22;
constexpr double kY = 0.5;
constexpr double kIInf = 0.42;
constexpr double kA = 0.24;
constexpr double kGamma = 0.56;
constexpr double kB = 0.038;
constexpr std::size_t kSeeds = 10;

struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& what)
    {
        if (!ok) {
            pass = false;
            detail << " [violated: " << what << "]";
        }
    }
};

class Stopwatch {
public:
    double seconds() const
    {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

double iprop(double z, double beta) { return std::pow(1.0 + z, 1.0 - beta) - std::pow(z, 1.0 - beta); }

double truncated_power_law(double tau, double a, double gamma, double b)
{
    return a * std::pow(tau, -gamma) * std::exp(-b * tau);
}

// Realistic noise: daily noise at one sigma_d, market moves, intraday bridge.
sim::SimConfig realistic(std::uint64_t seed)
{
    sim::SimConfig c;
    c.seed = seed;
    c.propagator.beta = kBeta;
    c.propagator.prefactor = kY;
    c.kernel.i_inf = kIInf;
    c.kernel.b = kB;
    c.flow.a = kA;
    c.flow.gamma = kGamma;
    c.flow.b = kB;
    return c;
}

sim::SimConfig noiseless(std::uint64_t seed)
{
    auto c = realistic(seed);
    c.noise.xi_scale = 0.0;
    c.noise.market_vol = 0.0;
    c.noise.intraday = 0.0;
    return c;
}

// One z value per decay bin, so each bin mean is an exact propagator value.
std::vector<double> z_grid_for_bins(double z_max, const impact::DecayOptions& opt)
{
    const auto edges = impact::decay_bin_edges(z_max, opt);
    std::vector<double> grid{0.0};
    for (std::size_t b = 1; b + 1 < edges.size(); ++b) {
        const double lo = edges[b];
        const double hi = edges[b + 1];
        if (b + 2 == edges.size())
            grid.push_back(hi);
        else
            grid.push_back(lo < opt.linear_limit ? 0.5 * (lo + hi) : std::sqrt(lo * hi));
    }
    return grid;
}

impact::DecayCurve noiseless_decay_curve(double z_max)
{
    auto c = noiseless(101);
    c.n_stocks = 100;
    c.n_days = 200;
    c.flow.single_order_days = true;
    c.flow.placement = sim::StartPlacement::ZGrid;
    c.flow.z_grid = z_grid_for_bins(z_max, {});
    const auto sim = sim::simulate(c);
    return impact::decay_curve(data::clean_panel(sim.panel).panel, {});
}

// 1. Square-root law on a 1e5-order panel.
Outcome square_root()
{
    Outcome out;
    Stopwatch clock;
    auto c = realistic(1);
    c.n_stocks = 100;
    c.n_days = 1020;
    const auto sim = sim::simulate(c);
    const auto panel = data::clean_panel(sim.panel).panel;
    const auto curve = impact::impact_curve(panel, impact::PricePair::StartToEnd, 40);
    const auto fit = impact::fit_power_law(curve, 1e-3, 1e-1);
    const double secs = clock.seconds();
    out.detail << "orders=" << panel.orders().size() << " slope=" << fit.exponent << " +/- " << fit.exponent_err
               << " (" << fit.n_points << " bins) target 0.50 +/- 0.05, " << secs << " s";
    out.require(panel.orders().size() >= 100000, "at least 1e5 orders");
    out.require(std::abs(fit.exponent - 0.5) <= 0.05, "slope within 0.05 of 0.5");
    out.require(secs < 120.0, "runtime under 2 min");
    return out;
}

// 2. Decay curve against the propagator shape.
Outcome decay_oracle()
{
    Outcome out;
    const auto curve = noiseless_decay_curve(20.0);
    double worst = 0.0;
    for (const auto& p : curve.points)
        worst = std::max(worst, std::abs(p.value - iprop(p.z, kBeta)));
    out.detail << "noiseless: " << curve.points.size() << " bins, max |R - I_prop| = " << worst << " (tol 1e-6);";
    out.require(curve.points.size() == 20, "all 20 bins populated");
    out.require(worst <= 1e-6, "noiseless bins within 1e-6");

    std::size_t within = 0;
    double max_z = 0.0;
    for (std::uint64_t seed = 1; seed <= kSeeds; ++seed) {
        auto c = realistic(seed);
        c.flow.single_order_days = true;
        const auto sim = sim::simulate(c);
        const auto noisy = impact::decay_curve(data::clean_panel(sim.panel).panel, {});
        const auto fit = impact::fit_decay_exponent(noisy.points);
        const double z = std::abs(fit.beta - kBeta) / fit.beta_err;
        max_z = std::max(max_z, z);
        within += z <= 3.0;
        out.detail << " s" << seed << ":" << fit.beta << "+/-" << fit.beta_err;
    }
    out.detail << "; max |beta - 0.22|/SE = " << max_z;
    out.require(within == kSeeds, "every seed within 3 SE");
    return out;
}

// 3. A short window overstates the plateau.
Outcome windowing()
{
    Outcome out;
    const auto curve = noiseless_decay_curve(20.0);
    const auto narrow = impact::fit_decay_plateau(curve.points, 2.0);
    const auto wide = impact::fit_decay_plateau(curve.points, 20.0);
    out.detail << "plateau z<=2: " << narrow.plateau << ", z<=20: " << wide.plateau;
    out.require(narrow.plateau > wide.plateau, "plateau on [0,2] strictly above [0,20]");
    return out;
}

// 4. Autocorrelation fit, exact and Monte-Carlo.
Outcome autocorr()
{
    Outcome out;
    std::vector<double> g;
    for (int tau = 1; tau <= 50; ++tau)
        g.push_back(truncated_power_law(tau, kA, kGamma, kB));
    flow::AutocorrFitOptions fixed;
    fixed.gamma = kGamma;
    const auto exact = flow::fit_autocorr(g, {}, fixed);
    flow::AutocorrFitOptions free = fixed;
    free.free_gamma = true;
    free.gamma = 0.3;
    const auto exact_free = flow::fit_autocorr(g, {}, free);
    const double err = std::max({std::abs(exact.a - kA), std::abs(exact.b - kB), std::abs(exact_free.a - kA),
                                 std::abs(exact_free.b - kB), std::abs(exact_free.gamma - kGamma)});
    out.detail << "noiseless max error " << err << " (tol 1e-8);";
    out.require(err <= 1e-8, "noiseless recovery to 1e-8");

    // The estimator subtracts the full-sample mean, so the fit targets its
    // expectation for the panel length. The plain fit is reported alongside.
    flow::AutocorrFitOptions corrected = fixed;
    corrected.finite_sample = true;
    std::size_t within = 0, raw_within = 0;
    for (std::uint64_t seed = 1; seed <= kSeeds; ++seed) {
        const auto sim = sim::simulate(realistic(seed));
        const auto series = flow::flow_autocorrelation(flow::daily_imbalance(sim.panel), 50);
        const auto fit = flow::fit_autocorr(series, corrected);
        const auto raw = flow::fit_autocorr(series, fixed);
        const double za = std::abs(fit.a - kA) / fit.a_err;
        const double zb = std::abs(fit.b - kB) / fit.b_err;
        within += za <= 3.0 && zb <= 3.0;
        raw_within += std::abs(raw.a - kA) <= 3.0 * raw.a_err && std::abs(raw.b - kB) <= 3.0 * raw.b_err;
        out.detail << " s" << seed << ": a=" << fit.a << "+/-" << fit.a_err << " b=" << fit.b << "+/-" << fit.b_err
                   << " (plain b=" << raw.b << ")";
    }
    out.detail << "; plain fit within 3 SE for " << raw_within << "/" << kSeeds;
    out.require(within == kSeeds, "a and b within 3 SE for every seed");
    return out;
}

struct KernelRun {
    sim::GroundTruth truth;
    deconv::DeconvolutionResult result;
    double seconds = 0.0;
};

KernelRun kernel_run(std::uint64_t seed, std::size_t stocks, std::size_t replicates)
{
    Stopwatch clock;
    auto c = realistic(seed);
    c.n_stocks = stocks;
    const auto sim = sim::simulate(c);
    deconv::DeconvConfig dc;
    dc.horizon = 50;
    dc.replicates = replicates;
    dc.seed = seed;
    KernelRun run{sim.truth, deconv::deconvolve(data::clean_panel(sim.panel).panel, dc, 20), 0.0};
    run.seconds = clock.seconds();
    return run;
}

std::vector<KernelRun>& correlated_runs()
{
    static std::vector<KernelRun> runs = [] {
        std::vector<KernelRun> r;
        for (std::uint64_t seed = 1; seed <= kSeeds; ++seed)
            r.push_back(kernel_run(seed, 100, 200));
        return r;
    }();
    return runs;
}

// 5. Kernel identification.
Outcome kernel_identification()
{
    Outcome out;
    {
        auto c = noiseless(7);
        c.n_stocks = 50;
        c.n_days = 300;
        c.flow.a = 0.0;
        c.kernel.kind = sim::KernelSpec::Kind::Explicit;
        c.kernel.horizon = 10;
        c.kernel.lags = {0.5, -0.08, -0.05, -0.04, -0.03, -0.02, -0.015, -0.01, -0.008, -0.005, -0.004};
        const auto sim = sim::simulate(c);
        deconv::DeconvConfig dc;
        dc.horizon = 10;
        dc.replicates = 0;
        const auto r = deconv::deconvolve(data::clean_panel(sim.panel).panel, dc, 10);
        double worst = 0.0;
        for (std::size_t l = 0; l <= 10; ++l)
            worst = std::max(worst, std::abs(r.kernel.coefficients[l] - c.kernel.lags[l]));
        out.detail << "white/noiseless max |G - G*| = " << worst << " (tol 1e-10);";
        out.require(worst <= 1e-10, "exact identification to 1e-10");
    }
    double slowest = 0.0;
    double worst_z = 0.0;
    for (const auto& run : correlated_runs()) {
        const auto& k = run.result.kernel;
        slowest = std::max(slowest, run.seconds);
        for (std::size_t tau = 1; tau <= 50; ++tau) {
            const double z = std::abs(k.normalized[tau] - run.truth.kernel_normalized[tau]) / k.bands->stddev[tau];
            worst_z = std::max(worst_z, z);
        }
    }
    out.detail << " correlated (" << kSeeds << " seeds): max |G_norm - G*_norm|/SE_boot = " << worst_z
               << " (tol 3), slowest run " << slowest << " s";
    out.require(worst_z <= 3.0, "within 3 bootstrap SE at every tau <= 50");
    out.require(slowest < 300.0, "runtime under 5 min");
    return out;
}

// 6. Response function rises, kernel decays.
// Noise-free response implied by the true kernel and flow autocorrelation:
// R(tau) = sum_{l<=tau} sum_m G*(m) C(l - m), normalized by R(0).
std::vector<double> theoretical_response(const std::vector<double>& kernel, std::size_t horizon)
{
    auto C = [](long k) { return k == 0 ? 1.0 : truncated_power_law(std::abs(static_cast<double>(k)), kA, kGamma, kB); };
    std::vector<double> r(horizon + 1, 0.0);
    double acc = 0.0;
    for (std::size_t l = 0; l <= horizon; ++l) {
        for (std::size_t m = 0; m < kernel.size(); ++m)
            acc += kernel[m] * C(static_cast<long>(l) - static_cast<long>(m));
        r[l] = acc;
    }
    const double r0 = r[0];
    for (double& v : r)
        v /= r0;
    return r;
}

Outcome separation()
{
    Outcome out;
    const auto& runs = correlated_runs();
    const auto n = static_cast<double>(runs.size());
    std::vector<double> r_mean(21, 0.0), g_mean(51, 0.0), g_var(51, 0.0);
    for (const auto& run : runs) {
        for (std::size_t tau = 0; tau <= 20; ++tau)
            r_mean[tau] += run.result.response.normalized[tau] / n;
        for (std::size_t tau = 0; tau <= 50; ++tau) {
            g_mean[tau] += run.result.kernel.normalized[tau] / n;
            g_var[tau] += std::pow(run.result.kernel.bands->stddev[tau], 2) / (n * n);
        }
    }
    std::size_t first_drop = 0;
    for (std::size_t tau = 1; tau < 20 && first_drop == 0; ++tau)
        if (r_mean[tau + 1] < r_mean[tau])
            first_drop = tau + 1;
    const auto theory = theoretical_response(runs.front().truth.kernel, 20);
    const auto peak = static_cast<std::size_t>(std::max_element(theory.begin() + 1, theory.end()) - theory.begin());
    const double end = g_mean[50];
    const double end_se = std::sqrt(g_var[50]);

    out.detail << "seed-mean R(1)=" << r_mean[1] << " R(10)=" << r_mean[10] << " R(20)=" << r_mean[20];
    if (first_drop)
        out.detail << " first drop at tau=" << first_drop;
    out.detail << "; noise-free R(1)=" << theory[1] << " peaks at tau=" << peak << " (" << theory[peak]
               << "), R(20)=" << theory[20] << "; seed-mean G_norm(1)=" << g_mean[1] << " G_norm(50)=" << end << "+/-"
               << end_se << " vs I_inf " << kIInf;
    out.require(first_drop == 0, "seed-mean R non-decreasing on [1,20]");
    out.require(end < g_mean[1], "seed-mean kernel decreases");
    out.require(std::abs(end - kIInf) <= 3.0 * end_se, "seed-mean kernel ends within 3 SE of I_inf");
    return out;
}

// 7. Asymptote fit and its Jacobian.
Outcome asymptote()
{
    Outcome out;
    std::vector<double> y;
    for (int tau = 0; tau <= 50; ++tau)
        y.push_back(kIInf + (1.0 - kIInf) * iprop(tau, kBeta) * std::exp(-kB * tau));
    double worst = 0.0;
    for (auto mode : {deconv::KernelFitMode::OneParam, deconv::KernelFitMode::TwoParam}) {
        deconv::AsymptoteOptions opt;
        opt.mode = mode;
        opt.b_fixed = kB;
        opt.beta_fixed = kBeta;
        const auto f = deconv::fit_kernel_asymptote(y, {}, opt);
        out.require(f.converged, deconv::to_string(mode) + " converged");
        const double e = std::max({std::abs(f.i_inf - kIInf), std::abs(f.b - kB), std::abs(f.beta - kBeta)});
        out.detail << deconv::to_string(mode) << " error " << e << "; ";
        worst = std::max(worst, e);
    }
    out.require(worst <= 1e-6, "recovery to 1e-6");

    double jac = 0.0;
    const double h = 1e-6;
    for (double tau = 0.0; tau <= 50.0; tau += 0.5) {
        const auto g = deconv::modified_propagator_gradient(tau, kIInf, kB, kBeta);
        const double p[3] = {kIInf, kB, kBeta};
        for (int j = 0; j < 3; ++j) {
            double up[3] = {p[0], p[1], p[2]};
            double dn[3] = {p[0], p[1], p[2]};
            up[j] += h;
            dn[j] -= h;
            const double fd = (deconv::modified_propagator(tau, up[0], up[1], up[2]) -
                               deconv::modified_propagator(tau, dn[0], dn[1], dn[2])) / (2.0 * h);
            jac = std::max(jac, std::abs(fd - g(j)));
        }
    }
    out.detail << "max Jacobian vs finite differences " << jac << " (tol 1e-5)";
    out.require(jac <= 1e-5, "Jacobian agreement");
    return out;
}

// 8. zeta arithmetic.
Outcome zeta()
{
    Outcome out;
    const double z = impact::zeta_from_autocorr(0.25);
    out.detail << "zeta(C1=0.25) = " << z;
    out.require(z == 0.8, "exactly 0.80");
    return out;
}

// 9. Byte-identical CSV outputs on rerun.
Outcome determinism()
{
    Outcome out;
    RunConfig c;
    c.seed = 2024;
    c.threads = 2;
    c.simulate.n_stocks = 30;
    c.simulate.n_days = 300;
    c.simulate.violation_rate = 0.02;
    c.deconvolve.solver.replicates = 50;
    auto csvs = [](const RunOutput& r) {
        std::map<std::string, std::string> m;
        for (const auto& [name, text] : r.files)
            if (name.size() > 4 && name.substr(name.size() - 4) == ".csv")
                m[name] = text;
        return m;
    };
    const auto a = run_simulate(c);
    const auto b = run_simulate(c);
    std::size_t files = 0;
    bool same = csvs(a) == csvs(b) && a.files == b.files;
    files += csvs(a).size();
    const auto panel = sim::simulate([&] {
        auto s = c.simulate;
        s.seed = c.seed;
        s.threads = c.threads;
        return s;
    }()).panel;
    for (auto run : {run_estimate, run_decay, run_deconvolve}) {
        const auto x = run(c, panel);
        const auto y = run(c, panel);
        same = same && csvs(x) == csvs(y);
        files += csvs(x).size();
    }
    out.detail << files << " CSV files compared across two runs";
    out.require(same, "byte-identical CSVs");
    return out;
}

// 10. Bootstrap band width against panel breadth.
Outcome bootstrap_scaling()
{
    Outcome out;
    auto width = [](const deconv::BootstrapBands& b) {
        double w = 0.0;
        for (std::size_t tau = 1; tau < b.lo.size(); ++tau)
            w += b.hi[tau] - b.lo[tau];
        return w / static_cast<double>(b.lo.size() - 1);
    };
    const auto small = kernel_run(31, 100, 200);
    const auto large = kernel_run(31, 400, 200);
    const double ratio = width(*small.result.kernel.bands) / width(*large.result.kernel.bands);
    out.detail << "mean 5-95% width ratio (100 vs 400 stocks) = " << ratio << " (target 2, within 15%)";
    out.require(std::abs(ratio - 2.0) <= 0.15 * 2.0, "ratio within 15% of 2");
    return out;
}

} // namespace

int main(int argc, char** argv)
{
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"square-root law", square_root},
        {"decay-curve oracle", decay_oracle},
        {"windowing artifact", windowing},
        {"autocorrelation fit", autocorr},
        {"kernel identification", kernel_identification},
        {"deconvolution vs response", separation},
        {"asymptote fit", asymptote},
        {"zeta arithmetic", zeta},
        {"determinism", determinism},
        {"bootstrap calibration", bootstrap_scaling},
    };
    std::set<std::size_t> selected;
    for (int i = 1; i < argc; ++i)
        selected.insert(static_cast<std::size_t>(std::atoi(argv[i])));

    bool all = true;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        if (!selected.empty() && !selected.count(i + 1))
            continue;
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail << "exception: " << e.what();
        }
        all = all && o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << i + 1 << " (" << criteria[i].first
                  << "): " << o.detail.str() << std::endl;
    }
    return all ? 0 : 1;
}
