#include "metaimpact/config.hpp"

#include "metaimpact/errors.hpp"

#include <set>
#include <type_traits>

namespace metaimpact {

namespace {

/// Reads known keys of one JSON object and rejects the rest.
class Fields {
public:
    Fields(const Json& j, std::string path) : j_(j), path_(std::move(path))
    {
        if (!j_.is_object())
            throw ConfigError("config section '" + display() + "' must be an object");
    }

    template <typename T>
    Fields& opt(const char* key, T& out)
    {
        const auto it = j_.find(key);
        if (it == j_.end())
            return *this;
        seen_.insert(key);
        read(*it, name(key), out);
        return *this;
    }

    template <typename F>
    Fields& sub(const char* key, F&& f)
    {
        const auto it = j_.find(key);
        if (it == j_.end())
            return *this;
        seen_.insert(key);
        Fields inner(*it, name(key));
        f(inner);
        inner.done();
        return *this;
    }

    template <typename F>
    Fields& custom(const char* key, F&& f)
    {
        const auto it = j_.find(key);
        if (it == j_.end())
            return *this;
        seen_.insert(key);
        f(*it, name(key));
        return *this;
    }

    void done() const
    {
        for (const auto& item : j_.items())
            if (!seen_.count(item.key()))
                throw ConfigError("unknown config key '" + name(item.key().c_str()) + "'");
    }

private:
    std::string display() const { return path_.empty() ? "<root>" : path_; }
    std::string name(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

    template <typename T>
    static void read(const Json& v, const std::string& key, T& out)
    {
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean())
                throw ConfigError("config key '" + key + "' must be a boolean");
            out = v.get<bool>();
        } else if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
                throw ConfigError("config key '" + key + "' must be a non-negative integer");
            out = v.get<T>();
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!v.is_number())
                throw ConfigError("config key '" + key + "' must be a number");
            out = v.get<T>();
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string())
                throw ConfigError("config key '" + key + "' must be a string");
            out = v.get<std::string>();
        } else {
            if (!v.is_array())
                throw ConfigError("config key '" + key + "' must be an array");
            out.clear();
            for (std::size_t i = 0; i < v.size(); ++i) {
                typename T::value_type x{};
                read(v[i], key + "[" + std::to_string(i) + "]", x);
                out.push_back(std::move(x));
            }
        }
    }

    const Json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

sim::StartPlacement parse_placement(const std::string& text)
{
    if (text == "uniform")
        return sim::StartPlacement::Uniform;
    if (text == "z_grid")
        return sim::StartPlacement::ZGrid;
    throw ConfigError("unknown start placement '" + text + "' (uniform, z_grid)");
}

impact::DecayClock parse_clock(const std::string& text)
{
    if (text == "volume")
        return impact::DecayClock::Volume;
    if (text == "wall_clock")
        return impact::DecayClock::WallClock;
    throw ConfigError("unknown decay clock '" + text + "' (volume, wall_clock)");
}

void read_pareto(Fields& f, sim::TruncatedPareto& p)
{
    f.opt("exponent", p.exponent).opt("lower", p.lower).opt("upper", p.upper);
}

Json pareto_json(const sim::TruncatedPareto& p)
{
    return Json{{"exponent", p.exponent}, {"lower", p.lower}, {"upper", p.upper}};
}

void read_sim(Fields& f, sim::SimConfig& c)
{
    f.opt("n_stocks", c.n_stocks)
        .opt("n_days", c.n_days)
        .opt("start_date", c.start_date)
        .opt("beta_capm", c.beta_capm)
        .opt("sigma_median", c.sigma_median)
        .opt("sigma_stock_dispersion", c.sigma_stock_dispersion)
        .opt("sigma_day_dispersion", c.sigma_day_dispersion)
        .opt("volume_median", c.volume_median)
        .opt("volume_dispersion", c.volume_dispersion)
        .opt("violation_rate", c.violation_rate)
        .opt("tranche_labels", c.tranche_labels);
    f.sub("flow", [&](Fields& g) {
        g.opt("a", c.flow.a)
            .opt("gamma", c.flow.gamma)
            .opt("b", c.flow.b)
            .opt("intensity", c.flow.intensity)
            .opt("single_order_days", c.flow.single_order_days)
            .opt("z_grid", c.flow.z_grid);
        g.sub("daily_fraction", [&](Fields& h) { read_pareto(h, c.flow.daily_fraction); });
        g.sub("participation", [&](Fields& h) { read_pareto(h, c.flow.participation); });
        g.custom("placement", [&](const Json& v, const std::string& key) {
            if (!v.is_string())
                throw ConfigError("config key '" + key + "' must be a string");
            c.flow.placement = parse_placement(v.get<std::string>());
        });
    });
    f.sub("propagator", [&](Fields& g) { g.opt("beta", c.propagator.beta).opt("prefactor", c.propagator.prefactor); });
    f.sub("kernel", [&](Fields& g) {
        g.custom("kind", [&](const Json& v, const std::string& key) {
            const std::string s = v.is_string() ? v.get<std::string>() : "";
            if (s == "propagator")
                c.kernel.kind = sim::KernelSpec::Kind::Propagator;
            else if (s == "explicit")
                c.kernel.kind = sim::KernelSpec::Kind::Explicit;
            else
                throw ConfigError("config key '" + key + "' must be \"propagator\" or \"explicit\"");
        });
        g.opt("i_inf", c.kernel.i_inf).opt("b", c.kernel.b).opt("horizon", c.kernel.horizon).opt("lags", c.kernel.lags);
    });
    f.sub("noise", [&](Fields& g) {
        g.opt("xi_scale", c.noise.xi_scale).opt("market_vol", c.noise.market_vol).opt("intraday", c.noise.intraday);
    });
}

Json sim_json(const sim::SimConfig& c)
{
    Json flow{{"a", c.flow.a},
              {"gamma", c.flow.gamma},
              {"b", c.flow.b},
              {"intensity", c.flow.intensity},
              {"single_order_days", c.flow.single_order_days},
              {"daily_fraction", pareto_json(c.flow.daily_fraction)},
              {"participation", pareto_json(c.flow.participation)},
              {"placement", to_string(c.flow.placement)},
              {"z_grid", c.flow.z_grid}};
    Json kernel{{"kind", c.kernel.kind == sim::KernelSpec::Kind::Explicit ? "explicit" : "propagator"},
                {"i_inf", c.kernel.i_inf},
                {"b", c.kernel.b},
                {"horizon", c.kernel.horizon},
                {"lags", c.kernel.lags}};
    return Json{{"n_stocks", c.n_stocks},
                {"n_days", c.n_days},
                {"start_date", c.start_date},
                {"flow", flow},
                {"propagator", {{"beta", c.propagator.beta}, {"prefactor", c.propagator.prefactor}}},
                {"kernel", kernel},
                {"noise", {{"xi_scale", c.noise.xi_scale}, {"market_vol", c.noise.market_vol}, {"intraday", c.noise.intraday}}},
                {"beta_capm", c.beta_capm},
                {"sigma_median", c.sigma_median},
                {"sigma_stock_dispersion", c.sigma_stock_dispersion},
                {"sigma_day_dispersion", c.sigma_day_dispersion},
                {"volume_median", c.volume_median},
                {"volume_dispersion", c.volume_dispersion},
                {"violation_rate", c.violation_rate},
                {"tranche_labels", c.tranche_labels}};
}

} // namespace

std::string to_string(sim::StartPlacement placement)
{
    return placement == sim::StartPlacement::ZGrid ? "z_grid" : "uniform";
}

std::string to_string(impact::DecayClock clock)
{
    return clock == impact::DecayClock::WallClock ? "wall_clock" : "volume";
}

impact::DecayOptions DecayRunOptions::options(impact::DecayHorizon horizon, double zeta_value) const
{
    impact::DecayOptions o;
    o.horizon = horizon;
    o.clock = clock;
    o.n_bins = n_bins;
    o.linear_limit = linear_limit;
    o.linear_bins = linear_bins;
    o.zeta = horizon == impact::DecayHorizon::NextDay ? zeta_value : 1.0;
    return o;
}

void RunConfig::normalize()
{
    simulate.seed = seed;
    simulate.threads = threads;
    deconvolve.solver.seed = seed;
    deconvolve.solver.threads = threads;
}

void RunConfig::validate() const
{
    if (threads == 0)
        throw ConfigError("threads must be at least 1");
    if (estimate.impact_bins < 2)
        throw ConfigError("estimate.impact_bins must be at least 2");
    if (!(estimate.fit_phi_lo > 0.0) || !(estimate.fit_phi_hi > estimate.fit_phi_lo))
        throw ConfigError("estimate.fit_phi_lo/fit_phi_hi must satisfy 0 < lo < hi");
    if (estimate.autocorr_lags < 5)
        throw ConfigError("estimate.autocorr_lags must be at least 5");
    if (decay.zeta && !(*decay.zeta > 0.0))
        throw ConfigError("decay.zeta must be positive");
    for (double w : decay.plateau_windows)
        if (!(w > 0.0))
            throw ConfigError("decay.plateau_windows must be positive");
    if (deconvolve.response_lags < 1)
        throw ConfigError("deconvolve.response_lags must be at least 1");
    deconvolve.solver.validate();
}

RunConfig config_from_json(const Json& j)
{
    RunConfig c;
    Fields root(j, "");
    root.opt("seed", c.seed).opt("threads", c.threads).opt("input", c.input).opt("tranche", c.tranche);
    root.sub("simulate", [&](Fields& f) { read_sim(f, c.simulate); });
    root.sub("cleaning", [&](Fields& f) {
        f.opt("max_participation", c.cleaning.max_participation)
            .opt("max_daily_fraction", c.cleaning.max_daily_fraction)
            .opt("min_duration", c.cleaning.min_duration);
    });
    root.sub("estimate", [&](Fields& f) {
        f.opt("impact_bins", c.estimate.impact_bins)
            .opt("fit_phi_lo", c.estimate.fit_phi_lo)
            .opt("fit_phi_hi", c.estimate.fit_phi_hi)
            .opt("autocorr_lags", c.estimate.autocorr_lags)
            .opt("free_gamma", c.estimate.free_gamma)
            .opt("autocorr_finite_sample", c.estimate.autocorr_finite_sample)
            .opt("gamma", c.estimate.gamma)
            .opt("next_close_bins", c.estimate.next_close_bins);
    });
    root.sub("decay", [&](Fields& f) {
        f.custom("clock", [&](const Json& v, const std::string& key) {
            if (!v.is_string())
                throw ConfigError("config key '" + key + "' must be a string");
            c.decay.clock = parse_clock(v.get<std::string>());
        });
        f.custom("zeta", [&](const Json& v, const std::string& key) {
            if (v.is_null())
                c.decay.zeta.reset();
            else if (v.is_number())
                c.decay.zeta = v.get<double>();
            else
                throw ConfigError("config key '" + key + "' must be a number or null");
        });
        f.opt("n_bins", c.decay.n_bins)
            .opt("linear_limit", c.decay.linear_limit)
            .opt("linear_bins", c.decay.linear_bins)
            .opt("initial_beta", c.decay.initial_beta)
            .opt("plateau_windows", c.decay.plateau_windows);
    });
    root.sub("deconvolve", [&](Fields& f) {
        auto& s = c.deconvolve.solver;
        f.opt("horizon", s.horizon)
            .opt("replicates", s.replicates)
            .opt("beta_half_width", s.beta_half_width)
            .opt("min_beta_observations", s.min_beta_observations)
            .opt("alpha_regressors", s.alpha_regressors)
            .opt("alpha_lags", s.alpha_lags)
            .opt("ridge", s.ridge)
            .opt("response_lags", c.deconvolve.response_lags)
            .opt("b_fixed", c.deconvolve.b_fixed)
            .opt("beta_fixed", c.deconvolve.beta_fixed);
        f.custom("fit_modes", [&](const Json& v, const std::string& key) {
            if (!v.is_array())
                throw ConfigError("config key '" + key + "' must be an array of mode names");
            c.deconvolve.fit_modes.clear();
            for (const auto& m : v) {
                if (!m.is_string())
                    throw ConfigError("config key '" + key + "' must be an array of mode names");
                c.deconvolve.fit_modes.push_back(deconv::parse_fit_mode(m.get<std::string>()));
            }
        });
    });
    root.done();
    c.normalize();
    return c;
}

Json to_json(const RunConfig& c)
{
    const auto& s = c.deconvolve.solver;
    Json modes = Json::array();
    for (auto m : c.deconvolve.fit_modes)
        modes.push_back(deconv::to_string(m));
    return Json{
        {"seed", c.seed},
        {"threads", c.threads},
        {"input", c.input},
        {"tranche", c.tranche},
        {"simulate", sim_json(c.simulate)},
        {"cleaning",
         {{"max_participation", c.cleaning.max_participation},
          {"max_daily_fraction", c.cleaning.max_daily_fraction},
          {"min_duration", c.cleaning.min_duration}}},
        {"estimate",
         {{"impact_bins", c.estimate.impact_bins},
          {"fit_phi_lo", c.estimate.fit_phi_lo},
          {"fit_phi_hi", c.estimate.fit_phi_hi},
          {"autocorr_lags", c.estimate.autocorr_lags},
          {"free_gamma", c.estimate.free_gamma},
          {"autocorr_finite_sample", c.estimate.autocorr_finite_sample},
          {"gamma", c.estimate.gamma},
          {"next_close_bins", c.estimate.next_close_bins}}},
        {"decay",
         {{"clock", to_string(c.decay.clock)},
          {"n_bins", c.decay.n_bins},
          {"linear_limit", c.decay.linear_limit},
          {"linear_bins", c.decay.linear_bins},
          {"zeta", c.decay.zeta ? Json(*c.decay.zeta) : Json(nullptr)},
          {"initial_beta", c.decay.initial_beta},
          {"plateau_windows", c.decay.plateau_windows}}},
        {"deconvolve",
         {{"horizon", s.horizon},
          {"replicates", s.replicates},
          {"beta_half_width", s.beta_half_width},
          {"min_beta_observations", s.min_beta_observations},
          {"alpha_regressors", s.alpha_regressors},
          {"alpha_lags", s.alpha_lags},
          {"ridge", s.ridge},
          {"response_lags", c.deconvolve.response_lags},
          {"fit_modes", modes},
          {"b_fixed", c.deconvolve.b_fixed},
          {"beta_fixed", c.deconvolve.beta_fixed}}},
    };
}

Json to_json(const sim::GroundTruth& t)
{
    Json violations = Json::array();
    for (const auto& v : t.violations)
        violations.push_back({{"index", v.index}, {"filter", v.filter}});
    return Json{{"kernel", t.kernel},
                {"kernel_cumulative", t.kernel_cumulative},
                {"kernel_normalized", t.kernel_normalized},
                {"target_autocorr", t.target_autocorr},
                {"latent_autocorr", t.latent_autocorr},
                {"activity", t.activity},
                {"implied_zeta", t.implied_zeta},
                {"n_orders", t.n_orders},
                {"violations", violations}};
}

Json to_json(const data::RejectionReport& report)
{
    Json j = Json::object();
    for (const auto& [k, v] : report)
        j[k] = v;
    return j;
}

} // namespace metaimpact
