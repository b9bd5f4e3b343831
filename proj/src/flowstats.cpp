#include "metaimpact/flowstats.hpp"

#include "metaimpact/errors.hpp"

#include <algorithm>
#include <cmath>

namespace metaimpact::flow {

std::vector<StockDayFlow> FlowPanel::records() const
{
    std::vector<StockDayFlow> out;
    for (std::size_t s = 0; s < n_stocks(); ++s)
        for (std::size_t t = 0; t < n_days(); ++t)
            if (gross(s, t) > 0.0)
                out.push_back({stocks[s], calendar[t], net(s, t), root(s, t), adjusted(s, t)});
    return out;
}

FlowPanel daily_imbalance(const data::Panel& panel)
{
    FlowPanel f;
    f.stocks = panel.stocks();
    f.calendar = panel.calendar();
    const std::size_t S = panel.n_stocks();
    const std::size_t T = panel.n_days();
    f.net = data::StockDayGrid<double>(S, T, 0.0);
    f.gross = data::StockDayGrid<double>(S, T, 0.0);
    f.active = data::StockDayGrid<unsigned char>(S, T, 0);
    for (std::size_t s = 0; s < S; ++s)
        for (std::size_t t = 0; t < T; ++t)
            f.active(s, t) = panel.bar(s, t) != nullptr;
    for (const auto& o : panel.orders()) {
        const auto loc = panel.locate(o);
        if (!loc || (o.sign != 1 && o.sign != -1))
            continue;
        const data::DailyBar* bar = panel.bar(loc->first, loc->second);
        if (!bar || !(bar->total_volume > 0.0))
            continue;
        const double phi = o.volume / bar->total_volume;
        f.net(loc->first, loc->second) += o.sign * phi;
        f.gross(loc->first, loc->second) += phi;
    }
    f.root = data::StockDayGrid<double>(S, T, 0.0);
    for (std::size_t s = 0; s < S; ++s)
        for (std::size_t t = 0; t < T; ++t)
            f.root(s, t) = data::signed_sqrt(f.net(s, t));
    f.adjusted = f.root;
    return f;
}

void cross_sectional_adjust(FlowPanel& flows, const data::StockDayGrid<double>& betas)
{
    const std::size_t S = flows.n_stocks();
    const std::size_t T = flows.n_days();
    if (betas.n_stocks() != S || betas.n_days() != T)
        throw ConfigError("cross_sectional_adjust: beta grid does not match the flow panel");
    flows.adjusted = data::StockDayGrid<double>(S, T, 0.0);
    for (std::size_t t = 0; t < T; ++t) {
        double sum = 0.0;
        std::size_t n = 0;
        for (std::size_t s = 0; s < S; ++s)
            if (flows.active(s, t)) {
                sum += flows.root(s, t);
                ++n;
            }
        if (n == 0)
            throw DataError("cross_sectional_adjust: no active stock on " + data::format_day(flows.calendar[t]));
        const double mean = sum / static_cast<double>(n);
        for (std::size_t s = 0; s < S; ++s)
            if (flows.active(s, t))
                flows.adjusted(s, t) = flows.root(s, t) - betas(s, t) * mean;
    }
}

std::vector<double> sample_autocorrelation(std::span<const double> series, std::size_t max_lag)
{
    const std::size_t n = series.size();
    if (n == 0)
        return {};
    double mean = 0.0;
    for (double x : series)
        mean += x;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double x : series)
        var += (x - mean) * (x - mean);
    if (!(var > 0.0))
        return {};
    std::vector<double> out(max_lag, 0.0);
    for (std::size_t k = 1; k <= max_lag && k < n; ++k) {
        double acc = 0.0;
        for (std::size_t t = 0; t + k < n; ++t)
            acc += (series[t] - mean) * (series[t + k] - mean);
        out[k - 1] = acc / var;
    }
    return out;
}

AutocorrSeries flow_autocorrelation(const FlowPanel& flows, std::size_t max_lag, FlowSeries series)
{
    if (max_lag == 0 || max_lag >= flows.n_days())
        throw ConfigError("flow_autocorrelation: max_lag must lie in [1, " + std::to_string(flows.n_days()) + ")");
    const auto& grid = series == FlowSeries::SignedRoot ? flows.root : flows.adjusted;
    AutocorrSeries out;
    std::vector<std::vector<double>> per_stock;
    for (std::size_t s = 0; s < flows.n_stocks(); ++s) {
        auto c = sample_autocorrelation(std::span<const double>(grid.row(s), flows.n_days()), max_lag);
        if (c.empty()) {
            out.warnings.push_back("stock " + flows.stocks[s] + " has a constant flow series; skipped");
            continue;
        }
        per_stock.push_back(std::move(c));
    }
    if (per_stock.empty())
        throw DataError("flow_autocorrelation: every stock has a constant flow series");
    const auto n = static_cast<double>(per_stock.size());
    out.n_stocks = per_stock.size();
    out.series_length = flows.n_days();
    out.mean.assign(max_lag, 0.0);
    out.stderr_.assign(max_lag, 0.0);
    for (std::size_t k = 0; k < max_lag; ++k) {
        double m = 0.0;
        for (const auto& c : per_stock)
            m += c[k];
        m /= n;
        double ss = 0.0;
        for (const auto& c : per_stock)
            ss += (c[k] - m) * (c[k] - m);
        out.mean[k] = m;
        out.stderr_[k] = per_stock.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
    }
    if (per_stock.size() > 1) {
        const auto L = static_cast<Eigen::Index>(max_lag);
        Eigen::MatrixXd dev(static_cast<Eigen::Index>(per_stock.size()), L);
        for (std::size_t s = 0; s < per_stock.size(); ++s)
            for (Eigen::Index k = 0; k < L; ++k)
                dev(static_cast<Eigen::Index>(s), k) = per_stock[s][static_cast<std::size_t>(k)] - out.mean[static_cast<std::size_t>(k)];
        out.covariance = dev.transpose() * dev / ((n - 1.0) * n);
    }
    return out;
}

std::vector<double> expected_sample_autocorrelation(std::span<const double> g, std::size_t max_lag)
{
    const std::size_t T = g.size() + 1;
    if (max_lag >= T)
        throw ConfigError("expected_sample_autocorrelation: max_lag must be below the series length");
    auto rho = [&](std::size_t k) { return k == 0 ? 1.0 : g[k - 1]; };
    // c_t = cov(x_t, mean) in units of the variance, via prefix sums of rho
    std::vector<double> cum(T);
    double acc = 0.0;
    for (std::size_t k = 0; k < T; ++k) {
        acc += rho(k);
        cum[k] = acc;
    }
    const double n = static_cast<double>(T);
    std::vector<double> c_prefix(T + 1, 0.0);
    for (std::size_t t = 0; t < T; ++t)
        c_prefix[t + 1] = c_prefix[t] + (cum[t] + cum[T - 1 - t] - 1.0) / n;
    const double var_mean = c_prefix[T] / n;
    const double den = n * (1.0 - var_mean);
    std::vector<double> out(max_lag);
    for (std::size_t k = 1; k <= max_lag; ++k) {
        const double m = static_cast<double>(T - k);
        const double num = m * (rho(k) + var_mean) - c_prefix[T - k] - (c_prefix[T] - c_prefix[k]);
        out[k - 1] = num / den;
    }
    return out;
}

double truncated_power_law(double tau, double a, double gamma, double b)
{
    return a * std::pow(tau, -gamma) * std::exp(-b * tau);
}

Eigen::Vector3d truncated_power_law_gradient(double tau, double a, double gamma, double b)
{
    const double base = std::pow(tau, -gamma) * std::exp(-b * tau);
    const double g = a * base;
    return {base, -tau * g, -std::log(tau) * g};
}

namespace {

AutocorrFit fit_impl(std::span<const double> corr, std::span<const double> stderrs, const AutocorrFitOptions& options,
                     const Eigen::MatrixXd* lag_cov)
{
    std::size_t lags = corr.size();
    if (options.max_lag > 0)
        lags = std::min(lags, options.max_lag);
    if (lags < 5)
        throw ConfigError("fit_autocorr: need at least 5 lags");
    if (!stderrs.empty() && stderrs.size() < lags)
        throw ConfigError("fit_autocorr: fewer standard errors than lags");
    if (std::none_of(corr.begin(), corr.begin() + static_cast<std::ptrdiff_t>(lags), [](double c) { return c > 0.0; }))
        throw DataError("fit_autocorr: no positive autocorrelation to fit");

    const auto n = static_cast<Eigen::Index>(lags);
    Eigen::VectorXd tau(n);
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        tau(i) = static_cast<double>(i + 1);
        y(i) = corr[static_cast<std::size_t>(i)];
    }
    const bool weighted = !stderrs.empty() && std::all_of(stderrs.begin(), stderrs.begin() + static_cast<std::ptrdiff_t>(lags),
                                                          [](double e) { return e > 0.0 && std::isfinite(e); });
    Eigen::VectorXd w = Eigen::VectorXd::Ones(n);
    if (weighted)
        for (Eigen::Index i = 0; i < n; ++i)
            w(i) = 1.0 / (stderrs[static_cast<std::size_t>(i)] * stderrs[static_cast<std::size_t>(i)]);

    // Start from a log-linear regression on the positive lags.
    const bool free_gamma = options.free_gamma;
    double a0 = std::max(y(0), 1e-3);
    double b0 = 0.01;
    double g0 = options.gamma;
    {
        std::vector<Eigen::Index> pos;
        for (Eigen::Index i = 0; i < n; ++i)
            if (y(i) > 0.0)
                pos.push_back(i);
        const std::size_t need = free_gamma ? 3 : 2;
        if (pos.size() > need) {
            const auto m = static_cast<Eigen::Index>(pos.size());
            Eigen::MatrixXd x(m, free_gamma ? 3 : 2);
            Eigen::VectorXd rhs(m);
            for (Eigen::Index k = 0; k < m; ++k) {
                const Eigen::Index i = pos[static_cast<std::size_t>(k)];
                x(k, 0) = 1.0;
                x(k, 1) = -tau(i);
                if (free_gamma)
                    x(k, 2) = -std::log(tau(i));
                rhs(k) = std::log(y(i)) + (free_gamma ? 0.0 : options.gamma * std::log(tau(i)));
            }
            try {
                const auto lin = fit::linear_lsq(x, rhs);
                a0 = std::exp(lin.coefficients(0));
                b0 = std::max(lin.coefficients(1), 1e-4);
                if (free_gamma)
                    g0 = std::clamp(lin.coefficients(2), 0.0, 5.0);
            } catch (const DataError&) {
            }
        }
    }

    fit::FitProblem prob;
    const double gamma_fixed = options.gamma;
    if (options.finite_sample && options.series_length <= lags)
        throw ConfigError("fit_autocorr: finite-sample fit needs a series longer than the fitted lags");
    const std::size_t length = options.finite_sample ? options.series_length : 0;
    prob.model = [tau, free_gamma, gamma_fixed, length](const Eigen::VectorXd& p) {
        Eigen::VectorXd out(tau.size());
        const double g = free_gamma ? p(2) : gamma_fixed;
        if (length > 0) {
            std::vector<double> rho(length - 1);
            for (std::size_t k = 0; k < rho.size(); ++k)
                rho[k] = truncated_power_law(static_cast<double>(k + 1), p(0), g, p(1));
            const auto e = expected_sample_autocorrelation(rho, static_cast<std::size_t>(tau.size()));
            for (Eigen::Index i = 0; i < tau.size(); ++i)
                out(i) = e[static_cast<std::size_t>(i)];
            return out;
        }
        for (Eigen::Index i = 0; i < tau.size(); ++i)
            out(i) = truncated_power_law(tau(i), p(0), g, p(1));
        return out;
    };
    prob.observed = y;
    prob.weights = w;
    if (free_gamma) {
        prob.lower = Eigen::Vector3d(0.0, 0.0, 0.0);
        prob.upper = Eigen::Vector3d(std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(), 5.0);
        prob.initial = Eigen::Vector3d(a0, b0, g0);
    } else {
        prob.lower = Eigen::Vector2d(0.0, 0.0);
        prob.upper = Eigen::Vector2d::Constant(std::numeric_limits<double>::infinity());
        prob.initial = Eigen::Vector2d(a0, b0);
    }

    AutocorrFit out;
    out.fit = fit::nonlinear_lsq(prob);
    out.gamma_fixed = !free_gamma;
    out.weighting = weighted ? "inverse_variance" : "unit";
    out.a = out.fit.params(0);
    out.b = out.fit.params(1);
    out.gamma = free_gamma ? out.fit.params(2) : gamma_fixed;
    const Eigen::MatrixXd cov = weighted ? out.fit.covariance : out.fit.scaled_covariance(lags);
    out.a_err = std::sqrt(std::max(0.0, cov(0, 0)));
    out.b_err = std::sqrt(std::max(0.0, cov(1, 1)));
    out.gamma_err = free_gamma ? std::sqrt(std::max(0.0, cov(2, 2))) : 0.0;
    out.cov_ab = cov.topLeftCorner(2, 2);
    out.error_model = "fit";
    if (lag_cov && lag_cov->rows() >= n) {
        // (J'WJ)^-1 J'W S W J (J'WJ)^-1 over the parameters off their bounds
        const Eigen::MatrixXd J =
            fit::finite_difference_jacobian(prob.model, out.fit.params, prob.lower, prob.upper, prob.fd_relative_step);
        std::vector<Eigen::Index> active;
        for (Eigen::Index j = 0; j < J.cols(); ++j)
            if (!out.fit.at_lower[static_cast<std::size_t>(j)] && !out.fit.at_upper[static_cast<std::size_t>(j)])
                active.push_back(j);
        Eigen::MatrixXd cov_s = Eigen::MatrixXd::Zero(J.cols(), J.cols());
        if (!active.empty()) {
            Eigen::MatrixXd WJ(n, static_cast<Eigen::Index>(active.size()));
            for (std::size_t j = 0; j < active.size(); ++j)
                WJ.col(static_cast<Eigen::Index>(j)) = w.cwiseProduct(J.col(active[j]));
            Eigen::MatrixXd Ja(n, WJ.cols());
            for (std::size_t j = 0; j < active.size(); ++j)
                Ja.col(static_cast<Eigen::Index>(j)) = J.col(active[j]);
            const Eigen::MatrixXd bread = (Ja.transpose() * WJ).ldlt().solve(Eigen::MatrixXd::Identity(WJ.cols(), WJ.cols()));
            const Eigen::MatrixXd meat = WJ.transpose() * lag_cov->topLeftCorner(n, n) * WJ;
            const Eigen::MatrixXd c = bread * meat * bread;
            for (std::size_t i = 0; i < active.size(); ++i)
                for (std::size_t j = 0; j < active.size(); ++j)
                    cov_s(active[i], active[j]) = c(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        }
        out.a_err = std::sqrt(std::max(0.0, cov_s(0, 0)));
        out.b_err = std::sqrt(std::max(0.0, cov_s(1, 1)));
        out.gamma_err = free_gamma ? std::sqrt(std::max(0.0, cov_s(2, 2))) : 0.0;
        out.cov_ab = cov_s.topLeftCorner(2, 2);
        out.error_model = "cross_stock_sandwich";
    }
    return out;
}

} // namespace

AutocorrFit fit_autocorr(std::span<const double> corr, std::span<const double> stderrs,
                         const AutocorrFitOptions& options)
{
    return fit_impl(corr, stderrs, options, nullptr);
}

AutocorrFit fit_autocorr(const AutocorrSeries& series, const AutocorrFitOptions& options)
{
    AutocorrFitOptions opt = options;
    if (opt.finite_sample && opt.series_length == 0)
        opt.series_length = series.series_length;
    return fit_impl(series.mean, series.stderr_, opt, series.covariance.size() > 0 ? &series.covariance : nullptr);
}

} // namespace metaimpact::flow
