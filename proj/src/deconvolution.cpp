#include "metaimpact/deconvolution.hpp"

#include "metaimpact/errors.hpp"
#include "metaimpact/impact.hpp"
#include "metaimpact/random.hpp"
#include "parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace metaimpact::deconv {

using data::StockDayGrid;

void DeconvConfig::validate() const
{
    if (beta_half_width < 1)
        throw ConfigError("beta_half_width must be at least 1");
    if (min_beta_observations < 2)
        throw ConfigError("min_beta_observations must be at least 2");
    if (!(ridge >= 0.0) || !std::isfinite(ridge))
        throw ConfigError("ridge must be non-negative");
    if (alpha_regressors && alpha_lags < 1)
        throw ConfigError("alpha_lags must be at least 1 when alpha regressors are on");
}

StockDayGrid<double> stock_returns(const data::Panel& panel)
{
    StockDayGrid<double> r(panel.n_stocks(), panel.n_days(), data::kNaN);
    for (std::size_t s = 0; s < panel.n_stocks(); ++s)
        for (std::size_t t = 1; t < panel.n_days(); ++t) {
            const auto* prev = panel.bar(s, t - 1);
            const auto* cur = panel.bar(s, t);
            if (prev && cur && prev->close > 0.0 && cur->close > 0.0)
                r(s, t) = std::log(cur->close / prev->close);
        }
    return r;
}

StockDayGrid<double> volatility_grid(const data::Panel& panel)
{
    StockDayGrid<double> v(panel.n_stocks(), panel.n_days(), data::kNaN);
    for (std::size_t s = 0; s < panel.n_stocks(); ++s)
        for (std::size_t t = 0; t < panel.n_days(); ++t)
            if (const auto* b = panel.bar(s, t))
                v(s, t) = b->volatility();
    return v;
}

BetaPanel rolling_beta(const StockDayGrid<double>& returns, std::span<const double> market, std::size_t half_width,
                       std::size_t min_obs)
{
    const std::size_t S = returns.n_stocks();
    const std::size_t T = returns.n_days();
    if (market.size() != T)
        throw ConfigError("rolling_beta: market series length does not match the panel calendar");
    BetaPanel out;
    out.beta = StockDayGrid<double>(S, T, 1.0);
    out.fallback = StockDayGrid<unsigned char>(S, T, 0);
    for (std::size_t s = 0; s < S; ++s) {
        const double* r = returns.row(s);
        for (std::size_t t = 0; t < T; ++t) {
            const std::size_t lo = t >= half_width ? t - half_width : 0;
            const std::size_t hi = std::min(T - 1, t + half_width);
            double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
            std::size_t n = 0;
            for (std::size_t k = lo; k <= hi; ++k) {
                if (!std::isfinite(r[k]) || !std::isfinite(market[k]))
                    continue;
                sx += market[k];
                sy += r[k];
                sxx += market[k] * market[k];
                sxy += market[k] * r[k];
                ++n;
            }
            const double dn = static_cast<double>(n);
            const double var = n > 0 ? sxx - sx * sx / dn : 0.0;
            if (n < min_obs || !(var > 1e-300)) {
                out.fallback(s, t) = 1;
                ++out.fallback_count;
                continue;
            }
            out.beta(s, t) = (sxy - sx * sy / dn) / var;
        }
    }
    return out;
}

BetaPanel rolling_beta(const data::Panel& panel, std::size_t half_width, std::size_t min_obs)
{
    return rolling_beta(stock_returns(panel), panel.market_returns(), half_width, min_obs);
}

StockDayGrid<double> residual_returns(const StockDayGrid<double>& returns, std::span<const double> market,
                                      const BetaPanel& betas)
{
    StockDayGrid<double> out(returns.n_stocks(), returns.n_days(), data::kNaN);
    for (std::size_t s = 0; s < returns.n_stocks(); ++s)
        for (std::size_t t = 0; t < returns.n_days(); ++t)
            out(s, t) = returns(s, t) - betas.beta(s, t) * market[t];
    return out;
}

std::size_t RegressionSystem::rows() const
{
    std::size_t n = 0;
    for (const auto& b : blocks)
        n += static_cast<std::size_t>(b.design.rows());
    return n;
}

Eigen::MatrixXd RegressionSystem::stacked_design() const
{
    Eigen::MatrixXd x(static_cast<Eigen::Index>(rows()), static_cast<Eigen::Index>(columns()));
    Eigen::Index at = 0;
    for (const auto& b : blocks) {
        x.middleRows(at, b.design.rows()) = b.design;
        at += b.design.rows();
    }
    return x;
}

Eigen::VectorXd RegressionSystem::stacked_response() const
{
    Eigen::VectorXd y(static_cast<Eigen::Index>(rows()));
    Eigen::Index at = 0;
    for (const auto& b : blocks) {
        y.segment(at, b.response.size()) = b.response;
        at += b.response.size();
    }
    return y;
}

RegressionSystem build_design(const StockDayGrid<double>& adjusted_flow, const StockDayGrid<double>& sigma,
                              const StockDayGrid<double>& residual, const DeconvConfig& config)
{
    const std::size_t S = adjusted_flow.n_stocks();
    const std::size_t T = adjusted_flow.n_days();
    if (sigma.n_stocks() != S || sigma.n_days() != T || residual.n_stocks() != S || residual.n_days() != T)
        throw ConfigError("build_design: input grids differ in shape");
    const std::size_t H = config.horizon;
    if (H + 1 > T)
        throw ConfigError("build_design: horizon " + std::to_string(H) + " needs more than " + std::to_string(T) +
                          " days");
    const std::size_t A = config.alpha_regressors ? config.alpha_lags : 0;
    const std::size_t first = std::max(H, A);

    RegressionSystem sys;
    sys.kernel_columns = H + 1;
    sys.alpha_columns = A;
    const std::size_t P = sys.columns();
    for (std::size_t s = 0; s < S; ++s) {
        DesignBlock block;
        block.stock = s;
        std::vector<double> row(P);
        std::vector<double> rows_flat;
        std::vector<double> ys;
        for (std::size_t t = first; t < T; ++t) {
            const double y = residual(s, t);
            if (!std::isfinite(y))
                continue;
            bool ok = true;
            for (std::size_t l = 0; l <= H && ok; ++l) {
                row[l] = sigma(s, t - l) * adjusted_flow(s, t - l);
                ok = std::isfinite(row[l]);
            }
            for (std::size_t k = 1; k <= A && ok; ++k) {
                row[H + k] = residual(s, t - k);
                ok = std::isfinite(row[H + k]);
            }
            if (!ok)
                continue;
            block.days.push_back(t);
            rows_flat.insert(rows_flat.end(), row.begin(), row.end());
            ys.push_back(y);
        }
        if (block.days.empty())
            continue;
        const auto n = static_cast<Eigen::Index>(block.days.size());
        block.design = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
            rows_flat.data(), n, static_cast<Eigen::Index>(P));
        block.response = Eigen::Map<const Eigen::VectorXd>(ys.data(), n);
        sys.blocks.push_back(std::move(block));
    }
    if (sys.rows() < P) {
        std::vector<std::size_t> cols(P);
        for (std::size_t j = 0; j < P; ++j)
            cols[j] = j;
        throw RankDeficientError("build_design: " + std::to_string(sys.rows()) + " usable rows for " +
                                     std::to_string(P) + " regressors",
                                 std::move(cols));
    }
    return sys;
}

namespace {

void fill_cumulative(KernelEstimate& k, const Eigen::VectorXd& var)
{
    const std::size_t n = k.coefficients.size();
    k.cumulative.resize(n);
    k.cumulative_err.resize(n);
    k.normalized.resize(n);
    k.normalized_err.resize(n);
    double cum = 0.0;
    double cum_var = 0.0;
    for (std::size_t l = 0; l < n; ++l) {
        cum += k.coefficients[l];
        cum_var += var(static_cast<Eigen::Index>(l));
        k.cumulative[l] = cum;
        k.cumulative_err[l] = std::sqrt(cum_var);
    }
    const double g0 = k.cumulative[0];
    for (std::size_t l = 0; l < n; ++l) {
        k.normalized[l] = g0 != 0.0 ? k.cumulative[l] / g0 : data::kNaN;
        k.normalized_err[l] = g0 != 0.0 ? k.cumulative_err[l] / std::abs(g0) : data::kNaN;
    }
}

} // namespace

KernelEstimate solve_kernel(const RegressionSystem& system, double ridge)
{
    if (!(ridge >= 0.0))
        throw ConfigError("solve_kernel: ridge must be non-negative");
    Eigen::MatrixXd x = system.stacked_design();
    Eigen::VectorXd y = system.stacked_response();
    const auto P = static_cast<Eigen::Index>(system.columns());
    const auto m = x.rows();
    if (ridge > 0.0) {
        x.conservativeResize(m + P, Eigen::NoChange);
        y.conservativeResize(m + P);
        x.bottomRows(P) = std::sqrt(ridge) * Eigen::MatrixXd::Identity(P, P);
        y.tail(P).setZero();
    }
    fit::LinearFit lin;
    try {
        lin = fit::linear_lsq(x, y);
    } catch (const RankDeficientError& e) {
        std::ostringstream msg;
        msg << "solve_kernel: collinear regressors at";
        for (auto c : e.columns()) {
            if (c < system.kernel_columns)
                msg << " lag " << c;
            else
                msg << " alpha lag " << (c - system.kernel_columns + 1);
        }
        throw RankDeficientError(msg.str(), e.columns());
    }

    KernelEstimate k;
    const auto K = static_cast<Eigen::Index>(system.kernel_columns);
    k.coefficients.assign(lin.coefficients.data(), lin.coefficients.data() + K);
    k.coefficient_err.assign(lin.standard_errors.data(), lin.standard_errors.data() + K);
    k.alpha_coefficients.assign(lin.coefficients.data() + K, lin.coefficients.data() + P);
    k.rows = static_cast<std::size_t>(m);
    k.residual_variance = lin.dof > 0 ? lin.rss / static_cast<double>(lin.dof) : 0.0;
    k.ridge = ridge;
    fill_cumulative(k, lin.covariance.diagonal().head(K));
    return k;
}

std::string to_string(KernelFitMode mode)
{
    switch (mode) {
    case KernelFitMode::OneParam:
        return "one_param";
    case KernelFitMode::TwoParam:
        return "two_param";
    case KernelFitMode::BZeroFreeBeta:
        return "b_zero_free_beta";
    }
    return "one_param";
}

KernelFitMode parse_fit_mode(std::string_view text)
{
    if (text == "one_param")
        return KernelFitMode::OneParam;
    if (text == "two_param")
        return KernelFitMode::TwoParam;
    if (text == "b_zero_free_beta")
        return KernelFitMode::BZeroFreeBeta;
    throw ConfigError("unknown kernel fit mode '" + std::string(text) + "'");
}

double modified_propagator(double tau, double i_inf, double b, double beta)
{
    return i_inf + (1.0 - i_inf) * impact::propagator_decay(tau, beta) * std::exp(-b * tau);
}

Eigen::Vector3d modified_propagator_gradient(double tau, double i_inf, double b, double beta)
{
    const double prop = impact::propagator_decay(tau, beta);
    const double damp = std::exp(-b * tau);
    return {1.0 - prop * damp, -(1.0 - i_inf) * prop * tau * damp,
            (1.0 - i_inf) * damp * impact::propagator_decay_dbeta(tau, beta)};
}

KernelFitParams fit_kernel_asymptote(std::span<const double> normalized, std::span<const double> errors,
                                     const AsymptoteOptions& options)
{
    if (normalized.empty() || std::abs(normalized[0] - 1.0) > 1e-9)
        throw ConfigError("fit_kernel_asymptote: kernel must be normalized to 1 at tau = 0");
    if (!errors.empty() && errors.size() != normalized.size())
        throw ConfigError("fit_kernel_asymptote: errors and kernel differ in length");
    if (!(options.b_fixed >= 0.0) || !(options.beta_fixed >= 0.0 && options.beta_fixed <= 1.0))
        throw ConfigError("fit_kernel_asymptote: fixed b must be >= 0 and beta in [0, 1]");

    std::vector<double> taus, ys, es;
    for (std::size_t t = std::max<std::size_t>(options.first_tau, 0); t < normalized.size(); ++t) {
        if (!std::isfinite(normalized[t]))
            continue;
        taus.push_back(static_cast<double>(t));
        ys.push_back(normalized[t]);
        es.push_back(errors.empty() ? 0.0 : errors[t]);
    }
    const std::size_t n_free = options.mode == KernelFitMode::OneParam ? 1 : 2;
    if (taus.size() <= n_free)
        throw ConfigError("fit_kernel_asymptote: too few kernel points");
    const bool weighted = !errors.empty() && std::all_of(es.begin(), es.end(), [](double e) { return e > 0.0 && std::isfinite(e); });
    const auto n = static_cast<Eigen::Index>(taus.size());
    Eigen::VectorXd tau = Eigen::Map<const Eigen::VectorXd>(taus.data(), n);
    Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(ys.data(), n);
    Eigen::VectorXd w = Eigen::VectorXd::Ones(n);
    if (weighted)
        for (Eigen::Index i = 0; i < n; ++i)
            w(i) = 1.0 / (es[static_cast<std::size_t>(i)] * es[static_cast<std::size_t>(i)]);

    // Initial guesses: plateau from the last ten points, b from a log-linear tail regression.
    const std::size_t tail = std::min<std::size_t>(10, ys.size());
    double i0 = 0.0;
    for (std::size_t i = ys.size() - tail; i < ys.size(); ++i)
        i0 += ys[i];
    i0 = std::clamp(i0 / static_cast<double>(tail), 0.0, 0.99);
    double b0 = 0.01;
    {
        double sxx = 0.0, sxy = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double excess = (y(i) - i0) / ((1.0 - i0) * impact::propagator_decay(tau(i), options.beta_fixed));
            if (excess > 0.0 && excess < 1.0) {
                sxx += tau(i) * tau(i);
                sxy += tau(i) * std::log(excess);
            }
        }
        if (sxx > 0.0)
            b0 = std::max(1e-4, -sxy / sxx);
    }

    const auto mode = options.mode;
    const double b_fixed = options.b_fixed;
    const double beta_fixed = options.beta_fixed;
    auto unpack = [mode, b_fixed, beta_fixed](const Eigen::VectorXd& p) -> Eigen::Vector3d {
        switch (mode) {
        case KernelFitMode::OneParam:
            return {p(0), b_fixed, beta_fixed};
        case KernelFitMode::TwoParam:
            return {p(0), p(1), beta_fixed};
        case KernelFitMode::BZeroFreeBeta:
            return {p(0), 0.0, p(1)};
        }
        return {p(0), b_fixed, beta_fixed};
    };
    const int free_col = mode == KernelFitMode::TwoParam ? 1 : 2;

    fit::FitProblem prob;
    prob.model = [tau, unpack](const Eigen::VectorXd& p) {
        const Eigen::Vector3d q = unpack(p);
        Eigen::VectorXd out(tau.size());
        for (Eigen::Index i = 0; i < tau.size(); ++i)
            out(i) = modified_propagator(tau(i), q(0), q(1), q(2));
        return out;
    };
    prob.jacobian = [tau, unpack, mode, free_col](const Eigen::VectorXd& p) {
        const Eigen::Vector3d q = unpack(p);
        Eigen::MatrixXd j(tau.size(), p.size());
        for (Eigen::Index i = 0; i < tau.size(); ++i) {
            const Eigen::Vector3d g = modified_propagator_gradient(tau(i), q(0), q(1), q(2));
            j(i, 0) = g(0);
            if (mode != KernelFitMode::OneParam)
                j(i, 1) = g(free_col);
        }
        return j;
    };
    prob.observed = y;
    prob.weights = w;
    switch (mode) {
    case KernelFitMode::OneParam:
        prob.lower = Eigen::VectorXd::Constant(1, 0.0);
        prob.upper = Eigen::VectorXd::Constant(1, 1.0);
        prob.initial = Eigen::VectorXd::Constant(1, i0);
        break;
    case KernelFitMode::TwoParam:
        prob.lower = Eigen::Vector2d(0.0, 0.0);
        prob.upper = Eigen::Vector2d(1.0, std::numeric_limits<double>::infinity());
        prob.initial = Eigen::Vector2d(i0, b0);
        break;
    case KernelFitMode::BZeroFreeBeta:
        prob.lower = Eigen::Vector2d(0.0, 0.0);
        prob.upper = Eigen::Vector2d(1.0, 1.0);
        prob.initial = Eigen::Vector2d(i0, 0.22);
        break;
    }

    KernelFitParams out;
    out.mode = mode;
    out.fit = fit::nonlinear_lsq(prob);
    out.converged = out.fit.converged;
    out.weighting = weighted ? "inverse_variance" : "unit";
    const Eigen::Vector3d q = unpack(out.fit.params);
    out.i_inf = q(0);
    out.b = q(1);
    out.beta = q(2);
    const Eigen::MatrixXd cov = weighted ? out.fit.covariance : out.fit.scaled_covariance(taus.size());
    out.i_inf_err = std::sqrt(std::max(0.0, cov(0, 0)));
    if (mode == KernelFitMode::TwoParam)
        out.b_err = std::sqrt(std::max(0.0, cov(1, 1)));
    if (mode == KernelFitMode::BZeroFreeBeta)
        out.beta_err = std::sqrt(std::max(0.0, cov(1, 1)));
    return out;
}

ResponseFunction response_function(const StockDayGrid<double>& adjusted_flow, const StockDayGrid<double>& residual,
                                   std::size_t max_lag)
{
    const std::size_t S = adjusted_flow.n_stocks();
    const std::size_t T = adjusted_flow.n_days();
    if (max_lag >= T)
        throw ConfigError("response_function: max_lag " + std::to_string(max_lag) + " beyond the " +
                          std::to_string(T) + "-day panel");
    ResponseFunction out;
    out.raw.resize(max_lag + 1);
    double cum = 0.0;
    for (std::size_t lag = 0; lag <= max_lag; ++lag) {
        double acc = 0.0;
        std::size_t n = 0;
        for (std::size_t s = 0; s < S; ++s)
            for (std::size_t t = 0; t + lag < T; ++t) {
                const double f = adjusted_flow(s, t);
                const double r = residual(s, t + lag);
                if (std::isfinite(f) && std::isfinite(r)) {
                    acc += f * r;
                    ++n;
                }
            }
        cum += n > 0 ? acc / static_cast<double>(n) : 0.0;
        out.raw[lag] = cum;
    }
    if (!(std::abs(out.raw[0]) > 0.0) || !std::isfinite(out.raw[0]))
        throw DataError("response_function: zero flow-return covariance at lag 0; normalization undefined");
    out.normalized.resize(out.raw.size());
    for (std::size_t i = 0; i < out.raw.size(); ++i)
        out.normalized[i] = out.raw[i] / out.raw[0];
    return out;
}

namespace {

// Per-stock QR compression: the least-squares problem over any multiset of
// stocks equals the one over the stacked (R_s, Q_s^T y_s) blocks.
struct CompressedBlock {
    Eigen::MatrixXd r;
    Eigen::VectorXd qty;
};

CompressedBlock compress(const DesignBlock& block)
{
    CompressedBlock c;
    const auto p = block.design.cols();
    if (block.design.rows() <= p) {
        c.r = block.design;
        c.qty = block.response;
        return c;
    }
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(block.design);
    c.r = qr.matrixQR().topRows(p).triangularView<Eigen::Upper>();
    c.qty = (qr.householderQ().transpose() * block.response).head(p);
    return c;
}

double quantile(std::vector<double> v, double q)
{
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return v[lo] + frac * (v[hi] - v[lo]);
}

} // namespace

BootstrapBands bootstrap_kernel(const RegressionSystem& system, const DeconvConfig& config)
{
    BootstrapBands bands;
    bands.replicates = config.replicates;
    if (config.replicates == 0)
        return bands;
    const std::size_t n_blocks = system.blocks.size();
    if (n_blocks < 2)
        throw ConfigError("bootstrap_kernel: need at least 2 stocks");
    const auto P = static_cast<Eigen::Index>(system.columns());
    const std::size_t K = system.kernel_columns;

    std::vector<CompressedBlock> comp(n_blocks);
    detail::parallel_for(n_blocks, config.threads, [&](std::size_t i) { comp[i] = compress(system.blocks[i]); });

    std::vector<std::vector<double>> draws(config.replicates);
    detail::parallel_for(config.replicates, config.threads, [&](std::size_t rep) {
        std::vector<std::size_t> pick(n_blocks);
        if (rep == 0) {
            for (std::size_t i = 0; i < n_blocks; ++i)
                pick[i] = i;
        } else {
            auto rng = make_rng(config.seed, Stream::Bootstrap, rep);
            std::uniform_int_distribution<std::size_t> u(0, n_blocks - 1);
            for (auto& p : pick)
                p = u(rng);
        }
        Eigen::Index rows = config.ridge > 0.0 ? P : 0;
        for (auto i : pick)
            rows += comp[i].r.rows();
        Eigen::MatrixXd x(rows, P);
        Eigen::VectorXd y(rows);
        Eigen::Index at = 0;
        for (auto i : pick) {
            x.middleRows(at, comp[i].r.rows()) = comp[i].r;
            y.segment(at, comp[i].qty.size()) = comp[i].qty;
            at += comp[i].r.rows();
        }
        if (config.ridge > 0.0) {
            x.bottomRows(P) = std::sqrt(config.ridge) * Eigen::MatrixXd::Identity(P, P);
            y.tail(P).setZero();
        }
        const Eigen::VectorXd coef = x.colPivHouseholderQr().solve(y);
        std::vector<double> norm(K);
        double cum = 0.0;
        for (std::size_t l = 0; l < K; ++l) {
            cum += coef(static_cast<Eigen::Index>(l));
            norm[l] = cum;
        }
        const double g0 = norm[0];
        for (auto& v : norm)
            v = g0 != 0.0 ? v / g0 : data::kNaN;
        draws[rep] = std::move(norm);
    });

    bands.mean.resize(K);
    bands.stddev.resize(K);
    bands.lo.resize(K);
    bands.hi.resize(K);
    const auto R = static_cast<double>(config.replicates);
    for (std::size_t l = 0; l < K; ++l) {
        std::vector<double> v(config.replicates);
        for (std::size_t r = 0; r < config.replicates; ++r)
            v[r] = draws[r][l];
        double m = 0.0;
        for (double x : v)
            m += x;
        m /= R;
        double ss = 0.0;
        for (double x : v)
            ss += (x - m) * (x - m);
        bands.mean[l] = m;
        bands.stddev[l] = config.replicates > 1 ? std::sqrt(ss / (R - 1.0)) : 0.0;
        bands.lo[l] = quantile(v, 0.05);
        bands.hi[l] = quantile(v, 0.95);
    }
    return bands;
}

DeconvolutionResult deconvolve(const data::Panel& panel, const DeconvConfig& config, std::size_t response_lags)
{
    config.validate();
    if (config.horizon + 1 >= panel.n_days())
        throw ConfigError("horizon " + std::to_string(config.horizon) + " is too long for a " +
                          std::to_string(panel.n_days()) + "-day panel");
    if (response_lags >= panel.n_days())
        throw ConfigError("response lags exceed the panel length");

    DeconvolutionResult out;
    out.flows = flow::daily_imbalance(panel);
    const auto returns = stock_returns(panel);
    out.betas = rolling_beta(returns, panel.market_returns(), config.beta_half_width, config.min_beta_observations);
    flow::cross_sectional_adjust(out.flows, out.betas.beta);
    const auto residual = residual_returns(returns, panel.market_returns(), out.betas);
    const auto sigma = volatility_grid(panel);
    out.system = build_design(out.flows.adjusted, sigma, residual, config);
    out.kernel = solve_kernel(out.system, config.ridge);
    if (config.replicates > 0)
        out.kernel.bands = bootstrap_kernel(out.system, config);
    out.response = response_function(out.flows.adjusted, residual, response_lags);
    return out;
}

} // namespace metaimpact::deconv
