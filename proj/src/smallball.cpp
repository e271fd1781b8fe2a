#include "wgmc/smallball.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "wgmc/bessel.hpp"
#include "wgmc/errors.hpp"
#include "wgmc/parallel.hpp"
#include "wgmc/rng.hpp"

namespace wgmc
{
namespace
{
double lambda_at(LambdaProvider const& lambda, double beta)
{
    return lambda ? lambda(beta) : 0.0;
}

// j^2 * integral of g^-2
double bessel_weight_term(WeightFunction const& g, int d, double* root, double* integral)
{
    double const I = g.inverse_square_integral();
    if (!std::isfinite(I))
        throw DivergentIntegral("integral of g^-2 diverges");
    double const j = bessel_root(d);
    if (root)
        *root = j;
    if (integral)
        *integral = I;
    return j * j * I;
}

double c1_value(double gamma, double r, double J, double p, double f0, double lam)
{
    return (p - 1) / (4 * p * r * r) * J
           - (p + 1) / (2 * (p - 1)) * gamma * gamma * f0
           - (p - 1) / (2 * p) * lam;
}

double c2_value(double gamma, double r, double J, double q, double f0, double lam)
{
    double const q1 = q + 1;
    return q1 / q
           * (J / (2 * r * r)
              + 0.5 * gamma * gamma * f0 * (q * q + 3 * q + 1) / (q1 * q1)
              + lam);
}

// Minimizer of f on [a, b] by golden-section search.
template<class F>
double golden_min(F&& f, double a, double b, double tol)
{
    double const invphi = (std::sqrt(5.0) - 1) / 2;
    double c = b - invphi * (b - a);
    double e = a + invphi * (b - a);
    double fc = f(c);
    double fe = f(e);
    while (std::abs(b - a) > tol * std::max(1.0, std::abs(a) + std::abs(b)))
    {
        if (fc < fe)
        {
            b = e;
            e = c;
            fe = fc;
            c = b - invphi * (b - a);
            fc = f(c);
        }
        else
        {
            a = c;
            c = e;
            fc = fe;
            e = a + invphi * (b - a);
            fe = f(e);
        }
    }
    return 0.5 * (a + b);
}

double log_sum_exp(std::vector<double> const& l)
{
    double m = -INFINITY;
    for (double x : l)
        m = std::max(m, x);
    if (!std::isfinite(m))
        return -INFINITY;
    double s = 0;
    for (double x : l)
        s += std::exp(x - m);
    return m + std::log(s);
}
}  // namespace

//---------------------------------------------------------------------------//
// Decay constants
//---------------------------------------------------------------------------//

DecayBounds bounds_C1_C2(double gamma,
                         double r,
                         WeightFunction const& g,
                         int d,
                         double p,
                         double q,
                         double f0,
                         LambdaProvider const& lambda)
{
    if (!(p > 1) || !(q > 0) || !(r > 0) || !(gamma >= 0) || !(f0 >= 0))
        throw std::invalid_argument(
            "bounds_C1_C2: need p > 1, q > 0, r > 0, gamma >= 0, f0 >= 0");
    DecayBounds b;
    double const J = bessel_weight_term(g, d, &b.bessel_root, &b.g_integral);
    b.gamma = gamma;
    b.r = r;
    b.d = d;
    b.p = p;
    b.q = q;
    b.f0 = f0;
    b.g_name = g.name();
    b.lambda_p = lambda_at(lambda, 2 * p * gamma / (p - 1));
    b.lambda_q = lambda_at(lambda, gamma * q / (q + 1));
    b.C1 = c1_value(gamma, r, J, p, f0, b.lambda_p);
    b.C2 = c2_value(gamma, r, J, q, f0, b.lambda_q);
    return b;
}

DecayBounds optimized_bounds(double gamma,
                             double r,
                             WeightFunction const& g,
                             int d,
                             double f0,
                             BoundsSearch const& search,
                             LambdaProvider const& lambda)
{
    if (!(search.p_max > 1) || !(search.q_min > 0) || !(search.q_max > search.q_min))
        throw std::invalid_argument("optimized_bounds: bad search window");
    double const J = bessel_weight_term(g, d, nullptr, nullptr);

    // C1 is maximized over p = 1 + exp(s); C2 minimized over q = exp(u)
    auto neg_c1 = [&](double s) {
        double const p = 1 + std::exp(s);
        return -c1_value(gamma, r, J, p, f0, lambda_at(lambda, 2 * p * gamma / (p - 1)));
    };
    auto c2 = [&](double u) {
        double const q = std::exp(u);
        return c2_value(gamma, r, J, q, f0, lambda_at(lambda, gamma * q / (q + 1)));
    };
    double const s = golden_min(neg_c1, std::log(1e-8), std::log(search.p_max - 1),
                                search.tolerance);
    double const u = golden_min(c2, std::log(search.q_min), std::log(search.q_max),
                                search.tolerance);
    return bounds_C1_C2(gamma, r, g, d, 1 + std::exp(s), std::exp(u), f0, lambda);
}

double matching_C1(double gamma,
                   double r,
                   WeightFunction const& g,
                   int d,
                   double p,
                   double f0)
{
    if (!(p > 1) || !(r > 0))
        throw std::invalid_argument("matching_C1: need p > 1, r > 0");
    double const J = bessel_weight_term(g, d, nullptr, nullptr);
    return J / (2 * p * r * r) - (p + 1) / (2 * (p - 1)) * gamma * gamma * f0;
}

GammaDelta gamma_delta(double delta,
                       double r,
                       WeightFunction const& g,
                       int d,
                       double f0)
{
    if (!(delta > 0) || !std::isfinite(delta))
        throw std::invalid_argument("gamma_delta: delta must be positive");
    if (!(r > 0) || !(f0 > 0))
        throw std::invalid_argument("gamma_delta: need r > 0 and f0 > 0");
    double const B = bessel_weight_term(g, d, nullptr, nullptr) / (2 * r * r);

    GammaDelta out;
    out.delta = delta;
    double h = 1;  // p - 1
    double q = 1;
    // (q+1)/q - 1/p = 1/q + h/(1+h), written without cancellation
    while ((1 / q + h / (1 + h)) * B >= delta / 2)
    {
        q *= 2;
        h /= 2;
        ++out.iterations;
    }
    out.p = 1 + h;
    out.q = q;
    double const K = 0.5 * f0 * ((2 + h) / h + (q * q + 3 * q + 1) / (q * (q + 1)));
    out.gamma = 0.99 * std::sqrt(delta / (2 * K));

    auto const b = bounds_C1_C2(out.gamma, r, g, d, out.p, out.q, f0);
    out.C2 = b.C2;
    out.C1 = matching_C1(out.gamma, r, g, d, out.p, f0);
    out.gap = out.C2 - out.C1;
    out.verified = out.gap < delta;
    return out;
}

//---------------------------------------------------------------------------//
// GMC small-ball estimation
//---------------------------------------------------------------------------//

GmcSmallBallResult gmc_smallball(ExperimentConfig const& config,
                                 double gamma,
                                 double r,
                                 double eps,
                                 WeightFunction const& g,
                                 GmcSmallBallOptions const& options)
{
    config.validate();
    if (!(eps > 0) || !(r > 0) || !(gamma >= 0))
        throw std::invalid_argument("gmc_smallball: need eps > 0, r > 0, gamma >= 0");
    if (!(options.c >= 1) || options.refine == 0 || options.particles == 0
        || options.batches == 0)
        throw std::invalid_argument("gmc_smallball: bad options");

    double const dt = config.lattice(1.0).dt;
    auto const ball_slabs = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(1 / (eps * eps * dt))));
    auto const total_slabs = static_cast<std::size_t>(
        std::llround(options.c * static_cast<double>(ball_slabs)));

    GmcSmallBallResult res;
    res.eps = eps;
    res.r = r;
    res.c = options.c;
    res.horizon = static_cast<double>(ball_slabs) * dt;
    res.T = static_cast<double>(total_slabs) * dt;

    auto const spec = config.lattice(res.T);
    auto const mol = config.mollifier();

    SmallBallQuery query;
    query.d = config.d;
    query.dt = dt / static_cast<double>(options.refine);
    query.r = r;
    query.eps = eps;
    query.horizon = res.horizon;
    query.g = g;
    query.center = options.center;

    SmallBallOptions sb;
    sb.method = SmallBallMethod::splitting;
    sb.samples = options.particles;
    sb.batches = options.batches;
    sb.keep_stride = options.refine;
    sb.threads = config.threads;
    auto const ball = wiener_smallball_mc(query, sb, derive_seed(config.seed, "gmc-ball"));
    res.p0 = ball.p;
    res.p0_log_se = ball.log_se;
    res.hits = ball.hits;
    if (ball.status != RunStatus::ok || ball.conditioned.empty())
    {
        res.status = RunStatus::resolution_exhausted;
        return res;
    }

    // Keep up to `per_batch` survivors of each batch, reweighted so the
    // weighted sum stays unbiased for E_0[f; A].
    std::size_t const B = options.batches;
    std::size_t const per_batch
        = options.conditioned == 0
              ? static_cast<std::size_t>(-1)
              : std::max<std::size_t>(1, (options.conditioned + B - 1) / B);
    std::vector<std::size_t> survivors(B, 0);
    for (auto b : ball.conditioned_batch)
        ++survivors[b];
    std::vector<std::size_t> taken(B, 0);
    std::vector<PathSample> paths;
    std::vector<double> path_lw;
    for (std::size_t i = 0; i < ball.conditioned.size(); ++i)
    {
        std::size_t const b = ball.conditioned_batch[i];
        std::size_t const keep = std::min(per_batch, survivors[b]);
        if (taken[b] >= keep)
            continue;
        ++taken[b];
        auto path = ball.conditioned[i];
        path.seed = derive_seed(config.seed, "gmc-extend", i);
        if (total_slabs > ball_slabs)
            path = extend_brownian(path, total_slabs - ball_slabs, path.seed);
        paths.push_back(std::move(path));
        path_lw.push_back(std::log(ball.batch_p[b]) - std::log(static_cast<double>(keep))
                          - std::log(static_cast<double>(B)));
    }
    res.conditioned_used = paths.size();

    // log of sum_i w_i exp(gamma H_i - gamma^2/2 var_i) / Z, per replica
    std::vector<double> log_ratio(config.replicas);
    for (std::size_t rep = 0; rep < config.replicas; ++rep)
    {
        auto const noise = config.noise(spec, rep);
        HamiltonianEvaluator eval(noise, *mol);
        auto lw = parallel_map(paths.size(), config.threads, [&](std::size_t i) {
            if (gamma == 0)
                return path_lw[i];
            auto const v = eval(paths[i]);
            return path_lw[i] + gamma * v.H - 0.5 * gamma * gamma * v.var;
        });
        double log_z = 0;
        if (gamma != 0)
        {
            auto const z = partition_function(noise, *mol, gamma, config.paths,
                                              config.path_seed(rep), config.threads);
            log_z = std::log(z.value);
        }
        log_ratio[rep] = log_sum_exp(lw) - log_z;
    }

    // Average ratios relative to P0 to keep the scale near one.
    double const log_p0 = std::log(res.p0);
    res.replica_ratio.resize(config.replicas);
    for (std::size_t rep = 0; rep < config.replicas; ++rep)
        res.replica_ratio[rep] = std::exp(log_ratio[rep] - log_p0);
    auto const ms = mean_se(res.replica_ratio);
    res.conditional_factor = ms.mean;
    if (!(ms.mean > 0) || !std::isfinite(ms.mean))
    {
        res.status = RunStatus::resolution_exhausted;
        return res;
    }
    double const factor_rel = config.replicas > 1 ? ms.se / ms.mean : 0.0;
    res.log_estimate = log_p0 + std::log(ms.mean);
    res.estimate = std::exp(res.log_estimate);
    res.log_se = std::hypot(res.p0_log_se, factor_rel);
    res.se = res.estimate * res.log_se;
    return res;
}

ExponentFit exponent_fit(std::vector<std::pair<double, double>> const& series)
{
    std::vector<double> x;
    std::vector<double> y;
    for (auto const& [eps, est] : series)
    {
        if (!(eps > 0) || !(est > 0) || !std::isfinite(est))
            continue;
        x.push_back(-1 / (eps * eps));
        y.push_back(std::log(est));
    }
    if (x.size() < 3)
        throw std::invalid_argument("exponent_fit: need at least three usable points");
    auto const lf = least_squares(x, y);
    ExponentFit f;
    f.slope = lf.slope;
    f.intercept = lf.intercept;
    f.r_squared = lf.r_squared;
    f.slope_se = lf.slope_se;
    f.points = x.size();
    return f;
}

SmallBallSweep smallball_sweep(ExperimentConfig const& config,
                               double gamma,
                               double r,
                               std::vector<double> const& eps,
                               WeightFunction const& g,
                               GmcSmallBallOptions const& options)
{
    SmallBallSweep sweep;
    sweep.c = options.c;
    std::vector<std::pair<double, double>> series;
    for (double e : eps)
    {
        SweepRow row;
        row.result = gmc_smallball(config, gamma, r, e, g, options);
        row.scaled_log = -e * e * row.result.log_estimate;
        if (row.result.status == RunStatus::ok)
            series.emplace_back(e, row.result.estimate);
        sweep.rows.push_back(std::move(row));
    }
    if (series.size() >= 3)
    {
        sweep.fit = exponent_fit(series);
        sweep.fitted = true;
    }
    return sweep;
}

}  // namespace wgmc
