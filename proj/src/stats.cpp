#include "wgmc/stats.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "wgmc/rng.hpp"

namespace wgmc
{
MeanSe mean_se(std::span<double const> xs)
{
    MeanSe r;
    r.n = xs.size();
    if (xs.empty())
        return r;
    // Welford
    double mean = 0, m2 = 0;
    std::size_t k = 0;
    for (double x : xs)
    {
        ++k;
        double delta = x - mean;
        mean += delta / static_cast<double>(k);
        m2 += delta * (x - mean);
    }
    r.mean = mean;
    if (k > 1)
    {
        r.sd = std::sqrt(m2 / static_cast<double>(k - 1));
        r.se = r.sd / std::sqrt(static_cast<double>(k));
    }
    return r;
}

MeanSe paired_difference(std::span<double const> xs,
                         std::span<double const> ys)
{
    if (xs.size() != ys.size())
        throw std::invalid_argument("paired_difference: size mismatch");
    std::vector<double> d(xs.size());
    for (std::size_t i = 0; i < d.size(); ++i)
    {
        d[i] = xs[i] - ys[i];
    }
    return mean_se(d);
}

double z_score(double a, double se_a, double b, double se_b)
{
    double const se = std::hypot(se_a, se_b);
    if (se == 0)
        return a == b ? 0.0 : std::copysign(INFINITY, a - b);
    return (a - b) / se;
}

MeanSe proportion(std::size_t hits, std::size_t n)
{
    MeanSe r;
    r.n = n;
    if (n == 0)
        return r;
    double const p = static_cast<double>(hits) / static_cast<double>(n);
    r.mean = p;
    r.sd = std::sqrt(p * (1 - p));
    r.se = r.sd / std::sqrt(static_cast<double>(n));
    return r;
}

ConfidenceInterval bootstrap_mean_ci(std::span<double const> xs,
                                     std::size_t resamples,
                                     double level,
                                     std::uint64_t seed)
{
    if (xs.empty() || resamples == 0)
        return {};
    Stream stream(seed);
    std::vector<double> means(resamples);
    for (auto& m : means)
    {
        double s = 0;
        for (std::size_t i = 0; i < xs.size(); ++i)
        {
            s += xs[stream.below(xs.size())];
        }
        m = s / static_cast<double>(xs.size());
    }
    std::sort(means.begin(), means.end());
    double const tail = 0.5 * (1 - level);
    auto at = [&](double q) {
        auto idx = static_cast<std::size_t>(
            std::clamp(q * static_cast<double>(resamples - 1),
                       0.0,
                       static_cast<double>(resamples - 1)));
        return means[idx];
    };
    return {at(tail), at(1 - tail)};
}

double ks_statistic(std::vector<double> a, std::vector<double> b)
{
    if (a.empty() || b.empty())
        throw std::invalid_argument("ks_statistic: empty sample");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    double const na = static_cast<double>(a.size());
    double const nb = static_cast<double>(b.size());
    std::size_t i = 0, j = 0;
    double d = 0;
    while (i < a.size() && j < b.size())
    {
        double const x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= x)
            ++i;
        while (j < b.size() && b[j] <= x)
            ++j;
        d = std::max(d, std::abs(i / na - j / nb));
    }
    return d;
}

double ks_critical_value(std::size_t n, std::size_t m, double alpha)
{
    double const c = std::sqrt(-0.5 * std::log(alpha / 2));
    double const nn = static_cast<double>(n), mm = static_cast<double>(m);
    return c * std::sqrt((nn + mm) / (nn * mm));
}

LinearFit least_squares(std::span<double const> x, std::span<double const> y)
{
    if (x.size() != y.size() || x.size() < 2)
        throw std::invalid_argument("least_squares: need >= 2 paired points");
    double const n = static_cast<double>(x.size());
    double sx = 0, sy = 0;
    for (std::size_t i = 0; i < x.size(); ++i)
    {
        sx += x[i];
        sy += y[i];
    }
    double const mx = sx / n, my = sy / n;
    double sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i)
    {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0)
        throw std::invalid_argument("least_squares: degenerate abscissae");
    LinearFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    double sse = 0;
    for (std::size_t i = 0; i < x.size(); ++i)
    {
        double const r = y[i] - (f.slope * x[i] + f.intercept);
        sse += r * r;
    }
    f.r_squared = syy > 0 ? 1 - sse / syy : 1.0;
    if (x.size() > 2)
        f.slope_se = std::sqrt(sse / (n - 2) / sxx);
    return f;
}

}  // namespace wgmc
