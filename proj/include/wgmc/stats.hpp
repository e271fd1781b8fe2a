#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace wgmc
{
//! Sample mean with standard error of the mean.
struct MeanSe
{
    double mean{0};
    double se{0};
    double sd{0};
    std::size_t n{0};
};

MeanSe mean_se(std::span<double const> xs);

//! Mean and SE of x_i - y_i on paired samples.
MeanSe paired_difference(std::span<double const> xs,
                         std::span<double const> ys);

//! (a - b) / sqrt(se_a^2 + se_b^2); zero when both SEs vanish and a == b.
double z_score(double a, double se_a, double b, double se_b);

//! Proportion with binomial standard error.
MeanSe proportion(std::size_t hits, std::size_t n);

struct ConfidenceInterval
{
    double lo{0};
    double hi{0};
};

/*!
 * Percentile bootstrap interval for the mean.
 *
 * Resampling indices come from a stream seeded with `seed`, so the interval
 * is reproducible.
 */
ConfidenceInterval bootstrap_mean_ci(std::span<double const> xs,
                                     std::size_t resamples,
                                     double level,
                                     std::uint64_t seed);

//! Two-sample Kolmogorov-Smirnov statistic sup |F_a - F_b|.
double ks_statistic(std::vector<double> a, std::vector<double> b);

//! Asymptotic two-sample KS critical value at significance alpha.
double ks_critical_value(std::size_t n, std::size_t m, double alpha);

//! Ordinary least squares y = slope * x + intercept.
struct LinearFit
{
    double slope{0};
    double intercept{0};
    double r_squared{0};
    double slope_se{0};
};

LinearFit least_squares(std::span<double const> x, std::span<double const> y);

}  // namespace wgmc
