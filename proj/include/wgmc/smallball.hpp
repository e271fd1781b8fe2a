#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "wgmc/path.hpp"
#include "wgmc/paths.hpp"
#include "wgmc/polymer.hpp"
#include "wgmc/stats.hpp"

namespace wgmc
{
//---------------------------------------------------------------------------//
// Decay constants
//---------------------------------------------------------------------------//

//! Free energy lambda(beta); the default provider is identically zero.
using LambdaProvider = std::function<double(double beta)>;

struct DecayBounds
{
    double C1{0};
    double C2{0};

    double gamma{0};
    double r{0};
    int d{0};
    double p{0};
    double q{0};
    double f0{0};  //!< (phi * phi)(0)
    std::string g_name;
    double g_integral{0};  //!< integral of g^-2
    double bessel_root{0};
    double lambda_p{0};  //!< lambda(2 p gamma / (p - 1))
    double lambda_q{0};  //!< lambda(gamma q / (q + 1))
};

/*!
 * Upper-bound exponent C1(p) and lower-bound exponent C2(q) at fixed (p, q).
 *
 * C1 = (p-1)/(4 p r^2) j^2 I - (p+1)/(2(p-1)) gamma^2 f0 - (p-1)/(2p) lambda_p
 * C2 = (q+1)/q (j^2 I / (2 r^2) + gamma^2/2 f0 (q^2+3q+1)/(q+1)^2 + lambda_q)
 *
 * with I the integral of g^-2 and j the first zero of J_{(d-2)/2}. Throws
 * std::invalid_argument unless p > 1, q > 0, r > 0; DivergentIntegral when
 * I is infinite.
 */
DecayBounds bounds_C1_C2(double gamma,
                         double r,
                         WeightFunction const& g,
                         int d,
                         double p,
                         double q,
                         double f0,
                         LambdaProvider const& lambda = {});

struct BoundsSearch
{
    double p_max{64};
    double q_min{1e-3};
    double q_max{1e8};
    double tolerance{1e-10};  //!< relative bracket width in log scale
};

/*!
 * bounds_C1_C2 with C1 maximized over p in (1, p_max] and C2 minimized
 * over q in [q_min, q_max], each by golden-section search in log(p - 1)
 * and log(q).
 */
DecayBounds optimized_bounds(double gamma,
                             double r,
                             WeightFunction const& g,
                             int d,
                             double f0,
                             BoundsSearch const& search = {},
                             LambdaProvider const& lambda = {});

/*!
 * Upper-bound exponent used for matching as gamma -> 0:
 * j^2 I / (2 p r^2) - (p+1)/(2(p-1)) gamma^2 f0.
 */
double matching_C1(double gamma,
                   double r,
                   WeightFunction const& g,
                   int d,
                   double p,
                   double f0);

struct GammaDelta
{
    double delta{0};
    double gamma{0};
    double p{0};
    double q{0};
    double C1{0};  //!< matching_C1 at (gamma, p)
    double C2{0};  //!< bounds_C1_C2 C2 at (gamma, q)
    double gap{0};
    bool verified{false};  //!< C2 - C1 < delta
    std::size_t iterations{0};
};

/*!
 * Witnesses (gamma_delta, p, q) with C2 - C1 < delta for all gamma below
 * gamma_delta.
 *
 * Starting from p = 2, q = 1, q doubles and p - 1 halves until
 * ((q+1)/q - 1/p) j^2 I / (2 r^2) < delta / 2; then gamma_delta is 0.99
 * times the root of gamma^2 f0 / 2 [(p+1)/(p-1) + (q^2+3q+1)/(q(q+1))] =
 * delta / 2. Deterministic, and gamma_delta is non-increasing in 1/delta.
 */
GammaDelta gamma_delta(double delta,
                       double r,
                       WeightFunction const& g,
                       int d,
                       double f0);

//---------------------------------------------------------------------------//
// GMC small-ball estimation
//---------------------------------------------------------------------------//

struct GmcSmallBallOptions
{
    double c{1};  //!< horizon multiple of eps^-2
    std::size_t refine{4};  //!< norm monitoring steps per slab
    std::size_t particles{1000};  //!< splitting particles per batch
    std::size_t batches{8};
    //! Conditioned paths evaluated per replica (0: all survivors).
    std::size_t conditioned{256};
    //! Ball center on the monitoring grid over [0, eps^-2]; null: origin.
    std::shared_ptr<PathSample const> center;
};

struct GmcSmallBallResult
{
    RunStatus status{RunStatus::ok};
    double eps{0};
    double r{0};
    double c{0};
    double horizon{0};  //!< eps^-2 rounded to the slab grid
    double T{0};        //!< c * horizon
    double p0{0};       //!< Wiener probability of the ball
    double p0_log_se{0};
    double estimate{0};
    double se{0};
    double log_estimate{-INFINITY};
    double log_se{0};
    double conditional_factor{0};  //!< estimate / p0
    std::size_t hits{0};
    std::size_t conditioned_used{0};
    std::vector<double> replica_ratio;
};

/*!
 * mu_{gamma,T}(||omega||_eps < r eps) averaged over noise replicas.
 *
 * The Wiener probability and conditioned paths come from one splitting run
 * seeded by the config seed (shared across eps); conditioned paths are
 * extended by free Brownian motion to T. Each replica evaluates the
 * conditioned weights and the partition function on the same noise.
 */
GmcSmallBallResult gmc_smallball(ExperimentConfig const& config,
                                 double gamma,
                                 double r,
                                 double eps,
                                 WeightFunction const& g,
                                 GmcSmallBallOptions const& options = {});

struct ExponentFit
{
    double slope{0};
    double intercept{0};
    double r_squared{0};
    double slope_se{0};
    std::size_t points{0};
};

/*!
 * Fit log(estimate) = -slope eps^-2 + intercept.
 *
 * Throws std::invalid_argument with fewer than three positive finite
 * estimates.
 */
ExponentFit exponent_fit(std::vector<std::pair<double, double>> const& series);

struct SweepRow
{
    GmcSmallBallResult result;
    double scaled_log{0};  //!< -eps^2 log(estimate)
};

struct SmallBallSweep
{
    double c{1};
    std::vector<SweepRow> rows;
    ExponentFit fit;
    bool fitted{false};
};

//! gmc_smallball at every eps for one horizon multiple, plus the fit.
SmallBallSweep smallball_sweep(ExperimentConfig const& config,
                               double gamma,
                               double r,
                               std::vector<double> const& eps,
                               WeightFunction const& g,
                               GmcSmallBallOptions const& options);

}  // namespace wgmc
