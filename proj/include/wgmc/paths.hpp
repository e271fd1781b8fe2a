#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "wgmc/noise.hpp"
#include "wgmc/path.hpp"
#include "wgmc/stats.hpp"

namespace wgmc
{
//---------------------------------------------------------------------------//
// Brownian sampling
//---------------------------------------------------------------------------//

/*!
 * Brownian path with `steps` N(0, dt I_d) increments.
 *
 * Deterministic in (d, dt, steps, seed, start); an empty start means the
 * origin.
 */
PathSample sample_brownian(int d,
                           double dt,
                           std::size_t steps,
                           std::uint64_t seed,
                           std::span<double const> start = {});

//! Path on the lattice time grid refined by `refine` steps per slab.
PathSample sample_brownian(LatticeSpec const& spec,
                           std::uint64_t seed,
                           std::span<double const> start = {},
                           std::size_t refine = 1);

//! Appends `extra` free Brownian steps drawn from `seed`.
PathSample
extend_brownian(PathSample const& path, std::size_t extra, std::uint64_t seed);

//! Every `stride`-th grid point.
PathSample coarsen(PathSample const& path, std::size_t stride);

//---------------------------------------------------------------------------//
// Weighted norms
//---------------------------------------------------------------------------//

/*!
 * Weight g for the norm sup_t |omega_t| / g(t).
 *
 * linear_max is a max(1, t); constant is g = a (the plain sup-norm, only
 * meaningful with a finite horizon).
 */
class WeightFunction
{
  public:
    enum class Kind
    {
        linear_max,
        constant,
        custom,
    };

    static WeightFunction linear_max(double a = 1);
    static WeightFunction constant(double a = 1);
    static WeightFunction custom(std::function<double(double)> g,
                                 std::string name = "custom");

    Kind kind() const noexcept { return kind_; }
    double scale() const noexcept { return a_; }
    std::string name() const;

    double operator()(double t) const;

    /*!
     * Integral of g^{-2} over [0, inf).
     *
     * Closed tail for linear_max, numerical otherwise; throws
     * DivergentIntegral when it is infinite.
     */
    double inverse_square_integral() const;

  private:
    Kind kind_{Kind::linear_max};
    double a_{1};
    std::function<double(double)> g_;
    std::string name_;
};

//! max over grid times 0 < t_i <= horizon of |omega_{t_i}| / g(t_i).
double weighted_norm(PathSample const& path,
                     WeightFunction const& g,
                     double horizon);

//! max |omega_t - omega_s| over grid pairs with s, t <= T and |t - s| < delta.
double modulus(PathSample const& path, double T, double delta);

//! (j^2 / 2) * integral of g^{-2}, with j the first zero of J_{(d-2)/2}.
double smallball_constant(WeightFunction const& g, int d);

//---------------------------------------------------------------------------//
// Wiener small-ball probabilities
//---------------------------------------------------------------------------//

enum class SmallBallMethod
{
    rejection,  //!< independent paths, binomial proportion
    splitting,  //!< fixed-population particle splitting
};

struct SmallBallQuery
{
    int d{3};
    double dt{1e-3};  //!< grid on which the norm is monitored
    double r{1};
    double eps{0.3};
    double horizon{0};  //!< 0 means eps^-2
    WeightFunction g{WeightFunction::linear_max()};
    //! Ball center on the query grid; null means the origin.
    std::shared_ptr<PathSample const> center;

    double resolved_horizon() const;
    std::size_t steps() const;
};

struct SmallBallOptions
{
    SmallBallMethod method{SmallBallMethod::splitting};
    //! Paths (rejection) or particles per batch (splitting).
    std::size_t samples{1000};
    //! Independent splitting batches; the SE comes from their spread.
    std::size_t batches{8};
    //! Keep every keep_stride-th point of conditioned paths (0: keep none).
    std::size_t keep_stride{0};
    unsigned threads{1};
};

enum class RunStatus
{
    ok,
    resolution_exhausted,
};

struct SmallBallResult
{
    RunStatus status{RunStatus::ok};
    double p{0};
    double se{0};
    double log_p{-INFINITY};
    double log_se{0};  //!< delta-method SE of log p
    std::size_t samples{0};
    std::size_t hits{0};  //!< accepted paths, or final survivors
    double horizon{0};
    std::vector<std::uint64_t> accepted_seeds;  //!< rejection only
    /*!
     * Conditioned paths (coarsened by keep_stride) and log weights such
     * that sum_i exp(w_i) f(path_i) estimates E_0[f; A] without bias.
     */
    std::vector<PathSample> conditioned;
    std::vector<double> conditioned_log_weight;
    std::vector<std::size_t> conditioned_batch;
    std::vector<double> batch_p;
};

/*!
 * Monte Carlo estimate of P_0(||omega||_eps < r eps), the norm taken over
 * (0, horizon] on the query grid.
 *
 * Zero hits give status resolution_exhausted with p = 0.
 */
SmallBallResult wiener_smallball_mc(SmallBallQuery const& query,
                                    SmallBallOptions const& options,
                                    std::uint64_t seed);

//! Indicator ||omega - shift|| < r eps on (0, horizon]; shift may be empty.
bool in_ball(PathSample const& path,
             SmallBallQuery const& query,
             PathSample const* shift = nullptr);

//---------------------------------------------------------------------------//
// Anderson and Cameron-Martin checks
//---------------------------------------------------------------------------//

struct ShiftReport
{
    double p_shifted{0};
    double cm_norm2{0};  //!< sum |d eta|^2 / dt
    MeanSe anderson_gap;  //!< paired 1{shifted} - 1{centered}
    MeanSe cm_gap;        //!< paired exp(-s/2) 1{centered} - 1{shifted}
    bool anderson_ok{false};
    bool cm_ok{false};
};

struct AndersonReport
{
    double p_centered{0};
    double se_centered{0};
    std::size_t samples{0};
    std::vector<ShiftReport> shifts;
    bool all_ok{false};
};

/*!
 * Anderson's inequality P(||w - eta|| < r) <= P(||w|| < r) and the
 * Cameron-Martin lower bound exp(-|eta|_H^2 / 2) P(||w|| < r), each within
 * 3 paired SE, on shared paths. Shifts live on the query grid.
 */
AndersonReport anderson_check(SmallBallQuery const& query,
                              std::vector<PathSample> const& shifts,
                              std::size_t samples,
                              std::uint64_t seed,
                              unsigned threads = 1);

}  // namespace wgmc
