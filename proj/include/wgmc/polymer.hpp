#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "wgmc/noise.hpp"
#include "wgmc/path.hpp"
#include "wgmc/paths.hpp"
#include "wgmc/stats.hpp"

namespace wgmc
{
//---------------------------------------------------------------------------//
/*!
 * Parameters shared by every experiment.
 *
 * Replica r uses noise seed derive_seed(seed, "noise", r) and path base
 * seed derive_seed(seed, "paths", r); path m of the replica is drawn from
 * derive_seed(base, "path", m), as in partition_function.
 */
struct ExperimentConfig
{
    int d{3};
    double radius{1};
    Profile profile{Profile::bump};
    int quadrature_resolution{64};
    double dx{0};  //!< 0: radius / 8
    double dt{0};  //!< 0: 1 / ceil(d / dx^2)
    double L{0};   //!< user floor for the box half-width

    double gamma{0.3};
    double T{1};
    std::size_t replicas{200};
    std::size_t paths{500};
    std::uint64_t seed{1};
    unsigned threads{1};

    std::string weight{"linear_max"};
    double weight_scale{1};

    NoiseStorage storage{NoiseStorage::lazy};
    std::size_t memory_budget_mb{2048};

    //! Lattice covering [0, horizon].
    LatticeSpec lattice(double horizon) const;
    std::shared_ptr<Mollifier const> mollifier() const;
    WeightFunction weight_function() const;
    NoiseOptions noise_options() const;
    WhiteNoiseRealization noise(LatticeSpec const& spec, std::size_t r) const;
    std::uint64_t noise_seed(std::size_t r) const;
    std::uint64_t path_seed(std::size_t r) const;

    //! One message per invalid field; empty when valid.
    std::vector<std::string> diagnostics() const;
    //! Throws ConfigError carrying diagnostics().
    void validate() const;
};

//! Estimate of mu_{gamma,T}(A) at one fixed environment.
struct PartitionEstimate
{
    double value{0};
    double se{0};
    std::size_t M{0};
    std::uint64_t noise_seed{0};
    std::uint64_t path_seed{0};
    double gamma{0};
    double T{0};
    std::string event{"Omega"};
};

using PathPredicate = std::function<bool(PathSample const&)>;

/*!
 * (1/M) sum_m exp(gamma H(omega^m) - gamma^2/2 var(omega^m)), all paths
 * against the same noise. Path m is sample_brownian with seed
 * derive_seed(path_seed, "path", m).
 */
PartitionEstimate partition_function(WhiteNoiseRealization const& noise,
                                     Mollifier const& mollifier,
                                     double gamma,
                                     std::size_t M,
                                     std::uint64_t path_seed,
                                     unsigned threads = 1);

//! As partition_function with the indicator of `event` inserted.
PartitionEstimate measure_of_event(WhiteNoiseRealization const& noise,
                                   Mollifier const& mollifier,
                                   double gamma,
                                   PathPredicate const& event,
                                   std::size_t M,
                                   std::uint64_t path_seed,
                                   std::string const& event_name = "event",
                                   unsigned threads = 1);

struct ResampleResult
{
    std::vector<PathSample> paths;
    std::vector<std::size_t> indices;  //!< proposal index of each draw
    std::vector<HamiltonianValue> values;  //!< H and var of each draw
    std::vector<double> weights;  //!< normalized proposal weights
    double ess{0};                //!< 1 / sum w^2
    double max_weight_fraction{0};
    bool degenerate{false};       //!< max weight above half the total
    bool ess_sufficient{false};   //!< ess >= 10 K
};

/*!
 * K draws from the normalized measure by multinomial resampling of M
 * proposals (seeds as in partition_function).
 */
ResampleResult normalized_sample(WhiteNoiseRealization const& noise,
                                 Mollifier const& mollifier,
                                 double gamma,
                                 std::size_t M,
                                 std::size_t K,
                                 std::uint64_t seed);

//---------------------------------------------------------------------------//
// Replica machinery
//---------------------------------------------------------------------------//

//! Cumulative Hamiltonians of paths [first, first + count) of replica r.
std::vector<HamiltonianTrace> replica_traces(ExperimentConfig const& config,
                                             LatticeSpec const& spec,
                                             Mollifier const& mollifier,
                                             WhiteNoiseRealization const& noise,
                                             std::size_t r,
                                             std::size_t first,
                                             std::size_t count);

/*!
 * Partition value after `slabs` slabs from path traces, computed in log
 * space. rel_se receives the within-replica relative SE if non-null.
 */
double partition_from_traces(std::vector<HamiltonianTrace> const& traces,
                             double gamma,
                             std::size_t slabs,
                             double* rel_se = nullptr);
double log_partition_from_traces(std::vector<HamiltonianTrace> const& traces,
                                 double gamma,
                                 std::size_t slabs);

//! Slab count of each horizon; throws unless each is a whole slab multiple.
std::vector<std::size_t> horizon_slabs(LatticeSpec const& spec,
                                       std::vector<double> const& T_grid);

//---------------------------------------------------------------------------//
// Diagnostics
//---------------------------------------------------------------------------//

struct CellStatistics
{
    std::size_t cells{0};
    MeanSe mean;       //!< sample mean of increments
    double variance{0};  //!< sample variance
    double expected_variance{0};  //!< dt dx^d
    double mean_z{0};
    double variance_rel_error{0};
};

//! Mean and variance of `cells` increments of replica 0, sampled slab-major.
CellStatistics cell_statistics(ExperimentConfig const& config,
                               double T,
                               std::size_t cells);

struct CovarianceReport
{
    double T{0};
    std::size_t replicas{0};
    double overlap{0};  //!< discrete covariance of H(a), H(b)
    MeanSe product;     //!< H(a) H(b) over noise replicas
    double var_a{0};    //!< discrete variance of a
    MeanSe square_a;    //!< H(a)^2 over noise replicas
    double z_cov{0};
    double z_var{0};
};

/*!
 * Empirical E[H(a) H(b)] against the discrete overlap for two Brownian
 * paths a, b drawn from derive_seed(seed, "cov-path", 0 / 1). Replica i
 * uses derive_seed(seed, "cov-noise", i).
 */
CovarianceReport covariance_check(ExperimentConfig const& config,
                                  double T,
                                  std::size_t replicas);

struct MartingaleRow
{
    double T{0};
    MeanSe value;
    double z{0};
    bool flagged{false};  //!< |z| > 3
};

struct MartingaleReport
{
    std::vector<MartingaleRow> rows;
    //! Replica 0 values unchanged (bitwise) when later slabs are redrawn.
    bool adapted{false};
    bool all_ok{false};
};

MartingaleReport martingale_check(ExperimentConfig const& config,
                                  std::vector<double> const& T_grid);

struct L2Report
{
    double lhs{0};  //!< E[mu^2] by unbiased two-path U-statistic
    double lhs_se{0};
    double rhs{0};  //!< E_0^{x2} exp(gamma^2 overlap)
    double rhs_se{0};
    double z{0};
    std::size_t replicas{0};
    std::size_t M{0};
    std::size_t pairs{0};
};

/*!
 * Both sides of E[mu_T^2] = E_0^{x2} exp(gamma^2 int (phi*phi)(w_s - w'_s) ds)
 * at the lattice level.
 */
L2Report l2_identity_check(ExperimentConfig const& config,
                           double T,
                           std::size_t pairs);

//! Right side of the L2 identity for several gammas on shared path pairs.
std::vector<MeanSe> l2_right_side(ExperimentConfig const& config,
                                  double T,
                                  std::vector<double> const& gammas,
                                  std::size_t pairs);

struct OccupationOptions
{
    double dt{0.01};
    std::size_t paths{2000};
    std::uint64_t seed{1};
};

/*!
 * E_x int_0^T (phi*phi)(sqrt(2) omega_s) ds at T and 2T on the same paths
 * (left-point sums on a dt grid).
 */
std::pair<MeanSe, MeanSe> occupation_integral(Mollifier const& mollifier,
                                              std::span<double const> x,
                                              double T,
                                              OccupationOptions const& options);

struct KhasminskiiRow
{
    double start_radius{0};
    MeanSe at_cutoff;
    MeanSe at_double;
};

struct KhasminskiiReport
{
    double I_hat{0};         //!< sup over starts at the cutoff
    double I_hat_double{0};  //!< same paths at twice the cutoff
    double tail_bound{0};    //!< rigorous bound on the integral past the cutoff
    double relative_change{0};
    bool stable{false};  //!< relative change within 5%
    bool certified{false};  //!< gamma^2 (I_hat + tail) < 1
    std::vector<KhasminskiiRow> starts;
};

/*!
 * Monte Carlo bound for I(phi) = sup_x E_x int_0^inf (phi*phi)(sqrt(2) w_s) ds
 * over a radial grid of starts in the support; throws DivergentIntegral for
 * d <= 2.
 */
KhasminskiiReport khasminskii_certificate(Mollifier const& mollifier,
                                          double gamma,
                                          double T_cutoff,
                                          OccupationOptions const& options,
                                          std::size_t start_count = 8,
                                          unsigned threads = 1);

struct FreeEnergyRow
{
    double T{0};
    MeanSe estimate;  //!< (1/T) log mu_{gamma,T}(Omega) over replicas
    ConfidenceInterval ci;
};

std::vector<FreeEnergyRow> free_energy(ExperimentConfig const& config,
                                       std::vector<double> const& T_grid);

//! Finitely supported sub-probability measure.
struct AtomicMeasure
{
    std::vector<double> positions;  //!< d per atom
    std::vector<double> masses;
};

/*!
 * (gamma^2 / 2) sum_alpha sum_{i,j} m_i m_j (phi*phi)(x_i - x_j).
 *
 * Throws std::invalid_argument if the total mass exceeds 1.
 */
double f_gamma_energy(double gamma,
                      Mollifier const& mollifier,
                      std::vector<AtomicMeasure> const& collection);

}  // namespace wgmc
