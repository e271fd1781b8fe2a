#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "wgmc/noise.hpp"
#include "wgmc/polymer.hpp"
#include "wgmc/stats.hpp"

namespace wgmc
{
//! A draw from the size-biased law: a free path and noise tilted toward it.
struct SizeBiasedPair
{
    PathSample path;
    WhiteNoiseRealization noise;
    double gamma{0};
    double T{0};
};

struct SizeBiasOptions
{
    /*!
     * Add a second tilt of the same strength on [0, 1]. The resulting law
     * keeps the thick-point property but is a different measure.
     */
    bool extra_unit_tilt{false};
};

/*!
 * Path from derive_seed(seed, "q-path"), base noise from
 * derive_seed(seed, "q-noise"), then a drift overlay toward the path.
 */
SizeBiasedPair size_biased_pair(LatticeSpec const& spec,
                                std::shared_ptr<Mollifier const> mollifier,
                                double gamma,
                                std::uint64_t seed,
                                SizeBiasOptions const& options = {});

struct GirsanovIdentityReport
{
    std::size_t triples{0};
    double max_rel_error{0};  //!< |H' - H - gamma var| / (gamma var)
    double max_other_rel_error{0};  //!< shift of a second path vs the overlap
    bool ok{false};  //!< both below 1e-10
};

/*!
 * H(shifted) - H = gamma var on random triples: path derive_seed(seed,
 * "gi-path", i), noise derive_seed(seed, "gi-noise", i), gamma uniform in
 * [0.05, 1) from derive_seed(seed, "gi-gamma", i). A second path from
 * "gi-other" checks the cross shift against discrete_overlap.
 */
GirsanovIdentityReport girsanov_identity_check(ExperimentConfig const& config,
                                               double T,
                                               std::size_t triples);

struct ThickPointRow
{
    double T{0};
    MeanSe ratio;  //!< H_T / var under the size-biased law
    double z{0};   //!< (mean - gamma) / se
    double mean_var{0};
    std::vector<double> histogram_edges;
    std::vector<std::size_t> histogram_counts;
};

struct ThickPointReport
{
    std::vector<ThickPointRow> rows;
    bool means_ok{false};  //!< every |z| <= 3
};

ThickPointReport thick_point_stat(ExperimentConfig const& config,
                                  std::vector<double> const& T_grid,
                                  std::size_t replicas,
                                  SizeBiasOptions const& options = {});

/*!
 * Test function on slabs x cells, supported in a box of cells and a slab
 * range; value(k, y) at slab k and cell center y.
 */
struct SlabCellFunction
{
    std::string name;
    std::vector<double> lo;  //!< support box corner, d entries
    std::vector<double> hi;
    std::size_t slab_begin{0};
    std::size_t slab_end{static_cast<std::size_t>(-1)};
    std::function<double(std::size_t k, std::span<double const> y)> value;
};

//! B(f) = sum over support cells of f(k, y) * increment.
double noise_pairing(WhiteNoiseRealization const& noise,
                     SlabCellFunction const& f);

//! gamma dt dx^d sum_k sum_j f(k, y_j) phi(omega_k - y_j).
double drift_pairing(LatticeSpec const& spec,
                     Mollifier const& mollifier,
                     PathSample const& path,
                     SlabCellFunction const& f,
                     double gamma);

//! The central box, oscillatory and separated-support test functions.
std::vector<SlabCellFunction> default_test_functions(LatticeSpec const& spec);

struct UniquenessRow
{
    std::string name;
    MeanSe lhs;  //!< E_Q[B(f)]
    MeanSe rhs;  //!< gamma E_0[sum f phi dt dx^d]
    double z{0};
};

struct UniquenessReport
{
    std::vector<UniquenessRow> rows;
    bool all_ok{false};
};

UniquenessReport uniqueness_identity_check(ExperimentConfig const& config,
                                           double T,
                                           std::vector<SlabCellFunction> const& fs,
                                           std::size_t replicas);

struct ReweightingReport
{
    MeanSe q_side;     //!< E_Q[H] from the exact sampler
    MeanSe weighted;   //!< E[w H] under independent sampling
    double z{0};
};

//! E_Q[H_T(omega)] two ways.
ReweightingReport reweighting_check(ExperimentConfig const& config,
                                    double T,
                                    std::size_t replicas);

}  // namespace wgmc
