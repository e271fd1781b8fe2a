#pragma once

#include <cstddef>
#include <vector>

#include "wgmc/polymer.hpp"
#include "wgmc/stats.hpp"

namespace wgmc
{
struct MomentOptions
{
    double floor{1e-12};
    //! Paths are doubled until the within-replica relative SE is below this.
    double target_rel_se{0.05};
    //! Cap on adaptive paths per replica; 0 means 16 times config.paths.
    std::size_t max_paths{0};
    std::size_t bootstrap{1000};
};

//! Partition values Z[r][t] of every replica at every horizon.
struct PartitionTable
{
    std::vector<double> T;
    std::vector<std::vector<double>> value;
    std::vector<std::vector<double>> rel_se;
    std::vector<std::size_t> paths_used;
    std::uint64_t seed{0};
};

/*!
 * Coupled partition values on one lattice of horizon max(T_grid). Each
 * replica raises its own path count from its own streams, so the table is
 * independent of the worker count.
 */
PartitionTable partition_table(ExperimentConfig const& config,
                               std::vector<double> const& T_grid,
                               MomentOptions const& options = {});

struct MomentRow
{
    double T{0};
    MeanSe estimate;  //!< mean over replicas of Z^p
    ConfidenceInterval ci;
    std::size_t floor_hits{0};
    double max_rel_se{0};
};

struct MomentReport
{
    double p{1};
    std::vector<MomentRow> rows;
    bool flagged{false};  //!< any floor hit for p < 0
};

MomentReport moment_from_table(PartitionTable const& table,
                               double p,
                               MomentOptions const& options = {});

MomentReport moment_estimate(ExperimentConfig const& config,
                             double p,
                             std::vector<double> const& T_grid,
                             MomentOptions const& options = {});

struct ScanEntry
{
    double exponent{0};  //!< p, or -q for negative moments
    MomentReport report;
    double variation{0};  //!< (max - min) / min over the horizon grid
    bool stable{false};   //!< variation < 20%, finite, no floor hits
};

struct MomentScan
{
    std::vector<ScanEntry> positive;
    std::vector<ScanEntry> negative;
    double selected_p{0};  //!< largest stable p (0 if none)
    double selected_q{0};  //!< largest stable q (0 if none)
};

//! E[Z^p] for p in ps and E[Z^-q] for q in qs on one shared table.
MomentScan moment_scan(ExperimentConfig const& config,
                       std::vector<double> const& ps,
                       std::vector<double> const& qs,
                       std::vector<double> const& T_grid,
                       MomentOptions const& options = {});

struct RunningMaxRow
{
    double T{0};
    MeanSe estimate;  //!< E[max_{s <= T} Z_s], s over slab boundaries
    ConfidenceInterval ci;
    double doob_bound{0};  //!< 1 + 2 sd(Z_T)
};

struct RunningMaxReport
{
    std::vector<RunningMaxRow> rows;
    bool monotone{false};  //!< nondecreasing in T for every replica
};

RunningMaxReport running_max(ExperimentConfig const& config,
                             std::vector<double> const& T_grid);

struct TailProbeReport
{
    double u{0};
    double eps{0};
    double T{0};
    MeanSe p_max;   //!< P(M_T > u)
    MeanSe p_mass;  //!< P(Z_T > u eps)
    MeanSe gap;     //!< paired 1{M_T > u} - 2 1{Z_T > u eps}
    bool holds{false};  //!< gap.mean <= 3 gap.se
    double expectation_bound{0};  //!< 1 + 2 / eps
};

//! Requires u > 1.
TailProbeReport tail_probe(ExperimentConfig const& config,
                           double u,
                           double eps,
                           double T);

}  // namespace wgmc
