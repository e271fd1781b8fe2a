#include "wgmc/moments.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "wgmc/parallel.hpp"
#include "wgmc/rng.hpp"

namespace wgmc
{
PartitionTable partition_table(ExperimentConfig const& config,
                               std::vector<double> const& T_grid,
                               MomentOptions const& options)
{
    config.validate();
    if (T_grid.empty())
        throw std::invalid_argument("partition_table: empty horizon grid");
    double const Tmax = *std::max_element(T_grid.begin(), T_grid.end());
    auto const spec = config.lattice(Tmax);
    auto const slabs = horizon_slabs(spec, T_grid);
    auto const mol = config.mollifier();
    std::size_t const cap
        = options.max_paths ? options.max_paths : 16 * config.paths;

    struct Row
    {
        std::vector<double> z, rel;
        std::size_t M{0};
    };
    auto rows = parallel_map(config.replicas, config.threads, [&](std::size_t r) {
        auto noise = config.noise(spec, r);
        auto traces = replica_traces(config, spec, *mol, noise, r, 0, config.paths);
        Row row;
        while (true)
        {
            row.z.clear();
            row.rel.clear();
            double worst = 0;
            for (auto k : slabs)
            {
                double rel = 0;
                row.z.push_back(partition_from_traces(traces, config.gamma, k, &rel));
                row.rel.push_back(rel);
                worst = std::max(worst, rel);
            }
            if (worst < options.target_rel_se || traces.size() >= cap)
                break;
            std::size_t const more = std::min(traces.size(), cap - traces.size());
            auto extra = replica_traces(
                config, spec, *mol, noise, r, traces.size(), more);
            std::move(extra.begin(), extra.end(), std::back_inserter(traces));
        }
        row.M = traces.size();
        return row;
    });

    PartitionTable t;
    t.T = T_grid;
    t.seed = config.seed;
    for (auto& row : rows)
    {
        t.value.push_back(std::move(row.z));
        t.rel_se.push_back(std::move(row.rel));
        t.paths_used.push_back(row.M);
    }
    return t;
}

MomentReport moment_from_table(PartitionTable const& table,
                               double p,
                               MomentOptions const& options)
{
    if (p == 0)
        throw std::invalid_argument("moment: p must be nonzero");
    MomentReport rep;
    rep.p = p;
    for (std::size_t t = 0; t < table.T.size(); ++t)
    {
        MomentRow row;
        row.T = table.T[t];
        std::vector<double> v;
        for (std::size_t r = 0; r < table.value.size(); ++r)
        {
            double const z = table.value[r][t];
            if (p < 0 && z < options.floor)
                ++row.floor_hits;  // kept in the mean, never clamped
            v.push_back(std::pow(z, p));
            row.max_rel_se = std::max(row.max_rel_se, table.rel_se[r][t]);
        }
        row.estimate = mean_se(v);
        row.ci = bootstrap_mean_ci(v,
                                   options.bootstrap,
                                   0.95,
                                   derive_seed(table.seed, "moment-ci", t));
        rep.flagged = rep.flagged || row.floor_hits > 0;
        rep.rows.push_back(row);
    }
    return rep;
}

MomentReport moment_estimate(ExperimentConfig const& config,
                             double p,
                             std::vector<double> const& T_grid,
                             MomentOptions const& options)
{
    return moment_from_table(partition_table(config, T_grid, options), p, options);
}

namespace
{
ScanEntry scan_entry(PartitionTable const& table,
                     double exponent,
                     MomentOptions const& options)
{
    ScanEntry e;
    e.exponent = exponent;
    e.report = moment_from_table(table, exponent, options);
    double lo = INFINITY, hi = -INFINITY;
    bool finite = true;
    for (auto const& row : e.report.rows)
    {
        lo = std::min(lo, row.estimate.mean);
        hi = std::max(hi, row.estimate.mean);
        finite = finite && std::isfinite(row.estimate.mean);
    }
    e.variation = lo > 0 ? (hi - lo) / lo : INFINITY;
    e.stable = finite && !e.report.flagged && e.variation < 0.2;
    return e;
}
}  // namespace

MomentScan moment_scan(ExperimentConfig const& config,
                       std::vector<double> const& ps,
                       std::vector<double> const& qs,
                       std::vector<double> const& T_grid,
                       MomentOptions const& options)
{
    auto const table = partition_table(config, T_grid, options);
    MomentScan scan;
    for (double p : ps)
    {
        scan.positive.push_back(scan_entry(table, p, options));
        if (scan.positive.back().stable)
            scan.selected_p = std::max(scan.selected_p, p);
    }
    for (double q : qs)
    {
        scan.negative.push_back(scan_entry(table, -q, options));
        if (scan.negative.back().stable)
            scan.selected_q = std::max(scan.selected_q, q);
    }
    return scan;
}

namespace
{
// Z at every slab boundary 0..K of each replica (Z_0 = 1).
std::vector<std::vector<double>> partition_series(ExperimentConfig const& config,
                                                  LatticeSpec const& spec)
{
    auto const mol = config.mollifier();
    return parallel_map(config.replicas, config.threads, [&](std::size_t r) {
        auto noise = config.noise(spec, r);
        auto traces = replica_traces(config, spec, *mol, noise, r, 0, config.paths);
        std::vector<double> z(spec.slabs() + 1);
        for (std::size_t k = 0; k <= spec.slabs(); ++k)
            z[k] = partition_from_traces(traces, config.gamma, k);
        return z;
    });
}
}  // namespace

RunningMaxReport running_max(ExperimentConfig const& config,
                             std::vector<double> const& T_grid)
{
    config.validate();
    double const Tmax = *std::max_element(T_grid.begin(), T_grid.end());
    auto const spec = config.lattice(Tmax);
    auto const slabs = horizon_slabs(spec, T_grid);
    auto const series = partition_series(config, spec);

    RunningMaxReport rep;
    rep.monotone = true;
    std::vector<std::vector<double>> maxima(series.size());
    for (std::size_t r = 0; r < series.size(); ++r)
    {
        double run = series[r][0];
        std::vector<double> prefix(series[r].size());
        for (std::size_t k = 0; k < series[r].size(); ++k)
        {
            run = std::max(run, series[r][k]);
            prefix[k] = run;
        }
        double prev = -INFINITY;
        for (auto k : slabs)
        {
            maxima[r].push_back(prefix[k]);
            if (!(T_grid.size() < 2) && prefix[k] < prev)
                rep.monotone = false;
            prev = prefix[k];
        }
    }
    for (std::size_t t = 0; t < T_grid.size(); ++t)
    {
        std::vector<double> col, zt;
        for (std::size_t r = 0; r < series.size(); ++r)
        {
            col.push_back(maxima[r][t]);
            zt.push_back(series[r][slabs[t]]);
        }
        RunningMaxRow row;
        row.T = T_grid[t];
        row.estimate = mean_se(col);
        row.ci = bootstrap_mean_ci(
            col, 1000, 0.95, derive_seed(config.seed, "running-max-ci", t));
        row.doob_bound = 1 + 2 * mean_se(zt).sd;
        rep.rows.push_back(row);
    }
    return rep;
}

TailProbeReport tail_probe(ExperimentConfig const& config,
                           double u,
                           double eps,
                           double T)
{
    if (!(u > 1))
        throw std::invalid_argument("tail_probe: u must exceed 1");
    if (!(eps > 0))
        throw std::invalid_argument("tail_probe: eps must be positive");
    config.validate();
    auto const spec = config.lattice(T);
    auto const series = partition_series(config, spec);
    std::vector<double> a, b, gap;
    for (auto const& z : series)
    {
        double const m = *std::max_element(z.begin(), z.end());
        double const ia = m > u ? 1.0 : 0.0;
        double const ib = z.back() > u * eps ? 1.0 : 0.0;
        a.push_back(ia);
        b.push_back(ib);
        gap.push_back(ia - 2 * ib);
    }
    TailProbeReport rep;
    rep.u = u;
    rep.eps = eps;
    rep.T = T;
    rep.p_max = mean_se(a);
    rep.p_mass = mean_se(b);
    rep.gap = mean_se(gap);
    rep.holds = rep.gap.mean <= 3 * rep.gap.se;
    rep.expectation_bound = 1 + 2 / eps;
    return rep;
}

}  // namespace wgmc
