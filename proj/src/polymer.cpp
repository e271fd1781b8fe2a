#include "wgmc/polymer.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include "wgmc/errors.hpp"
#include "wgmc/parallel.hpp"
#include "wgmc/rng.hpp"

namespace wgmc
{
//---------------------------------------------------------------------------//
// ExperimentConfig
//---------------------------------------------------------------------------//

LatticeSpec ExperimentConfig::lattice(double horizon) const
{
    return LatticeSpec::make(d, horizon, radius, dx, dt, L);
}

std::shared_ptr<Mollifier const> ExperimentConfig::mollifier() const
{
    // building the phi*phi table dominates small runs; reuse per parameter set
    using Key = std::tuple<int, double, Profile, int>;
    static std::mutex mutex;
    static std::map<Key, std::shared_ptr<Mollifier const>> cache;
    Key const key{d, radius, profile, quadrature_resolution};
    std::lock_guard<std::mutex> lock(mutex);
    auto& slot = cache[key];
    if (!slot)
        slot = std::make_shared<Mollifier const>(
            Mollifier::build(d, radius, profile, quadrature_resolution));
    return slot;
}

WeightFunction ExperimentConfig::weight_function() const
{
    if (weight == "constant")
        return WeightFunction::constant(weight_scale);
    return WeightFunction::linear_max(weight_scale);
}

NoiseOptions ExperimentConfig::noise_options() const
{
    NoiseOptions o;
    o.storage = storage;
    o.memory_budget_bytes = memory_budget_mb << 20;
    return o;
}

std::uint64_t ExperimentConfig::noise_seed(std::size_t r) const
{
    return derive_seed(seed, "noise", r);
}

std::uint64_t ExperimentConfig::path_seed(std::size_t r) const
{
    return derive_seed(seed, "paths", r);
}

WhiteNoiseRealization ExperimentConfig::noise(LatticeSpec const& spec,
                                              std::size_t r) const
{
    return sample_noise(spec, noise_seed(r), noise_options());
}

std::vector<std::string> ExperimentConfig::diagnostics() const
{
    std::vector<std::string> out;
    auto bad = [&](std::string const& field, std::string const& msg) {
        out.push_back(field + ": " + msg);
    };
    if (d < 1 || d > max_dimension)
        bad("d", "must be in [1, " + std::to_string(max_dimension) + "]");
    if (!(radius > 0))
        bad("radius", "must be positive");
    if (quadrature_resolution < 4)
        bad("quadrature_resolution", "must be >= 4");
    if (dx < 0)
        bad("dx", "must be positive (or 0 for the default)");
    if (dt < 0)
        bad("dt", "must be positive (or 0 for the default)");
    if (L < 0)
        bad("L", "must be non-negative");
    if (!(gamma >= 0) || !std::isfinite(gamma))
        bad("gamma", "must be finite and >= 0");
    if (!(T > 0))
        bad("T", "must be positive");
    if (replicas == 0)
        bad("replicas", "must be positive");
    if (paths == 0)
        bad("paths", "must be positive");
    if (threads == 0)
        bad("threads", "must be positive");
    if (weight != "linear_max" && weight != "constant")
        bad("weight", "must be linear_max or constant");
    if (!(weight_scale > 0))
        bad("weight_scale", "must be positive");
    if (memory_budget_mb == 0)
        bad("memory_budget_mb", "must be positive");
    return out;
}

void ExperimentConfig::validate() const
{
    auto diag = diagnostics();
    if (!diag.empty())
        throw ConfigError(std::move(diag));
}

//---------------------------------------------------------------------------//
// Partition functions
//---------------------------------------------------------------------------//

namespace
{
double log_weight(HamiltonianValue const& v, double gamma)
{
    return gamma * v.H - 0.5 * gamma * gamma * v.var;
}

struct LogMean
{
    double log_mean{-INFINITY};
    double rel_se{0};
};

// log of the mean of exp(l_i), and the relative SE of that mean.
LogMean log_mean_exp(std::vector<double> const& l)
{
    LogMean out;
    if (l.empty())
        return out;
    double m = -INFINITY;
    for (double x : l)
        m = std::max(m, x);
    if (!std::isfinite(m))
        return out;
    std::vector<double> scaled(l.size());
    for (std::size_t i = 0; i < l.size(); ++i)
        scaled[i] = std::exp(l[i] - m);
    auto const ms = mean_se(scaled);
    out.log_mean = m + std::log(ms.mean);
    out.rel_se = ms.se / ms.mean;
    return out;
}

PartitionEstimate estimate_with(WhiteNoiseRealization const& noise,
                                Mollifier const& mollifier,
                                double gamma,
                                PathPredicate const* event,
                                std::size_t M,
                                std::uint64_t path_seed,
                                unsigned threads)
{
    if (M == 0)
        throw std::invalid_argument("partition_function: M must be positive");
    auto const& spec = noise.spec();
    HamiltonianEvaluator eval(noise, mollifier);
    auto w = parallel_map(M, threads, [&](std::size_t m) {
        auto path = sample_brownian(spec, derive_seed(path_seed, "path", m));
        if (event && !(*event)(path))
            return 0.0;
        return std::exp(log_weight(eval(path), gamma));
    });
    auto const ms = mean_se(w);
    PartitionEstimate e;
    e.value = ms.mean;
    e.se = ms.se;
    e.M = M;
    e.noise_seed = noise.seed();
    e.path_seed = path_seed;
    e.gamma = gamma;
    e.T = spec.T;
    return e;
}
}  // namespace

PartitionEstimate partition_function(WhiteNoiseRealization const& noise,
                                     Mollifier const& mollifier,
                                     double gamma,
                                     std::size_t M,
                                     std::uint64_t path_seed,
                                     unsigned threads)
{
    return estimate_with(noise, mollifier, gamma, nullptr, M, path_seed, threads);
}

PartitionEstimate measure_of_event(WhiteNoiseRealization const& noise,
                                   Mollifier const& mollifier,
                                   double gamma,
                                   PathPredicate const& event,
                                   std::size_t M,
                                   std::uint64_t path_seed,
                                   std::string const& event_name,
                                   unsigned threads)
{
    auto e = estimate_with(noise, mollifier, gamma, &event, M, path_seed, threads);
    e.event = event_name;
    return e;
}

ResampleResult normalized_sample(WhiteNoiseRealization const& noise,
                                 Mollifier const& mollifier,
                                 double gamma,
                                 std::size_t M,
                                 std::size_t K,
                                 std::uint64_t seed)
{
    if (M == 0 || K == 0)
        throw std::invalid_argument("normalized_sample: M and K must be positive");
    auto const& spec = noise.spec();
    HamiltonianEvaluator eval(noise, mollifier);
    std::vector<PathSample> proposals;
    std::vector<HamiltonianValue> values;
    std::vector<double> lw;
    for (std::size_t m = 0; m < M; ++m)
    {
        proposals.push_back(
            sample_brownian(spec, derive_seed(seed, "path", m)));
        values.push_back(eval(proposals.back()));
        lw.push_back(log_weight(values.back(), gamma));
    }
    double const top = *std::max_element(lw.begin(), lw.end());
    ResampleResult r;
    r.weights.resize(M);
    double total = 0;
    for (std::size_t m = 0; m < M; ++m)
    {
        r.weights[m] = std::exp(lw[m] - top);
        total += r.weights[m];
    }
    double sq = 0;
    std::vector<double> cumulative(M);
    double run = 0;
    for (std::size_t m = 0; m < M; ++m)
    {
        r.weights[m] /= total;
        sq += r.weights[m] * r.weights[m];
        r.max_weight_fraction = std::max(r.max_weight_fraction, r.weights[m]);
        run += r.weights[m];
        cumulative[m] = run;
    }
    r.ess = 1 / sq;
    r.degenerate = r.max_weight_fraction > 0.5;
    r.ess_sufficient = r.ess >= 10.0 * static_cast<double>(K);

    Stream s(derive_seed(seed, "resample"));
    for (std::size_t k = 0; k < K; ++k)
    {
        double const u = s.uniform() * run;
        auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
        std::size_t const idx = std::min<std::size_t>(
            static_cast<std::size_t>(it - cumulative.begin()), M - 1);
        r.indices.push_back(idx);
        r.paths.push_back(proposals[idx]);
        r.values.push_back(values[idx]);
    }
    return r;
}

//---------------------------------------------------------------------------//
// Replica machinery
//---------------------------------------------------------------------------//

std::vector<HamiltonianTrace> replica_traces(ExperimentConfig const& config,
                                             LatticeSpec const& spec,
                                             Mollifier const& mollifier,
                                             WhiteNoiseRealization const& noise,
                                             std::size_t r,
                                             std::size_t first,
                                             std::size_t count)
{
    HamiltonianEvaluator eval(noise, mollifier);
    std::uint64_t const base = config.path_seed(r);
    std::vector<HamiltonianTrace> out;
    out.reserve(count);
    for (std::size_t m = first; m < first + count; ++m)
    {
        auto path = sample_brownian(spec, derive_seed(base, "path", m));
        out.push_back(eval.trace(path, spec.slabs()));
    }
    return out;
}

double log_partition_from_traces(std::vector<HamiltonianTrace> const& traces,
                                 double gamma,
                                 std::size_t slabs)
{
    std::vector<double> lw(traces.size());
    for (std::size_t m = 0; m < traces.size(); ++m)
        lw[m] = log_weight(traces[m].at(slabs), gamma);
    return log_mean_exp(lw).log_mean;
}

double partition_from_traces(std::vector<HamiltonianTrace> const& traces,
                             double gamma,
                             std::size_t slabs,
                             double* rel_se)
{
    std::vector<double> lw(traces.size());
    for (std::size_t m = 0; m < traces.size(); ++m)
        lw[m] = log_weight(traces[m].at(slabs), gamma);
    auto const lm = log_mean_exp(lw);
    if (rel_se)
        *rel_se = lm.rel_se;
    return std::exp(lm.log_mean);
}

std::vector<std::size_t> horizon_slabs(LatticeSpec const& spec,
                                       std::vector<double> const& T_grid)
{
    std::vector<std::size_t> out;
    for (double T : T_grid)
    {
        double const k = T / spec.dt;
        if (!(T > 0) || std::abs(k - std::round(k)) > 1e-9 * std::max(1.0, k))
        {
            std::ostringstream os;
            os << "horizon " << T << " is not a positive multiple of dt = "
               << spec.dt;
            throw std::invalid_argument(os.str());
        }
        auto const n = static_cast<std::size_t>(std::llround(k));
        if (n > spec.slabs())
            throw std::invalid_argument("horizon beyond the lattice");
        out.push_back(n);
    }
    return out;
}

//---------------------------------------------------------------------------//
// Diagnostics
//---------------------------------------------------------------------------//

CellStatistics cell_statistics(ExperimentConfig const& config,
                               double T,
                               std::size_t cells)
{
    config.validate();
    if (cells < 2)
        throw std::invalid_argument("cell_statistics: need at least two cells");
    auto const spec = config.lattice(T);
    auto const noise = config.noise(spec, 0);
    std::uint64_t const per_slab = spec.cells();
    std::vector<double> x(cells);
    for (std::size_t i = 0; i < cells; ++i)
    {
        auto const k = static_cast<std::size_t>(i / per_slab) % spec.slabs();
        x[i] = noise.base_increment(k, i % per_slab);
    }
    CellStatistics c;
    c.cells = cells;
    c.mean = mean_se(x);
    c.variance = c.mean.sd * c.mean.sd;
    c.expected_variance = spec.cell_variance();
    c.mean_z = c.mean.mean / c.mean.se;
    c.variance_rel_error = c.variance / c.expected_variance - 1;
    return c;
}

CovarianceReport covariance_check(ExperimentConfig const& config,
                                  double T,
                                  std::size_t replicas)
{
    config.validate();
    if (replicas < 2)
        throw std::invalid_argument("covariance_check: need at least two replicas");
    auto const spec = config.lattice(T);
    auto const mol = config.mollifier();
    auto const a = sample_brownian(spec, derive_seed(config.seed, "cov-path", 0));
    auto const b = sample_brownian(spec, derive_seed(config.seed, "cov-path", 1));
    auto const pairs = parallel_map(replicas, config.threads, [&](std::size_t i) {
        auto const noise = sample_noise(spec, derive_seed(config.seed, "cov-noise", i),
                                        config.noise_options());
        HamiltonianEvaluator eval(noise, *mol);
        double const ha = eval(a).H;
        double const hb = eval(b).H;
        return std::array<double, 2>{ha * hb, ha * ha};
    });
    std::vector<double> prod(replicas);
    std::vector<double> sq(replicas);
    for (std::size_t i = 0; i < replicas; ++i)
    {
        prod[i] = pairs[i][0];
        sq[i] = pairs[i][1];
    }
    CovarianceReport rep;
    rep.T = T;
    rep.replicas = replicas;
    rep.overlap = discrete_overlap(spec, *mol, a, b, spec.slabs());
    rep.var_a = discrete_overlap(spec, *mol, a, a, spec.slabs());
    rep.product = mean_se(prod);
    rep.square_a = mean_se(sq);
    rep.z_cov = (rep.product.mean - rep.overlap) / rep.product.se;
    rep.z_var = (rep.square_a.mean - rep.var_a) / rep.square_a.se;
    return rep;
}

MartingaleReport martingale_check(ExperimentConfig const& config,
                                  std::vector<double> const& T_grid)
{
    config.validate();
    if (T_grid.empty())
        throw std::invalid_argument("martingale_check: empty horizon grid");
    double const Tmax = *std::max_element(T_grid.begin(), T_grid.end());
    auto const spec = config.lattice(Tmax);
    auto const slabs = horizon_slabs(spec, T_grid);
    auto const mol = config.mollifier();

    auto values = parallel_map(config.replicas, config.threads, [&](std::size_t r) {
        auto noise = config.noise(spec, r);
        auto traces = replica_traces(config, spec, *mol, noise, r, 0, config.paths);
        std::vector<double> z;
        for (auto k : slabs)
            z.push_back(partition_from_traces(traces, config.gamma, k));
        return z;
    });

    MartingaleReport rep;
    rep.all_ok = true;
    for (std::size_t t = 0; t < T_grid.size(); ++t)
    {
        std::vector<double> col;
        for (auto const& v : values)
            col.push_back(v[t]);
        MartingaleRow row;
        row.T = T_grid[t];
        row.value = mean_se(col);
        row.z = z_score(row.value.mean, row.value.se, 1.0, 0.0);
        row.flagged = std::abs(row.z) > 3;
        rep.all_ok = rep.all_ok && !row.flagged;
        rep.rows.push_back(row);
    }

    // Adaptedness: redraw every slab past each horizon for replica 0.
    rep.adapted = true;
    auto const noise0 = config.noise(spec, 0);
    for (std::size_t t = 0; t < T_grid.size(); ++t)
    {
        auto const redrawn = noise0.with_tail_reseeded(
            slabs[t], derive_seed(config.seed, "tail", t));
        auto traces = replica_traces(
            config, spec, *mol, redrawn, 0, 0, std::min<std::size_t>(config.paths, 64));
        auto ref = replica_traces(
            config, spec, *mol, noise0, 0, 0, std::min<std::size_t>(config.paths, 64));
        double const a = partition_from_traces(traces, config.gamma, slabs[t]);
        double const b = partition_from_traces(ref, config.gamma, slabs[t]);
        rep.adapted = rep.adapted && a == b;
    }
    rep.all_ok = rep.all_ok && rep.adapted;
    return rep;
}

std::vector<MeanSe> l2_right_side(ExperimentConfig const& config,
                                  double T,
                                  std::vector<double> const& gammas,
                                  std::size_t pairs)
{
    auto const spec = config.lattice(T);
    auto const mol = config.mollifier();
    auto overlaps = parallel_map(pairs, config.threads, [&](std::size_t i) {
        auto a = sample_brownian(spec, derive_seed(config.seed, "l2-pair", i, 0));
        auto b = sample_brownian(spec, derive_seed(config.seed, "l2-pair", i, 1));
        return discrete_overlap(spec, *mol, a, b, spec.slabs());
    });
    std::vector<MeanSe> out;
    for (double g : gammas)
    {
        std::vector<double> v(pairs);
        for (std::size_t i = 0; i < pairs; ++i)
            v[i] = std::exp(g * g * overlaps[i]);
        out.push_back(mean_se(v));
    }
    return out;
}

L2Report l2_identity_check(ExperimentConfig const& config,
                           double T,
                           std::size_t pairs)
{
    config.validate();
    if (config.paths < 2)
        throw std::invalid_argument("l2_identity_check: need at least two paths");
    auto const spec = config.lattice(T);
    auto const mol = config.mollifier();
    auto u = parallel_map(config.replicas, config.threads, [&](std::size_t r) {
        auto noise = config.noise(spec, r);
        HamiltonianEvaluator eval(noise, *mol);
        double s = 0, s2 = 0;
        for (std::size_t m = 0; m < config.paths; ++m)
        {
            auto path = sample_brownian(
                spec, derive_seed(config.path_seed(r), "path", m));
            double const w = std::exp(log_weight(eval(path), config.gamma));
            s += w;
            s2 += w * w;
        }
        double const M = static_cast<double>(config.paths);
        // distinct pairs only: unbiased for E[mu^2]
        return (s * s - s2) / (M * (M - 1));
    });
    auto const lhs = mean_se(u);
    auto const rhs = l2_right_side(config, T, {config.gamma}, pairs).front();
    L2Report rep;
    rep.lhs = lhs.mean;
    rep.lhs_se = lhs.se;
    rep.rhs = rhs.mean;
    rep.rhs_se = rhs.se;
    rep.z = z_score(lhs.mean, lhs.se, rhs.mean, rhs.se);
    rep.replicas = config.replicas;
    rep.M = config.paths;
    rep.pairs = pairs;
    return rep;
}

std::pair<MeanSe, MeanSe> occupation_integral(Mollifier const& mollifier,
                                              std::span<double const> x,
                                              double T,
                                              OccupationOptions const& options)
{
    int const d = mollifier.dimension();
    if (x.size() != static_cast<std::size_t>(d))
        throw std::invalid_argument("occupation_integral: start has wrong size");
    auto const steps = static_cast<std::size_t>(std::llround(T / options.dt));
    double const sd = std::sqrt(options.dt);
    double const reach = 2 * mollifier.radius();
    std::vector<double> first(options.paths), second(options.paths);
    for (std::size_t i = 0; i < options.paths; ++i)
    {
        Stream s(derive_seed(options.seed, "occupation", i));
        std::array<double, max_dimension> w{};
        std::copy(x.begin(), x.end(), w.begin());
        double acc = 0;
        for (std::size_t k = 0; k < 2 * steps; ++k)
        {
            if (k == steps)
                first[i] = acc;
            double r2 = 0;
            for (int c = 0; c < d; ++c)
                r2 += w[c] * w[c];
            double const r = std::sqrt(2 * r2);
            if (r < reach)
                acc += mollifier.selfconv(r) * options.dt;
            for (int c = 0; c < d; ++c)
                w[c] += sd * s.normal();
        }
        second[i] = acc;
    }
    return {mean_se(first), mean_se(second)};
}

KhasminskiiReport khasminskii_certificate(Mollifier const& mollifier,
                                          double gamma,
                                          double T_cutoff,
                                          OccupationOptions const& options,
                                          std::size_t start_count,
                                          unsigned threads)
{
    int const d = mollifier.dimension();
    if (d <= 2)
        throw DivergentIntegral(
            "occupation integral of a recurrent Brownian motion diverges (d <= 2)");
    if (!(T_cutoff > 0) || start_count == 0)
        throw std::invalid_argument("khasminskii_certificate: bad cutoff or grid");
    double const rho = mollifier.radius();
    double const rmax = std::numbers::sqrt2 * rho;
    auto rows = parallel_map(start_count, threads, [&](std::size_t i) {
        std::vector<double> x(static_cast<std::size_t>(d), 0.0);
        x[0] = rmax * static_cast<double>(i) / static_cast<double>(start_count);
        auto [a, b] = occupation_integral(mollifier, x, T_cutoff, options);
        return KhasminskiiRow{x[0], a, b};
    });
    KhasminskiiReport rep;
    rep.starts = rows;
    for (auto const& row : rows)
    {
        rep.I_hat = std::max(rep.I_hat, row.at_cutoff.mean);
        rep.I_hat_double = std::max(rep.I_hat_double, row.at_double.mean);
    }
    double const half = 0.5 * d;
    double const ball = std::pow(std::numbers::pi, half)
                        / std::tgamma(half + 1) * std::pow(rho, d);
    rep.tail_bound = mollifier.selfconv0() * ball * std::pow(std::numbers::pi, -half)
                     * (2.0 / (d - 2)) * std::pow(T_cutoff, 1 - half);
    rep.relative_change = rep.I_hat > 0
                              ? std::abs(rep.I_hat_double - rep.I_hat) / rep.I_hat
                              : 0.0;
    rep.stable = rep.relative_change <= 0.05;
    rep.certified = gamma * gamma * (rep.I_hat + rep.tail_bound) < 1;
    return rep;
}

std::vector<FreeEnergyRow> free_energy(ExperimentConfig const& config,
                                       std::vector<double> const& T_grid)
{
    config.validate();
    double const Tmax = *std::max_element(T_grid.begin(), T_grid.end());
    auto const spec = config.lattice(Tmax);
    auto const slabs = horizon_slabs(spec, T_grid);
    auto const mol = config.mollifier();
    auto values = parallel_map(config.replicas, config.threads, [&](std::size_t r) {
        auto noise = config.noise(spec, r);
        auto traces = replica_traces(config, spec, *mol, noise, r, 0, config.paths);
        std::vector<double> v;
        for (std::size_t t = 0; t < slabs.size(); ++t)
            v.push_back(log_partition_from_traces(traces, config.gamma, slabs[t])
                        / T_grid[t]);
        return v;
    });
    std::vector<FreeEnergyRow> out;
    for (std::size_t t = 0; t < T_grid.size(); ++t)
    {
        std::vector<double> col;
        for (auto const& v : values)
            col.push_back(v[t]);
        FreeEnergyRow row;
        row.T = T_grid[t];
        row.estimate = mean_se(col);
        row.ci = bootstrap_mean_ci(
            col, 1000, 0.95, derive_seed(config.seed, "free-energy-ci", t));
        out.push_back(row);
    }
    return out;
}

double f_gamma_energy(double gamma,
                      Mollifier const& mollifier,
                      std::vector<AtomicMeasure> const& collection)
{
    int const d = mollifier.dimension();
    double total = 0;
    for (auto const& a : collection)
    {
        if (a.positions.size() != a.masses.size() * static_cast<std::size_t>(d))
            throw std::invalid_argument("f_gamma_energy: atom shape mismatch");
        for (double m : a.masses)
        {
            if (m < 0)
                throw std::invalid_argument("f_gamma_energy: negative mass");
            total += m;
        }
    }
    if (total > 1 + 1e-12)
    {
        std::ostringstream os;
        os << "f_gamma_energy: total mass " << total << " exceeds 1";
        throw std::invalid_argument(os.str());
    }
    double sum = 0;
    for (auto const& a : collection)
    {
        std::size_t const n = a.masses.size();
        for (std::size_t i = 0; i < n; ++i)
        {
            for (std::size_t j = 0; j < n; ++j)
            {
                double r2 = 0;
                for (int c = 0; c < d; ++c)
                {
                    double const v = a.positions[i * d + c] - a.positions[j * d + c];
                    r2 += v * v;
                }
                double const k
                    = i == j ? mollifier.selfconv0() : mollifier.selfconv(std::sqrt(r2));
                sum += a.masses[i] * a.masses[j] * k;
            }
        }
    }
    return 0.5 * gamma * gamma * sum;
}

}  // namespace wgmc
