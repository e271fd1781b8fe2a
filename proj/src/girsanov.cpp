#include "wgmc/girsanov.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "wgmc/parallel.hpp"
#include "wgmc/paths.hpp"
#include "wgmc/rng.hpp"

namespace wgmc
{
SizeBiasedPair size_biased_pair(LatticeSpec const& spec,
                                std::shared_ptr<Mollifier const> mollifier,
                                double gamma,
                                std::uint64_t seed,
                                SizeBiasOptions const& options)
{
    auto path = sample_brownian(spec, derive_seed(seed, "q-path"));
    auto base = sample_noise(spec, derive_seed(seed, "q-noise"));
    auto noise = shifted_noise(base, mollifier, path, gamma);
    if (options.extra_unit_tilt)
    {
        auto const unit = static_cast<std::size_t>(std::llround(1 / spec.dt));
        noise = shifted_noise(noise, mollifier, path, gamma, unit);
    }
    return {std::move(path), std::move(noise), gamma, spec.T};
}

GirsanovIdentityReport girsanov_identity_check(ExperimentConfig const& config,
                                               double T,
                                               std::size_t triples)
{
    config.validate();
    auto const spec = config.lattice(T);
    auto const mol = config.mollifier();
    auto errs = parallel_map(triples, config.threads, [&](std::size_t i) {
        auto const path = sample_brownian(spec, derive_seed(config.seed, "gi-path", i));
        auto const other = sample_brownian(spec, derive_seed(config.seed, "gi-other", i));
        auto const noise = sample_noise(spec, derive_seed(config.seed, "gi-noise", i),
                                        config.noise_options());
        double const gamma
            = 0.05 + 0.95 * Stream(derive_seed(config.seed, "gi-gamma", i)).uniform();
        auto const shifted = shifted_noise(noise, mol, path, gamma);

        HamiltonianEvaluator before(noise, *mol);
        HamiltonianEvaluator after(shifted, *mol);
        auto const h0 = before(path);
        auto const h1 = after(path);
        double const own = std::abs(h1.H - h0.H - gamma * h0.var) / (gamma * h0.var);

        auto const o0 = before(other);
        auto const o1 = after(other);
        double const cross = gamma * discrete_overlap(spec, *mol, path, other, spec.slabs());
        double const cross_err
            = std::abs(o1.H - o0.H - cross) / (gamma * std::sqrt(h0.var * o0.var));
        return std::array<double, 2>{own, cross_err};
    });
    GirsanovIdentityReport rep;
    rep.triples = triples;
    for (auto const& e : errs)
    {
        rep.max_rel_error = std::max(rep.max_rel_error, e[0]);
        rep.max_other_rel_error = std::max(rep.max_other_rel_error, e[1]);
    }
    rep.ok = rep.max_rel_error < 1e-10 && rep.max_other_rel_error < 1e-10;
    return rep;
}

ThickPointReport thick_point_stat(ExperimentConfig const& config,
                                  std::vector<double> const& T_grid,
                                  std::size_t replicas,
                                  SizeBiasOptions const& options)
{
    config.validate();
    double const Tmax = *std::max_element(T_grid.begin(), T_grid.end());
    auto const spec = config.lattice(Tmax);
    auto const slabs = horizon_slabs(spec, T_grid);
    auto const mol = config.mollifier();
    auto per = parallel_map(replicas, config.threads, [&](std::size_t i) {
        auto pair = size_biased_pair(
            spec, mol, config.gamma, derive_seed(config.seed, "q", i), options);
        HamiltonianEvaluator eval(pair.noise, *mol);
        auto tr = eval.trace(pair.path, spec.slabs());
        std::vector<double> v;
        for (auto k : slabs)
        {
            v.push_back(tr.H[k] / tr.var[k]);
            v.push_back(tr.var[k]);
        }
        return v;
    });

    ThickPointReport rep;
    rep.means_ok = true;
    for (std::size_t t = 0; t < T_grid.size(); ++t)
    {
        std::vector<double> ratio, var;
        for (auto const& v : per)
        {
            ratio.push_back(v[2 * t]);
            var.push_back(v[2 * t + 1]);
        }
        ThickPointRow row;
        row.T = T_grid[t];
        row.ratio = mean_se(ratio);
        row.mean_var = mean_se(var).mean;
        row.z = z_score(row.ratio.mean, row.ratio.se, config.gamma, 0.0);
        rep.means_ok = rep.means_ok && std::abs(row.z) <= 3;
        int const bins = 20;
        double const lo = row.ratio.mean - 4 * row.ratio.sd;
        double const hi = row.ratio.mean + 4 * row.ratio.sd;
        for (int b = 0; b <= bins; ++b)
            row.histogram_edges.push_back(lo + (hi - lo) * b / bins);
        row.histogram_counts.assign(bins, 0);
        if (hi > lo)
        {
            for (double x : ratio)
            {
                auto b = static_cast<long>(std::floor((x - lo) / (hi - lo) * bins));
                if (b >= 0 && b < bins)
                    ++row.histogram_counts[static_cast<std::size_t>(b)];
            }
        }
        rep.rows.push_back(std::move(row));
    }
    return rep;
}

namespace
{
struct BoxRange
{
    std::array<std::int64_t, max_dimension> lo{};
    std::array<std::int64_t, max_dimension> hi{};
    bool empty{false};
};

BoxRange cell_range(LatticeSpec const& spec, SlabCellFunction const& f)
{
    if (f.lo.size() != static_cast<std::size_t>(spec.d)
        || f.hi.size() != static_cast<std::size_t>(spec.d))
        throw std::invalid_argument("test function box has wrong dimension");
    BoxRange b;
    auto const last = static_cast<std::int64_t>(spec.side()) - 1;
    for (int c = 0; c < spec.d; ++c)
    {
        b.lo[c] = std::max<std::int64_t>(
            0, static_cast<std::int64_t>(std::ceil((f.lo[c] + spec.L) / spec.dx - 1e-9)));
        b.hi[c] = std::min<std::int64_t>(
            last, static_cast<std::int64_t>(std::floor((f.hi[c] + spec.L) / spec.dx + 1e-9)));
        if (b.hi[c] < b.lo[c])
            b.empty = true;
    }
    return b;
}

bool inside(SlabCellFunction const& f, std::span<double const> y)
{
    for (std::size_t c = 0; c < y.size(); ++c)
    {
        if (y[c] < f.lo[c] - 1e-12 || y[c] > f.hi[c] + 1e-12)
            return false;
    }
    return true;
}
}  // namespace

double noise_pairing(WhiteNoiseRealization const& noise,
                     SlabCellFunction const& f)
{
    auto const& spec = noise.spec();
    auto const box = cell_range(spec, f);
    if (box.empty)
        return 0.0;
    int const d = spec.d;
    std::size_t const k_end = std::min(f.slab_end, spec.slabs());
    std::array<std::int64_t, max_dimension> idx{};
    std::array<double, max_dimension> y{};
    double sum = 0;
    for (std::size_t k = f.slab_begin; k < k_end; ++k)
    {
        for (int c = 0; c < d; ++c)
            idx[c] = box.lo[c];
        while (true)
        {
            std::span<std::int64_t const> id(idx.data(), static_cast<std::size_t>(d));
            std::span<double> ys(y.data(), static_cast<std::size_t>(d));
            noise.cell_center(id, ys);
            double const v = f.value(k, ys);
            if (v != 0)
                sum += v * noise.increment(k, noise.flat_index(id), ys);
            int c = 0;
            for (; c < d; ++c)
            {
                if (++idx[c] <= box.hi[c])
                    break;
                idx[c] = box.lo[c];
            }
            if (c == d)
                break;
        }
    }
    return sum;
}

double drift_pairing(LatticeSpec const& spec,
                     Mollifier const& mollifier,
                     PathSample const& path,
                     SlabCellFunction const& f,
                     double gamma)
{
    std::size_t const stride = path_stride(spec, path);
    std::size_t const k_end = std::min(f.slab_end, spec.slabs());
    CellStencil stencil(spec, mollifier.radius());
    double sum = 0;
    for (std::size_t k = f.slab_begin; k < k_end; ++k)
    {
        stencil.for_each(path.at(k * stride),
                         static_cast<double>(k) * spec.dt,
                         [&](std::uint64_t, double r2, std::span<double const> y) {
                             if (inside(f, y))
                                 sum += f.value(k, y) * mollifier.value_r2(r2);
                         });
    }
    return gamma * sum * spec.cell_variance();
}

std::vector<SlabCellFunction> default_test_functions(LatticeSpec const& spec)
{
    int const d = spec.d;
    double const dt = spec.dt;
    std::vector<SlabCellFunction> fs;

    SlabCellFunction box;
    box.name = "central_box";
    box.lo.assign(d, -1.0);
    box.hi.assign(d, 1.0);
    box.value = [](std::size_t, std::span<double const>) { return 1.0; };
    fs.push_back(box);

    SlabCellFunction osc;
    osc.name = "oscillatory";
    osc.lo.assign(d, -1.5);
    osc.hi.assign(d, 1.5);
    osc.value = [dt](std::size_t k, std::span<double const> y) {
        double const t = static_cast<double>(k) * dt;
        return std::cos(std::numbers::pi * y[0]) * std::cos(2 * std::numbers::pi * t)
               + 0.5 * std::sin(std::numbers::pi * y[y.size() - 1]);
    };
    fs.push_back(osc);

    SlabCellFunction far;
    far.name = "separated_box";
    far.lo.assign(d, -0.5);
    far.hi.assign(d, 0.5);
    far.lo[0] = 1.5;
    far.hi[0] = 2.5;
    far.value = [](std::size_t, std::span<double const>) { return 1.0; };
    fs.push_back(far);
    return fs;
}

UniquenessReport uniqueness_identity_check(ExperimentConfig const& config,
                                           double T,
                                           std::vector<SlabCellFunction> const& fs,
                                           std::size_t replicas)
{
    config.validate();
    auto const spec = config.lattice(T);
    auto const mol = config.mollifier();
    std::size_t const F = fs.size();
    auto rows = parallel_map(replicas, config.threads, [&](std::size_t i) {
        auto pair = size_biased_pair(
            spec, mol, config.gamma, derive_seed(config.seed, "uq", i));
        auto free_path = sample_brownian(spec, derive_seed(config.seed, "ur", i));
        std::vector<double> v(2 * F);
        for (std::size_t f = 0; f < F; ++f)
        {
            v[f] = noise_pairing(pair.noise, fs[f]);
            v[F + f] = drift_pairing(spec, *mol, free_path, fs[f], config.gamma);
        }
        return v;
    });
    UniquenessReport rep;
    rep.all_ok = true;
    for (std::size_t f = 0; f < F; ++f)
    {
        std::vector<double> l, r;
        for (auto const& v : rows)
        {
            l.push_back(v[f]);
            r.push_back(v[F + f]);
        }
        UniquenessRow row;
        row.name = fs[f].name;
        row.lhs = mean_se(l);
        row.rhs = mean_se(r);
        row.z = z_score(row.lhs.mean, row.lhs.se, row.rhs.mean, row.rhs.se);
        rep.all_ok = rep.all_ok && std::abs(row.z) <= 3;
        rep.rows.push_back(row);
    }
    return rep;
}

ReweightingReport reweighting_check(ExperimentConfig const& config,
                                    double T,
                                    std::size_t replicas)
{
    config.validate();
    auto const spec = config.lattice(T);
    auto const mol = config.mollifier();
    double const g = config.gamma;
    auto rows = parallel_map(replicas, config.threads, [&](std::size_t i) {
        auto pair = size_biased_pair(spec, mol, g, derive_seed(config.seed, "rq", i));
        double const hq = HamiltonianEvaluator(pair.noise, *mol)(pair.path).H;
        auto noise = sample_noise(spec, derive_seed(config.seed, "rp-noise", i));
        auto path = sample_brownian(spec, derive_seed(config.seed, "rp-path", i));
        auto const v = HamiltonianEvaluator(noise, *mol)(path);
        double const w = std::exp(g * v.H - 0.5 * g * g * v.var);
        return std::pair<double, double>{hq, w * v.H};
    });
    std::vector<double> q, p;
    for (auto const& [a, b] : rows)
    {
        q.push_back(a);
        p.push_back(b);
    }
    ReweightingReport rep;
    rep.q_side = mean_se(q);
    rep.weighted = mean_se(p);
    rep.z = z_score(rep.q_side.mean, rep.q_side.se, rep.weighted.mean, rep.weighted.se);
    return rep;
}

}  // namespace wgmc
