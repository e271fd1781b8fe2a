#include "wgmc/paths.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include "wgmc/bessel.hpp"
#include "wgmc/errors.hpp"
#include "wgmc/parallel.hpp"
#include "wgmc/rng.hpp"

namespace wgmc
{
//---------------------------------------------------------------------------//
// Brownian sampling
//---------------------------------------------------------------------------//

PathSample sample_brownian(int d,
                           double dt,
                           std::size_t steps,
                           std::uint64_t seed,
                           std::span<double const> start)
{
    if (d < 1)
        throw std::invalid_argument("sample_brownian: d must be >= 1");
    if (!(dt > 0))
        throw std::invalid_argument("sample_brownian: dt must be positive");
    if (!start.empty() && start.size() != static_cast<std::size_t>(d))
        throw std::invalid_argument("sample_brownian: start has wrong size");
    PathSample p = PathSample::zeros(d, dt, steps);
    p.seed = seed;
    if (!start.empty())
        std::copy(start.begin(), start.end(), p.positions.begin());
    Stream s(seed);
    double const sd = std::sqrt(dt);
    std::size_t const n = static_cast<std::size_t>(d);
    for (std::size_t i = 1; i <= steps; ++i)
    {
        for (std::size_t c = 0; c < n; ++c)
        {
            p.positions[i * n + c]
                = p.positions[(i - 1) * n + c] + sd * s.normal();
        }
    }
    return p;
}

PathSample sample_brownian(LatticeSpec const& spec,
                           std::uint64_t seed,
                           std::span<double const> start,
                           std::size_t refine)
{
    refine = std::max<std::size_t>(refine, 1);
    return sample_brownian(spec.d,
                           spec.dt / static_cast<double>(refine),
                           spec.slabs() * refine,
                           seed,
                           start);
}

PathSample
extend_brownian(PathSample const& path, std::size_t extra, std::uint64_t seed)
{
    PathSample out = path;
    std::size_t const n = static_cast<std::size_t>(path.d);
    std::size_t const base = path.steps();
    out.positions.resize((base + extra + 1) * n);
    Stream s(seed);
    double const sd = std::sqrt(path.dt);
    for (std::size_t i = base + 1; i <= base + extra; ++i)
    {
        for (std::size_t c = 0; c < n; ++c)
        {
            out.positions[i * n + c]
                = out.positions[(i - 1) * n + c] + sd * s.normal();
        }
    }
    return out;
}

PathSample coarsen(PathSample const& path, std::size_t stride)
{
    if (stride == 0 || path.steps() % stride != 0)
        throw std::invalid_argument("coarsen: stride must divide the steps");
    std::size_t const steps = path.steps() / stride;
    PathSample out = PathSample::zeros(path.d, path.dt * stride, steps);
    out.seed = path.seed;
    for (std::size_t i = 0; i <= steps; ++i)
    {
        auto src = path.at(i * stride);
        std::copy(src.begin(), src.end(), out.at(i).begin());
    }
    return out;
}

//---------------------------------------------------------------------------//
// Weights and norms
//---------------------------------------------------------------------------//

WeightFunction WeightFunction::linear_max(double a)
{
    if (!(a > 0))
        throw std::invalid_argument("WeightFunction: scale must be positive");
    WeightFunction w;
    w.kind_ = Kind::linear_max;
    w.a_ = a;
    return w;
}

WeightFunction WeightFunction::constant(double a)
{
    if (!(a > 0))
        throw std::invalid_argument("WeightFunction: scale must be positive");
    WeightFunction w;
    w.kind_ = Kind::constant;
    w.a_ = a;
    return w;
}

WeightFunction WeightFunction::custom(std::function<double(double)> g,
                                      std::string name)
{
    WeightFunction w;
    w.kind_ = Kind::custom;
    w.g_ = std::move(g);
    w.name_ = std::move(name);
    return w;
}

std::string WeightFunction::name() const
{
    switch (kind_)
    {
        case Kind::linear_max:
            return "linear_max";
        case Kind::constant:
            return "constant";
        case Kind::custom:
            return name_;
    }
    return {};
}

double WeightFunction::operator()(double t) const
{
    switch (kind_)
    {
        case Kind::linear_max:
            return a_ * std::max(1.0, t);
        case Kind::constant:
            return a_;
        case Kind::custom:
            return g_(t);
    }
    return 0;
}

double WeightFunction::inverse_square_integral() const
{
    auto inv2 = [this](double t) {
        double const g = (*this)(t);
        return 1 / (g * g);
    };
    switch (kind_)
    {
        case Kind::linear_max: {
            double const head
                = boost::math::quadrature::gauss<double, 20>::integrate(
                    inv2, 0.0, 1.0);
            return head + 1 / (a_ * a_);  // tail: int_1^inf (a t)^-2
        }
        case Kind::constant:
            throw DivergentIntegral(
                "integral of g^-2 diverges for a constant weight");
        case Kind::custom: {
            boost::math::quadrature::exp_sinh<double> integrator;
            double err = 0;
            double v = std::numeric_limits<double>::infinity();
            try
            {
                // split at 1 so kinks of max(1, .)-type weights sit on an endpoint
                boost::math::quadrature::tanh_sinh<double> head;
                double e1 = 0;
                v = head.integrate(inv2, 0.0, 1.0, 1e-10, &e1)
                    + integrator.integrate(inv2, 1.0, INFINITY, 1e-10, &err);
                err += e1;
            }
            catch (std::exception const&)
            {
            }
            if (!std::isfinite(v) || err > 1e-6 * std::abs(v))
                throw DivergentIntegral("integral of g^-2 for weight '"
                                        + name_ + "' is not finite");
            return v;
        }
    }
    return 0;
}

double weighted_norm(PathSample const& path,
                     WeightFunction const& g,
                     double horizon)
{
    if (horizon > path.horizon() * (1 + 1e-12))
        throw std::invalid_argument("weighted_norm: horizon exceeds the path");
    double best = 0;
    for (std::size_t i = 1; i <= path.steps(); ++i)
    {
        double const t = path.time(i);
        if (t > horizon * (1 + 1e-12))
            break;
        double r2 = 0;
        for (double x : path.at(i))
            r2 += x * x;
        best = std::max(best, std::sqrt(r2) / g(t));
    }
    return best;
}

double modulus(PathSample const& path, double T, double delta)
{
    if (!(delta > 0))
        throw std::invalid_argument("modulus: delta must be positive");
    std::size_t const last = std::min(
        path.steps(),
        static_cast<std::size_t>(std::floor(T / path.dt * (1 + 1e-12))));
    double best = 0;
    for (std::size_t i = 0; i <= last; ++i)
    {
        auto a = path.at(i);
        for (std::size_t j = i + 1; j <= last; ++j)
        {
            if (!(static_cast<double>(j - i) * path.dt < delta * (1 - 1e-12)))
                break;
            auto b = path.at(j);
            double r2 = 0;
            for (int c = 0; c < path.d; ++c)
                r2 += (a[c] - b[c]) * (a[c] - b[c]);
            best = std::max(best, r2);
        }
    }
    return std::sqrt(best);
}

double smallball_constant(WeightFunction const& g, int d)
{
    double const j = bessel_root(d);
    return 0.5 * j * j * g.inverse_square_integral();
}

//---------------------------------------------------------------------------//
// Small-ball Monte Carlo
//---------------------------------------------------------------------------//

double SmallBallQuery::resolved_horizon() const
{
    return horizon > 0 ? horizon : 1 / (eps * eps);
}

std::size_t SmallBallQuery::steps() const
{
    double const n = resolved_horizon() / dt;
    if (std::abs(n - std::round(n)) > 1e-9 * std::max(1.0, n))
        throw std::invalid_argument(
            "small-ball horizon must be a multiple of the path step");
    return static_cast<std::size_t>(std::llround(n));
}

namespace
{
std::vector<double> barrier_squares(SmallBallQuery const& q, std::size_t n)
{
    std::vector<double> b(n + 1, INFINITY);
    for (std::size_t i = 1; i <= n; ++i)
    {
        double const R = q.r * q.eps * q.g(q.dt * static_cast<double>(i));
        b[i] = R * R;
    }
    return b;
}

// Simulates the path of `seed` until it leaves the ball; true if it never
// does on (0, horizon].
bool survives(SmallBallQuery const& q,
              std::vector<double> const& barrier,
              std::uint64_t seed)
{
    Stream s(seed);
    double const sd = std::sqrt(q.dt);
    std::array<double, max_dimension> x{};
    PathSample const* center = q.center.get();
    for (std::size_t i = 1; i < barrier.size(); ++i)
    {
        double r2 = 0;
        for (int c = 0; c < q.d; ++c)
        {
            x[c] += sd * s.normal();
            double const v = x[c] - (center ? center->at(i)[c] : 0.0);
            r2 += v * v;
        }
        if (r2 >= barrier[i])
            return false;
    }
    return true;
}

struct BatchOutcome
{
    double log_p{-INFINITY};
    std::size_t survivors{0};
    std::vector<PathSample> paths;
};

// One fixed-population run: particles are killed on leaving the ball and the
// population is refilled by uniform copies of the living whenever fewer
// than half survive. prod(alive / N) over refills estimates P_0(A) without
// bias.
BatchOutcome split_batch(SmallBallQuery const& q,
                         std::vector<double> const& barrier,
                         std::size_t N,
                         std::size_t keep,
                         std::uint64_t seed)
{
    struct Segment
    {
        std::vector<std::uint32_t> parent;
        std::vector<double> kept;  // [particle][kept time][d]
        std::size_t kept_times{0};
    };

    std::size_t const n = barrier.size() - 1;
    std::size_t const d = static_cast<std::size_t>(q.d);
    double const sd = std::sqrt(q.dt);
    PathSample const* center = q.center.get();
    Stream s(seed);

    std::vector<double> pos(N * d, 0.0), scratch;
    std::vector<char> alive(N, 1);
    std::vector<std::uint32_t> living;
    living.reserve(N);
    std::vector<Segment> segs(1);
    std::size_t const times_total = keep ? n / keep + 1 : 0;
    auto reserve_kept = [&](Segment& sg) {
        if (keep)
            sg.kept.assign(N * times_total * d, 0.0);
    };
    reserve_kept(segs[0]);
    if (keep)
        segs[0].kept_times = 1;  // the origin

    BatchOutcome out;
    double log_p = 0;
    std::size_t a = N;
    for (std::size_t i = 1; i <= n; ++i)
    {
        a = 0;
        for (std::size_t k = 0; k < N; ++k)
        {
            if (!alive[k])
                continue;
            double* x = pos.data() + k * d;
            double r2 = 0;
            for (std::size_t c = 0; c < d; ++c)
            {
                x[c] += sd * s.normal();
                double const v = x[c] - (center ? center->at(i)[c] : 0.0);
                r2 += v * v;
            }
            if (r2 >= barrier[i])
                alive[k] = 0;
            else
                ++a;
        }
        if (keep && i % keep == 0)
        {
            Segment& sg = segs.back();
            std::size_t const slot = sg.kept_times++;
            for (std::size_t k = 0; k < N; ++k)
            {
                std::copy_n(pos.data() + k * d,
                            d,
                            sg.kept.data() + (k * times_total + slot) * d);
            }
        }
        if (a == 0)
            return out;
        if (2 * a < N && i < n)
        {
            log_p += std::log(static_cast<double>(a) / static_cast<double>(N));
            living.clear();
            for (std::size_t k = 0; k < N; ++k)
                if (alive[k])
                    living.push_back(static_cast<std::uint32_t>(k));
            Segment next;
            next.parent.resize(N);
            scratch.resize(N * d);
            for (std::size_t k = 0; k < N; ++k)
            {
                std::uint32_t const from = living[s.below(a)];
                next.parent[k] = from;
                std::copy_n(pos.data() + from * d, d, scratch.data() + k * d);
            }
            pos.swap(scratch);
            std::fill(alive.begin(), alive.end(), 1);
            if (keep)
            {
                reserve_kept(next);
                // kept times recorded before the refill stay with the parent
                next.kept_times = 0;
            }
            segs.push_back(std::move(next));
            a = N;
        }
    }
    log_p += std::log(static_cast<double>(a) / static_cast<double>(N));
    out.log_p = log_p;
    out.survivors = a;

    if (keep)
    {
        for (std::size_t k = 0; k < N; ++k)
        {
            if (!alive[k])
                continue;
            PathSample p = PathSample::zeros(q.d, q.dt * keep, n / keep);
            p.seed = seed;
            // walk the ancestry back to the first segment
            std::size_t idx = k;
            std::size_t end = times_total;
            for (std::size_t sgi = segs.size(); sgi-- > 0;)
            {
                Segment const& sg = segs[sgi];
                std::size_t const begin = end - sg.kept_times;
                std::copy_n(sg.kept.data() + idx * times_total * d,
                            sg.kept_times * d,
                            p.positions.data() + begin * d);
                end = begin;
                if (sgi > 0)
                    idx = sg.parent[idx];
            }
            out.paths.push_back(std::move(p));
        }
    }
    return out;
}

double log_mean_exp(std::vector<double> const& v)
{
    double m = -INFINITY;
    for (double x : v)
        m = std::max(m, x);
    if (!std::isfinite(m))
        return -INFINITY;
    double s = 0;
    for (double x : v)
        s += std::exp(x - m);
    return m + std::log(s / static_cast<double>(v.size()));
}
}  // namespace

bool in_ball(PathSample const& path,
             SmallBallQuery const& query,
             PathSample const* shift)
{
    std::size_t const n = query.steps();
    if (path.steps() < n || (shift && shift->steps() < n))
        throw std::invalid_argument("in_ball: path shorter than the horizon");
    for (std::size_t i = 1; i <= n; ++i)
    {
        double const R
            = query.r * query.eps * query.g(query.dt * static_cast<double>(i));
        auto x = path.at(i);
        double r2 = 0;
        for (int c = 0; c < path.d; ++c)
        {
            double const v = x[c] - (shift ? shift->at(i)[c] : 0.0)
                             - (query.center ? query.center->at(i)[c] : 0.0);
            r2 += v * v;
        }
        if (r2 >= R * R)
            return false;
    }
    return true;
}

SmallBallResult wiener_smallball_mc(SmallBallQuery const& query,
                                    SmallBallOptions const& options,
                                    std::uint64_t seed)
{
    if (query.d < 1 || query.d > max_dimension)
        throw std::invalid_argument("small-ball: bad dimension");
    if (!(query.r > 0) || !(query.eps > 0))
        throw std::invalid_argument("small-ball: r and eps must be positive");
    if (options.samples == 0)
        throw std::invalid_argument("small-ball: need at least one sample");
    std::size_t const n = query.steps();
    if (options.keep_stride && n % options.keep_stride != 0)
        throw std::invalid_argument("small-ball: keep_stride must divide steps");
    auto const barrier = barrier_squares(query, n);
    if (query.center
        && (query.center->d != query.d || query.center->steps() < n))
        throw std::invalid_argument("small-ball: center must live on the query grid");

    SmallBallResult res;
    res.horizon = query.resolved_horizon();

    if (options.method == SmallBallMethod::rejection)
    {
        std::size_t const N = options.samples;
        auto hit = parallel_map(N, options.threads, [&](std::size_t i) {
            return static_cast<char>(
                survives(query, barrier, derive_seed(seed, "smallball", i)));
        });
        res.samples = N;
        for (std::size_t i = 0; i < N; ++i)
        {
            if (hit[i])
                res.accepted_seeds.push_back(derive_seed(seed, "smallball", i));
        }
        res.hits = res.accepted_seeds.size();
        auto const pr = proportion(res.hits, N);
        res.p = pr.mean;
        res.se = pr.se;
        res.batch_p = {res.p};
        if (res.hits == 0)
        {
            res.status = RunStatus::resolution_exhausted;
            return res;
        }
        res.log_p = std::log(res.p);
        res.log_se = res.se / res.p;
        if (options.keep_stride)
        {
            double const lw = -std::log(static_cast<double>(N));
            for (auto s : res.accepted_seeds)
            {
                res.conditioned.push_back(coarsen(
                    sample_brownian(query.d, query.dt, n, s), options.keep_stride));
                res.conditioned_log_weight.push_back(lw);
                res.conditioned_batch.push_back(0);
            }
        }
        return res;
    }

    std::size_t const B = std::max<std::size_t>(options.batches, 1);
    auto batches = parallel_map(B, options.threads, [&](std::size_t b) {
        return split_batch(query,
                           barrier,
                           options.samples,
                           options.keep_stride,
                           derive_seed(seed, "splitting", b));
    });
    std::vector<double> logs;
    res.samples = B * options.samples;
    for (auto const& b : batches)
    {
        logs.push_back(b.log_p);
        res.hits += b.survivors;
    }
    if (res.hits == 0)
    {
        res.status = RunStatus::resolution_exhausted;
        res.batch_p.assign(B, 0.0);
        return res;
    }
    res.log_p = log_mean_exp(logs);
    // Spread of the batch estimates relative to their mean.
    std::vector<double> rel;
    for (double l : logs)
        rel.push_back(std::exp(l - res.log_p));
    auto const ms = mean_se(rel);
    res.log_se = ms.se;  // SE of p / p
    res.p = std::exp(res.log_p);
    res.se = res.p * ms.se;
    for (double l : logs)
        res.batch_p.push_back(std::exp(l));
    if (options.keep_stride)
    {
        double const lb = std::log(static_cast<double>(B));
        for (std::size_t bi = 0; bi < B; ++bi)
        {
            auto& b = batches[bi];
            double const lw = b.log_p - std::log(static_cast<double>(b.survivors)) - lb;
            for (auto& p : b.paths)
            {
                res.conditioned.push_back(std::move(p));
                res.conditioned_log_weight.push_back(lw);
                res.conditioned_batch.push_back(bi);
            }
        }
    }
    return res;
}

//---------------------------------------------------------------------------//
// Anderson / Cameron-Martin
//---------------------------------------------------------------------------//

AndersonReport anderson_check(SmallBallQuery const& query,
                              std::vector<PathSample> const& shifts,
                              std::size_t samples,
                              std::uint64_t seed,
                              unsigned threads)
{
    std::size_t const n = query.steps();
    for (auto const& s : shifts)
    {
        if (s.d != query.d || s.steps() < n
            || std::abs(s.dt - query.dt) > 1e-12 * query.dt)
            throw std::invalid_argument(
                "anderson_check: shifts must live on the query grid");
    }
    std::size_t const S = shifts.size();
    // row i: centered indicator followed by one per shift
    auto rows = parallel_map(samples, threads, [&](std::size_t i) {
        auto path = sample_brownian(
            query.d, query.dt, n, derive_seed(seed, "anderson", i));
        std::vector<char> r(S + 1);
        r[0] = in_ball(path, query);
        for (std::size_t k = 0; k < S; ++k)
            r[k + 1] = in_ball(path, query, &shifts[k]);
        return r;
    });

    AndersonReport rep;
    rep.samples = samples;
    std::vector<double> centered(samples);
    for (std::size_t i = 0; i < samples; ++i)
        centered[i] = rows[i][0];
    auto const c = mean_se(centered);
    rep.p_centered = c.mean;
    rep.se_centered = c.se;
    rep.all_ok = true;
    for (std::size_t k = 0; k < S; ++k)
    {
        ShiftReport sr;
        double cm = 0;
        for (std::size_t i = 1; i <= n; ++i)
        {
            for (int a = 0; a < query.d; ++a)
            {
                double const dv = shifts[k].at(i)[a] - shifts[k].at(i - 1)[a];
                cm += dv * dv;
            }
        }
        sr.cm_norm2 = cm / query.dt;
        double const factor = std::exp(-0.5 * sr.cm_norm2);
        std::vector<double> shifted(samples), lower(samples);
        for (std::size_t i = 0; i < samples; ++i)
        {
            shifted[i] = rows[i][k + 1];
            lower[i] = factor * centered[i];
        }
        sr.p_shifted = mean_se(shifted).mean;
        sr.anderson_gap = paired_difference(shifted, centered);
        sr.cm_gap = paired_difference(lower, shifted);
        // a zero-hit column has no spread; 1/samples is its resolution
        double const floor = 1.0 / static_cast<double>(samples);
        sr.anderson_ok = sr.anderson_gap.mean
                         <= 3 * std::max(sr.anderson_gap.se, floor);
        sr.cm_ok = sr.cm_gap.mean <= 3 * std::max(sr.cm_gap.se, floor);
        rep.all_ok = rep.all_ok && sr.anderson_ok && sr.cm_ok;
        rep.shifts.push_back(sr);
    }
    return rep;
}

}  // namespace wgmc
