#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "oracles.hpp"
#include "wgmc/bessel.hpp"
#include "wgmc/errors.hpp"
#include "wgmc/paths.hpp"
#include "wgmc/rng.hpp"
#include "wgmc/stats.hpp"

using namespace wgmc;
constexpr double pi = std::numbers::pi;

namespace
{
// P(sup_[0,1] |W| < a) for 1-d Brownian motion, by the classical series.
double sup_norm_probability(double a)
{
    double s = 0;
    for (int k = 0; k < 200; ++k)
    {
        double const m = 2 * k + 1;
        s += (k % 2 ? -1.0 : 1.0) / m * std::exp(-m * m * pi * pi / (8 * a * a));
    }
    return 4 / pi * s;
}

double brute_norm(PathSample const& p, WeightFunction const& g, double horizon)
{
    double best = 0;
    for (std::size_t i = 1; i <= p.steps(); ++i)
    {
        double const t = p.time(i);
        if (t > horizon + 1e-12)
            break;
        double r2 = 0;
        for (double x : p.at(i))
            r2 += x * x;
        best = std::max(best, std::sqrt(r2) / g(t));
    }
    return best;
}

double brute_modulus(PathSample const& p, double T, double delta)
{
    double best = 0;
    for (std::size_t i = 0; i <= p.steps(); ++i)
    {
        for (std::size_t j = i + 1; j <= p.steps(); ++j)
        {
            if (p.time(j) > T + 1e-12 || (j - i) * p.dt >= delta * (1 - 1e-12))
                break;
            double r2 = 0;
            for (int c = 0; c < p.d; ++c)
                r2 += std::pow(p.at(j)[c] - p.at(i)[c], 2);
            best = std::max(best, std::sqrt(r2));
        }
    }
    return best;
}
}  // namespace

TEST_CASE("brownian sampling: start, determinism, refinement")
{
    double const x[2] = {0.5, -1.0};
    auto const a = sample_brownian(2, 0.01, 50, 3, x);
    CHECK(a.at(0)[0] == 0.5);
    CHECK(a.at(0)[1] == -1.0);
    auto const b = sample_brownian(2, 0.01, 50, 3, x);
    CHECK(a.positions == b.positions);
    CHECK(sample_brownian(2, 0.01, 50, 4, x).positions != a.positions);

    auto const spec = LatticeSpec::make(3, 1.0, 1.0, 0.25);
    auto const p = sample_brownian(spec, 5, {}, 4);
    CHECK(p.steps() == 4 * spec.slabs());
    CHECK(p.dt == doctest::Approx(spec.dt / 4));
    CHECK(path_stride(spec, p) == 4);
    auto const c = coarsen(p, 4);
    CHECK(c.steps() == spec.slabs());
    for (std::size_t i = 0; i <= c.steps(); ++i)
        CHECK(c.at(i)[1] == p.at(4 * i)[1]);
}

TEST_CASE("extension keeps the prefix")
{
    auto const p = sample_brownian(3, 0.1, 10, 9);
    auto const e = extend_brownian(p, 15, 77);
    CHECK(e.steps() == 25);
    CHECK(std::equal(p.positions.begin(), p.positions.end(), e.positions.begin()));
}

TEST_CASE("brownian endpoint variance and independent increments")
{
    std::size_t const n = 100000;
    std::vector<double> end(n * 3);
    std::vector<double> inc1(n), inc2(n);
    for (std::size_t i = 0; i < n; ++i)
    {
        auto const p = sample_brownian(3, 0.05, 20, derive_seed(1, "bm", i));
        for (int c = 0; c < 3; ++c)
            end[c * n + i] = p.at(20)[c];
        inc1[i] = p.at(5)[0] - p.at(4)[0];
        inc2[i] = p.at(12)[0] - p.at(11)[0];
    }
    for (int c = 0; c < 3; ++c)
    {
        auto const ms = mean_se(std::span<double const>(end.data() + c * n, n));
        CHECK(ms.sd * ms.sd == doctest::Approx(1.0).epsilon(0.02));
    }
    std::vector<double> prod(n);
    for (std::size_t i = 0; i < n; ++i)
        prod[i] = inc1[i] * inc2[i];
    auto const pm = mean_se(prod);
    CHECK(std::abs(pm.mean) <= 4 * pm.se);
}

TEST_CASE("weight functions")
{
    CHECK(WeightFunction::linear_max().inverse_square_integral() == doctest::Approx(2.0));
    CHECK(WeightFunction::linear_max(2).inverse_square_integral() == doctest::Approx(0.5));
    auto const sq = WeightFunction::custom([](double t) { return std::max(1.0, t * t); });
    CHECK(sq.inverse_square_integral() == doctest::Approx(1.0 + 1.0 / 3).epsilon(1e-8));
    CHECK_THROWS_AS(WeightFunction::constant().inverse_square_integral(), DivergentIntegral);
    CHECK(WeightFunction::linear_max(3)(0.5) == 3);
    CHECK(WeightFunction::linear_max(3)(2) == 6);
}

TEST_CASE("weighted norm")
{
    auto const g = WeightFunction::linear_max();
    CHECK(weighted_norm(PathSample::zeros(2, 0.1, 30), g, 3) == 0);

    auto p = PathSample::zeros(1, 0.5, 8);
    for (std::size_t i = 1; i <= 8; ++i)
        p.at(i)[0] = 0.5 * g(p.time(i));
    p.at(5)[0] = g(p.time(5));
    CHECK(weighted_norm(p, g, 4) == doctest::Approx(1.0));

    for (std::uint64_t s = 0; s < 20; ++s)
    {
        auto const q = sample_brownian(3, 0.01, 500, s);
        double last = 0;
        for (double h : {0.5, 1.0, 2.5, 5.0})
        {
            double const v = weighted_norm(q, g, h);
            CHECK(v == brute_norm(q, g, h));
            CHECK(v >= last);
            last = v;
        }
    }
}

TEST_CASE("modulus of continuity")
{
    CHECK(modulus(PathSample::zeros(2, 0.01, 100), 1, 0.1) == 0);
    double const v = 3;
    auto lin = PathSample::zeros(1, 0.01, 100);
    for (std::size_t i = 0; i <= 100; ++i)
        lin.at(i)[0] = v * lin.time(i);
    CHECK(modulus(lin, 1, 0.1) == doctest::Approx(v * 0.1 * (1 - 0.01 / 0.1)));
    for (std::uint64_t s = 0; s < 10; ++s)
    {
        auto const q = sample_brownian(2, 0.01, 300, s);
        CHECK(modulus(q, 2.5, 0.17) == brute_modulus(q, 2.5, 0.17));
    }
}

TEST_CASE("bessel roots")
{
    CHECK(std::abs(bessel_root(3) - pi) < 1e-10);
    CHECK(std::abs(bessel_root(1) - pi / 2) < 1e-10);
    for (int d : {2, 4, 5, 6})
    {
        double const nu = 0.5 * (d - 2);
        double const root = bessel_root(d);
        auto const ref = oracle::bessel_zero_bisect(oracle::wide(nu), oracle::wide(root - 0.1),
                                                    oracle::wide(root + 0.1));
        CHECK(std::abs(root - static_cast<double>(ref)) < 1e-10);
        CHECK(std::abs(bessel_j(nu, root)) <= 1e-9);
        CHECK(bessel_j(nu, root - 1e-6) * bessel_j(nu, root + 1e-6) < 0);
        // nothing smaller: J_nu keeps its sign on (0, root)
        for (double x = 0.05; x < root - 1e-3; x += 0.05)
            CHECK(bessel_j(nu, x) > 0);
    }
}

TEST_CASE("bessel function values")
{
    for (double x : {0.3, 1.0, 4.0, 11.5, 13.0, 25.0, 40.0})
    {
        CHECK(bessel_j(0.5, x) == doctest::Approx(std::sqrt(2 / (pi * x)) * std::sin(x)).epsilon(1e-9));
        CHECK(bessel_j(-0.5, x) == doctest::Approx(std::sqrt(2 / (pi * x)) * std::cos(x)).epsilon(1e-9).scale(1));
        double const ref = static_cast<double>(oracle::bessel_series(oracle::wide(1), oracle::wide(x)));
        CHECK(bessel_j(1, x) == doctest::Approx(ref).epsilon(1e-9).scale(1));
    }
}

TEST_CASE("small-ball constants")
{
    CHECK(smallball_constant(WeightFunction::linear_max(), 3) == doctest::Approx(pi * pi).epsilon(1e-10));
    CHECK(smallball_constant(WeightFunction::linear_max(2), 3) == doctest::Approx(pi * pi / 4).epsilon(1e-10));
    double const j = static_cast<double>(oracle::bessel_zero_bisect(
        oracle::wide(1.5), oracle::wide(4.0), oracle::wide(5.0)));
    CHECK(smallball_constant(WeightFunction::linear_max(), 5) == doctest::Approx(j * j).epsilon(1e-10));
    CHECK_THROWS_AS(smallball_constant(WeightFunction::constant(), 3), DivergentIntegral);
}

TEST_CASE("huge ball has probability one")
{
    SmallBallQuery q;
    q.d = 2;
    q.dt = 0.01;
    q.eps = 1;
    q.r = 50;
    q.horizon = 1;
    q.g = WeightFunction::constant();
    for (auto method : {SmallBallMethod::rejection, SmallBallMethod::splitting})
    {
        SmallBallOptions o;
        o.method = method;
        o.samples = 200;
        auto const r = wiener_smallball_mc(q, o, 1);
        CHECK(r.status == RunStatus::ok);
        CHECK(r.p == 1);
    }
}

TEST_CASE("zero hits are reported, never a silent zero")
{
    SmallBallQuery q;
    q.d = 3;
    q.dt = 0.01;
    q.eps = 0.05;
    q.horizon = 1;
    q.g = WeightFunction::constant();
    SmallBallOptions o;
    o.method = SmallBallMethod::rejection;
    o.samples = 100;
    auto const r = wiener_smallball_mc(q, o, 1);
    CHECK(r.status == RunStatus::resolution_exhausted);
    CHECK(r.hits == 0);
}

TEST_CASE("rejection sampling nests across eps and r on shared seeds")
{
    SmallBallQuery q;
    q.d = 1;
    q.dt = 0.01;
    q.horizon = 1;
    q.g = WeightFunction::constant();
    SmallBallOptions o;
    o.method = SmallBallMethod::rejection;
    o.samples = 4000;
    std::vector<std::uint64_t> previous;
    double last_p = 0;
    for (double eps : {0.4, 0.6, 0.8, 1.0})
    {
        q.eps = eps;
        auto const r = wiener_smallball_mc(q, o, 5);
        CHECK(r.p >= last_p);
        last_p = r.p;
        std::vector<std::uint64_t> acc = r.accepted_seeds;
        std::sort(acc.begin(), acc.end());
        CHECK(std::includes(acc.begin(), acc.end(), previous.begin(), previous.end()));
        previous = acc;
    }
    for (std::uint64_t s = 0; s < 300; ++s)
    {
        auto const path = sample_brownian(1, 0.01, 100, s);
        q.eps = 0.5;
        q.r = 1;
        bool const inner = in_ball(path, q);
        q.r = 1.3;
        bool const outer = in_ball(path, q);
        CHECK((!inner || outer));
    }
}

TEST_CASE("splitting matches the one-dimensional series and rejection")
{
    SmallBallQuery q;
    q.d = 1;
    q.dt = 1e-4;
    q.horizon = 1;
    q.g = WeightFunction::constant();
    q.eps = 0.3;
    SmallBallOptions o;
    o.samples = 1000;
    o.batches = 8;
    auto const r = wiener_smallball_mc(q, o, 2);
    double const exact = sup_norm_probability(0.3);
    // grid monitoring misses some excursions and biases p upward by a few percent
    CHECK(r.p == doctest::Approx(exact).epsilon(0.1));
    CHECK(-0.09 * std::log(r.p) == doctest::Approx(pi * pi / 8).epsilon(0.2));

    q.eps = 0.6;
    q.dt = 1e-3;
    auto const s = wiener_smallball_mc(q, o, 3);
    SmallBallOptions rej;
    rej.method = SmallBallMethod::rejection;
    rej.samples = 20000;
    auto const t = wiener_smallball_mc(q, rej, 4);
    CHECK(std::abs(z_score(s.p, s.se, t.p, t.se)) <= 3);
}

TEST_CASE("conditioned paths carry unbiased weights")
{
    SmallBallQuery q;
    q.d = 2;
    q.dt = 0.01;
    q.horizon = 1;
    q.eps = 0.5;
    q.g = WeightFunction::constant();
    SmallBallOptions o;
    o.samples = 300;
    o.batches = 4;
    o.keep_stride = 10;
    auto const r = wiener_smallball_mc(q, o, 8);
    REQUIRE(!r.conditioned.empty());
    double total = 0;
    for (std::size_t i = 0; i < r.conditioned.size(); ++i)
    {
        total += std::exp(r.conditioned_log_weight[i]);
        CHECK(r.conditioned[i].steps() == 10);
        CHECK(in_ball(r.conditioned[i], [&] {
            auto c = q;
            c.dt = 0.1;
            return c;
        }()));
    }
    CHECK(total == doctest::Approx(r.p).epsilon(1e-12));
}

TEST_CASE("brownian scaling of the sup-norm")
{
    std::size_t const n = 10000;
    double const c = 2;
    std::vector<double> a(n), b(n);
    auto const g = WeightFunction::constant();
    for (std::size_t i = 0; i < n; ++i)
    {
        auto const p = sample_brownian(1, 1e-3, 1000, derive_seed(3, "a", i));
        auto const q = sample_brownian(1, 1e-3 * c * c, 1000, derive_seed(3, "b", i));
        a[i] = weighted_norm(p, g, 1);
        b[i] = weighted_norm(q, g, c * c) / c;
    }
    CHECK(ks_statistic(a, b) < ks_critical_value(n, n, 0.01));
}

TEST_CASE("anderson and cameron-martin checks")
{
    SmallBallQuery q;
    q.d = 2;
    q.dt = 0.01;
    q.horizon = 1;
    q.eps = 0.6;
    q.g = WeightFunction::constant();
    std::vector<PathSample> shifts;
    shifts.push_back(PathSample::zeros(2, 0.01, 100));
    for (double a : {0.2, 0.5, 5.0})
    {
        auto s = PathSample::zeros(2, 0.01, 100);
        for (std::size_t i = 0; i <= 100; ++i)
            s.at(i)[0] = a * s.time(i);
        shifts.push_back(s);
    }
    auto const rep = anderson_check(q, shifts, 20000, 4);
    CHECK(rep.all_ok);
    CHECK(rep.shifts[0].p_shifted == rep.p_centered);
    CHECK(rep.shifts[0].anderson_gap.mean == 0);
    CHECK(rep.shifts[0].cm_norm2 == 0);
    CHECK(rep.shifts[2].cm_norm2 == doctest::Approx(0.25).epsilon(1e-9));
    CHECK(rep.shifts[3].p_shifted == 0);
    for (auto const& s : rep.shifts)
    {
        CHECK(s.anderson_ok);
        CHECK(s.cm_ok);
    }
}

TEST_CASE("small-ball results do not depend on the worker count")
{
    SmallBallQuery q;
    q.d = 3;
    q.dt = 0.01;
    q.eps = 0.5;
    SmallBallOptions o;
    o.samples = 200;
    o.batches = 4;
    auto const one = wiener_smallball_mc(q, o, 9);
    o.threads = 3;
    auto const three = wiener_smallball_mc(q, o, 9);
    CHECK(one.p == three.p);
    CHECK(one.batch_p == three.batch_p);
}
