#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "oracles.hpp"
#include "wgmc/errors.hpp"
#include "wgmc/noise.hpp"
#include "wgmc/paths.hpp"
#include "wgmc/rng.hpp"
#include "wgmc/stats.hpp"

using namespace wgmc;

namespace
{
Mollifier const& bump3()
{
    static Mollifier const m = Mollifier::build(3, 1.0);
    return m;
}

LatticeSpec small_spec(int d = 3, double T = 0.25)
{
    return LatticeSpec::make(d, T, 1.0, 0.25);
}
}  // namespace

TEST_CASE("lattice defaults")
{
    auto const s = LatticeSpec::make(3, 1.0, 1.0);
    CHECK(s.dx == doctest::Approx(0.125));
    CHECK(s.dt == doctest::Approx(1.0 / 192));
    CHECK(std::sqrt(s.d * s.dt) <= s.dx + 1e-15);
    CHECK(s.slabs() == 192);
    CHECK(s.L >= 3 * std::sqrt(3.0) + 1);
    double const ratio = 2 * s.L / s.dx;
    CHECK(ratio == doctest::Approx(std::round(ratio)));
    CHECK(s.side() == static_cast<std::size_t>(std::llround(ratio)) + 1);

    auto const coarse = LatticeSpec::make(3, 2.0, 1.0, 0.25);
    CHECK(coarse.dt == doctest::Approx(1.0 / 48));
    CHECK(coarse.slabs() == 96);
    CHECK(LatticeSpec::make(3, 1.0, 1.0, 0.25, 0, 20).L >= 21);
}

TEST_CASE("lattice validation names the field")
{
    LatticeSpec s;
    s.T = 1.01;
    s.dt = 0.1;
    CHECK_THROWS_WITH_AS(s.validate(), doctest::Contains("T must"), std::invalid_argument);
    s = LatticeSpec{};
    s.dx = -1;
    CHECK_THROWS_WITH_AS(s.validate(), doctest::Contains("dx"), std::invalid_argument);
    s = LatticeSpec{};
    s.L = 1.1;
    CHECK_THROWS_WITH_AS(s.validate(), doctest::Contains("2L"), std::invalid_argument);
}

TEST_CASE("mollifier normalization against an independent quadrature")
{
    for (int d : {1, 2, 3, 4})
    {
        for (auto prof : {Profile::bump, Profile::plateau})
        {
            auto const m = Mollifier::build(d, 1.0, prof);
            auto const raw = [&](double r) { return m.raw(r); };
            double const mass = oracle::radial_simpson(d, 1.0, raw, 20000);
            CHECK(m.normalization() * mass == doctest::Approx(1.0).epsilon(1e-8));
            CHECK(m.mass() == doctest::Approx(1.0).epsilon(1e-8));
        }
    }
}

TEST_CASE("mollifier support and sign")
{
    auto const& m = bump3();
    for (double r = 0; r < 1.5; r += 0.01)
    {
        double x[3] = {r, 0, 0};
        double const v = m.value(x);
        CHECK(v >= 0);
        if (r >= 1)
            CHECK(v == 0);
    }
}

TEST_CASE("selfconv0 matches a 4x brute-force radial quadrature")
{
    auto const& m = bump3();
    auto const raw = [&](double r) { return m.raw(r); };
    auto const raw2 = [&](double r) { return m.raw(r) * m.raw(r); };
    double const mass = oracle::radial_simpson(3, 1.0, raw, 4 * 4096);
    double const sq = oracle::radial_simpson(3, 1.0, raw2, 4 * 4096);
    CHECK(m.selfconv0() == doctest::Approx(sq / (mass * mass)).epsilon(1e-6));
    CHECK(m.selfconv0() > 0);
}

TEST_CASE("self-convolution table")
{
    auto const& m = bump3();
    CHECK(m.selfconv(2.0) == 0);
    CHECK(m.selfconv(2.5) == 0);
    CHECK(m.selfconv(0) == doctest::Approx(m.selfconv0()).epsilon(1e-12));
    for (double r = 0; r < 2; r += 0.05)
        CHECK(m.selfconv(r) <= m.selfconv0() * (1 + 1e-12));

    // cylindrical-coordinate oracle for (phi * phi)(s e_3)
    for (double s : {0.25, 0.5, 1.0, 1.5})
    {
        double const ref = oracle::selfconv3(m, s, 600);
        CHECK(m.selfconv(s) == doctest::Approx(ref).epsilon(1e-4));
    }

    auto const m1 = Mollifier::build(1, 1.0);
    for (double s : {0.3, 0.9, 1.7})
    {
        double const ref = oracle::selfconv1(m1, s, 20000);
        CHECK(m1.selfconv(s) == doctest::Approx(ref).epsilon(1e-5));
    }
}

TEST_CASE("non-normalizable profiles are rejected")
{
    CHECK_THROWS(Mollifier::build(3, 1.0, [](double) { return 0.0; }));
    CHECK_THROWS(Mollifier::build(3, 1.0, [](double) { return -1.0; }));
    CHECK_THROWS(Mollifier::build(3, 1.0, [](double) { return NAN; }));
    CHECK_NOTHROW(Mollifier::build(3, 1.0, [](double r) { return 1 - r * r; }));
}

TEST_CASE("noise is deterministic and storage-independent")
{
    auto const spec = small_spec();
    auto const a = sample_noise(spec, 7);
    auto const b = sample_noise(spec, 7);
    NoiseOptions dense;
    dense.storage = NoiseStorage::dense;
    auto const c = sample_noise(spec, 7, dense);
    auto const other = sample_noise(spec, 8);
    CHECK(c.is_dense());
    std::size_t differ = 0;
    for (std::size_t k = 0; k < spec.slabs(); ++k)
    {
        for (std::uint64_t j = 0; j < spec.cells(); j += 97)
        {
            CHECK(a.base_increment(k, j) == b.base_increment(k, j));
            CHECK(a.base_increment(k, j) == c.base_increment(k, j));
            differ += a.base_increment(k, j) != other.base_increment(k, j);
        }
    }
    CHECK(differ > 0);
}

TEST_CASE("dense storage respects the memory budget")
{
    auto const spec = small_spec();
    NoiseOptions o;
    o.storage = NoiseStorage::dense;
    o.memory_budget_bytes = 1024;
    try
    {
        sample_noise(spec, 1, o);
        FAIL("expected a refusal");
    }
    catch (ResourceRefusal const& e)
    {
        CHECK(e.required_bytes() == dense_noise_bytes(spec));
        CHECK(e.budget_bytes() == 1024);
    }
    o.storage = NoiseStorage::lazy;
    CHECK_NOTHROW(sample_noise(spec, 1, o));
}

TEST_CASE("cell increments: mean and variance over 1e6 cells")
{
    auto const spec = small_spec();
    auto const noise = sample_noise(spec, 11);
    std::size_t const n = 1000000;
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i)
        x[i] = noise.base_increment(i / spec.cells(), i % spec.cells());
    auto const ms = mean_se(x);
    CHECK(std::abs(ms.mean) <= 4 * ms.se);
    CHECK(ms.sd * ms.sd == doctest::Approx(spec.cell_variance()).epsilon(0.01));
}

TEST_CASE("field increment: zero noise, linearity, variance")
{
    auto const spec = small_spec();
    auto const& m = bump3();
    auto const noise = sample_noise(spec, 3);
    double const x[3] = {0.1, -0.2, 0.05};
    double const v = field_increment(noise, m, 2, x);
    CHECK(field_increment(noise.scaled(0.0), m, 2, x) == 0);
    CHECK(field_increment(noise.scaled(2.5), m, 2, x) == doctest::Approx(2.5 * v).epsilon(1e-13));

    // d = 1: variance over 1e5 slabs vs dt dx sum phi^2
    auto const m1 = Mollifier::build(1, 1.0);
    auto const s1 = LatticeSpec::make(1, 100000 * 0.01, 1.0, 0.125, 0.01, 0);
    auto const n1 = sample_noise(s1, 5);
    double const x1[1] = {0.0};
    std::vector<double> vals(s1.slabs());
    for (std::size_t k = 0; k < s1.slabs(); ++k)
        vals[k] = field_increment(n1, m1, k, x1);
    double sum2 = 0;
    for (std::size_t j = 0; j < s1.side(); ++j)
    {
        double const y = static_cast<double>(j) * s1.dx - s1.L;
        double const p = m1.value_r2(y * y);
        sum2 += p * p;
    }
    auto const ms = mean_se(vals);
    CHECK(ms.sd * ms.sd == doctest::Approx(s1.cell_variance() * sum2).epsilon(0.02));
}

TEST_CASE("hamiltonian: zero noise and exact discrete variance")
{
    auto const spec = small_spec();
    auto const& m = bump3();
    auto const noise = sample_noise(spec, 4);
    for (std::uint64_t seed = 1; seed <= 5; ++seed)
    {
        auto const path = sample_brownian(spec, seed);
        auto const h0 = hamiltonian(noise.scaled(0.0), m, path);
        CHECK(h0.H == 0);
        CHECK(h0.var > 0);
        auto const h = hamiltonian(noise, m, path);
        CHECK(h.var == doctest::Approx(oracle::brute_variance(spec, m, path)).epsilon(1e-12));
        CHECK(h.H == doctest::Approx(oracle::brute_hamiltonian(noise, m, path)).epsilon(1e-12));
        CHECK(hamiltonian(noise.scaled(-1.5), m, path).H
              == doctest::Approx(-1.5 * h.H).epsilon(1e-12));
    }
}

TEST_CASE("origin variance approaches T selfconv0 at dx = radius / 8")
{
    auto const spec = LatticeSpec::make(3, 1.0, 1.0);
    auto const& m = bump3();
    auto const zero = PathSample::zeros(3, spec.dt, spec.slabs());
    double const v = discrete_overlap(spec, m, zero, zero, spec.slabs());
    CHECK(v == doctest::Approx(spec.T * m.selfconv0()).epsilon(0.02));
}

TEST_CASE("path leaving the box is reported")
{
    auto const spec = small_spec();
    auto const noise = sample_noise(spec, 1);
    auto path = PathSample::zeros(3, spec.dt, spec.slabs());
    for (std::size_t i = 3; i <= spec.slabs(); ++i)
        path.at(i)[0] = spec.L;
    try
    {
        hamiltonian(noise, bump3(), path);
        FAIL("expected a box exit");
    }
    catch (BoxExitError const& e)
    {
        CHECK(e.time() == doctest::Approx(3 * spec.dt));
        CHECK(e.required_half_width() >= spec.L + 1);
        CHECK(e.position()[0] == spec.L);
    }
}

TEST_CASE("girsanov shift identity is exact")
{
    auto const spec = small_spec(3, 0.5);
    auto const mol = std::make_shared<Mollifier const>(bump3());
    for (std::uint64_t i = 0; i < 100; ++i)
    {
        auto const path = sample_brownian(spec, derive_seed(99, "p", i));
        auto const noise = sample_noise(spec, derive_seed(99, "n", i));
        double const gamma = 0.05 + Stream(derive_seed(99, "g", i)).uniform();
        auto const shifted = shifted_noise(noise, mol, path, gamma);
        auto const h0 = hamiltonian(noise, *mol, path);
        auto const h1 = hamiltonian(shifted, *mol, path);
        CHECK(std::abs(h1.H - h0.H - gamma * h0.var) <= 1e-10 * gamma * h0.var);
        CHECK(h1.var == h0.var);

        auto const other = sample_brownian(spec, derive_seed(99, "o", i));
        double const cross = oracle::brute_overlap(spec, *mol, path, other);
        double const shift = hamiltonian(shifted, *mol, other).H - hamiltonian(noise, *mol, other).H;
        CHECK(shift == doctest::Approx(gamma * cross).epsilon(1e-10).scale(h0.var));
    }
}

TEST_CASE("zero tilt leaves evaluations unchanged")
{
    auto const spec = small_spec();
    auto const mol = std::make_shared<Mollifier const>(bump3());
    auto const path = sample_brownian(spec, 1);
    auto const noise = sample_noise(spec, 2);
    auto const same = shifted_noise(noise, mol, path, 0.0);
    auto const other = sample_brownian(spec, 3);
    CHECK(hamiltonian(same, *mol, other).H == hamiltonian(noise, *mol, other).H);
}

TEST_CASE("tail reseeding keeps earlier slabs")
{
    auto const spec = small_spec(3, 0.5);
    auto const noise = sample_noise(spec, 2);
    auto const tail = noise.with_tail_reseeded(6, 1234);
    std::size_t changed = 0;
    for (std::size_t k = 0; k < spec.slabs(); ++k)
    {
        for (std::uint64_t j = 0; j < spec.cells(); j += 1013)
        {
            if (k < 6)
                CHECK(tail.base_increment(k, j) == noise.base_increment(k, j));
            else
                changed += tail.base_increment(k, j) != noise.base_increment(k, j);
        }
    }
    CHECK(changed > 0);
}

TEST_CASE("mollifier overlap")
{
    auto const a = Mollifier::build(3, 1.0);
    auto const same = mollifier_overlap(a, a);
    CHECK_FALSE(same.distinguishable);
    CHECK(same.overlap == doctest::Approx(a.selfconv0()).epsilon(1e-8));

    auto const b = Mollifier::build(3, 2.0);
    auto const ab = mollifier_overlap(a, b);
    CHECK(ab.distinguishable);
    // strict Cauchy-Schwarz for non-proportional profiles
    CHECK(ab.overlap < std::sqrt(ab.self_a * ab.self_b) * (1 - 1e-6));
    CHECK(ab.overlap < std::max(ab.self_a, ab.self_b));
    CHECK(ab.l2_distance2
          == doctest::Approx(ab.self_a + ab.self_b - 2 * ab.overlap).epsilon(1e-8));

    auto const a1 = Mollifier::build(1, 1.0);
    auto const b1 = Mollifier::build(1, 2.0);
    auto const r1 = mollifier_overlap(a1, b1);
    double const ref = oracle::overlap1(a1, b1, 200000);
    CHECK(r1.overlap == doctest::Approx(ref).epsilon(1e-6));
}

TEST_CASE("discrete overlap is symmetric and bounded by Cauchy-Schwarz")
{
    auto const spec = small_spec(3, 0.5);
    auto const& m = bump3();
    for (std::uint64_t s = 0; s < 10; ++s)
    {
        auto const a = sample_brownian(spec, 2 * s + 1);
        auto const b = sample_brownian(spec, 2 * s + 2);
        double const ab = discrete_overlap(spec, m, a, b, spec.slabs());
        double const ba = discrete_overlap(spec, m, b, a, spec.slabs());
        double const aa = discrete_overlap(spec, m, a, a, spec.slabs());
        double const bb = discrete_overlap(spec, m, b, b, spec.slabs());
        CHECK(ab == doctest::Approx(ba).epsilon(1e-13));
        CHECK(ab >= 0);
        CHECK(ab * ab <= aa * bb * (1 + 1e-12));
        CHECK(ab == doctest::Approx(oracle::brute_overlap(spec, m, a, b)).epsilon(1e-12));
    }
}
