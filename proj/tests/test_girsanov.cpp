#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "wgmc/girsanov.hpp"
#include "wgmc/rng.hpp"

using namespace wgmc;

namespace
{
ExperimentConfig config(double gamma)
{
    ExperimentConfig c;
    c.dx = 0.25;
    c.gamma = gamma;
    c.seed = 21;
    return c;
}
}  // namespace

TEST_CASE("girsanov identity holds exactly on the lattice")
{
    auto const rep = girsanov_identity_check(config(0.5), 1, 20);
    CHECK(rep.triples == 20);
    CHECK(rep.ok);
    CHECK(rep.max_rel_error < 1e-10);
    CHECK(rep.max_other_rel_error < 1e-10);
}

TEST_CASE("size-biased pair at gamma 0 leaves the noise untouched")
{
    auto const c = config(0);
    auto const spec = c.lattice(1);
    auto const pair = size_biased_pair(spec, c.mollifier(), 0, 7);
    auto const base = sample_noise(spec, pair.noise.seed(), c.noise_options());
    auto const other = sample_brownian(spec, 99);
    auto const a = hamiltonian(pair.noise, *c.mollifier(), other);
    auto const b = hamiltonian(base, *c.mollifier(), other);
    CHECK(a.H == b.H);
}

TEST_CASE("tilt is linear in gamma")
{
    auto const c = config(0);
    auto const spec = c.lattice(1);
    auto const m = c.mollifier();
    auto const noise = c.noise(spec, 0);
    auto const tilt = sample_brownian(spec, 3);
    auto const probe = sample_brownian(spec, 4);
    double const h0 = hamiltonian(noise, *m, probe).H;
    double const h1 = hamiltonian(shifted_noise(noise, m, tilt, 0.3), *m, probe).H - h0;
    double const h2 = hamiltonian(shifted_noise(noise, m, tilt, 0.6), *m, probe).H - h0;
    CHECK(h2 == doctest::Approx(2 * h1).epsilon(1e-10));
    double const ov = discrete_overlap(spec, *m, tilt, probe, spec.slabs());
    CHECK(h1 == doctest::Approx(0.3 * ov).epsilon(1e-10));
}

TEST_CASE("size-biased path marginal is Brownian")
{
    auto const c = config(0.5);
    auto const spec = c.lattice(1);
    std::size_t const n = 2000;
    std::vector<double> biased(n), free(n);
    for (std::size_t i = 0; i < n; ++i)
    {
        auto const pair = size_biased_pair(spec, c.mollifier(), 0.5, derive_seed(5, "sb", i));
        biased[i] = pair.path.at(pair.path.steps())[0];
        free[i] = sample_brownian(spec, derive_seed(5, "free", i)).at(spec.slabs())[0];
    }
    CHECK(ks_statistic(biased, free) < ks_critical_value(n, n, 0.01));
}

TEST_CASE("mean Hamiltonian under the size-biased law")
{
    auto const rep = thick_point_stat(config(0.5), {1}, 400);
    REQUIRE(rep.rows.size() == 1);
    CHECK(std::abs(rep.rows[0].z) <= 4);
    CHECK(rep.rows[0].ratio.mean == doctest::Approx(0.5).epsilon(0.2));
    std::size_t total = 0;
    for (auto n : rep.rows[0].histogram_counts)
        total += n;
    CHECK(total == 400);
}

TEST_CASE("pairings")
{
    auto const c = config(0.4);
    auto const spec = c.lattice(1);
    auto const noise = c.noise(spec, 0);
    auto fs = default_test_functions(spec);
    REQUIRE(fs.size() >= 3);
    auto f = fs[0];
    auto doubled = f;
    doubled.value = [g = f.value](std::size_t k, std::span<double const> y) { return 2 * g(k, y); };
    CHECK(noise_pairing(noise, doubled) == doctest::Approx(2 * noise_pairing(noise, f)).epsilon(1e-12));
    auto const path = sample_brownian(spec, 8);
    CHECK(drift_pairing(spec, *c.mollifier(), path, f, 0) == 0);
    double const d1 = drift_pairing(spec, *c.mollifier(), path, f, 0.4);
    CHECK(drift_pairing(spec, *c.mollifier(), path, f, 0.8) == doctest::Approx(2 * d1).epsilon(1e-12));
    // the shifted field pairs to base + drift
    auto const shifted = shifted_noise(noise, c.mollifier(), path, 0.4);
    CHECK(noise_pairing(shifted, f) == doctest::Approx(noise_pairing(noise, f) + d1).epsilon(1e-10));
}

TEST_CASE("uniqueness identity on small samples")
{
    auto const c = config(0.5);
    auto const spec = c.lattice(1);
    auto const rep = uniqueness_identity_check(c, 1, default_test_functions(spec), 400);
    CHECK(rep.rows.size() == 3);
    for (auto const& r : rep.rows)
        CHECK(std::abs(r.z) <= 4);
}

TEST_CASE("reweighting agrees with the exact size-biased sampler")
{
    auto c = config(0.3);
    c.paths = 200;
    auto const rep = reweighting_check(c, 1, 200);
    CHECK(std::abs(rep.z) <= 4);
}
