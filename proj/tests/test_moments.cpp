#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "wgmc/moments.hpp"

using namespace wgmc;

namespace
{
ExperimentConfig config(double gamma)
{
    ExperimentConfig c;
    c.dx = 0.25;
    c.gamma = gamma;
    c.replicas = 12;
    c.paths = 40;
    c.seed = 31;
    return c;
}

// column t of a replica-major table
double column_mean(PartitionTable const& t, std::size_t col)
{
    double s = 0;
    for (auto const& row : t.value)
        s += row[col];
    return s / static_cast<double>(t.value.size());
}
}  // namespace

TEST_CASE("moments at gamma 0 are one")
{
    MomentOptions o;
    o.bootstrap = 50;
    auto const table = partition_table(config(0), {1, 2}, o);
    for (auto const& row : table.value)
        for (double z : row)
            CHECK(z == 1);
    for (double p : {2.0, 0.5, -1.0})
    {
        auto const rep = moment_from_table(table, p, o);
        for (auto const& r : rep.rows)
            CHECK(r.estimate.mean == 1);
        CHECK(!rep.flagged);
    }
}

TEST_CASE("first moment is the replica mean and Jensen holds sample-wise")
{
    MomentOptions o;
    o.bootstrap = 50;
    auto const table = partition_table(config(0.5), {1, 2}, o);
    auto const m1 = moment_from_table(table, 1, o);
    auto const m2 = moment_from_table(table, 2, o);
    auto const mneg = moment_from_table(table, -0.5, o);
    for (std::size_t t = 0; t < table.T.size(); ++t)
    {
        double const z = column_mean(table, t);
        CHECK(m1.rows[t].estimate.mean == doctest::Approx(z).epsilon(1e-14));
        CHECK(m2.rows[t].estimate.mean >= z * z * (1 - 1e-14));
        CHECK(mneg.rows[t].estimate.mean >= std::pow(z, -0.5) * (1 - 1e-14));
        CHECK(m1.rows[t].ci.lo <= m1.rows[t].estimate.mean);
        CHECK(m1.rows[t].ci.hi >= m1.rows[t].estimate.mean);
    }
    CHECK_THROWS_AS(moment_from_table(table, 0, o), std::invalid_argument);
}

TEST_CASE("floor hits are counted for negative moments, never clamped")
{
    PartitionTable t;
    t.T = {1};
    t.value = {{1e-20}, {1.0}, {2.0}};
    t.rel_se = {{0.0}, {0.0}, {0.0}};
    t.paths_used = {10, 10, 10};
    MomentOptions o;
    o.bootstrap = 20;
    auto const neg = moment_from_table(t, -1, o);
    CHECK(neg.rows[0].floor_hits == 1);
    CHECK(neg.flagged);
    CHECK(neg.rows[0].estimate.mean == doctest::Approx((1e20 + 1 + 0.5) / 3));
    auto const pos = moment_from_table(t, 2, o);
    CHECK(pos.rows[0].floor_hits == 0);
    CHECK(!pos.flagged);
}

TEST_CASE("scan picks the largest stable exponents")
{
    MomentOptions o;
    o.bootstrap = 20;
    auto const scan = moment_scan(config(0), {1.5, 2}, {0.5, 1}, {1, 2}, o);
    CHECK(scan.selected_p == 2);
    CHECK(scan.selected_q == 1);
    for (auto const& e : scan.positive)
    {
        CHECK(e.stable);
        CHECK(e.variation == 0);
    }
}

TEST_CASE("running maximum")
{
    auto const rep = running_max(config(0.5), {1, 2});
    CHECK(rep.monotone);
    REQUIRE(rep.rows.size() == 2);
    CHECK(rep.rows[1].estimate.mean >= rep.rows[0].estimate.mean);
    CHECK(rep.rows[0].estimate.mean >= 1 - 4 * rep.rows[0].estimate.se);
    auto const flat = running_max(config(0), {1, 2});
    for (auto const& r : flat.rows)
        CHECK(r.estimate.mean == 1);
}

TEST_CASE("tail probe")
{
    CHECK_THROWS_AS(tail_probe(config(0.3), 1.0, 0.2, 1), std::invalid_argument);
    CHECK_THROWS_AS(tail_probe(config(0.3), 1.5, 0, 1), std::invalid_argument);
    auto const r = tail_probe(config(0), 1.5, 0.2, 1);
    CHECK(r.p_max.mean == 0);
    CHECK(r.p_mass.mean == 1);
    CHECK(r.holds);
    CHECK(r.expectation_bound == doctest::Approx(11));
}
