#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <iterator>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "wgmc/cli.hpp"
#include "wgmc/errors.hpp"

using namespace wgmc;
namespace fs = std::filesystem;

namespace
{
int run(std::vector<std::string> args)
{
    args.insert(args.begin(), "wgmc");
    std::vector<char*> argv;
    for (auto& a : args)
        argv.push_back(a.data());
    return run_cli(static_cast<int>(argv.size()), argv.data());
}

std::string slurp(fs::path const& p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

fs::path scratch(std::string const& name)
{
    auto const dir = fs::temp_directory_path() / ("wgmc-test-" + name);
    fs::remove_all(dir);
    return dir;
}
}  // namespace

TEST_CASE("config text round-trips")
{
    auto const c = parse_config(R"(
# comment
[lattice]
d = 4
radius = 1.5
profile = plateau
dx = 0.25
[run]
gamma = 0.125   # trailing comment
replicas = 7
seed = 99
weight = constant
[experiment]
eps_list = 0.25,0.3
)");
    CHECK(c.experiment.d == 4);
    CHECK(c.experiment.radius == 1.5);
    CHECK(c.experiment.profile == Profile::plateau);
    CHECK(c.experiment.gamma == 0.125);
    CHECK(c.experiment.replicas == 7);
    CHECK(c.experiment.seed == 99);
    CHECK(c.experiment.weight == "constant");
    CHECK(c.params.at("eps_list") == "0.25,0.3");

    auto const again = parse_config(format_config(c));
    CHECK(format_config(again) == format_config(c));
    CHECK(again.experiment.dx == 0.25);
    CHECK(again.params == c.params);
}

TEST_CASE("real formatting is shortest round-trip")
{
    for (double x : {0.1, 1.0 / 3, 1e-300, 6.02e23, std::numbers::pi})
        CHECK(std::stod(format_real(x)) == x);
    CHECK(format_real(0.25) == "0.25");
}

TEST_CASE("overrides")
{
    CliConfig c;
    apply_override(c, "run.gamma=0.7");
    apply_override(c, "lattice.dx=0.5");
    apply_override(c, "eps_list=0.3");
    CHECK(c.experiment.gamma == 0.7);
    CHECK(c.experiment.dx == 0.5);
    CHECK(c.params.at("eps_list") == "0.3");
    CHECK_THROWS_AS(apply_override(c, "run.nonsense=1"), ConfigError);
    CHECK_THROWS_AS(apply_override(c, "run.gamma=abc"), ConfigError);
    CHECK_THROWS_AS(apply_override(c, "no equals sign"), ConfigError);
}

TEST_CASE("parse errors name every bad line")
{
    try
    {
        parse_config("[run]\ngamma = x\nreplicas = 3\n[lattice\nfoo\n");
        FAIL("expected ConfigError");
    }
    catch (ConfigError const& e)
    {
        std::string const msg = e.what();
        CHECK(msg.find("line 2") != std::string::npos);
        CHECK(msg.find("line 4") != std::string::npos);
        CHECK(msg.find("line 5") != std::string::npos);
    }
}

TEST_CASE("typed parameters")
{
    Params p({{"a", "2.5"}, {"n", "10"}, {"l", "1,2,3"}, {"extra", "1"}});
    CHECK(p.real("a", 0) == 2.5);
    CHECK(p.count("n", 0) == 10);
    CHECK(p.list("l", {}) == std::vector<double>{1, 2, 3});
    CHECK(p.real("missing", 4) == 4);
    CHECK(p.resolved().at("missing") == "4");
    CHECK_THROWS_AS(p.reject_unused(), ConfigError);
    p.real("extra", 0);
    CHECK_NOTHROW(p.reject_unused());
}

TEST_CASE("subcommand list")
{
    auto const& s = subcommands();
    CHECK(s.size() == 15);
    for (char const* name : {"martingale", "smallball", "gamma-delta", "bounds", "anderson"})
        CHECK(std::find(s.begin(), s.end(), name) != s.end());
}

TEST_CASE("exit codes")
{
    auto const dir = scratch("codes");
    CHECK(run({"bounds", "--out-dir", dir.string(), "--override", "run.gamma=0"}) == exit_ok);
    CHECK(run({"bounds", "--out-dir", dir.string(), "--override", "bogus=1"}) == exit_config);
    CHECK(run({"bounds", "--out-dir", dir.string(), "--override", "run.gamma=-1"}) == exit_config);
    CHECK(run({"bounds", "--out-dir", dir.string(), "-c", (dir / "missing.ini").string()})
          == exit_config);
    CHECK(run({"calibrate-noise", "--out-dir", dir.string(), "--override", "lattice.dx=0.01",
               "--override", "run.storage=dense", "--override", "run.memory_budget_mb=1",
               "--override", "T=1", "--override", "cells=10", "--override", "triples=1"})
          == exit_resource);
    CHECK(run({"wiener-smallball", "--out-dir", dir.string(), "--override", "eps_list=0.05",
               "--override", "rejection=1", "--override", "particles=50", "--override",
               "path_dt=0.01", "--override", "horizon=1", "--override", "lattice.d=3",
               "--override", "run.weight=constant"})
          == exit_exhausted);
    fs::remove_all(dir);
}

TEST_CASE("bounds output at gamma 0")
{
    auto const dir = scratch("bounds");
    REQUIRE(run({"bounds", "--out-dir", dir.string(), "--override", "run.gamma=0",
                 "--override", "p=2", "--override", "q=1"})
            == exit_ok);
    auto const j = nlohmann::json::parse(slurp(dir / "summary.json"));
    CHECK(j["experiment"] == "bounds");
    CHECK(j["status"] == "ok");
    double const pi2 = std::numbers::pi * std::numbers::pi;
    CHECK(j["results"]["C1"].get<double>() == doctest::Approx(pi2 / 4).epsilon(1e-9));
    CHECK(j["results"]["C2"].get<double>() == doctest::Approx(2 * pi2).epsilon(1e-9));
    CHECK(fs::exists(dir / "rows.csv"));
    CHECK(fs::exists(dir / "config.ini"));
    CHECK(fs::exists(dir / "run.json"));
    // the echoed config reproduces the run
    auto const echo = parse_config(slurp(dir / "config.ini"));
    CHECK(echo.experiment.gamma == 0);
    fs::remove_all(dir);
}

TEST_CASE("summaries are byte-identical across thread counts")
{
    auto const a = scratch("t1");
    auto const b = scratch("t2");
    std::vector<std::string> common = {"martingale",  "--replicas", "4",  "--paths", "16",
                                       "--override",  "lattice.dx=0.25", "--override",
                                       "T_grid=1,2"};
    auto one = common;
    one.insert(one.end(), {"--threads", "1", "--out-dir", a.string()});
    auto two = common;
    two.insert(two.end(), {"--threads", "2", "--out-dir", b.string()});
    REQUIRE(run(one) == exit_ok);
    REQUIRE(run(two) == exit_ok);
    CHECK(slurp(a / "summary.json") == slurp(b / "summary.json"));
    CHECK(slurp(a / "rows.csv") == slurp(b / "rows.csv"));
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST_CASE("calibration reports a dx refinement study")
{
    auto const dir = scratch("calibrate");
    REQUIRE(run({"calibrate-noise", "--replicas", "20", "--out-dir", dir.string(), "--override",
                 "cells=1000", "--override", "triples=2"})
            == exit_ok);
    auto const j = nlohmann::json::parse(slurp(dir / "summary.json"));
    auto const& ref = j["results"]["refinement"];
    REQUIRE(ref.size() == 4);
    double last = INFINITY;
    for (auto const& r : ref)
    {
        double const err = std::abs(r["ratio"].get<double>() - 1);
        CHECK(err < 0.02);
        CHECK(err < last);
        last = err;
    }
    fs::remove_all(dir);
}
