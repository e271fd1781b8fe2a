#include "wgmc/cli.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <variant>

#include <CLI11.hpp>
#include <json.hpp>

#include "wgmc/bessel.hpp"
#include "wgmc/errors.hpp"
#include "wgmc/girsanov.hpp"
#include "wgmc/moments.hpp"
#include "wgmc/paths.hpp"
#include "wgmc/smallball.hpp"

namespace wgmc
{
using nlohmann::ordered_json;

//---------------------------------------------------------------------------//
// Config text
//---------------------------------------------------------------------------//

namespace
{
std::string trim(std::string const& s)
{
    auto const b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos)
        return {};
    auto const e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

bool parse_real(std::string const& text, double& out)
{
    auto const t = trim(text);
    if (t.empty())
        return false;
    char const* first = t.data();
    if (*first == '+')
        ++first;
    auto [ptr, ec] = std::from_chars(first, t.data() + t.size(), out);
    return ec == std::errc{} && ptr == t.data() + t.size();
}

bool parse_count(std::string const& text, std::size_t& out)
{
    auto const t = trim(text);
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc{} || ptr != t.data() + t.size() || t.empty())
        return false;
    out = static_cast<std::size_t>(v);
    return true;
}

std::string profile_name(Profile p)
{
    switch (p)
    {
        case Profile::bump:
            return "bump";
        case Profile::plateau:
            return "plateau";
        case Profile::custom:
            return "custom";
    }
    return "bump";
}

// Sets one [lattice] or [run] field; returns an error message or "".
std::string set_field(ExperimentConfig& c,
                      std::string const& section,
                      std::string const& key,
                      std::string const& value)
{
    double x = 0;
    std::size_t n = 0;
    auto real = [&](double& field) -> std::string {
        if (!parse_real(value, x))
            return "expected a number, got '" + value + "'";
        field = x;
        return {};
    };
    auto count = [&](auto& field) -> std::string {
        if (!parse_count(value, n))
            return "expected a non-negative integer, got '" + value + "'";
        field = static_cast<std::remove_reference_t<decltype(field)>>(n);
        return {};
    };
    if (section == "lattice")
    {
        if (key == "d")
        {
            if (!parse_count(value, n))
                return "expected a positive integer, got '" + value + "'";
            c.d = static_cast<int>(n);
            return {};
        }
        if (key == "radius")
            return real(c.radius);
        if (key == "profile")
        {
            if (value == "bump")
                c.profile = Profile::bump;
            else if (value == "plateau")
                c.profile = Profile::plateau;
            else
                return "expected bump or plateau, got '" + value + "'";
            return {};
        }
        if (key == "quadrature_resolution")
        {
            if (!parse_count(value, n))
                return "expected a positive integer, got '" + value + "'";
            c.quadrature_resolution = static_cast<int>(n);
            return {};
        }
        if (key == "dx")
            return real(c.dx);
        if (key == "dt")
            return real(c.dt);
        if (key == "L")
            return real(c.L);
    }
    else if (section == "run")
    {
        if (key == "gamma")
            return real(c.gamma);
        if (key == "T")
            return real(c.T);
        if (key == "replicas")
            return count(c.replicas);
        if (key == "paths")
            return count(c.paths);
        if (key == "seed")
            return count(c.seed);
        if (key == "threads")
            return count(c.threads);
        if (key == "weight")
        {
            c.weight = value;
            return {};
        }
        if (key == "weight_scale")
            return real(c.weight_scale);
        if (key == "storage")
        {
            if (value == "lazy")
                c.storage = NoiseStorage::lazy;
            else if (value == "dense")
                c.storage = NoiseStorage::dense;
            else
                return "expected lazy or dense, got '" + value + "'";
            return {};
        }
        if (key == "memory_budget_mb")
            return count(c.memory_budget_mb);
    }
    return "unknown key";
}

void assign(CliConfig& config,
            std::string const& section,
            std::string const& key,
            std::string const& value,
            std::vector<std::string>& errors,
            std::string const& where)
{
    if (section == "experiment")
    {
        config.params[key] = value;
        return;
    }
    if (section != "lattice" && section != "run")
    {
        errors.push_back(where + "unknown section [" + section + "]");
        return;
    }
    auto const msg = set_field(config.experiment, section, key, value);
    if (!msg.empty())
        errors.push_back(where + section + "." + key + ": " + msg);
}
}  // namespace

std::string format_real(double x)
{
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, ptr);
}

CliConfig parse_config(std::string const& text)
{
    CliConfig config;
    std::vector<std::string> errors;
    std::istringstream in(text);
    std::string line;
    std::string section = "run";
    std::size_t lineno = 0;
    while (std::getline(in, line))
    {
        ++lineno;
        auto const hash = line.find('#');
        if (hash != std::string::npos)
            line.resize(hash);
        line = trim(line);
        if (line.empty())
            continue;
        std::string const where = "line " + std::to_string(lineno) + ": ";
        if (line.front() == '[')
        {
            if (line.back() != ']')
            {
                errors.push_back(where + "unterminated section header");
                continue;
            }
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        auto const eq = line.find('=');
        if (eq == std::string::npos)
        {
            errors.push_back(where + "expected key = value");
            continue;
        }
        assign(config, section, trim(line.substr(0, eq)), trim(line.substr(eq + 1)),
               errors, where);
    }
    if (!errors.empty())
        throw ConfigError(std::move(errors));
    return config;
}

std::string format_config(CliConfig const& config)
{
    auto const& c = config.experiment;
    std::ostringstream os;
    os << "[lattice]\n"
       << "d = " << c.d << "\n"
       << "radius = " << format_real(c.radius) << "\n"
       << "profile = " << profile_name(c.profile) << "\n"
       << "quadrature_resolution = " << c.quadrature_resolution << "\n"
       << "dx = " << format_real(c.dx) << "\n"
       << "dt = " << format_real(c.dt) << "\n"
       << "L = " << format_real(c.L) << "\n"
       << "\n[run]\n"
       << "gamma = " << format_real(c.gamma) << "\n"
       << "T = " << format_real(c.T) << "\n"
       << "replicas = " << c.replicas << "\n"
       << "paths = " << c.paths << "\n"
       << "seed = " << c.seed << "\n"
       << "threads = " << c.threads << "\n"
       << "weight = " << c.weight << "\n"
       << "weight_scale = " << format_real(c.weight_scale) << "\n"
       << "storage = " << (c.storage == NoiseStorage::dense ? "dense" : "lazy") << "\n"
       << "memory_budget_mb = " << c.memory_budget_mb << "\n";
    if (!config.params.empty())
    {
        os << "\n[experiment]\n";
        for (auto const& [k, v] : config.params)
            os << k << " = " << v << "\n";
    }
    return os.str();
}

void apply_override(CliConfig& config, std::string const& assignment)
{
    auto const eq = assignment.find('=');
    if (eq == std::string::npos)
        throw ConfigError({"override '" + assignment + "': expected key=value"});
    auto key = trim(assignment.substr(0, eq));
    auto const value = trim(assignment.substr(eq + 1));
    std::string section = "experiment";
    if (auto const dot = key.find('.'); dot != std::string::npos)
    {
        section = key.substr(0, dot);
        key = key.substr(dot + 1);
    }
    std::vector<std::string> errors;
    assign(config, section, key, value, errors, "override: ");
    if (!errors.empty())
        throw ConfigError(std::move(errors));
}

//---------------------------------------------------------------------------//
// Params
//---------------------------------------------------------------------------//

Params::Params(std::map<std::string, std::string> values)
    : values_(std::move(values))
{
}

std::string const* Params::lookup(std::string const& key)
{
    used_.insert(key);
    auto it = values_.find(key);
    return it == values_.end() ? nullptr : &it->second;
}

double Params::real(std::string const& key, double fallback)
{
    double v = fallback;
    if (auto const* s = lookup(key); s && !parse_real(*s, v))
        errors_.push_back("experiment." + key + ": expected a number, got '" + *s + "'");
    resolved_[key] = format_real(v);
    return v;
}

std::size_t Params::count(std::string const& key, std::size_t fallback)
{
    std::size_t v = fallback;
    if (auto const* s = lookup(key); s && !parse_count(*s, v))
        errors_.push_back("experiment." + key + ": expected a non-negative integer, got '"
                          + *s + "'");
    resolved_[key] = std::to_string(v);
    return v;
}

std::vector<double> Params::list(std::string const& key, std::vector<double> fallback)
{
    std::vector<double> v = std::move(fallback);
    if (auto const* s = lookup(key))
    {
        v.clear();
        std::istringstream in(*s);
        std::string item;
        while (std::getline(in, item, ','))
        {
            double x = 0;
            if (!parse_real(item, x))
            {
                errors_.push_back("experiment." + key + ": bad list entry '" + item + "'");
                break;
            }
            v.push_back(x);
        }
        if (v.empty())
            errors_.push_back("experiment." + key + ": empty list");
    }
    std::string text;
    for (std::size_t i = 0; i < v.size(); ++i)
        text += (i ? "," : "") + format_real(v[i]);
    resolved_[key] = text;
    return v;
}

void Params::reject_unused() const
{
    std::vector<std::string> errs = errors_;
    for (auto const& [k, v] : values_)
        if (!used_.count(k))
            errs.push_back("experiment." + k + ": unknown key for this subcommand");
    if (!errs.empty())
        throw ConfigError(std::move(errs));
}

//---------------------------------------------------------------------------//
// Subcommands
//---------------------------------------------------------------------------//

namespace
{
using Cell = std::variant<double, std::string>;

struct Output
{
    ordered_json summary = ordered_json::object();
    std::vector<std::string> columns;
    std::vector<std::vector<Cell>> rows;
    std::vector<std::string> lineage;
    int code{exit_ok};
};

std::string csv_cell(Cell const& c)
{
    if (auto const* s = std::get_if<std::string>(&c))
        return *s;
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", std::get<double>(c));
    return buf;
}

ordered_json mean_se_json(MeanSe const& m)
{
    return {{"mean", m.mean}, {"se", m.se}, {"sd", m.sd}, {"n", m.n}};
}

double num(std::size_t n)
{
    return static_cast<double>(n);
}

using Command = void (*)(CliConfig const&, Params&, Output&);

void cmd_calibrate_noise(CliConfig const& cc, Params& p, Output& out)
{
    auto const& c = cc.experiment;
    double const T = p.real("T", c.T);
    std::size_t const cells = p.count("cells", 1000000);
    std::size_t const triples = p.count("triples", 100);
    p.reject_unused();

    auto const cs = cell_statistics(c, T, cells);
    auto const cov = covariance_check(c, T, c.replicas);
    auto const gi = girsanov_identity_check(c, T, triples);
    auto const spec = c.lattice(T);
    auto const mol = c.mollifier();
    auto const zero = PathSample::zeros(c.d, spec.dt, spec.slabs());
    double const var0 = discrete_overlap(spec, *mol, zero, zero, spec.slabs());
    double const f0 = mol->selfconv0();

    out.summary["cells"] = {{"count", cs.cells},
                            {"mean", mean_se_json(cs.mean)},
                            {"mean_z", cs.mean_z},
                            {"variance", cs.variance},
                            {"expected_variance", cs.expected_variance},
                            {"variance_rel_error", cs.variance_rel_error}};
    out.summary["covariance"] = {{"replicas", cov.replicas},
                                 {"overlap", cov.overlap},
                                 {"product", mean_se_json(cov.product)},
                                 {"z_cov", cov.z_cov},
                                 {"var_a", cov.var_a},
                                 {"square_a", mean_se_json(cov.square_a)},
                                 {"z_var", cov.z_var}};
    out.summary["girsanov"] = {{"triples", gi.triples},
                               {"max_rel_error", gi.max_rel_error},
                               {"max_other_rel_error", gi.max_other_rel_error},
                               {"ok", gi.ok}};
    out.summary["origin_variance"]
        = {{"discrete", var0}, {"continuum", T * f0}, {"ratio", var0 / (T * f0)}};

    // Refinement diagnostic: discrete variance of one path against T f0 as
    // dx shrinks (dt follows dx). Observed only; no rate is asserted.
    ordered_json refinement = ordered_json::array();
    {
        ExperimentConfig fine = c;
        fine.dx = c.radius / 16;
        fine.dt = 0;
        auto const finest = fine.lattice(T);
        auto const path = sample_brownian(finest, derive_seed(c.seed, "refine-path"));
        for (int k : {2, 4, 8, 16})
        {
            ExperimentConfig rc = c;
            rc.dx = c.radius / k;
            rc.dt = 0;
            auto const rs = rc.lattice(T);
            double const v = discrete_overlap(rs, *mol, path, path, rs.slabs());
            refinement.push_back({{"dx", rs.dx}, {"dt", rs.dt}, {"ratio", v / (T * f0)}});
        }
    }
    out.summary["refinement"] = refinement;
    out.columns = {"check", "value", "reference", "statistic"};
    out.rows = {
        {std::string("cell_mean"), cs.mean.mean, 0.0, cs.mean_z},
        {std::string("cell_variance"), cs.variance, cs.expected_variance, cs.variance_rel_error},
        {std::string("covariance"), cov.product.mean, cov.overlap, cov.z_cov},
        {std::string("variance"), cov.square_a.mean, cov.var_a, cov.z_var},
        {std::string("girsanov_own"), gi.max_rel_error, 0.0, gi.max_rel_error},
        {std::string("girsanov_cross"), gi.max_other_rel_error, 0.0, gi.max_other_rel_error},
        {std::string("origin_variance"), var0, T * f0, var0 / (T * f0)},
    };
    for (auto const& r : refinement)
        out.rows.push_back({std::string("refinement_dx_") + format_real(r["dx"].get<double>()),
                            r["ratio"].get<double>() * T * f0, T * f0, r["ratio"].get<double>()});
    out.lineage = {"noise replica 0: derive_seed(seed, \"noise\", 0)",
                   "covariance paths: derive_seed(seed, \"cov-path\", 0|1)",
                   "covariance noise: derive_seed(seed, \"cov-noise\", i)",
                   "girsanov: derive_seed(seed, \"gi-path\"|\"gi-other\"|\"gi-noise\"|\"gi-gamma\", i)",
                   "refinement path: derive_seed(seed, \"refine-path\")"};
}

void cmd_martingale(CliConfig const& cc, Params& p, Output& out)
{
    auto const Ts = p.list("T_grid", {1, 2, 4});
    p.reject_unused();
    auto const rep = martingale_check(cc.experiment, Ts);
    out.summary["adapted"] = rep.adapted;
    out.summary["all_ok"] = rep.all_ok;
    out.columns = {"T", "mean", "se", "z", "flagged"};
    for (auto const& r : rep.rows)
        out.rows.push_back({r.T, r.value.mean, r.value.se, r.z, r.flagged ? 1.0 : 0.0});
    out.lineage = {"noise: derive_seed(seed, \"noise\", r)",
                   "paths: derive_seed(derive_seed(seed, \"paths\", r), \"path\", m)",
                   "tail: derive_seed(seed, \"tail\", t)"};
}

void cmd_l2_check(CliConfig const& cc, Params& p, Output& out)
{
    double const T = p.real("T", cc.experiment.T);
    std::size_t const pairs = p.count("pairs", 1000);
    p.reject_unused();
    auto const r = l2_identity_check(cc.experiment, T, pairs);
    out.summary["lhs"] = r.lhs;
    out.summary["lhs_se"] = r.lhs_se;
    out.summary["rhs"] = r.rhs;
    out.summary["rhs_se"] = r.rhs_se;
    out.summary["z"] = r.z;
    out.summary["ok"] = std::abs(r.z) <= 3;
    out.columns = {"side", "estimate", "se"};
    out.rows = {{std::string("lhs"), r.lhs, r.lhs_se}, {std::string("rhs"), r.rhs, r.rhs_se}};
    out.lineage = {"noise: derive_seed(seed, \"noise\", r)",
                   "paths: derive_seed(derive_seed(seed, \"paths\", r), \"path\", m)",
                   "pairs: derive_seed(seed, \"l2-pair\", i, 0|1)"};
}

void cmd_khasminskii(CliConfig const& cc, Params& p, Output& out)
{
    auto const& c = cc.experiment;
    double const cutoff = p.real("cutoff", 16);
    OccupationOptions o;
    o.dt = p.real("occupation_dt", 0.01);
    o.paths = p.count("occupation_paths", 2000);
    o.seed = c.seed;
    std::size_t const starts = p.count("starts", 8);
    p.reject_unused();
    auto const mol = c.mollifier();
    auto const r = khasminskii_certificate(*mol, c.gamma, cutoff, o, starts, c.threads);
    out.summary["I_hat"] = r.I_hat;
    out.summary["I_hat_double"] = r.I_hat_double;
    out.summary["tail_bound"] = r.tail_bound;
    out.summary["relative_change"] = r.relative_change;
    out.summary["stable"] = r.stable;
    out.summary["certified"] = r.certified;
    out.summary["gamma_squared_bound"] = c.gamma * c.gamma * (r.I_hat + r.tail_bound);
    out.columns = {"start_radius", "cutoff_mean", "cutoff_se", "double_mean", "double_se"};
    for (auto const& s : r.starts)
        out.rows.push_back({s.start_radius, s.at_cutoff.mean, s.at_cutoff.se,
                            s.at_double.mean, s.at_double.se});
    out.lineage = {"occupation paths: derive_seed(seed, \"occupation\", i)"};
}

void cmd_free_energy(CliConfig const& cc, Params& p, Output& out)
{
    auto const Ts = p.list("T_grid", {1, 2, 4});
    p.reject_unused();
    auto const rows = free_energy(cc.experiment, Ts);
    out.columns = {"T", "mean", "se", "ci_lo", "ci_hi"};
    for (auto const& r : rows)
        out.rows.push_back({r.T, r.estimate.mean, r.estimate.se, r.ci.lo, r.ci.hi});
    out.summary["last"] = {{"T", rows.back().T}, {"mean", rows.back().estimate.mean}};
    out.lineage = {"noise: derive_seed(seed, \"noise\", r)",
                   "paths: derive_seed(derive_seed(seed, \"paths\", r), \"path\", m)"};
}

void cmd_thick_points(CliConfig const& cc, Params& p, Output& out)
{
    auto const Ts = p.list("T_grid", {1, 2, 4});
    p.reject_unused();
    auto const r = thick_point_stat(cc.experiment, Ts, cc.experiment.replicas);
    out.summary["means_ok"] = r.means_ok;
    out.summary["gamma"] = cc.experiment.gamma;
    out.columns = {"T", "mean", "se", "sd", "z", "mean_var"};
    for (auto const& row : r.rows)
        out.rows.push_back(
            {row.T, row.ratio.mean, row.ratio.se, row.ratio.sd, row.z, row.mean_var});
    out.lineage = {"size-biased pairs: derive_seed(derive_seed(seed, \"q\", i), "
                   "\"q-path\"|\"q-noise\")"};
}

void cmd_uniqueness(CliConfig const& cc, Params& p, Output& out)
{
    double const T = p.real("T", cc.experiment.T);
    p.reject_unused();
    auto const spec = cc.experiment.lattice(T);
    auto const r = uniqueness_identity_check(cc.experiment, T, default_test_functions(spec),
                                             cc.experiment.replicas);
    out.summary["all_ok"] = r.all_ok;
    out.columns = {"function", "lhs", "lhs_se", "rhs", "rhs_se", "z"};
    for (auto const& row : r.rows)
        out.rows.push_back(
            {row.name, row.lhs.mean, row.lhs.se, row.rhs.mean, row.rhs.se, row.z});
    out.lineage = {"size-biased pairs: derive_seed(seed, \"uq\", i)",
                   "reference paths: derive_seed(seed, \"ur\", i)"};
}

void cmd_moments(CliConfig const& cc, Params& p, Output& out)
{
    auto const ps = p.list("p_list", {1.25, 1.5, 2});
    auto const qs = p.list("q_list", {0.25, 0.5, 1});
    auto const Ts = p.list("T_grid", {2, 4, 8});
    MomentOptions o;
    o.floor = p.real("floor", o.floor);
    o.target_rel_se = p.real("target_rel_se", o.target_rel_se);
    o.max_paths = p.count("max_paths", o.max_paths);
    o.bootstrap = p.count("bootstrap", o.bootstrap);
    p.reject_unused();
    auto const scan = moment_scan(cc.experiment, ps, qs, Ts, o);
    out.summary["selected_p"] = scan.selected_p;
    out.summary["selected_q"] = scan.selected_q;
    ordered_json entries = ordered_json::array();
    out.columns = {"exponent", "T", "mean", "se", "ci_lo", "ci_hi", "floor_hits"};
    for (auto const* group : {&scan.positive, &scan.negative})
    {
        for (auto const& e : *group)
        {
            entries.push_back({{"exponent", e.exponent},
                               {"variation", e.variation},
                               {"stable", e.stable},
                               {"flagged", e.report.flagged}});
            for (auto const& r : e.report.rows)
                out.rows.push_back({e.exponent, r.T, r.estimate.mean, r.estimate.se,
                                    r.ci.lo, r.ci.hi, num(r.floor_hits)});
        }
    }
    out.summary["entries"] = entries;
    out.lineage = {"noise: derive_seed(seed, \"noise\", r)",
                   "paths: derive_seed(derive_seed(seed, \"paths\", r), \"path\", m)"};
}

void cmd_running_max(CliConfig const& cc, Params& p, Output& out)
{
    auto const Ts = p.list("T_grid", {1, 2, 4});
    p.reject_unused();
    auto const r = running_max(cc.experiment, Ts);
    out.summary["monotone"] = r.monotone;
    out.columns = {"T", "mean", "se", "ci_lo", "ci_hi", "doob_bound"};
    for (auto const& row : r.rows)
        out.rows.push_back({row.T, row.estimate.mean, row.estimate.se, row.ci.lo,
                            row.ci.hi, row.doob_bound});
    out.lineage = {"noise: derive_seed(seed, \"noise\", r)",
                   "paths: derive_seed(derive_seed(seed, \"paths\", r), \"path\", m)"};
}

void cmd_tail_probe(CliConfig const& cc, Params& p, Output& out)
{
    double const u = p.real("u", 1.5);
    double const eps = p.real("eps", 0.2);
    double const T = p.real("T", 4);
    p.reject_unused();
    auto const r = tail_probe(cc.experiment, u, eps, T);
    out.summary["u"] = r.u;
    out.summary["eps"] = r.eps;
    out.summary["T"] = r.T;
    out.summary["p_max"] = mean_se_json(r.p_max);
    out.summary["p_mass"] = mean_se_json(r.p_mass);
    out.summary["gap"] = mean_se_json(r.gap);
    out.summary["holds"] = r.holds;
    out.summary["expectation_bound"] = r.expectation_bound;
    out.columns = {"quantity", "mean", "se"};
    out.rows = {{std::string("p_max"), r.p_max.mean, r.p_max.se},
                {std::string("p_mass"), r.p_mass.mean, r.p_mass.se},
                {std::string("gap"), r.gap.mean, r.gap.se}};
    out.lineage = {"noise: derive_seed(seed, \"noise\", r)",
                   "paths: derive_seed(derive_seed(seed, \"paths\", r), \"path\", m)"};
}

void cmd_smallball(CliConfig const& cc, Params& p, Output& out)
{
    auto const& c = cc.experiment;
    double const r = p.real("r", 1);
    auto const eps = p.list("eps_list", {0.25, 0.3, 0.35, 0.4});
    auto const cs = p.list("c_list", {1, 2});
    GmcSmallBallOptions o;
    o.refine = p.count("refine", o.refine);
    o.particles = p.count("particles", o.particles);
    o.batches = p.count("batches", o.batches);
    o.conditioned = p.count("conditioned", o.conditioned);
    double const bp = p.real("p", 2);
    double const bq = p.real("q", 1);
    p.reject_unused();

    auto const g = c.weight_function();
    auto const mol = c.mollifier();
    auto const b = bounds_C1_C2(c.gamma, r, g, c.d, bp, bq, mol->selfconv0());
    out.summary["C1"] = b.C1;
    out.summary["C2"] = b.C2;
    out.summary["p"] = bp;
    out.summary["q"] = bq;
    out.summary["pre_asymptotic"] = true;
    out.columns = {"c", "eps", "p0", "estimate", "log_estimate", "log_se",
                   "scaled_log", "conditional_factor", "status"};
    ordered_json fits = ordered_json::array();
    std::vector<double> slopes;
    for (double cval : cs)
    {
        o.c = cval;
        auto const sweep = smallball_sweep(c, c.gamma, r, eps, g, o);
        for (auto const& row : sweep.rows)
        {
            auto const& res = row.result;
            bool const ok = res.status == RunStatus::ok;
            if (!ok)
                out.code = exit_exhausted;
            out.rows.push_back({cval, res.eps, res.p0, res.estimate, res.log_estimate,
                                res.log_se, row.scaled_log, res.conditional_factor,
                                std::string(ok ? "ok" : "resolution_exhausted")});
        }
        ordered_json f = {{"c", cval}, {"fitted", sweep.fitted}};
        if (sweep.fitted)
        {
            f["slope"] = sweep.fit.slope;
            f["slope_se"] = sweep.fit.slope_se;
            f["intercept"] = sweep.fit.intercept;
            f["r_squared"] = sweep.fit.r_squared;
            f["in_sandwich"]
                = sweep.fit.slope >= 0.5 * b.C1 && sweep.fit.slope <= 1.5 * b.C2;
            slopes.push_back(sweep.fit.slope);
        }
        fits.push_back(f);
    }
    out.summary["fits"] = fits;
    if (slopes.size() >= 2)
        out.summary["horizon_stability"]
            = std::abs(slopes.back() - slopes.front()) / std::abs(slopes.front());
    out.lineage = {"splitting: derive_seed(derive_seed(seed, \"gmc-ball\"), \"splitting\", b)",
                   "extension: derive_seed(seed, \"gmc-extend\", i)",
                   "noise: derive_seed(seed, \"noise\", r)",
                   "partition paths: derive_seed(derive_seed(seed, \"paths\", r), \"path\", m)"};
}

SmallBallQuery wiener_query(ExperimentConfig const& c, Params& p)
{
    SmallBallQuery q;
    q.d = c.d;
    q.dt = p.real("path_dt", 1e-4);
    q.r = p.real("r", 1);
    q.horizon = p.real("horizon", 1);
    q.g = c.weight_function();
    return q;
}

void cmd_wiener_smallball(CliConfig const& cc, Params& p, Output& out)
{
    auto const& c = cc.experiment;
    auto q = wiener_query(c, p);
    auto const eps = p.list("eps_list", {0.25, 0.3, 0.35, 0.4});
    SmallBallOptions o;
    o.samples = p.count("particles", 1000);
    o.batches = p.count("batches", 8);
    o.threads = c.threads;
    bool const rejection = p.count("rejection", 0) != 0;
    o.method = rejection ? SmallBallMethod::rejection : SmallBallMethod::splitting;
    p.reject_unused();

    out.columns = {"eps", "p", "se", "log_p", "log_se", "hits", "status"};
    std::vector<std::pair<double, double>> series;
    for (double e : eps)
    {
        q.eps = e;
        auto const r = wiener_smallball_mc(q, o, c.seed);
        bool const ok = r.status == RunStatus::ok;
        if (!ok)
            out.code = exit_exhausted;
        else
            series.emplace_back(e, r.p);
        out.rows.push_back({e, r.p, r.se, r.log_p, r.log_se, num(r.hits),
                            std::string(ok ? "ok" : "resolution_exhausted")});
    }
    // Sup-norm over a fixed horizon H: the constant is j^2 H / (2 r^2).
    double reference = 0;
    if (q.horizon > 0 && c.weight == "constant")
    {
        double const j = bessel_root(c.d);
        reference = j * j * q.horizon / (2 * q.r * q.r * c.weight_scale * c.weight_scale);
    }
    else
    {
        reference = smallball_constant(q.g, c.d) / (q.r * q.r);
    }
    out.summary["reference_slope"] = reference;
    if (series.size() >= 3)
    {
        auto const f = exponent_fit(series);
        out.summary["slope"] = f.slope;
        out.summary["slope_se"] = f.slope_se;
        out.summary["r_squared"] = f.r_squared;
        out.summary["relative_error"] = f.slope / reference - 1;
    }
    out.lineage = {rejection ? "paths: derive_seed(seed, \"smallball\", i)"
                             : "batches: derive_seed(seed, \"splitting\", b)"};
}

void cmd_bounds(CliConfig const& cc, Params& p, Output& out)
{
    auto const& c = cc.experiment;
    double const r = p.real("r", 1);
    double const bp = p.real("p", 2);
    double const bq = p.real("q", 1);
    p.reject_unused();
    auto const g = c.weight_function();
    double const f0 = c.mollifier()->selfconv0();
    auto const b = bounds_C1_C2(c.gamma, r, g, c.d, bp, bq, f0);
    auto const o = optimized_bounds(c.gamma, r, g, c.d, f0);
    out.summary["C1"] = b.C1;
    out.summary["C2"] = b.C2;
    out.summary["f0"] = f0;
    out.summary["bessel_root"] = b.bessel_root;
    out.summary["g_integral"] = b.g_integral;
    out.summary["optimized"] = {{"C1", o.C1}, {"p", o.p}, {"C2", o.C2}, {"q", o.q}};
    out.columns = {"kind", "p", "q", "C1", "C2"};
    out.rows = {{std::string("fixed"), bp, bq, b.C1, b.C2},
                {std::string("optimized"), o.p, o.q, o.C1, o.C2}};
}

void cmd_gamma_delta(CliConfig const& cc, Params& p, Output& out)
{
    auto const& c = cc.experiment;
    double const r = p.real("r", 1);
    auto const deltas = p.list("delta_list", {1, 0.5, 0.1});
    p.reject_unused();
    auto const g = c.weight_function();
    double const f0 = c.mollifier()->selfconv0();
    out.columns = {"delta", "gamma", "p", "q", "C1", "C2", "gap", "verified"};
    bool all = true;
    for (double d : deltas)
    {
        auto const w = gamma_delta(d, r, g, c.d, f0);
        all = all && w.verified;
        out.rows.push_back(
            {d, w.gamma, w.p, w.q, w.C1, w.C2, w.gap, w.verified ? 1.0 : 0.0});
    }
    out.summary["all_verified"] = all;
}

void cmd_anderson(CliConfig const& cc, Params& p, Output& out)
{
    auto const& c = cc.experiment;
    auto q = wiener_query(c, p);
    q.eps = p.real("eps", 0.4);
    auto const amps = p.list("shift_list", {0.05, 0.1, 0.2});
    std::size_t const samples = p.count("samples", 20000);
    p.reject_unused();
    // ramps a t / H e_1, which start at 0 and have finite energy a^2 / H
    std::vector<PathSample> shifts;
    std::size_t const n = q.steps();
    for (double a : amps)
    {
        auto s = PathSample::zeros(q.d, q.dt, n);
        for (std::size_t i = 0; i <= n; ++i)
            s.at(i)[0] = a * static_cast<double>(i) / static_cast<double>(n);
        shifts.push_back(std::move(s));
    }
    auto const r = anderson_check(q, shifts, samples, c.seed, c.threads);
    out.summary["p_centered"] = r.p_centered;
    out.summary["se_centered"] = r.se_centered;
    out.summary["all_ok"] = r.all_ok;
    out.columns = {"amplitude", "p_shifted", "cm_norm2", "anderson_gap", "anderson_se",
                   "cm_gap", "cm_se", "anderson_ok", "cm_ok"};
    for (std::size_t i = 0; i < amps.size(); ++i)
    {
        auto const& s = r.shifts[i];
        out.rows.push_back({amps[i], s.p_shifted, s.cm_norm2, s.anderson_gap.mean,
                            s.anderson_gap.se, s.cm_gap.mean, s.cm_gap.se,
                            s.anderson_ok ? 1.0 : 0.0, s.cm_ok ? 1.0 : 0.0});
    }
    out.lineage = {"paths: derive_seed(seed, \"anderson\", i)"};
}

struct Entry
{
    char const* name;
    char const* help;
    Command fn;
};

std::vector<Entry> const& table()
{
    static std::vector<Entry> const t = {
        {"calibrate-noise", "cell law, covariance and Girsanov identity", cmd_calibrate_noise},
        {"martingale", "E[mu_T] = 1 over a horizon grid", cmd_martingale},
        {"l2-check", "both sides of the L2 identity", cmd_l2_check},
        {"khasminskii", "Monte Carlo Khasminskii certificate", cmd_khasminskii},
        {"free-energy", "(1/T) E log mu_T", cmd_free_energy},
        {"thick-points", "H_T / var under the size-biased law", cmd_thick_points},
        {"uniqueness", "size-biased noise pairing identity", cmd_uniqueness},
        {"moments", "positive and negative moment scan", cmd_moments},
        {"running-max", "E[max_s mu_s]", cmd_running_max},
        {"tail-probe", "maximal tail inequality", cmd_tail_probe},
        {"smallball", "GMC small-ball exponents and the C1/C2 sandwich", cmd_smallball},
        {"wiener-smallball", "Wiener small-ball probabilities", cmd_wiener_smallball},
        {"bounds", "decay constants C1 and C2", cmd_bounds},
        {"gamma-delta", "matching witnesses as gamma -> 0", cmd_gamma_delta},
        {"anderson", "Anderson and Cameron-Martin shift checks", cmd_anderson},
    };
    return t;
}

ordered_json config_json(CliConfig const& cc, std::map<std::string, std::string> const& used)
{
    auto const& c = cc.experiment;
    // threads is left out so summaries do not depend on the worker count
    ordered_json lattice = {{"d", c.d},
                            {"radius", c.radius},
                            {"profile", profile_name(c.profile)},
                            {"quadrature_resolution", c.quadrature_resolution},
                            {"dx", c.dx},
                            {"dt", c.dt},
                            {"L", c.L}};
    ordered_json run = {{"gamma", c.gamma},
                        {"T", c.T},
                        {"replicas", c.replicas},
                        {"paths", c.paths},
                        {"seed", c.seed},
                        {"weight", c.weight},
                        {"weight_scale", c.weight_scale},
                        {"storage", c.storage == NoiseStorage::dense ? "dense" : "lazy"},
                        {"memory_budget_mb", c.memory_budget_mb}};
    ordered_json exp = ordered_json::object();
    for (auto const& [k, v] : used)
        exp[k] = v;
    return {{"lattice", lattice}, {"run", run}, {"experiment", exp}};
}

void write_outputs(std::filesystem::path const& dir,
                   std::string const& name,
                   CliConfig const& cc,
                   Params const& params,
                   Output const& out,
                   double seconds)
{
    std::filesystem::create_directories(dir);
    ordered_json summary = {{"experiment", name},
                            {"status", out.code == exit_exhausted ? "resolution_exhausted"
                                                                  : "ok"},
                            {"config", config_json(cc, params.resolved())},
                            {"seed_lineage", out.lineage},
                            {"results", out.summary}};
    {
        std::ofstream f(dir / "summary.json");
        f << summary.dump(2) << "\n";
    }
    {
        std::ofstream f(dir / "rows.csv");
        for (std::size_t i = 0; i < out.columns.size(); ++i)
            f << (i ? "," : "") << out.columns[i];
        f << "\n";
        for (auto const& row : out.rows)
        {
            for (std::size_t i = 0; i < row.size(); ++i)
                f << (i ? "," : "") << csv_cell(row[i]);
            f << "\n";
        }
    }
    {
        CliConfig echo = cc;
        echo.params = params.resolved();
        std::ofstream f(dir / "config.ini");
        f << format_config(echo);
    }
    {
        ordered_json run = {{"experiment", name},
                            {"threads", cc.experiment.threads},
                            {"wall_seconds", seconds}};
        std::ofstream f(dir / "run.json");
        f << run.dump(2) << "\n";
    }
}

std::string read_file(std::string const& path)
{
    std::ifstream f(path);
    if (!f)
        throw ConfigError({"config: cannot read '" + path + "'"});
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}
}  // namespace

std::vector<std::string> const& subcommands()
{
    static std::vector<std::string> const names = [] {
        std::vector<std::string> v;
        for (auto const& e : table())
            v.emplace_back(e.name);
        return v;
    }();
    return names;
}

int run_cli(int argc, char** argv)
{
    CLI::App app{"Monte Carlo lab for Gaussian multiplicative chaos on Wiener space"};
    app.require_subcommand(1);
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> replicas;
    std::optional<std::size_t> paths;
    std::optional<unsigned> threads;
    std::string out_dir = "out";
    std::vector<std::string> overrides;
    app.add_option("-c,--config", config_path, "key = value config file");
    app.add_option("--seed", seed, "master seed");
    app.add_option("--replicas", replicas, "noise replicas");
    app.add_option("--paths", paths, "paths per replica");
    app.add_option("--threads", threads, "worker threads");
    app.add_option("--out-dir", out_dir, "directory for summary.json and rows.csv");
    app.add_option("--override", overrides, "section.key=value (repeatable)");
    for (auto const& e : table())
        app.add_subcommand(e.name, e.help)->fallthrough();

    try
    {
        app.parse(argc, argv);
    }
    catch (CLI::ParseError const& e)
    {
        int const code = app.exit(e);
        return code == 0 ? exit_ok : exit_config;
    }

    auto const* sub = app.get_subcommands().front();
    auto const name = sub->get_name();
    Command fn = nullptr;
    for (auto const& e : table())
        if (name == e.name)
            fn = e.fn;

    try
    {
        CliConfig cc;
        if (!config_path.empty())
            cc = parse_config(read_file(config_path));
        for (auto const& o : overrides)
            apply_override(cc, o);
        if (seed)
            cc.experiment.seed = *seed;
        if (replicas)
            cc.experiment.replicas = *replicas;
        if (paths)
            cc.experiment.paths = *paths;
        if (threads)
            cc.experiment.threads = *threads;
        cc.experiment.validate();

        Params params(cc.params);
        Output out;
        auto const t0 = std::chrono::steady_clock::now();
        fn(cc, params, out);
        double const seconds
            = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        write_outputs(out_dir, name, cc, params, out, seconds);
        std::cout << name << ": wrote " << (std::filesystem::path(out_dir) / "summary.json").string()
                  << "\n";
        return out.code;
    }
    catch (ConfigError const& e)
    {
        std::cerr << "configuration error:\n";
        for (auto const& d : e.diagnostics())
            std::cerr << "  " << d << "\n";
        return exit_config;
    }
    catch (ResourceRefusal const& e)
    {
        std::cerr << "resource refusal: " << e.what() << "\n";
        return exit_resource;
    }
    catch (std::invalid_argument const& e)
    {
        std::cerr << "configuration error:\n  " << e.what() << "\n";
        return exit_config;
    }
    catch (std::exception const& e)
    {
        std::cerr << "error: " << e.what() << "\n";
        return exit_failure;
    }
}

}  // namespace wgmc
