#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "wgmc/polymer.hpp"

namespace wgmc
{
//---------------------------------------------------------------------------//
/*!
 * Parsed run configuration.
 *
 * The text format is flat key = value lines grouped by [section]:
 * [lattice] and [run] fill ExperimentConfig, [experiment] holds
 * subcommand parameters. '#' starts a comment.
 */
struct CliConfig
{
    ExperimentConfig experiment;
    std::map<std::string, std::string> params;  //!< [experiment] section
};

//! Throws ConfigError listing every bad line or field.
CliConfig parse_config(std::string const& text);

//! Canonical text; parse_config(format_config(c)) is equivalent to c.
std::string format_config(CliConfig const& config);

//! Applies "section.key=value" (or "key=value" for [experiment]).
void apply_override(CliConfig& config, std::string const& assignment);

//! Typed access to [experiment] parameters, recording what was read.
class Params
{
  public:
    explicit Params(std::map<std::string, std::string> values);

    double real(std::string const& key, double fallback);
    std::size_t count(std::string const& key, std::size_t fallback);
    std::vector<double> list(std::string const& key, std::vector<double> fallback);

    //! Keys present but never read; ConfigError when non-empty.
    void reject_unused() const;
    //! Every key read, with the value used (defaults included).
    std::map<std::string, std::string> const& resolved() const noexcept
    {
        return resolved_;
    }
    std::vector<std::string> const& diagnostics() const noexcept
    {
        return errors_;
    }

  private:
    std::string const* lookup(std::string const& key);

    std::map<std::string, std::string> values_;
    std::set<std::string> used_;
    std::map<std::string, std::string> resolved_;
    std::vector<std::string> errors_;
};

//! Shortest text that reparses to the same double.
std::string format_real(double x);

//! Names of all subcommands.
std::vector<std::string> const& subcommands();

enum ExitCode : int
{
    exit_ok = 0,
    exit_failure = 1,
    exit_config = 2,
    exit_resource = 3,
    exit_exhausted = 4,
};

//! Entry point of the wgmc tool; returns the process exit code.
int run_cli(int argc, char** argv);

}  // namespace wgmc
