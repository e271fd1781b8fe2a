#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace wgmc
{
//! Base for all library errors.
class Error : public std::runtime_error
{
  public:
    using std::runtime_error::runtime_error;
};

//! A path (or a mollifier ball around it) left the lattice box.
class BoxExitError : public Error
{
  public:
    BoxExitError(double time, std::vector<double> position, double required_L);

    double time() const noexcept { return time_; }
    std::vector<double> const& position() const noexcept { return position_; }
    //! Half-width that would have contained the evaluation.
    double required_half_width() const noexcept { return required_L_; }

  private:
    double time_;
    std::vector<double> position_;
    double required_L_;
};

//! Estimated memory exceeds the configured budget.
class ResourceRefusal : public Error
{
  public:
    ResourceRefusal(std::size_t required_bytes, std::size_t budget_bytes);

    std::size_t required_bytes() const noexcept { return required_; }
    std::size_t budget_bytes() const noexcept { return budget_; }

  private:
    std::size_t required_;
    std::size_t budget_;
};

//! Invalid configuration; carries one diagnostic per offending field.
class ConfigError : public Error
{
  public:
    explicit ConfigError(std::vector<std::string> diagnostics);

    std::vector<std::string> const& diagnostics() const noexcept
    {
        return diagnostics_;
    }

  private:
    std::vector<std::string> diagnostics_;
};

//! An integral required by a constant is infinite.
class DivergentIntegral : public Error
{
  public:
    using Error::Error;
};

}  // namespace wgmc
