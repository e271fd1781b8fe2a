#include "wgmc/errors.hpp"

#include <sstream>

namespace wgmc
{
namespace
{
std::string box_exit_message(double time,
                             std::vector<double> const& position,
                             double required_L)
{
    std::ostringstream os;
    os.precision(6);
    os << "path left the safe region at t=" << time << ", position=(";
    for (std::size_t i = 0; i < position.size(); ++i)
    {
        os << (i ? ", " : "") << position[i];
    }
    os << "); required box half-width L >= " << required_L;
    return os.str();
}

std::string join(std::vector<std::string> const& lines)
{
    std::string out = "invalid configuration";
    for (auto const& l : lines)
    {
        out += "\n  ";
        out += l;
    }
    return out;
}
}  // namespace

BoxExitError::BoxExitError(double time,
                           std::vector<double> position,
                           double required_L)
    : Error(box_exit_message(time, position, required_L))
    , time_(time)
    , position_(std::move(position))
    , required_L_(required_L)
{
}

ResourceRefusal::ResourceRefusal(std::size_t required_bytes,
                                 std::size_t budget_bytes)
    : Error("noise storage needs " + std::to_string(required_bytes)
            + " bytes but the budget is " + std::to_string(budget_bytes)
            + " bytes")
    , required_(required_bytes)
    , budget_(budget_bytes)
{
}

ConfigError::ConfigError(std::vector<std::string> diagnostics)
    : Error(join(diagnostics)), diagnostics_(std::move(diagnostics))
{
}

}  // namespace wgmc
