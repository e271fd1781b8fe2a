#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace wgmc
{
//---------------------------------------------------------------------------//
/*!
 * A d-dimensional path on the uniform grid 0, dt, ..., steps*dt.
 *
 * Positions are stored flat, time-major: positions[i*d + c] is coordinate c
 * at time i*dt.
 */
struct PathSample
{
    int d{1};
    double dt{1};
    std::vector<double> positions;
    std::uint64_t seed{0};

    std::size_t steps() const noexcept
    {
        return positions.size() / static_cast<std::size_t>(d) - 1;
    }
    double horizon() const noexcept
    {
        return dt * static_cast<double>(steps());
    }
    double time(std::size_t i) const noexcept
    {
        return dt * static_cast<double>(i);
    }
    std::span<double const> at(std::size_t i) const noexcept
    {
        return {positions.data() + i * static_cast<std::size_t>(d),
                static_cast<std::size_t>(d)};
    }
    std::span<double> at(std::size_t i) noexcept
    {
        return {positions.data() + i * static_cast<std::size_t>(d),
                static_cast<std::size_t>(d)};
    }

    //! Zero path with the given shape.
    static PathSample zeros(int d, double dt, std::size_t steps)
    {
        PathSample p;
        p.d = d;
        p.dt = dt;
        p.positions.assign((steps + 1) * static_cast<std::size_t>(d), 0.0);
        return p;
    }
};

}  // namespace wgmc
