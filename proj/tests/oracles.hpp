#pragma once

// Test-side reference computations. They use only the mollifier's point
// values and plain loops, so they share no quadrature or stencil code with
// the library.

#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <vector>

#include <boost/multiprecision/cpp_bin_float.hpp>

#include "wgmc/noise.hpp"
#include "wgmc/path.hpp"

namespace oracle
{
//! Composite Simpson rule with n (even) intervals.
inline double simpson(std::function<double(double)> const& f, double a, double b, int n)
{
    if (n % 2)
        ++n;
    double const h = (b - a) / n;
    double s = f(a) + f(b);
    for (int i = 1; i < n; ++i)
        s += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
    return s * h / 3;
}

inline double sphere_area(int d)
{
    return 2 * std::pow(std::numbers::pi, 0.5 * d) / std::tgamma(0.5 * d);
}

//! Integral over R^d of f(|x|) supported in [0, R].
inline double radial_simpson(int d, double R, std::function<double(double)> const& f, int n)
{
    return sphere_area(d)
           * simpson([&](double r) { return f(r) * std::pow(r, d - 1); }, 0.0, R, n);
}

//! (phi * phi)(s e_3) in cylindrical coordinates for a radius-1 mollifier.
inline double selfconv3(wgmc::Mollifier const& m, double s, int n)
{
    auto inner = [&](double rho) {
        return simpson(
            [&](double z) {
                double const r1 = rho * rho + z * z;
                double const r2 = rho * rho + (z - s) * (z - s);
                return m.value_r2(r1) * m.value_r2(r2);
            },
            -1.0, 1.0, 2 * n);
    };
    return 2 * std::numbers::pi * simpson([&](double rho) { return rho * inner(rho); }, 0.0, 1.0, n);
}

inline double selfconv1(wgmc::Mollifier const& m, double s, int n)
{
    return simpson([&](double y) { return m.value_r2(y * y) * m.value_r2((s - y) * (s - y)); },
                   -1.0, 1.0, n);
}

//! Integral of phi_a phi_b in d = 1 over [-R, R].
inline double overlap1(wgmc::Mollifier const& a, wgmc::Mollifier const& b, int n)
{
    double const R = std::max(a.radius(), b.radius());
    return simpson([&](double y) { return a.value_r2(y * y) * b.value_r2(y * y); }, -R, R, n);
}

//! Visits every lattice cell: fn(flat, center).
template<class Fn>
void for_all_cells(wgmc::LatticeSpec const& spec, Fn&& fn)
{
    std::size_t const side = spec.side();
    std::uint64_t const cells = spec.cells();
    std::vector<double> y(spec.d);
    for (std::uint64_t flat = 0; flat < cells; ++flat)
    {
        std::uint64_t rest = flat;
        for (int c = 0; c < spec.d; ++c)
        {
            y[c] = static_cast<double>(rest % side) * spec.dx - spec.L;
            rest /= side;
        }
        fn(flat, y);
    }
}

inline double dist2(std::span<double const> x, std::vector<double> const& y)
{
    double s = 0;
    for (std::size_t c = 0; c < y.size(); ++c)
        s += (x[c] - y[c]) * (x[c] - y[c]);
    return s;
}

inline std::size_t stride(wgmc::LatticeSpec const& spec, wgmc::PathSample const& p)
{
    return static_cast<std::size_t>(std::llround(spec.dt / p.dt));
}

//! dt dx^d sum_k sum_j phi(a_k - y_j) phi(b_k - y_j) over all cells.
inline double brute_overlap(wgmc::LatticeSpec const& spec,
                            wgmc::Mollifier const& m,
                            wgmc::PathSample const& a,
                            wgmc::PathSample const& b)
{
    std::size_t const sa = stride(spec, a), sb = stride(spec, b);
    double total = 0;
    for (std::size_t k = 0; k < spec.slabs(); ++k)
    {
        auto xa = a.at(k * sa);
        auto xb = b.at(k * sb);
        for_all_cells(spec, [&](std::uint64_t, std::vector<double> const& y) {
            double const pa = m.value_r2(dist2(xa, y));
            if (pa != 0)
                total += pa * m.value_r2(dist2(xb, y));
        });
    }
    return total * spec.cell_variance();
}

inline double brute_variance(wgmc::LatticeSpec const& spec,
                             wgmc::Mollifier const& m,
                             wgmc::PathSample const& a)
{
    return brute_overlap(spec, m, a, a);
}

//! sum_k sum_j phi(omega_k - y_j) dB[k][j] over all cells, no overlays.
inline double brute_hamiltonian(wgmc::WhiteNoiseRealization const& noise,
                                wgmc::Mollifier const& m,
                                wgmc::PathSample const& path)
{
    auto const& spec = noise.spec();
    std::size_t const s = stride(spec, path);
    double total = 0;
    for (std::size_t k = 0; k < spec.slabs(); ++k)
    {
        auto x = path.at(k * s);
        for_all_cells(spec, [&](std::uint64_t flat, std::vector<double> const& y) {
            double const p = m.value_r2(dist2(x, y));
            if (p != 0)
                total += p * noise.base_increment(k, flat);
        });
    }
    return total;
}

//! J_nu(x) from its power series in 64-digit arithmetic.
using wide = boost::multiprecision::number<boost::multiprecision::cpp_bin_float<64>>;

inline wide bessel_series(wide nu, wide x)
{
    wide const half = x / 2;
    wide term = pow(half, nu) / boost::multiprecision::tgamma(nu + 1);
    wide sum = term;
    wide const q = -half * half;
    for (int k = 1; k < 400; ++k)
    {
        term *= q / (wide(k) * (nu + k));
        sum += term;
        if (abs(term) < wide("1e-60") * abs(sum))
            break;
    }
    return sum;
}

//! Zero of J_nu in [lo, hi] (sign change required) by bisection.
inline wide bessel_zero_bisect(wide nu, wide lo, wide hi)
{
    wide flo = bessel_series(nu, lo);
    for (int i = 0; i < 200; ++i)
    {
        wide const mid = (lo + hi) / 2;
        wide const fm = bessel_series(nu, mid);
        if ((fm < 0) == (flo < 0))
        {
            lo = mid;
            flo = fm;
        }
        else
        {
            hi = mid;
        }
    }
    return (lo + hi) / 2;
}

}  // namespace oracle
