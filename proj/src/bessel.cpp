#include "wgmc/bessel.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace wgmc
{
namespace
{
double series(double nu, double x)
{
    double const h = 0.5 * x;
    double const q = h * h;
    double term = std::pow(h, nu) / std::tgamma(nu + 1);
    double sum = term;
    for (int m = 1; m < 200; ++m)
    {
        term *= -q / (m * (m + nu));
        sum += term;
        if (std::abs(term) < 1e-17 * std::abs(sum) && m > q)
            break;
    }
    return sum;
}

double hankel(double nu, double x)
{
    double const mu = 4 * nu * nu;
    double P = 0, Q = 0;
    double a = 1;  // a_k / x^k
    double prev = INFINITY;
    for (int k = 0; k < 60; ++k)
    {
        if (k > 0)
        {
            double const odd = 2.0 * k - 1;
            a *= (mu - odd * odd) / (k * 8 * x);
        }
        if (std::abs(a) > prev)
            break;  // asymptotic series started diverging
        prev = std::abs(a);
        double const sign = (k / 2) % 2 == 0 ? 1.0 : -1.0;
        if (k % 2 == 0)
            P += sign * a;
        else
            Q += sign * a;
        if (std::abs(a) < 1e-17)
            break;
    }
    double const chi = x - (0.5 * nu + 0.25) * std::numbers::pi;
    return std::sqrt(2 / (std::numbers::pi * x))
           * (P * std::cos(chi) - Q * std::sin(chi));
}
}  // namespace

double bessel_j(double nu, double x)
{
    if (nu < -0.5)
        throw std::invalid_argument("bessel_j: nu must be >= -1/2");
    if (!(x > 0))
        throw std::invalid_argument("bessel_j: x must be positive");
    return x <= 12 ? series(nu, x) : hankel(nu, x);
}

double bessel_first_zero(double nu)
{
    // The first zero lies past nu and below nu + 2 nu^{1/3} + 3 or so; the
    // scan step is well under the half-spacing (about pi/2) of zeros.
    double const step = 0.05;
    double a = step;
    double fa = bessel_j(nu, a);
    double b = a;
    double fb = fa;
    for (int i = 0; i < 100000; ++i)
    {
        b = a + step;
        fb = bessel_j(nu, b);
        if ((fa > 0) != (fb > 0) || fb == 0)
            break;
        a = b;
        fa = fb;
    }
    if ((fa > 0) == (fb > 0) && fb != 0)
        throw std::runtime_error("bessel_first_zero: no sign change found");
    while (b - a > 1e-12)
    {
        double const m = 0.5 * (a + b);
        double const fm = bessel_j(nu, m);
        if (fm == 0)
            return m;
        if ((fm > 0) == (fa > 0))
        {
            a = m;
            fa = fm;
        }
        else
        {
            b = m;
        }
    }
    return 0.5 * (a + b);
}

double bessel_root(int d)
{
    if (d < 1)
        throw std::invalid_argument("bessel_root: d must be >= 1");
    return bessel_first_zero(0.5 * (d - 2));
}

}  // namespace wgmc
