#pragma once

namespace wgmc
{
/*!
 * Bessel function of the first kind J_nu(x) for nu >= -1/2, x > 0.
 *
 * Ascending series for x <= 12, Hankel asymptotic expansion beyond.
 */
double bessel_j(double nu, double x);

//! Smallest positive zero of J_nu, bracketed by scanning and bisected.
double bessel_first_zero(double nu);

//! j_{(d-2)/2}: the first zero setting the Wiener small-ball constant in R^d.
double bessel_root(int d);

}  // namespace wgmc
