#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "wgmc/errors.hpp"
#include "wgmc/path.hpp"
#include "wgmc/rng.hpp"

namespace wgmc
{
//! Largest spatial dimension supported by the lattice kernels.
inline constexpr int max_dimension = 8;

//---------------------------------------------------------------------------//
/*!
 * Space-time lattice for the discretized white noise.
 *
 * Time slabs [k dt, (k+1) dt) for k < T/dt; spatial cells centered on
 * {-L, -L + dx, ..., L}^d.
 */
struct LatticeSpec
{
    int d{3};
    double dt{1.0 / 48};
    double dx{0.25};
    double T{1};
    double L{8};

    std::size_t slabs() const noexcept;
    std::size_t side() const noexcept;
    std::uint64_t cells() const noexcept;
    double cell_volume() const noexcept { return std::pow(dx, d); }
    //! dt * dx^d, the variance of one cell increment.
    double cell_variance() const noexcept { return dt * cell_volume(); }

    //! Throws std::invalid_argument naming the offending field.
    void validate() const;

    /*!
     * Default lattice for a horizon and mollifier radius.
     *
     * dx defaults to radius/8. dt defaults to 1/ceil(d/dx^2), so that
     * sqrt(d dt) <= dx and every integer horizon is a whole number of
     * slabs. L is max(3 sqrt(d T), user_L) + radius, rounded up to a
     * multiple of dx.
     */
    static LatticeSpec make(int d,
                            double T,
                            double radius,
                            double dx = 0,
                            double dt = 0,
                            double user_L = 0);
};

//---------------------------------------------------------------------------//
// Mollifier
//---------------------------------------------------------------------------//

enum class Profile
{
    bump,     //!< exp(-1/(1-(r/rho)^2))
    plateau,  //!< 1 on r <= rho/2, C-infinity step down to 0 at rho
    custom,
};

//! Unnormalized radial profile on [0, radius).
using RadialProfile = std::function<double(double r)>;

/*!
 * Smooth, radial, compactly supported probability density.
 *
 * Construction normalizes the profile by radial quadrature and tabulates
 * the self-convolution (phi * phi)(|x|) on [0, 2 radius].
 */
class Mollifier
{
  public:
    static Mollifier build(int d,
                           double radius,
                           Profile profile = Profile::bump,
                           int resolution = 64);
    static Mollifier build(int d,
                           double radius,
                           RadialProfile profile,
                           int resolution = 64);

    int dimension() const noexcept { return d_; }
    double radius() const noexcept { return radius_; }
    Profile profile() const noexcept { return kind_; }
    double normalization() const noexcept { return norm_; }

    //! phi at squared distance r2 from the center.
    double value_r2(double r2) const noexcept
    {
        if (r2 >= radius2_)
            return 0.0;
        if (kind_ == Profile::bump)
            return norm_ * std::exp(-radius2_ / (radius2_ - r2));
        return norm_ * raw(std::sqrt(r2));
    }
    double value(std::span<double const> x) const noexcept;
    //! Unnormalized radial profile.
    double raw(double r) const;

    //! (phi * phi)(0) = integral of phi^2.
    double selfconv0() const noexcept { return selfconv0_; }
    //! (phi * phi)(x) for |x| = r, from the table; zero for r >= 2 radius.
    double selfconv(double r) const;
    //! Radial grid and tabulated (phi * phi) values.
    std::vector<double> const& selfconv_table() const noexcept
    {
        return table_;
    }
    double table_step() const noexcept { return table_step_; }

    //! Numerical integral of phi (equals 1 up to quadrature error).
    double mass() const;

  private:
    Mollifier() = default;
    void finish(int resolution);

    int d_{1};
    double radius_{1};
    double radius2_{1};
    Profile kind_{Profile::bump};
    RadialProfile custom_;
    double norm_{1};
    double selfconv0_{0};
    std::vector<double> table_;
    double table_step_{0};
    std::function<double(double)> spline_eval_;
};

//! Surface area of the unit sphere S^{d-1}.
double unit_sphere_area(int d);

//! Integral of f(|x|) over R^d for radial f supported in [0, R].
double radial_integral(int d,
                       double R,
                       std::function<double(double)> const& f,
                       int panels);

struct MollifierOverlap
{
    double overlap{0};       //!< integral of phi phi'
    double self_a{0};        //!< integral of phi^2
    double self_b{0};        //!< integral of phi'^2
    double l2_distance2{0};  //!< integral of (phi - phi')^2
    bool distinguishable{false};
};

/*!
 * Overlap integral of two centered mollifiers.
 *
 * Distinguishable iff the quadratic variation of H_phi - H_phi' per unit
 * time, the integral of (phi - phi')^2, exceeds the tolerance.
 */
MollifierOverlap mollifier_overlap(Mollifier const& a,
                                   Mollifier const& b,
                                   double tolerance = 1e-10,
                                   int panels = 256);

//---------------------------------------------------------------------------//
// White noise
//---------------------------------------------------------------------------//

/*!
 * Mean shift gamma * phi(anchor_k - y) * dt * dx^d on slabs k < slab_end.
 *
 * The anchor holds one position per slab (the tilting path sampled at slab
 * starts), so the overlay is stored in O(K d) regardless of box size.
 */
struct DriftOverlay
{
    double gamma{0};
    std::shared_ptr<Mollifier const> mollifier;
    std::vector<double> anchor;  // slab-major, d per slab
    std::size_t slab_end{0};
};

enum class NoiseStorage
{
    lazy,   //!< increments regenerated from (seed, slab, cell) on demand
    dense,  //!< all increments materialized, slab-major
};

struct NoiseOptions
{
    NoiseStorage storage{NoiseStorage::lazy};
    std::size_t memory_budget_bytes{std::size_t{2} << 30};
};

/*!
 * One realization of the lattice white noise.
 *
 * Cell (k, j) carries sqrt(dt dx^d) * Z(k, j) with Z standard normal and
 * keyed by (seed, k, j); the lazy and dense storages return the same bits.
 * Realizations are immutable; the modifiers return new values that share
 * the underlying storage.
 */
class WhiteNoiseRealization
{
  public:
    WhiteNoiseRealization(LatticeSpec spec, std::uint64_t seed);

    LatticeSpec const& spec() const noexcept { return spec_; }
    std::uint64_t seed() const noexcept { return seed_; }
    double scale() const noexcept { return scale_; }
    bool is_dense() const noexcept { return static_cast<bool>(dense_); }
    std::vector<DriftOverlay> const& overlays() const noexcept
    {
        return overlays_;
    }

    //! Increment without overlays.
    double base_increment(std::size_t k, std::uint64_t flat) const noexcept
    {
        if (dense_)
            return scale_ * (*dense_)[k * cells_ + flat];
        return scale_ * sigma_ * standard_normal(k, flat);
    }
    //! Key shared by all cells of slab k; see keyed_increment.
    std::uint64_t slab_key(std::size_t k) const noexcept;
    //! base_increment(k, flat) given key = slab_key(k).
    double keyed_increment(std::uint64_t key,
                           std::size_t k,
                           std::uint64_t flat) const noexcept
    {
        if (dense_)
            return scale_ * (*dense_)[k * cells_ + flat];
        return scale_ * sigma_ * keyed_normal(mix64(key ^ flat));
    }
    //! Increment including overlay drifts; y is the cell center.
    double increment(std::size_t k,
                     std::uint64_t flat,
                     std::span<double const> y) const noexcept;
    //! Sum of overlay drifts at (k, y).
    double drift(std::size_t k, std::span<double const> y) const noexcept;

    //! Same noise with every base increment multiplied by c.
    WhiteNoiseRealization scaled(double c) const;
    //! Slabs >= first_slab redrawn from a different seed.
    WhiteNoiseRealization with_tail_reseeded(std::size_t first_slab,
                                             std::uint64_t tail_seed) const;
    WhiteNoiseRealization with_overlay(DriftOverlay overlay) const;

    //! Unscaled standard normal of cell (k, flat).
    double standard_normal(std::size_t k, std::uint64_t flat) const noexcept;

    //! Flat cell index of a multi-index.
    std::uint64_t flat_index(std::span<std::int64_t const> idx) const noexcept;
    //! Cell center of a multi-index.
    void cell_center(std::span<std::int64_t const> idx,
                     std::span<double> y) const noexcept;

  private:
    friend WhiteNoiseRealization
    sample_noise(LatticeSpec const&, std::uint64_t, NoiseOptions const&);

    LatticeSpec spec_;
    std::uint64_t seed_;
    std::uint64_t cells_;
    double sigma_;
    double scale_{1};
    std::size_t tail_slab_{static_cast<std::size_t>(-1)};
    std::uint64_t tail_seed_{0};
    std::shared_ptr<std::vector<double> const> dense_;
    std::vector<DriftOverlay> overlays_;
};

//! Bytes needed to materialize the realization densely.
std::size_t dense_noise_bytes(LatticeSpec const& spec);

/*!
 * Realization for (spec, seed).
 *
 * Dense storage is refused with ResourceRefusal when it would exceed the
 * budget; lazy storage is O(1) and always accepted.
 */
WhiteNoiseRealization sample_noise(LatticeSpec const& spec,
                                   std::uint64_t seed,
                                   NoiseOptions const& options = {});

//---------------------------------------------------------------------------//
// Field evaluation
//---------------------------------------------------------------------------//

/*!
 * Enumerates lattice cells within the mollifier radius of a point.
 *
 * Holds a precomputed stencil of integer offsets; safe to share.
 */
class CellStencil
{
  public:
    CellStencil(LatticeSpec const& spec, double radius);

    /*!
     * Calls fn(flat, r2, y) for every cell with |x - y|^2 < radius^2.
     *
     * Throws BoxExitError (reporting `time`) if the ball around x is not
     * inside the box.
     */
    template<class Fn>
    void for_each(std::span<double const> x, double time, Fn&& fn) const;

  private:
    LatticeSpec spec_;
    double radius_;
    double radius2_;
    std::size_t side_;
    std::vector<std::int32_t> offsets_;  // d per entry
    std::vector<std::int64_t> flat_offsets_;
};

//! One time-slab contribution sum_j phi(x - y_j) dB[k][j].
double field_increment(WhiteNoiseRealization const& noise,
                       Mollifier const& mollifier,
                       std::size_t k,
                       std::span<double const> x);

struct HamiltonianValue
{
    double H{0};
    //! dt dx^d sum_k sum_j phi(omega_k - y_j)^2, the exact discrete variance.
    double var{0};
};

/*!
 * Cumulative Hamiltonian along a path, one entry per slab boundary.
 *
 * H[k] and var[k] cover slabs 0..k-1, so H[0] = 0.
 */
struct HamiltonianTrace
{
    std::vector<double> H;
    std::vector<double> var;

    HamiltonianValue at(std::size_t slabs) const { return {H[slabs], var[slabs]}; }
    HamiltonianValue final() const { return {H.back(), var.back()}; }
};

/*!
 * Evaluates Hamiltonians of many paths against one noise realization.
 *
 * The path grid must refine the slab grid by an integer factor; slab k
 * reads the path at time k dt (left point).
 */
class HamiltonianEvaluator
{
  public:
    HamiltonianEvaluator(WhiteNoiseRealization const& noise,
                         Mollifier const& mollifier);

    HamiltonianTrace trace(PathSample const& path, std::size_t slabs) const;
    HamiltonianValue operator()(PathSample const& path) const;
    HamiltonianValue operator()(PathSample const& path,
                                std::size_t slabs) const;

    WhiteNoiseRealization const& noise() const noexcept { return noise_; }
    Mollifier const& mollifier() const noexcept { return mollifier_; }
    CellStencil const& stencil() const noexcept { return stencil_; }

  private:
    WhiteNoiseRealization const& noise_;
    Mollifier const& mollifier_;
    CellStencil stencil_;
};

//! H and the discrete variance over all slabs of the lattice.
HamiltonianValue hamiltonian(WhiteNoiseRealization const& noise,
                             Mollifier const& mollifier,
                             PathSample const& path);

//! Steps of the path grid per slab; throws if not an integer.
std::size_t path_stride(LatticeSpec const& spec, PathSample const& path);

/*!
 * Anchor positions of a path at slab starts, for overlays.
 */
std::vector<double> slab_anchor(LatticeSpec const& spec,
                                PathSample const& path,
                                std::size_t slabs);

/*!
 * Girsanov-shifted noise: base increments plus gamma phi(omega_k - y) dt dx^d
 * on slabs k < slab_end (default: all slabs).
 */
WhiteNoiseRealization shifted_noise(WhiteNoiseRealization const& noise,
                                    std::shared_ptr<Mollifier const> mollifier,
                                    PathSample const& path,
                                    double gamma,
                                    std::size_t slab_end = static_cast<std::size_t>(-1));

/*!
 * dt dx^d sum_k sum_j phi(a_k - y_j) phi(b_k - y_j) over the first `slabs`
 * slabs: the exact covariance of H(a) and H(b) on the lattice.
 */
double discrete_overlap(LatticeSpec const& spec,
                        Mollifier const& mollifier,
                        PathSample const& a,
                        PathSample const& b,
                        std::size_t slabs);

//---------------------------------------------------------------------------//
// Inline definitions
//---------------------------------------------------------------------------//

template<class Fn>
void CellStencil::for_each(std::span<double const> x, double time, Fn&& fn) const
{
    int const d = spec_.d;
    double const L = spec_.L;
    double const dx = spec_.dx;
    std::array<std::int64_t, max_dimension> base{};
    std::array<double, max_dimension> frac{};
    std::int64_t base_flat = 0;
    std::int64_t stride = 1;
    for (int c = 0; c < d; ++c)
    {
        if (!(x[c] - radius_ >= -L && x[c] + radius_ <= L))
        {
            double reach = 0;
            for (int e = 0; e < d; ++e)
                reach = std::max(reach, std::abs(x[e]));
            throw BoxExitError(
                time, std::vector<double>(x.begin(), x.end()), reach + radius_);
        }
        base[c] = std::llround((x[c] + L) / dx);
        frac[c] = x[c] + L - static_cast<double>(base[c]) * dx;
        base_flat += base[c] * stride;
        stride *= static_cast<std::int64_t>(side_);
    }
    std::array<double, max_dimension> y{};
    std::size_t const n = flat_offsets_.size();
    std::int32_t const* off = offsets_.data();
    for (std::size_t s = 0; s < n; ++s, off += d)
    {
        double r2 = 0;
        for (int c = 0; c < d; ++c)
        {
            double const diff = frac[c] - off[c] * dx;
            r2 += diff * diff;
        }
        if (r2 >= radius2_)
            continue;
        // The box check above keeps every in-ball cell inside the grid.
        for (int c = 0; c < d; ++c)
        {
            y[c] = static_cast<double>(base[c] + off[c]) * dx - L;
        }
        fn(static_cast<std::uint64_t>(base_flat + flat_offsets_[s]),
           r2,
           std::span<double const>(y.data(), static_cast<std::size_t>(d)));
    }
}

}  // namespace wgmc
