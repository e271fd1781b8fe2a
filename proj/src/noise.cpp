#include "wgmc/noise.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include <boost/math/interpolators/cardinal_cubic_b_spline.hpp>
#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "wgmc/rng.hpp"

namespace wgmc
{
namespace
{
using Gauss = boost::math::quadrature::gauss<double, 20>;

bool near_integer(double v, double rel = 1e-9)
{
    return std::abs(v - std::round(v)) <= rel * std::max(1.0, std::abs(v));
}

//! Composite Gauss-Legendre over [a, b] with `panels` equal panels.
template<class F>
double composite_gauss(F const& f, double a, double b, int panels)
{
    if (!(b > a))
        return 0.0;
    double const h = (b - a) / panels;
    double sum = 0;
    for (int i = 0; i < panels; ++i)
    {
        double const lo = a + i * h;
        sum += Gauss::integrate(f, lo, lo + h);
    }
    return sum;
}

// C-infinity step: 0 at t <= 0, 1 at t >= 1.
double smooth_step(double t)
{
    if (t <= 0)
        return 0;
    if (t >= 1)
        return 1;
    double const a = std::exp(-1 / t);
    double const b = std::exp(-1 / (1 - t));
    return a / (a + b);
}

}  // namespace

//---------------------------------------------------------------------------//
// LatticeSpec
//---------------------------------------------------------------------------//

std::size_t LatticeSpec::slabs() const noexcept
{
    return static_cast<std::size_t>(std::llround(T / dt));
}

std::size_t LatticeSpec::side() const noexcept
{
    return static_cast<std::size_t>(std::llround(2 * L / dx)) + 1;
}

std::uint64_t LatticeSpec::cells() const noexcept
{
    std::uint64_t n = 1;
    for (int c = 0; c < d; ++c)
        n *= side();
    return n;
}

void LatticeSpec::validate() const
{
    auto fail = [](std::string const& what) {
        throw std::invalid_argument("LatticeSpec: " + what);
    };
    if (d < 1 || d > max_dimension)
        fail("d must be in [1, " + std::to_string(max_dimension) + "]");
    if (!(dt > 0) || !std::isfinite(dt))
        fail("dt must be positive");
    if (!(dx > 0) || !std::isfinite(dx))
        fail("dx must be positive");
    if (!(T > 0) || !std::isfinite(T))
        fail("T must be positive");
    if (!(L > 0) || !std::isfinite(L))
        fail("L must be positive");
    if (!near_integer(T / dt))
        fail("T must be an integer multiple of dt");
    if (!near_integer(2 * L / dx))
        fail("2L must be an integer multiple of dx");
    if (static_cast<double>(d) * std::log2(static_cast<double>(side())) > 62)
        fail("too many cells to index");
}

LatticeSpec LatticeSpec::make(
    int d, double T, double radius, double dx, double dt, double user_L)
{
    LatticeSpec s;
    s.d = d;
    s.T = T;
    s.dx = dx > 0 ? dx : radius / 8;
    s.dt = dt > 0 ? dt : 1.0 / std::ceil(d / (s.dx * s.dx) - 1e-9);
    double const reach = std::max(3 * std::sqrt(d * T), user_L) + radius;
    s.L = std::ceil(reach / s.dx - 1e-9) * s.dx;
    s.validate();
    return s;
}

//---------------------------------------------------------------------------//
// Quadrature helpers
//---------------------------------------------------------------------------//

double unit_sphere_area(int d)
{
    double const half = 0.5 * d;
    return 2 * std::pow(std::numbers::pi, half) / boost::math::tgamma(half);
}

double radial_integral(int d,
                       double R,
                       std::function<double(double)> const& f,
                       int panels)
{
    auto integrand = [&](double r) { return f(r) * std::pow(r, d - 1); };
    return unit_sphere_area(d) * composite_gauss(integrand, 0.0, R, panels);
}

//---------------------------------------------------------------------------//
// Mollifier
//---------------------------------------------------------------------------//

double Mollifier::raw(double r) const
{
    if (r >= radius_)
        return 0.0;
    switch (kind_)
    {
        case Profile::bump: {
            double const t = r / radius_;
            return std::exp(-1 / (1 - t * t));
        }
        case Profile::plateau:
            return smooth_step((radius_ - r) / (0.5 * radius_));
        case Profile::custom:
            return custom_(r);
    }
    return 0.0;
}

double Mollifier::value(std::span<double const> x) const noexcept
{
    double r2 = 0;
    for (double v : x)
        r2 += v * v;
    return value_r2(r2);
}

Mollifier Mollifier::build(int d, double radius, Profile profile, int resolution)
{
    if (profile == Profile::custom)
        throw std::invalid_argument(
            "Mollifier::build: custom profile needs a function");
    Mollifier m;
    m.d_ = d;
    m.radius_ = radius;
    m.radius2_ = radius * radius;
    m.kind_ = profile;
    m.finish(resolution);
    return m;
}

Mollifier
Mollifier::build(int d, double radius, RadialProfile profile, int resolution)
{
    Mollifier m;
    m.d_ = d;
    m.radius_ = radius;
    m.radius2_ = radius * radius;
    m.kind_ = Profile::custom;
    m.custom_ = std::move(profile);
    m.finish(resolution);
    return m;
}

void Mollifier::finish(int resolution)
{
    if (d_ < 1 || d_ > max_dimension)
        throw std::invalid_argument("Mollifier: bad dimension");
    if (!(radius_ > 0) || !std::isfinite(radius_))
        throw std::invalid_argument("Mollifier: radius must be positive");
    if (resolution < 4)
        throw std::invalid_argument("Mollifier: resolution must be >= 4");

    norm_ = 1;
    // Probe the profile for sign problems before normalizing.
    for (int i = 0; i < 64; ++i)
    {
        double const v = raw(radius_ * i / 64.0);
        if (!(v >= 0) || !std::isfinite(v))
        {
            std::ostringstream os;
            os << "Mollifier: profile must be finite and non-negative, got "
               << v << " at r=" << radius_ * i / 64.0;
            throw std::invalid_argument(os.str());
        }
    }
    double const integral = radial_integral(
        d_, radius_, [this](double r) { return raw(r); }, resolution);
    if (!(integral > 0) || !std::isfinite(integral))
    {
        std::ostringstream os;
        os << "Mollifier: profile is not normalizable (integral = "
           << integral << ")";
        throw std::invalid_argument(os.str());
    }
    norm_ = 1 / integral;

    selfconv0_ = radial_integral(
        d_,
        radius_,
        [this](double r) {
            double const v = norm_ * raw(r);
            return v * v;
        },
        resolution);

    // (phi * phi)(s e_1) on [0, 2 radius].
    int const nodes = 128;
    int const panels = std::max(4, resolution / 8);
    table_step_ = 2 * radius_ / nodes;
    table_.assign(nodes + 1, 0.0);
    table_[0] = selfconv0_;
    for (int i = 1; i < nodes; ++i)
    {
        double const s = i * table_step_;
        double const lo = s - radius_;
        double const hi = radius_;
        double v = 0;
        if (d_ == 1)
        {
            auto f = [&](double u) {
                return value_r2(u * u) * value_r2((s - u) * (s - u));
            };
            v = composite_gauss(f, lo, hi, panels);
        }
        else
        {
            double const shell = unit_sphere_area(d_ - 1);
            auto outer = [&](double u) {
                double const m2 = std::max(u * u, (s - u) * (s - u));
                if (m2 >= radius2_)
                    return 0.0;
                double const wmax = std::sqrt(radius2_ - m2);
                auto inner = [&](double w) {
                    double const w2 = w * w;
                    return value_r2(u * u + w2)
                           * value_r2((s - u) * (s - u) + w2)
                           * std::pow(w, d_ - 2);
                };
                return composite_gauss(inner, 0.0, wmax, panels);
            };
            v = shell * composite_gauss(outer, lo, hi, panels);
        }
        table_[i] = v;
    }
    table_[nodes] = 0;

    auto spline = std::make_shared<
        boost::math::interpolators::cardinal_cubic_b_spline<double>>(
        table_.begin(), table_.end(), 0.0, table_step_, 0.0, 0.0);
    spline_eval_ = [spline](double r) { return (*spline)(r); };
}

double Mollifier::selfconv(double r) const
{
    r = std::abs(r);
    if (r >= 2 * radius_)
        return 0.0;
    return std::clamp(spline_eval_(r), 0.0, selfconv0_);
}

double Mollifier::mass() const
{
    return radial_integral(
        d_, radius_, [this](double r) { return norm_ * raw(r); }, 64);
}

MollifierOverlap mollifier_overlap(Mollifier const& a,
                                   Mollifier const& b,
                                   double tolerance,
                                   int panels)
{
    if (a.dimension() != b.dimension())
        throw std::invalid_argument("mollifier_overlap: dimension mismatch");
    int const d = a.dimension();
    double const R = std::min(a.radius(), b.radius());
    MollifierOverlap r;
    r.overlap = radial_integral(
        d,
        R,
        [&](double s) { return a.value_r2(s * s) * b.value_r2(s * s); },
        panels);
    r.self_a = a.selfconv0();
    r.self_b = b.selfconv0();
    // Integrate (phi - phi')^2 directly rather than by cancellation.
    r.l2_distance2 = radial_integral(
        d,
        std::max(a.radius(), b.radius()),
        [&](double s) {
            double const diff = a.value_r2(s * s) - b.value_r2(s * s);
            return diff * diff;
        },
        panels);
    r.distinguishable = r.l2_distance2 > tolerance;
    return r;
}

//---------------------------------------------------------------------------//
// WhiteNoiseRealization
//---------------------------------------------------------------------------//

WhiteNoiseRealization::WhiteNoiseRealization(LatticeSpec spec,
                                             std::uint64_t seed)
    : spec_(spec)
    , seed_(seed)
    , cells_(spec.cells())
    , sigma_(std::sqrt(spec.cell_variance()))
{
    spec_.validate();
}

std::uint64_t WhiteNoiseRealization::slab_key(std::size_t k) const noexcept
{
    std::uint64_t const s = k >= tail_slab_ ? tail_seed_ : seed_;
    return mix64(mix64(s) ^ mix64(static_cast<std::uint64_t>(k) + 1));
}

double WhiteNoiseRealization::standard_normal(std::size_t k,
                                              std::uint64_t flat) const noexcept
{
    return keyed_normal(mix64(slab_key(k) ^ flat));
}

double WhiteNoiseRealization::drift(std::size_t k,
                                    std::span<double const> y) const noexcept
{
    double total = 0;
    int const d = spec_.d;
    for (auto const& o : overlays_)
    {
        if (k >= o.slab_end)
            continue;
        double r2 = 0;
        double const* a = o.anchor.data() + k * static_cast<std::size_t>(d);
        for (int c = 0; c < d; ++c)
        {
            double const diff = a[c] - y[c];
            r2 += diff * diff;
        }
        total += o.gamma * o.mollifier->value_r2(r2);
    }
    return total * spec_.cell_variance();
}

double WhiteNoiseRealization::increment(std::size_t k,
                                        std::uint64_t flat,
                                        std::span<double const> y) const noexcept
{
    double v = base_increment(k, flat);
    if (!overlays_.empty())
        v += drift(k, y);
    return v;
}

WhiteNoiseRealization WhiteNoiseRealization::scaled(double c) const
{
    WhiteNoiseRealization out = *this;
    out.scale_ *= c;
    return out;
}

WhiteNoiseRealization
WhiteNoiseRealization::with_tail_reseeded(std::size_t first_slab,
                                          std::uint64_t tail_seed) const
{
    WhiteNoiseRealization out = *this;
    out.tail_slab_ = first_slab;
    out.tail_seed_ = tail_seed;
    out.dense_.reset();
    return out;
}

WhiteNoiseRealization
WhiteNoiseRealization::with_overlay(DriftOverlay overlay) const
{
    if (!overlay.mollifier)
        throw std::invalid_argument("DriftOverlay: missing mollifier");
    std::size_t const anchored
        = overlay.anchor.size() / static_cast<std::size_t>(spec_.d);
    overlay.slab_end = std::min(overlay.slab_end, anchored);
    WhiteNoiseRealization out = *this;
    out.overlays_.push_back(std::move(overlay));
    return out;
}

std::uint64_t
WhiteNoiseRealization::flat_index(std::span<std::int64_t const> idx) const noexcept
{
    std::uint64_t flat = 0, stride = 1;
    for (int c = 0; c < spec_.d; ++c)
    {
        flat += static_cast<std::uint64_t>(idx[c]) * stride;
        stride *= spec_.side();
    }
    return flat;
}

void WhiteNoiseRealization::cell_center(std::span<std::int64_t const> idx,
                                        std::span<double> y) const noexcept
{
    for (int c = 0; c < spec_.d; ++c)
    {
        y[c] = static_cast<double>(idx[c]) * spec_.dx - spec_.L;
    }
}

std::size_t dense_noise_bytes(LatticeSpec const& spec)
{
    double const bytes = static_cast<double>(spec.slabs())
                         * static_cast<double>(spec.cells()) * sizeof(double);
    if (bytes > 1e18)
        return static_cast<std::size_t>(-1);
    return static_cast<std::size_t>(bytes);
}

WhiteNoiseRealization sample_noise(LatticeSpec const& spec,
                                   std::uint64_t seed,
                                   NoiseOptions const& options)
{
    WhiteNoiseRealization noise(spec, seed);
    if (options.storage == NoiseStorage::dense)
    {
        std::size_t const need = dense_noise_bytes(spec);
        if (need > options.memory_budget_bytes)
            throw ResourceRefusal(need, options.memory_budget_bytes);
        auto data = std::make_shared<std::vector<double>>(need / sizeof(double));
        std::uint64_t const cells = spec.cells();
        for (std::size_t k = 0; k < spec.slabs(); ++k)
        {
            for (std::uint64_t j = 0; j < cells; ++j)
            {
                (*data)[k * cells + j] = noise.sigma_
                                         * noise.standard_normal(k, j);
            }
        }
        noise.dense_ = std::move(data);
    }
    return noise;
}

//---------------------------------------------------------------------------//
// Field evaluation
//---------------------------------------------------------------------------//

CellStencil::CellStencil(LatticeSpec const& spec, double radius)
    : spec_(spec), radius_(radius), radius2_(radius * radius), side_(spec.side())
{
    int const d = spec.d;
    int const reach = static_cast<int>(std::ceil(radius / spec.dx)) + 1;
    int const width = 2 * reach + 1;
    std::size_t total = 1;
    for (int c = 0; c < d; ++c)
        total *= static_cast<std::size_t>(width);

    std::vector<std::int32_t> off(static_cast<std::size_t>(d));
    for (std::size_t n = 0; n < total; ++n)
    {
        std::size_t rest = n;
        double min_r2 = 0;
        std::int64_t flat = 0, stride = 1;
        for (int c = 0; c < d; ++c)
        {
            off[c] = static_cast<std::int32_t>(rest % width) - reach;
            rest /= width;
            // nearest approach given the point lies within half a cell
            double const gap
                = std::max(0.0, (std::abs(off[c]) - 0.5) * spec.dx);
            min_r2 += gap * gap;
            flat += off[c] * stride;
            stride *= static_cast<std::int64_t>(side_);
        }
        if (min_r2 >= radius2_)
            continue;
        offsets_.insert(offsets_.end(), off.begin(), off.end());
        flat_offsets_.push_back(flat);
    }
}

HamiltonianEvaluator::HamiltonianEvaluator(WhiteNoiseRealization const& noise,
                                           Mollifier const& mollifier)
    : noise_(noise)
    , mollifier_(mollifier)
    , stencil_(noise.spec(), mollifier.radius())
{
    if (mollifier.dimension() != noise.spec().d)
        throw std::invalid_argument("HamiltonianEvaluator: dimension mismatch");
}

std::size_t path_stride(LatticeSpec const& spec, PathSample const& path)
{
    if (path.d != spec.d)
        throw std::invalid_argument("path dimension does not match lattice");
    double const ratio = spec.dt / path.dt;
    if (!(ratio >= 1 - 1e-9) || !near_integer(ratio))
        throw std::invalid_argument(
            "path time step must divide the slab width");
    return static_cast<std::size_t>(std::llround(ratio));
}

HamiltonianTrace HamiltonianEvaluator::trace(PathSample const& path,
                                             std::size_t slabs) const
{
    auto const& spec = noise_.spec();
    if (slabs > spec.slabs())
        throw std::invalid_argument("hamiltonian: more slabs than the lattice");
    std::size_t const stride = path_stride(spec, path);
    if (path.steps() < slabs * stride)
        throw std::invalid_argument("hamiltonian: path shorter than horizon");

    HamiltonianTrace out;
    out.H.resize(slabs + 1);
    out.var.resize(slabs + 1);
    double H = 0, var = 0;
    double const cv = spec.cell_variance();
    bool const plain = noise_.overlays().empty();
    for (std::size_t k = 0; k < slabs; ++k)
    {
        double h_k = 0, v_k = 0;
        auto x = path.at(k * stride);
        double const t = static_cast<double>(k) * spec.dt;
        if (plain)
        {
            std::uint64_t const key = noise_.slab_key(k);
            stencil_.for_each(
                x, t, [&](std::uint64_t flat, double r2, std::span<double const>) {
                    double const phi = mollifier_.value_r2(r2);
                    h_k += phi * noise_.keyed_increment(key, k, flat);
                    v_k += phi * phi;
                });
        }
        else
        {
            stencil_.for_each(
                x, t, [&](std::uint64_t flat, double r2, std::span<double const> y) {
                    double const phi = mollifier_.value_r2(r2);
                    h_k += phi * noise_.increment(k, flat, y);
                    v_k += phi * phi;
                });
        }
        H += h_k;
        var += v_k * cv;
        out.H[k + 1] = H;
        out.var[k + 1] = var;
    }
    return out;
}

HamiltonianValue HamiltonianEvaluator::operator()(PathSample const& path) const
{
    return (*this)(path, noise_.spec().slabs());
}

HamiltonianValue HamiltonianEvaluator::operator()(PathSample const& path,
                                                  std::size_t slabs) const
{
    return trace(path, slabs).final();
}

HamiltonianValue hamiltonian(WhiteNoiseRealization const& noise,
                             Mollifier const& mollifier,
                             PathSample const& path)
{
    return HamiltonianEvaluator(noise, mollifier)(path);
}

double field_increment(WhiteNoiseRealization const& noise,
                       Mollifier const& mollifier,
                       std::size_t k,
                       std::span<double const> x)
{
    if (k >= noise.spec().slabs())
        throw std::invalid_argument("field_increment: slab out of range");
    CellStencil stencil(noise.spec(), mollifier.radius());
    double sum = 0;
    stencil.for_each(x,
                     static_cast<double>(k) * noise.spec().dt,
                     [&](std::uint64_t flat, double r2, std::span<double const> y) {
                         sum += mollifier.value_r2(r2)
                                * noise.increment(k, flat, y);
                     });
    return sum;
}

std::vector<double> slab_anchor(LatticeSpec const& spec,
                                PathSample const& path,
                                std::size_t slabs)
{
    std::size_t const stride = path_stride(spec, path);
    slabs = std::min(slabs, path.steps() / stride);
    std::vector<double> anchor;
    anchor.reserve(slabs * static_cast<std::size_t>(spec.d));
    for (std::size_t k = 0; k < slabs; ++k)
    {
        auto x = path.at(k * stride);
        anchor.insert(anchor.end(), x.begin(), x.end());
    }
    return anchor;
}

WhiteNoiseRealization shifted_noise(WhiteNoiseRealization const& noise,
                                    std::shared_ptr<Mollifier const> mollifier,
                                    PathSample const& path,
                                    double gamma,
                                    std::size_t slab_end)
{
    auto const& spec = noise.spec();
    slab_end = std::min(slab_end, spec.slabs());
    DriftOverlay o;
    o.gamma = gamma;
    o.anchor = slab_anchor(spec, path, slab_end);
    o.slab_end = slab_end;
    int const d = spec.d;
    double const rho = mollifier->radius();
    std::size_t const n = o.anchor.size() / static_cast<std::size_t>(d);
    for (std::size_t k = 0; k < n; ++k)
    {
        double const* x = o.anchor.data() + k * static_cast<std::size_t>(d);
        double reach = 0;
        for (int c = 0; c < d; ++c)
            reach = std::max(reach, std::abs(x[c]));
        if (reach + rho > spec.L)
            throw BoxExitError(static_cast<double>(k) * spec.dt,
                               std::vector<double>(x, x + d),
                               reach + rho);
    }
    o.mollifier = std::move(mollifier);
    return noise.with_overlay(std::move(o));
}

double discrete_overlap(LatticeSpec const& spec,
                        Mollifier const& mollifier,
                        PathSample const& a,
                        PathSample const& b,
                        std::size_t slabs)
{
    std::size_t const sa = path_stride(spec, a);
    std::size_t const sb = path_stride(spec, b);
    if (a.steps() < slabs * sa || b.steps() < slabs * sb)
        throw std::invalid_argument("discrete_overlap: path shorter than horizon");
    CellStencil stencil(spec, mollifier.radius());
    double const reach2 = 4 * mollifier.radius() * mollifier.radius();
    int const d = spec.d;
    double total = 0;
    for (std::size_t k = 0; k < slabs; ++k)
    {
        auto xa = a.at(k * sa);
        auto xb = b.at(k * sb);
        double sep2 = 0;
        for (int c = 0; c < d; ++c)
            sep2 += (xa[c] - xb[c]) * (xa[c] - xb[c]);
        if (sep2 >= reach2)
            continue;
        double const t = static_cast<double>(k) * spec.dt;
        stencil.for_each(
            xa, t, [&](std::uint64_t, double r2, std::span<double const> y) {
                double rb2 = 0;
                for (int c = 0; c < d; ++c)
                    rb2 += (xb[c] - y[c]) * (xb[c] - y[c]);
                total += mollifier.value_r2(r2) * mollifier.value_r2(rb2);
            });
    }
    return total * spec.cell_variance();
}

}  // namespace wgmc
