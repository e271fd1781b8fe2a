#pragma once

#include <cstdint>
#include <limits>
#include <string_view>

#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_01.hpp>

namespace wgmc
{
//---------------------------------------------------------------------------//
// Seeding and random streams.
//
// Every draw in the library is attributable to (master seed, stream label,
// index...). Streams are derived by hashing, so replicas can run on any
// worker in any order and still see the same numbers.
//---------------------------------------------------------------------------//

//! SplitMix64 finalizer (Steele, Lea, Flood 2014).
constexpr std::uint64_t mix64(std::uint64_t z) noexcept
{
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

//! FNV-1a hash of a stream label.
constexpr std::uint64_t label_hash(std::string_view label) noexcept
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : label)
    {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

constexpr std::uint64_t derive_seed(std::uint64_t master,
                                    std::string_view label) noexcept
{
    return mix64(master ^ mix64(label_hash(label)));
}

constexpr std::uint64_t derive_seed(std::uint64_t master,
                                    std::string_view label,
                                    std::uint64_t index) noexcept
{
    return mix64(derive_seed(master, label) ^ mix64(index + 1));
}

constexpr std::uint64_t derive_seed(std::uint64_t master,
                                    std::string_view label,
                                    std::uint64_t i,
                                    std::uint64_t j) noexcept
{
    return mix64(derive_seed(master, label, i) ^ mix64(~j));
}

//---------------------------------------------------------------------------//
/*!
 * SplitMix64 generator satisfying UniformRandomBitGenerator.
 *
 * Cheap to construct, so it doubles as a counter-based generator: seeding
 * it with a hash of (seed, slab, cell) gives the cell's private stream.
 */
class SplitMix64
{
  public:
    using result_type = std::uint64_t;

    constexpr explicit SplitMix64(std::uint64_t seed = 0) noexcept
        : state_(seed)
    {
    }

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept
    {
        return std::numeric_limits<result_type>::max();
    }

    constexpr result_type operator()() noexcept
    {
        state_ += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

  private:
    std::uint64_t state_;
};

//! Stream with normal and uniform draws; deterministic in its seed.
class Stream
{
  public:
    explicit Stream(std::uint64_t seed) noexcept : engine_(seed) {}

    double normal() { return normal_(engine_); }
    //! Uniform on [0, 1).
    double uniform()
    {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }
    std::uint64_t bits() { return engine_(); }
    //! Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n)
    {
        // Lemire's multiply-shift; bias is below 2^-64 * n
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(engine_()) * n) >> 64);
    }

  private:
    SplitMix64 engine_;
    boost::random::normal_distribution<double> normal_;
};

//! Standard normal attached to a single key; stateless ziggurat draw.
inline double keyed_normal(std::uint64_t key)
{
    SplitMix64 engine(key);
    boost::random::normal_distribution<double> dist;
    return dist(engine);
}

}  // namespace wgmc
