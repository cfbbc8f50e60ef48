#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Core>

namespace enkmp {

/// Purpose tag mixed into a stream key so that different noise sources
/// drawn for the same (member, time) never share a sequence.
enum class NoiseRole : std::uint64_t
{
    initial = 1,
    transition = 2,
    measurement = 3,
    excitation = 4,
    shuffle = 5,
    weights = 6,
    split = 7,
};

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// xoshiro256** seeded through splitmix64. Cheap to construct, which
/// matters because a fresh stream is created per member and time step.
class StreamRng
{
public:
    using result_type = std::uint64_t;

    explicit StreamRng(std::uint64_t seed) noexcept
    {
        for (auto& word : s_) {
            seed = splitmix64(seed);
            word = seed;
        }
    }

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return ~result_type{0}; }

    result_type operator()() noexcept
    {
        const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

private:
    static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept
    {
        return (x << k) | (x >> (64 - k));
    }

    std::uint64_t s_[4];
};

/// Independent generator for one (seed, member, time, role) cell. Results
/// depend only on the key, never on the order in which cells are visited.
inline StreamRng make_stream(std::uint64_t seed, std::uint64_t member, std::uint64_t time,
                             NoiseRole role)
{
    std::uint64_t key = splitmix64(seed);
    key = splitmix64(key ^ member);
    key = splitmix64(key ^ (time + 0x632be59bd9b4e019ULL));
    key = splitmix64(key ^ static_cast<std::uint64_t>(role));
    return StreamRng(key);
}

template <typename Rng>
Eigen::VectorXd standard_normal(Rng& rng, Eigen::Index n)
{
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::VectorXd z(n);
    for (Eigen::Index i = 0; i < n; ++i)
        z[i] = gauss(rng);
    return z;
}

} // namespace enkmp
