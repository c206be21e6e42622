#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace cellnas {

/// Reproducible random stream.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the C++
/// standard. The distributions layered on top are implemented here rather than
/// taken from <random> because the standard distributions are not bit-portable
/// across library implementations.
///
/// Named child streams are derived with SplitMix64 over (seed, FNV-1a(name)),
/// so "init", "data", "sampling" and "directions" never share state.
class Rng {
public:
    static constexpr std::string_view kAlgorithm = "mt19937_64/splitmix64-streams/v1";

    explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

    std::uint64_t seed() const noexcept { return seed_; }

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    /// Uniform integer in [0, n). Rejection sampling, no modulo bias.
    std::uint64_t uniform_index(std::uint64_t n);

    /// Standard normal via the Marsaglia polar method.
    double normal();

    /// Independent stream keyed by a name.
    Rng stream(std::string_view name) const;

    /// Independent stream keyed by an index (e.g. a trial number).
    Rng stream(std::uint64_t index) const;

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;
std::uint64_t fnv1a(std::string_view text) noexcept;

}  // namespace cellnas
