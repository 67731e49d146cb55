#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>

namespace modesimex {

/// Purposes that partition the key space of a master seed.
enum class StreamPurpose : std::uint64_t {
    Covariate = 1,
    ModelError = 2,
    MeasurementError = 3,
    PseudoError = 4,
    Test = 99,
};

/// Derives a 64-bit stream key from a seed and an ordered list of integer tags.
[[nodiscard]] std::uint64_t derive_key(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) noexcept;

/// Philox4x32-10 counter-based generator. Each stream is identified by a 64-bit
/// key; output depends only on (key, position), never on other streams.
class RandomStream {
public:
    explicit RandomStream(std::uint64_t key) noexcept;
    RandomStream(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) noexcept
        : RandomStream(derive_key(seed, tags)) {}

    std::uint64_t next_u64() noexcept;
    /// Uniform on [0, 1) with 53 random bits.
    double uniform() noexcept;
    /// Uniform on (0, 1).
    double uniform_open() noexcept;
    /// Standard normal via the Box-Muller transform (second variate cached).
    double normal() noexcept;

    // UniformRandomBitGenerator interface
    using result_type = std::uint64_t;
    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return ~result_type{0}; }
    result_type operator()() noexcept { return next_u64(); }

private:
    void refill() noexcept;

    std::array<std::uint32_t, 2> key_;
    std::array<std::uint32_t, 4> counter_{};
    std::array<std::uint32_t, 4> block_{};
    int used_ = 4;
    double cached_normal_ = 0.0;
    bool has_cached_ = false;
};

/// Philox4x32 with 10 rounds applied to one counter block.
[[nodiscard]] std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                                     std::array<std::uint32_t, 2> key) noexcept;

}  // namespace modesimex
