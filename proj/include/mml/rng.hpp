#pragma once

#include <cstdint>
#include <limits>
#include <string_view>

namespace mml {

using Seed = std::uint64_t;

// Counter-based random streams. A stream is identified by a 64-bit key derived
// from (master seed, label, indices); the n-th output of a stream is a pure
// function of (key, n). Streams for different keys are statistically
// independent, and results never depend on the order in which streams are
// consumed or on which thread consumes them.
std::uint64_t mix64(std::uint64_t x) noexcept;

// Stable FNV-1a hash of a label, used to separate stream families.
std::uint64_t label_hash(std::string_view label) noexcept;

// Derives a child key from a parent key and one index.
std::uint64_t derive_key(std::uint64_t parent, std::uint64_t index) noexcept;

inline std::uint64_t stream_key(Seed seed, std::string_view label) noexcept {
    return derive_key(mix64(seed), label_hash(label));
}

inline std::uint64_t stream_key(Seed seed, std::string_view label, std::uint64_t i) noexcept {
    return derive_key(stream_key(seed, label), i);
}

inline std::uint64_t stream_key(Seed seed, std::string_view label, std::uint64_t i,
                                std::uint64_t j) noexcept {
    return derive_key(stream_key(seed, label, i), j);
}

// Maps 64 random bits to a double uniform on the open interval (0, 1).
// 52 bits, so the largest value 1 - 2^-53 is representable.
inline double to_open_unit(std::uint64_t bits) noexcept {
    return (static_cast<double>(bits >> 12) + 0.5) * 0x1.0p-52;
}

// Uniform draw number `counter` of the stream `key`.
inline double uniform_at(std::uint64_t key, std::uint64_t counter = 0) noexcept {
    return to_open_unit(mix64(key ^ mix64(counter + 0x9e3779b97f4a7c15ULL)));
}

// Sequential view of one stream; satisfies UniformRandomBitGenerator.
class CounterRng {
public:
    using result_type = std::uint64_t;

    explicit CounterRng(std::uint64_t key) noexcept : key_(key) {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept {
        return std::numeric_limits<result_type>::max();
    }

    result_type operator()() noexcept {
        return mix64(key_ ^ mix64(counter_++ + 0x9e3779b97f4a7c15ULL));
    }

    double uniform() noexcept { return to_open_unit((*this)()); }
    double exponential(double rate) noexcept;

    std::uint64_t position() const noexcept { return counter_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

}  // namespace mml
