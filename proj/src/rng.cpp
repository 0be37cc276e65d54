#include "mml/rng.hpp"

#include <cmath>

namespace mml {

std::uint64_t mix64(std::uint64_t x) noexcept {
    // splitmix64 finalizer
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t label_hash(std::string_view label) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : label) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t derive_key(std::uint64_t parent, std::uint64_t index) noexcept {
    return mix64(parent ^ mix64(index ^ 0xd1b54a32d192ed03ULL));
}

double CounterRng::exponential(double rate) noexcept {
    return -std::log(uniform()) / rate;
}

}  // namespace mml
