#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace acpp {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shape/contract violations on tensors and images.
struct ShapeError : Error {
    using Error::Error;
};

// Malformed configuration files, specs, or checkpoint headers.
struct ConfigError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

// External codec failures; carries the command transcript in the message.
struct CodecError : Error {
    using Error::Error;
};

// SplitMix64. Small, fully specified, identical on every platform; the
// standard <random> distributions are not bit-portable so we avoid them.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // [0, 1), 53-bit resolution.
    double next_double() { return double(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // Unbiased integer in [0, n) via rejection.
    uint64_t below(uint64_t n) {
        if (n == 0) throw Error("Rng::below: n must be positive");
        uint64_t threshold = (0 - n) % n;
        for (;;) {
            uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

private:
    uint64_t state_;
};

// Deterministic sub-seed from a master seed and a purpose label. All
// randomness in the artifact flows from one config seed through here.
uint64_t derive_seed(uint64_t seed, std::string_view label);

// Deterministic in-place Fisher-Yates.
template <typename Vec>
void shuffle(Vec& v, Rng& rng) {
    for (size_t i = v.size(); i > 1; --i) {
        size_t j = size_t(rng.below(i));
        std::swap(v[i - 1], v[j]);
    }
}

}  // namespace acpp
