#include "acpp/common.hpp"

namespace acpp {

uint64_t derive_seed(uint64_t seed, std::string_view label) {
    // FNV-1a over the label, then one SplitMix scramble against the seed.
    uint64_t h = 0xCBF29CE484222325ull;
    for (unsigned char c : label) {
        h ^= c;
        h *= 0x100000001B3ull;
    }
    Rng mix(h ^ (seed * 0x9E3779B97F4A7C15ull));
    return mix.next_u64();
}

}  // namespace acpp
