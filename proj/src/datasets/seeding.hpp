#pragma once

#include <cstdint>
#include <iomanip>
#include <sstream>
#include <string>

#include "drnet/datasets.hpp"

namespace drnet::detail {

// splitmix64 finalizer; decorrelates per-clip streams derived from seed + index.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::string hex_color(const Rgb& c) {
    std::ostringstream s;
    s << std::hex << std::setfill('0') << std::setw(2) << int(c.r) << std::setw(2) << int(c.g) << std::setw(2)
      << int(c.b);
    return s.str();
}

} // namespace drnet::detail
