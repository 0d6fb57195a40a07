#pragma once

#include <cstdint>
#include <random>

namespace dryfuse {

using Rng = std::mt19937_64;

// Independent generator for (seed, stream index); used for per-run and
// per-fold substreams so serial and parallel execution agree.
inline Rng make_substream(std::uint64_t seed, std::uint64_t index) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return Rng(mix(mix(seed) ^ mix(index + 0x632be59bd9b4e019ULL)));
}

}  // namespace dryfuse
