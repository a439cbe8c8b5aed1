#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace nrf {

using Rng = std::mt19937_64;

std::uint64_t splitmix64(std::uint64_t x);

// Independent stream seed for a named stage ("init", "batch", "sdf", ...).
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stage);

inline Rng make_rng(std::uint64_t seed, std::string_view stage) { return Rng(derive_seed(seed, stage)); }

}  // namespace nrf
