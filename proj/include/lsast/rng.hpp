#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

#include "lsast/tensor.hpp"

namespace lsast {

using Engine = std::mt19937_64;

// Stable 64-bit seed for the stream named `label` under `master`.
// FNV-1a over the label, mixed with the master seed through splitmix64.
std::uint64_t derive_seed(std::uint64_t master, std::string_view label);

inline Engine make_engine(std::uint64_t master, std::string_view label) {
    return Engine(derive_seed(master, label));
}

Tensor randn(Shape shape, Engine& rng, double stddev = 1.0);
void fill_randn(Tensor& t, Engine& rng, double stddev = 1.0);

std::string engine_state(const Engine& rng);
Engine engine_from_state(const std::string& state);

}  // namespace lsast
