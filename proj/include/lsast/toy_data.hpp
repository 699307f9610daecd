#pragma once

#include <string>
#include <vector>

#include "lsast/rng.hpp"
#include "lsast/tensor.hpp"

// Procedural image sets standing in for photo and artwork collections.
// Images are (3, H, W) with values in [0, 1].
namespace lsast::toy {

// Landscape-like scenes: sky gradient, ground, a few coloured blobs.
Tensor photo(int resolution, Engine& rng);

const std::vector<std::string>& style_names();

// One artwork of the named collection: swirl, woodblock or stipple.
Tensor artwork(const std::string& style, int resolution, Engine& rng);

std::vector<Tensor> photos(int count, int resolution, std::uint64_t seed);
std::vector<Tensor> artworks(const std::string& style, int count, int resolution, std::uint64_t seed);

}  // namespace lsast::toy
