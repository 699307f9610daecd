#include "lsast/rng.hpp"

#include <sstream>

#include "lsast/error.hpp"

namespace lsast {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t master, std::string_view label) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : label) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return splitmix64(splitmix64(master) ^ h);
}

void fill_randn(Tensor& t, Engine& rng, double stddev) {
    std::normal_distribution<double> dist(0.0, stddev);
    for (double& v : t.data()) v = dist(rng);
}

Tensor randn(Shape shape, Engine& rng, double stddev) {
    Tensor t(std::move(shape));
    fill_randn(t, rng, stddev);
    return t;
}

std::string engine_state(const Engine& rng) {
    std::ostringstream os;
    os << rng;
    return os.str();
}

Engine engine_from_state(const std::string& state) {
    Engine rng;
    std::istringstream is(state);
    is >> rng;
    if (!is) fail(ErrorKind::corrupt_checkpoint, "unreadable rng state");
    return rng;
}

}  // namespace lsast
