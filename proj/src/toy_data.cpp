#include "lsast/toy_data.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "lsast/error.hpp"

namespace lsast::toy {

namespace {

using Rgb = std::array<double, 3>;

double uniform(Engine& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

void put(Tensor& img, std::size_t y, std::size_t x, const Rgb& c) {
    for (std::size_t ch = 0; ch < 3; ++ch) img.at(0, ch, y, x) = std::clamp(c[ch], 0.0, 1.0);
}

Rgb mix(const Rgb& a, const Rgb& b, double w) {
    return {a[0] + (b[0] - a[0]) * w, a[1] + (b[1] - a[1]) * w, a[2] + (b[2] - a[2]) * w};
}

Rgb jitter(const Rgb& c, double amount, Engine& rng) {
    return {c[0] + uniform(rng, -amount, amount), c[1] + uniform(rng, -amount, amount),
            c[2] + uniform(rng, -amount, amount)};
}

Tensor blank(int res) { return Tensor({1, 3, static_cast<std::size_t>(res), static_cast<std::size_t>(res)}); }

Tensor squeeze(Tensor img) {
    const std::size_t h = img.dim(2), w = img.dim(3);
    return img.reshaped({3, h, w});
}

}  // namespace

Tensor photo(int res, Engine& rng) {
    Tensor img = blank(res);
    const Rgb sky_top = jitter({0.35, 0.55, 0.85}, 0.1, rng);
    const Rgb sky_bottom = jitter({0.75, 0.85, 0.95}, 0.05, rng);
    const Rgb ground = uniform(rng, 0, 1) < 0.5 ? jitter({0.30, 0.55, 0.25}, 0.1, rng) : jitter({0.55, 0.45, 0.30}, 0.1, rng);
    const double horizon = uniform(rng, 0.4, 0.7) * res;
    const double tilt = uniform(rng, -0.2, 0.2);

    struct Blob {
        double cy, cx, ry, rx;
        Rgb color;
    };
    std::vector<Blob> blobs;
    const int n_blobs = 1 + static_cast<int>(rng() % 3);
    for (int i = 0; i < n_blobs; ++i)
        blobs.push_back({uniform(rng, 0.2, 0.9) * res, uniform(rng, 0.1, 0.9) * res, uniform(rng, 0.05, 0.2) * res,
                         uniform(rng, 0.05, 0.2) * res,
                         Rgb{uniform(rng, 0.1, 0.9), uniform(rng, 0.1, 0.9), uniform(rng, 0.1, 0.9)}});

    for (int y = 0; y < res; ++y)
        for (int x = 0; x < res; ++x) {
            const double line = horizon + tilt * (x - res / 2.0);
            Rgb c = y < line ? mix(sky_top, sky_bottom, y / std::max(line, 1.0))
                             : mix(ground, Rgb{ground[0] * 0.6, ground[1] * 0.6, ground[2] * 0.6},
                                   (y - line) / std::max(res - line, 1.0));
            for (const Blob& b : blobs) {
                const double dy = (y - b.cy) / b.ry, dx = (x - b.cx) / b.rx;
                const double r2 = dy * dy + dx * dx;
                if (r2 < 1.0) c = mix(c, b.color, std::min(1.0, 4.0 * (1.0 - r2)));
            }
            put(img, y, x, c);
        }
    return squeeze(std::move(img));
}

const std::vector<std::string>& style_names() {
    static const std::vector<std::string> names{"swirl", "woodblock", "stipple"};
    return names;
}

namespace {

// Curling brush strokes in deep blue and yellow with a few bright stars.
Tensor swirl(int res, Engine& rng) {
    Tensor img = blank(res);
    const Rgb deep = jitter({0.08, 0.15, 0.45}, 0.05, rng);
    const Rgb light = jitter({0.35, 0.55, 0.85}, 0.05, rng);
    const Rgb gold = jitter({0.95, 0.8, 0.2}, 0.05, rng);
    const double fx = uniform(rng, 0.25, 0.45), fy = uniform(rng, 0.15, 0.3), phase = uniform(rng, 0, 6.28);
    const double warp = uniform(rng, 2.0, 4.0);
    std::vector<std::array<double, 3>> stars;
    for (int i = 0; i < 3; ++i)
        stars.push_back({uniform(rng, 0.05, 0.5) * res, uniform(rng, 0.05, 0.95) * res, uniform(rng, 2.0, 5.0)});
    for (int y = 0; y < res; ++y)
        for (int x = 0; x < res; ++x) {
            const double s = std::sin(fx * x + warp * std::sin(fy * y + phase));
            Rgb c = mix(deep, light, 0.5 + 0.5 * s);
            for (const auto& st : stars) {
                const double d = std::hypot(y - st[0], x - st[1]);
                if (d < st[2] * 1.8) c = mix(c, gold, std::clamp(1.6 - d / st[2], 0.0, 1.0));
            }
            put(img, y, x, c);
        }
    return squeeze(std::move(img));
}

// Flat colour bands with wave crests and dark outlines.
Tensor woodblock(int res, Engine& rng) {
    Tensor img = blank(res);
    const Rgb paper = jitter({0.92, 0.86, 0.7}, 0.03, rng);
    const Rgb indigo = jitter({0.12, 0.2, 0.45}, 0.03, rng);
    const Rgb foam = {0.97, 0.97, 0.93};
    const Rgb ink = {0.08, 0.07, 0.06};
    const double level = uniform(rng, 0.35, 0.6) * res;
    const double amp = uniform(rng, 3.0, 8.0), freq = uniform(rng, 0.15, 0.3), phase = uniform(rng, 0, 6.28);
    for (int y = 0; y < res; ++y)
        for (int x = 0; x < res; ++x) {
            const double crest = level + amp * std::sin(freq * x + phase);
            Rgb c = y < crest ? paper : indigo;
            const double dist = y - crest;
            if (dist >= 0 && dist < 3) c = foam;
            if (std::abs(dist) < 1.0 || std::abs(dist - 3.0) < 0.7) c = ink;
            // second, lower wave line
            const double crest2 = crest + res * 0.2 + amp * 0.5 * std::sin(freq * 1.7 * x);
            if (std::abs(y - crest2) < 0.8) c = ink;
            put(img, y, x, c);
        }
    return squeeze(std::move(img));
}

// Pastel dots on a light ground.
Tensor stipple(int res, Engine& rng) {
    Tensor img = blank(res);
    const Rgb ground = jitter({0.93, 0.9, 0.85}, 0.03, rng);
    const std::array<Rgb, 4> palette{Rgb{0.95, 0.6, 0.6}, Rgb{0.6, 0.8, 0.95}, Rgb{0.7, 0.9, 0.6}, Rgb{0.95, 0.85, 0.5}};
    for (int y = 0; y < res; ++y)
        for (int x = 0; x < res; ++x) put(img, y, x, ground);
    const int spacing = 4;
    for (int gy = 0; gy < res; gy += spacing)
        for (int gx = 0; gx < res; gx += spacing) {
            const int cy = gy + static_cast<int>(rng() % 3), cx = gx + static_cast<int>(rng() % 3);
            const Rgb c = jitter(palette[rng() % palette.size()], 0.05, rng);
            for (int dy = 0; dy < 2; ++dy)
                for (int dx = 0; dx < 2; ++dx)
                    if (cy + dy < res && cx + dx < res) put(img, cy + dy, cx + dx, c);
        }
    return squeeze(std::move(img));
}

}  // namespace

Tensor artwork(const std::string& style, int res, Engine& rng) {
    if (style == "swirl") return swirl(res, rng);
    if (style == "woodblock") return woodblock(res, rng);
    if (style == "stipple") return stipple(res, rng);
    fail(ErrorKind::invalid_argument, "unknown style collection '" + style + "'");
}

std::vector<Tensor> photos(int count, int res, std::uint64_t seed) {
    Engine rng = make_engine(seed, "toy.photos");
    std::vector<Tensor> out;
    for (int i = 0; i < count; ++i) out.push_back(photo(res, rng));
    return out;
}

std::vector<Tensor> artworks(const std::string& style, int count, int res, std::uint64_t seed) {
    Engine rng = make_engine(seed, "toy.style." + style);
    std::vector<Tensor> out;
    for (int i = 0; i < count; ++i) out.push_back(artwork(style, res, rng));
    return out;
}

}  // namespace lsast::toy
