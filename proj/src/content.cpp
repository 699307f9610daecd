#include "lsast/content.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include "lsast/error.hpp"
#include "lsast/ops.hpp"

namespace lsast {

namespace {

double clamped(const Tensor& img, long y, long x) {
    const long h = static_cast<long>(img.dim(0)), w = static_cast<long>(img.dim(1));
    return img.at(static_cast<std::size_t>(std::clamp(y, 0L, h - 1)), static_cast<std::size_t>(std::clamp(x, 0L, w - 1)));
}

Tensor gaussian_blur(const Tensor& img, double sigma) {
    const long radius = std::max(1L, static_cast<long>(std::ceil(3.0 * sigma)));
    std::vector<double> kernel(2 * radius + 1);
    double total = 0.0;
    for (long i = -radius; i <= radius; ++i) total += kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    for (double& k : kernel) k /= total;

    const std::size_t h = img.dim(0), w = img.dim(1);
    Tensor tmp({h, w}), out({h, w});
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            double s = 0.0;
            for (long i = -radius; i <= radius; ++i) s += kernel[i + radius] * clamped(img, y, static_cast<long>(x) + i);
            tmp.at(y, x) = s;
        }
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            double s = 0.0;
            for (long i = -radius; i <= radius; ++i) s += kernel[i + radius] * clamped(tmp, static_cast<long>(y) + i, x);
            out.at(y, x) = s;
        }
    return out;
}

void sobel(const Tensor& img, Tensor& gx, Tensor& gy) {
    const std::size_t h = img.dim(0), w = img.dim(1);
    gx = Tensor({h, w});
    gy = Tensor({h, w});
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            const long yy = static_cast<long>(y), xx = static_cast<long>(x);
            auto p = [&](long dy, long dx) { return clamped(img, yy + dy, xx + dx); };
            gx.at(y, x) = (p(-1, 1) + 2 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2 * p(0, -1) + p(1, -1));
            gy.at(y, x) = (p(1, -1) + 2 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2 * p(-1, 0) + p(-1, 1));
        }
}

}  // namespace

std::size_t EdgeMap::count() const {
    std::size_t n = 0;
    for (double v : edges.data()) n += v != 0.0;
    return n;
}

Tensor to_grayscale(const Tensor& rgb) {
    require(rgb.rank() == 3 && rgb.dim(0) == 3, "to_grayscale expects a (3, H, W) image");
    const std::size_t h = rgb.dim(1), w = rgb.dim(2), plane = h * w;
    Tensor out({h, w});
    for (std::size_t i = 0; i < plane; ++i)
        out[i] = 0.299 * rgb[i] + 0.587 * rgb[plane + i] + 0.114 * rgb[2 * plane + i];
    return out;
}

Tensor gradient_magnitude(const Tensor& gray, double sigma) {
    Tensor gx, gy;
    sobel(gaussian_blur(gray, sigma), gx, gy);
    Tensor mag(gray.shape());
    for (std::size_t i = 0; i < mag.size(); ++i) mag[i] = std::hypot(gx[i], gy[i]);
    return mag;
}

EdgeMap canny(const Tensor& gray, const CannyOptions& options) {
    if (!(options.low >= 0.0 && options.low < options.high)) fail(ErrorKind::invalid_argument, "invalid thresholds");
    require(options.sigma > 0.0, "canny: sigma must be positive");
    require(gray.rank() == 2 && gray.size() > 0, "canny expects a non-empty (H, W) image");
    require(gray.all_finite(), "canny: image has non-finite values");

    const std::size_t h = gray.dim(0), w = gray.dim(1);
    Tensor gx, gy;
    sobel(gaussian_blur(gray, options.sigma), gx, gy);
    Tensor mag({h, w});
    double peak = 0.0;
    for (std::size_t i = 0; i < mag.size(); ++i) peak = std::max(peak, mag[i] = std::hypot(gx[i], gy[i]));

    double low = options.low, high = options.high;
    if (options.mode == ThresholdMode::relative_to_max) {
        low *= peak;
        high *= peak;
    }

    auto mag_at = [&](long y, long x) {
        if (y < 0 || x < 0 || y >= static_cast<long>(h) || x >= static_cast<long>(w)) return 0.0;
        return mag.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x));
    };

    // Non-maximum suppression along the quantized gradient direction. A pixel
    // survives when it is >= the neighbour behind it and > the one ahead, so a
    // two-pixel plateau keeps exactly one pixel.
    std::vector<char> candidate(h * w, 0);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            const double m = mag.at(y, x);
            if (m <= 0.0 || m < low) continue;
            double angle = std::atan2(gy.at(y, x), gx.at(y, x)) * 180.0 / M_PI;
            if (angle < 0) angle += 180.0;
            long dx = 1, dy = 0;
            if (angle >= 22.5 && angle < 67.5) {
                dx = 1;
                dy = 1;
            } else if (angle >= 67.5 && angle < 112.5) {
                dx = 0;
                dy = 1;
            } else if (angle >= 112.5 && angle < 157.5) {
                dx = -1;
                dy = 1;
            }
            const long yy = static_cast<long>(y), xx = static_cast<long>(x);
            if (m >= mag_at(yy - dy, xx - dx) && m > mag_at(yy + dy, xx + dx)) candidate[y * w + x] = 1;
        }

    EdgeMap out;
    out.edges = Tensor({h, w});
    out.low = low;
    out.high = high;
    std::deque<std::size_t> frontier;
    for (std::size_t i = 0; i < h * w; ++i)
        if (candidate[i] && mag[i] >= high) {
            out.edges[i] = 1.0;
            frontier.push_back(i);
        }
    while (!frontier.empty()) {
        const std::size_t i = frontier.front();
        frontier.pop_front();
        const long y = static_cast<long>(i / w), x = static_cast<long>(i % w);
        for (long dy = -1; dy <= 1; ++dy)
            for (long dx = -1; dx <= 1; ++dx) {
                const long ny = y + dy, nx = x + dx;
                if (ny < 0 || nx < 0 || ny >= static_cast<long>(h) || nx >= static_cast<long>(w)) continue;
                const std::size_t j = static_cast<std::size_t>(ny) * w + static_cast<std::size_t>(nx);
                if (candidate[j] && out.edges[j] == 0.0) {
                    out.edges[j] = 1.0;
                    frontier.push_back(j);
                }
            }
    }
    return out;
}

Var ContentBranch::param(const std::string& name, Tensor init) {
    Var v = Var::parameter(std::move(init));
    params_.emplace_back(name, v);
    return v;
}

ContentBranch::ContentBranch(const BackboneConfig& backbone, Engine& rng) : backbone_(backbone) {
    backbone_.validate();
    const auto& ch = backbone_.channels;
    auto conv = [&](const std::string& name, int cout, int cin, int k) {
        const double std = 1.0 / std::sqrt(static_cast<double>(cin * k * k));
        return param(name, randn({static_cast<std::size_t>(cout), static_cast<std::size_t>(cin),
                                  static_cast<std::size_t>(k), static_cast<std::size_t>(k)},
                                 rng, std));
    };
    auto bias = [&](const std::string& name, int c) { return param(name, Tensor({static_cast<std::size_t>(c)})); };

    conv0_w_ = conv("content.conv0.weight", ch[0], 1, 3);
    conv0_b_ = bias("content.conv0.bias", ch[0]);
    conv1_w_ = conv("content.conv1.weight", ch[0], ch[0], 3);
    conv1_b_ = bias("content.conv1.bias", ch[0]);
    conv2_w_ = conv("content.conv2.weight", ch[1], ch[0], 3);
    conv2_b_ = bias("content.conv2.bias", ch[1]);
    conv3_w_ = conv("content.conv3.weight", ch[2], ch[1], 3);
    conv3_b_ = bias("content.conv3.bias", ch[2]);
    for (int level = 0; level < 3; ++level) {
        const auto c = static_cast<std::size_t>(ch[level]);
        const std::string name = "content.proj." + layer_name(band_of_level(level));
        proj_w_[level] = param(name + ".weight", Tensor({c, c, 1, 1}));
        proj_b_[level] = param(name + ".bias", Tensor({c}));
    }
}

void ContentBranch::set_requires_grad(bool on) {
    for (auto& [name, v] : params_) v.set_requires_grad(on);
}

bool ContentBranch::projections_zero() const {
    for (int level = 0; level < 3; ++level) {
        for (double v : proj_w_[level].value().data())
            if (v != 0.0) return false;
        for (double v : proj_b_[level].value().data())
            if (v != 0.0) return false;
    }
    return true;
}

BandTensors ContentBranch::encode(const Var& edges, double strength) const {
    const auto res = static_cast<std::size_t>(backbone_.resolution);
    require(edges.value().rank() == 4 && edges.shape()[1] == 1 && edges.shape()[2] == res && edges.shape()[3] == res,
            "encode_content: edge map " + shape_str(edges.shape()) + " does not match resolution " +
                std::to_string(res));
    Var fine = ops::silu(ops::conv2d(edges, conv0_w_, conv0_b_, 1, 1));
    fine = ops::silu(ops::conv2d(fine, conv1_w_, conv1_b_, 1, 1));
    Var moderate = ops::silu(ops::conv2d(ops::avg_pool2(fine), conv2_w_, conv2_b_, 1, 1));
    Var coarse = ops::silu(ops::conv2d(ops::avg_pool2(moderate), conv3_w_, conv3_b_, 1, 1));

    const Var* feats[3] = {&fine, &moderate, &coarse};
    BandTensors out;
    for (int level = 0; level < 3; ++level) {
        Var r = ops::conv2d(*feats[level], proj_w_[level], proj_b_[level], 1, 0);
        if (strength != 1.0) r = ops::scale(r, strength);
        out[band_of_level(level)] = r;
    }
    return out;
}

Tensor edge_input(const EdgeMap& edges) { return edges.edges.reshaped({1, 1, edges.height(), edges.width()}); }

BandTensors encode_content(const ContentBranch& branch, const EdgeMap& edges, double strength) {
    return branch.encode(Var::constant(edge_input(edges)), strength);
}

}  // namespace lsast
