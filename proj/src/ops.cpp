#include "lsast/ops.hpp"

#include <Eigen/Core>
#include <cmath>
#include <memory>

#include "lsast/error.hpp"

namespace lsast::ops {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

bool needs(const detail::Node& self, std::size_t i) {
    return i < self.inputs.size() && self.inputs[i] && self.inputs[i]->requires_grad;
}

const Tensor& in_value(const detail::Node& self, std::size_t i) { return self.inputs[i]->value; }
Tensor& in_grad(detail::Node& self, std::size_t i) { return self.inputs[i]->ensure_grad(); }

void check_rank(const Var& v, std::size_t rank, const char* what) {
    require(v.defined() && v.value().rank() == rank,
            std::string(what) + ": expected rank " + std::to_string(rank) + " tensor, got " +
                (v.defined() ? shape_str(v.shape()) : std::string("undefined")));
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// cols (Cin*k*k, Ho*Wo) from one image (Cin, H, W).
void im2col(const double* x, std::size_t cin, std::size_t h, std::size_t w, int k, int stride, int pad,
            std::size_t ho, std::size_t wo, double* cols) {
    const std::size_t p = ho * wo;
    for (std::size_t c = 0; c < cin; ++c) {
        const double* xc = x + c * h * w;
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                double* row = cols + ((c * k + ky) * k + kx) * p;
                for (std::size_t oy = 0; oy < ho; ++oy) {
                    const long iy = static_cast<long>(oy) * stride - pad + ky;
                    double* dst = row + oy * wo;
                    if (iy < 0 || iy >= static_cast<long>(h)) {
                        std::fill(dst, dst + wo, 0.0);
                        continue;
                    }
                    const double* src = xc + iy * w;
                    for (std::size_t ox = 0; ox < wo; ++ox) {
                        const long ix = static_cast<long>(ox) * stride - pad + kx;
                        dst[ox] = (ix < 0 || ix >= static_cast<long>(w)) ? 0.0 : src[ix];
                    }
                }
            }
        }
    }
}

void col2im_add(const double* cols, std::size_t cin, std::size_t h, std::size_t w, int k, int stride, int pad,
                std::size_t ho, std::size_t wo, double* x) {
    const std::size_t p = ho * wo;
    for (std::size_t c = 0; c < cin; ++c) {
        double* xc = x + c * h * w;
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const double* row = cols + ((c * k + ky) * k + kx) * p;
                for (std::size_t oy = 0; oy < ho; ++oy) {
                    const long iy = static_cast<long>(oy) * stride - pad + ky;
                    if (iy < 0 || iy >= static_cast<long>(h)) continue;
                    const double* src = row + oy * wo;
                    double* dst = xc + iy * w;
                    for (std::size_t ox = 0; ox < wo; ++ox) {
                        const long ix = static_cast<long>(ox) * stride - pad + kx;
                        if (ix >= 0 && ix < static_cast<long>(w)) dst[ix] += src[ox];
                    }
                }
            }
        }
    }
}

}  // namespace

Var add(const Var& a, const Var& b) {
    require(a.shape() == b.shape(), "add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    Tensor out = a.value();
    out += b.value();
    return Var::make(std::move(out), {a, b}, [](detail::Node& self) {
        if (needs(self, 0)) in_grad(self, 0) += self.grad;
        if (needs(self, 1)) in_grad(self, 1) += self.grad;
    });
}

Var sub(const Var& a, const Var& b) {
    require(a.shape() == b.shape(), "sub: shape mismatch");
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
    return Var::make(std::move(out), {a, b}, [](detail::Node& self) {
        if (needs(self, 0)) in_grad(self, 0) += self.grad;
        if (needs(self, 1)) {
            Tensor& g = in_grad(self, 1);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
        }
    });
}

Var scale(const Var& a, double s) {
    Tensor out = a.value();
    for (double& v : out.data()) v *= s;
    return Var::make(std::move(out), {a}, [s](detail::Node& self) {
        Tensor& g = in_grad(self, 0);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * self.grad[i];
    });
}

Var sum(const Var& a) {
    double total = 0.0;
    for (double v : a.value().data()) total += v;
    return Var::make(Tensor({1}, total), {a}, [](detail::Node& self) {
        Tensor& g = in_grad(self, 0);
        for (double& v : g.data()) v += self.grad[0];
    });
}

Var reshape(const Var& a, Shape shape) {
    Tensor out = a.value().reshaped(std::move(shape));
    return Var::make(std::move(out), {a}, [](detail::Node& self) {
        Tensor& g = in_grad(self, 0);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
}

Var silu(const Var& x) {
    Tensor out(x.shape());
    const Tensor& xv = x.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * sigmoid(xv[i]);
    return Var::make(std::move(out), {x}, [](detail::Node& self) {
        const Tensor& xv = in_value(self, 0);
        Tensor& g = in_grad(self, 0);
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double s = sigmoid(xv[i]);
            g[i] += self.grad[i] * s * (1.0 + xv[i] * (1.0 - s));
        }
    });
}

Var add_channel_bias(const Var& x, const Var& v) {
    check_rank(x, 4, "add_channel_bias");
    const std::size_t b = x.shape()[0], c = x.shape()[1], hw = x.shape()[2] * x.shape()[3];
    require(v.shape() == Shape{b, c}, "add_channel_bias: bias shape " + shape_str(v.shape()));
    Tensor out = x.value();
    for (std::size_t n = 0; n < b; ++n)
        for (std::size_t ch = 0; ch < c; ++ch) {
            double* dst = out.ptr() + (n * c + ch) * hw;
            const double add = v.value()[n * c + ch];
            for (std::size_t i = 0; i < hw; ++i) dst[i] += add;
        }
    return Var::make(std::move(out), {x, v}, [b, c, hw](detail::Node& self) {
        if (needs(self, 0)) in_grad(self, 0) += self.grad;
        if (needs(self, 1)) {
            Tensor& g = in_grad(self, 1);
            for (std::size_t i = 0; i < b * c; ++i) {
                const double* src = self.grad.ptr() + i * hw;
                double s = 0.0;
                for (std::size_t j = 0; j < hw; ++j) s += src[j];
                g[i] += s;
            }
        }
    });
}

Var conv2d(const Var& x, const Var& w, const Var& bias, int stride, int pad) {
    check_rank(x, 4, "conv2d input");
    check_rank(w, 4, "conv2d weight");
    const std::size_t bsz = x.shape()[0], cin = x.shape()[1], h = x.shape()[2], wd = x.shape()[3];
    const std::size_t cout = w.shape()[0];
    const int k = static_cast<int>(w.shape()[2]);
    require(w.shape()[1] == cin && w.shape()[3] == w.shape()[2],
            "conv2d: weight " + shape_str(w.shape()) + " does not fit input " + shape_str(x.shape()));
    require(!bias.defined() || bias.shape() == Shape{cout}, "conv2d: bias shape mismatch");
    require(static_cast<long>(h) + 2 * pad >= k && static_cast<long>(wd) + 2 * pad >= k, "conv2d: input too small");
    const std::size_t ho = (h + 2 * pad - k) / stride + 1, wo = (wd + 2 * pad - k) / stride + 1;
    const std::size_t kk = cin * k * k, p = ho * wo;
    const bool pointwise = k == 1 && stride == 1 && pad == 0;

    Tensor out({bsz, cout, ho, wo});
    std::vector<double> cols(pointwise ? 0 : kk * p);
    CMapMat wm(w.value().ptr(), cout, kk);
    for (std::size_t n = 0; n < bsz; ++n) {
        const double* xn = x.value().ptr() + n * cin * h * wd;
        const double* cptr = xn;
        if (!pointwise) {
            im2col(xn, cin, h, wd, k, stride, pad, ho, wo, cols.data());
            cptr = cols.data();
        }
        MapMat y(out.ptr() + n * cout * p, cout, p);
        y.noalias() = wm * CMapMat(cptr, kk, p);
        if (bias.defined()) {
            for (std::size_t c = 0; c < cout; ++c) y.row(c).array() += bias.value()[c];
        }
    }

    return Var::make(std::move(out), {x, w, bias}, [=](detail::Node& self) {
        const Tensor& xv = in_value(self, 0);
        CMapMat wm(in_value(self, 1).ptr(), cout, kk);
        std::vector<double> cols(pointwise ? 0 : kk * p);
        std::vector<double> dcols(pointwise ? 0 : kk * p);
        const bool need_x = needs(self, 0), need_w = needs(self, 1), need_b = needs(self, 2);
        for (std::size_t n = 0; n < bsz; ++n) {
            CMapMat dy(self.grad.ptr() + n * cout * p, cout, p);
            const double* xn = xv.ptr() + n * cin * h * wd;
            if (need_w) {
                const double* cptr = xn;
                if (!pointwise) {
                    im2col(xn, cin, h, wd, k, stride, pad, ho, wo, cols.data());
                    cptr = cols.data();
                }
                MapMat dw(in_grad(self, 1).ptr(), cout, kk);
                dw.noalias() += dy * CMapMat(cptr, kk, p).transpose();
            }
            if (need_x) {
                double* dxn = in_grad(self, 0).ptr() + n * cin * h * wd;
                if (pointwise) {
                    MapMat(dxn, cin, p).noalias() += wm.transpose() * dy;
                } else {
                    MapMat(dcols.data(), kk, p).noalias() = wm.transpose() * dy;
                    col2im_add(dcols.data(), cin, h, wd, k, stride, pad, ho, wo, dxn);
                }
            }
            if (need_b) {
                Tensor& db = in_grad(self, 2);
                for (std::size_t c = 0; c < cout; ++c) db[c] += dy.row(c).sum();
            }
        }
    });
}

Var avg_pool2(const Var& x) {
    check_rank(x, 4, "avg_pool2");
    const std::size_t b = x.shape()[0], c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
    require(h % 2 == 0 && w % 2 == 0, "avg_pool2: odd spatial size " + shape_str(x.shape()));
    const std::size_t ho = h / 2, wo = w / 2;
    Tensor out({b, c, ho, wo});
    const double* src = x.value().ptr();
    for (std::size_t plane = 0; plane < b * c; ++plane)
        for (std::size_t y = 0; y < ho; ++y)
            for (std::size_t xx = 0; xx < wo; ++xx) {
                const double* s = src + plane * h * w + 2 * y * w + 2 * xx;
                out[(plane * ho + y) * wo + xx] = 0.25 * (s[0] + s[1] + s[w] + s[w + 1]);
            }
    return Var::make(std::move(out), {x}, [=](detail::Node& self) {
        double* g = in_grad(self, 0).ptr();
        for (std::size_t plane = 0; plane < b * c; ++plane)
            for (std::size_t y = 0; y < ho; ++y)
                for (std::size_t xx = 0; xx < wo; ++xx) {
                    const double d = 0.25 * self.grad[(plane * ho + y) * wo + xx];
                    double* s = g + plane * h * w + 2 * y * w + 2 * xx;
                    s[0] += d;
                    s[1] += d;
                    s[w] += d;
                    s[w + 1] += d;
                }
    });
}

Var upsample_nearest2(const Var& x) {
    check_rank(x, 4, "upsample_nearest2");
    const std::size_t b = x.shape()[0], c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
    const std::size_t ho = 2 * h, wo = 2 * w;
    Tensor out({b, c, ho, wo});
    for (std::size_t plane = 0; plane < b * c; ++plane)
        for (std::size_t y = 0; y < ho; ++y)
            for (std::size_t xx = 0; xx < wo; ++xx)
                out[(plane * ho + y) * wo + xx] = x.value()[(plane * h + y / 2) * w + xx / 2];
    return Var::make(std::move(out), {x}, [=](detail::Node& self) {
        Tensor& g = in_grad(self, 0);
        for (std::size_t plane = 0; plane < b * c; ++plane)
            for (std::size_t y = 0; y < ho; ++y)
                for (std::size_t xx = 0; xx < wo; ++xx)
                    g[(plane * h + y / 2) * w + xx / 2] += self.grad[(plane * ho + y) * wo + xx];
    });
}

Var concat_channels(const Var& a, const Var& b) {
    check_rank(a, 4, "concat_channels");
    check_rank(b, 4, "concat_channels");
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    require(sa[0] == sb[0] && sa[2] == sb[2] && sa[3] == sb[3],
            "concat_channels: " + shape_str(sa) + " vs " + shape_str(sb));
    const std::size_t n = sa[0], ca = sa[1], cb = sb[1], hw = sa[2] * sa[3];
    Tensor out({n, ca + cb, sa[2], sa[3]});
    for (std::size_t i = 0; i < n; ++i) {
        std::copy_n(a.value().ptr() + i * ca * hw, ca * hw, out.ptr() + i * (ca + cb) * hw);
        std::copy_n(b.value().ptr() + i * cb * hw, cb * hw, out.ptr() + i * (ca + cb) * hw + ca * hw);
    }
    return Var::make(std::move(out), {a, b}, [=](detail::Node& self) {
        for (std::size_t i = 0; i < n; ++i) {
            const double* g = self.grad.ptr() + i * (ca + cb) * hw;
            if (needs(self, 0)) {
                double* d = in_grad(self, 0).ptr() + i * ca * hw;
                for (std::size_t j = 0; j < ca * hw; ++j) d[j] += g[j];
            }
            if (needs(self, 1)) {
                double* d = in_grad(self, 1).ptr() + i * cb * hw;
                for (std::size_t j = 0; j < cb * hw; ++j) d[j] += g[ca * hw + j];
            }
        }
    });
}

Var group_norm(const Var& x, const Var& gamma, const Var& beta, int groups, double eps) {
    check_rank(x, 4, "group_norm");
    const std::size_t b = x.shape()[0], c = x.shape()[1], hw = x.shape()[2] * x.shape()[3];
    const std::size_t g = static_cast<std::size_t>(groups);
    require(g > 0 && c % g == 0, "group_norm: channels " + std::to_string(c) + " not divisible by groups");
    require(gamma.shape() == Shape{c} && beta.shape() == Shape{c}, "group_norm: affine shape mismatch");
    const std::size_t cpg = c / g, count = cpg * hw;

    auto stats = std::make_shared<std::vector<double>>(2 * b * g);  // mean, rstd
    Tensor out(x.shape());
    const double* xv = x.value().ptr();
    for (std::size_t n = 0; n < b; ++n)
        for (std::size_t gi = 0; gi < g; ++gi) {
            const double* src = xv + (n * c + gi * cpg) * hw;
            double mean = 0.0;
            for (std::size_t i = 0; i < count; ++i) mean += src[i];
            mean /= static_cast<double>(count);
            double var = 0.0;
            for (std::size_t i = 0; i < count; ++i) var += (src[i] - mean) * (src[i] - mean);
            var /= static_cast<double>(count);
            const double rstd = 1.0 / std::sqrt(var + eps);
            (*stats)[2 * (n * g + gi)] = mean;
            (*stats)[2 * (n * g + gi) + 1] = rstd;
            for (std::size_t cc = 0; cc < cpg; ++cc) {
                const std::size_t ch = gi * cpg + cc;
                const double ga = gamma.value()[ch], be = beta.value()[ch];
                const double* s = src + cc * hw;
                double* d = out.ptr() + (n * c + ch) * hw;
                for (std::size_t i = 0; i < hw; ++i) d[i] = (s[i] - mean) * rstd * ga + be;
            }
        }

    return Var::make(std::move(out), {x, gamma, beta}, [=](detail::Node& self) {
        const double* xv = in_value(self, 0).ptr();
        const Tensor& gam = in_value(self, 1);
        const double* dy = self.grad.ptr();
        for (std::size_t n = 0; n < b; ++n)
            for (std::size_t gi = 0; gi < g; ++gi) {
                const double mean = (*stats)[2 * (n * g + gi)];
                const double rstd = (*stats)[2 * (n * g + gi) + 1];
                double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
                for (std::size_t cc = 0; cc < cpg; ++cc) {
                    const std::size_t ch = gi * cpg + cc;
                    const std::size_t off = (n * c + ch) * hw;
                    double dgam = 0.0, dbet = 0.0;
                    for (std::size_t i = 0; i < hw; ++i) {
                        const double xhat = (xv[off + i] - mean) * rstd;
                        const double dxhat = dy[off + i] * gam[ch];
                        sum_dxhat += dxhat;
                        sum_dxhat_xhat += dxhat * xhat;
                        dgam += dy[off + i] * xhat;
                        dbet += dy[off + i];
                    }
                    if (needs(self, 1)) in_grad(self, 1)[ch] += dgam;
                    if (needs(self, 2)) in_grad(self, 2)[ch] += dbet;
                }
                if (!needs(self, 0)) continue;
                const double m1 = sum_dxhat / static_cast<double>(count);
                const double m2 = sum_dxhat_xhat / static_cast<double>(count);
                double* dx = in_grad(self, 0).ptr();
                for (std::size_t cc = 0; cc < cpg; ++cc) {
                    const std::size_t ch = gi * cpg + cc;
                    const std::size_t off = (n * c + ch) * hw;
                    for (std::size_t i = 0; i < hw; ++i) {
                        const double xhat = (xv[off + i] - mean) * rstd;
                        dx[off + i] += rstd * (dy[off + i] * gam[ch] - m1 - xhat * m2);
                    }
                }
            }
    });
}

Var linear(const Var& x, const Var& w, const Var& b) {
    check_rank(x, 2, "linear input");
    check_rank(w, 2, "linear weight");
    const std::size_t rows = x.shape()[0], in = x.shape()[1], outd = w.shape()[0];
    require(w.shape()[1] == in, "linear: weight " + shape_str(w.shape()) + " vs input " + shape_str(x.shape()));
    require(!b.defined() || b.shape() == Shape{outd}, "linear: bias shape mismatch");
    Tensor out({rows, outd});
    MapMat y(out.ptr(), rows, outd);
    y.noalias() = CMapMat(x.value().ptr(), rows, in) * CMapMat(w.value().ptr(), outd, in).transpose();
    if (b.defined()) {
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t o = 0; o < outd; ++o) y(r, o) += b.value()[o];
    }
    return Var::make(std::move(out), {x, w, b}, [=](detail::Node& self) {
        CMapMat dy(self.grad.ptr(), rows, outd);
        if (needs(self, 0))
            MapMat(in_grad(self, 0).ptr(), rows, in).noalias() += dy * CMapMat(in_value(self, 1).ptr(), outd, in);
        if (needs(self, 1))
            MapMat(in_grad(self, 1).ptr(), outd, in).noalias() +=
                dy.transpose() * CMapMat(in_value(self, 0).ptr(), rows, in);
        if (needs(self, 2)) {
            Tensor& db = in_grad(self, 2);
            for (std::size_t o = 0; o < outd; ++o) db[o] += dy.col(o).sum();
        }
    });
}

Var cross_attention(const Var& h, const Var& ctx, const Var& wq, const Var& wk, const Var& wv, const Var& wo,
                    const Var& bo) {
    check_rank(h, 4, "cross_attention features");
    check_rank(ctx, 3, "cross_attention context");
    const std::size_t bsz = h.shape()[0], c = h.shape()[1], p = h.shape()[2] * h.shape()[3];
    const std::size_t m = ctx.shape()[1], d = ctx.shape()[2];
    const std::size_t a = wq.shape()[0];
    require(ctx.shape()[0] == bsz, "cross_attention: context batch " + shape_str(ctx.shape()) +
                                       " does not match features " + shape_str(h.shape()));
    require(m >= 1, "cross_attention: empty context");
    require(wq.shape() == Shape{a, c} && wk.shape() == Shape{a, d} && wv.shape() == Shape{a, d} &&
                wo.shape() == Shape{c, a} && bo.shape() == Shape{c},
            "cross_attention: projection shapes do not match features " + shape_str(h.shape()) + " / context " +
                shape_str(ctx.shape()));
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(a));

    // A single context token gets attention weight exactly 1 at every position,
    // so the output is wo v + bo broadcast over positions and no gradient
    // reaches h, wq or wk. Same values as the general path, far cheaper.
    if (m == 1) {
        CMapMat wvm(wv.value().ptr(), a, d), wom(wo.value().ptr(), c, a);
        CMapMat cm(ctx.value().ptr(), bsz, d);
        const RowMat v = cm * wvm.transpose();  // (B, A)
        const RowMat proj = v * wom.transpose();  // (B, C)
        Tensor out(h.shape());
        for (std::size_t n = 0; n < bsz; ++n)
            for (std::size_t ch = 0; ch < c; ++ch) {
                double* dst = out.ptr() + (n * c + ch) * p;
                std::fill(dst, dst + p, proj(n, ch) + bo.value()[ch]);
            }
        return Var::make(std::move(out), {h, ctx, wq, wk, wv, wo, bo}, [=](detail::Node& self) {
            RowMat gsum(bsz, c);  // dout summed over positions
            for (std::size_t n = 0; n < bsz; ++n)
                for (std::size_t ch = 0; ch < c; ++ch) {
                    const double* g = self.grad.ptr() + (n * c + ch) * p;
                    double s = 0.0;
                    for (std::size_t i = 0; i < p; ++i) s += g[i];
                    gsum(n, ch) = s;
                }
            CMapMat wvm(in_value(self, 4).ptr(), a, d), wom(in_value(self, 5).ptr(), c, a);
            CMapMat cm(in_value(self, 1).ptr(), bsz, d);
            if (needs(self, 5)) MapMat(in_grad(self, 5).ptr(), c, a).noalias() += gsum.transpose() * v;
            if (needs(self, 6)) {
                Tensor& dbo = in_grad(self, 6);
                for (std::size_t ch = 0; ch < c; ++ch) dbo[ch] += gsum.col(ch).sum();
            }
            if (!needs(self, 1) && !needs(self, 4)) return;
            const RowMat dv = gsum * wom;  // (B, A)
            if (needs(self, 4)) MapMat(in_grad(self, 4).ptr(), a, d).noalias() += dv.transpose() * cm;
            if (needs(self, 1)) MapMat(in_grad(self, 1).ptr(), bsz, d).noalias() += dv * wvm;
        });
    }

    struct Saved {
        RowMat q, k, v, att, o;
    };
    auto saved = std::make_shared<std::vector<Saved>>(bsz);
    CMapMat wqm(wq.value().ptr(), a, c), wkm(wk.value().ptr(), a, d), wvm(wv.value().ptr(), a, d),
        wom(wo.value().ptr(), c, a);
    Tensor out(h.shape());
    for (std::size_t n = 0; n < bsz; ++n) {
        Saved& s = (*saved)[n];
        CMapMat hb(h.value().ptr() + n * c * p, c, p);
        CMapMat cb(ctx.value().ptr() + n * m * d, m, d);
        s.q.noalias() = wqm * hb;
        s.k.noalias() = wkm * cb.transpose();
        s.v.noalias() = wvm * cb.transpose();
        s.att.noalias() = s.q.transpose() * s.k * inv_sqrt;  // (P, M)
        for (std::size_t i = 0; i < p; ++i) {
            auto row = s.att.row(i);
            const double mx = row.maxCoeff();
            row = (row.array() - mx).exp();
            row /= row.sum();
        }
        s.o.noalias() = s.v * s.att.transpose();  // (A, P)
        MapMat ob(out.ptr() + n * c * p, c, p);
        ob.noalias() = wom * s.o;
        for (std::size_t ch = 0; ch < c; ++ch) ob.row(ch).array() += bo.value()[ch];
    }

    return Var::make(std::move(out), {h, ctx, wq, wk, wv, wo, bo}, [=](detail::Node& self) {
        CMapMat wqm(in_value(self, 2).ptr(), a, c), wkm(in_value(self, 3).ptr(), a, d),
            wvm(in_value(self, 4).ptr(), a, d), wom(in_value(self, 5).ptr(), c, a);
        for (std::size_t n = 0; n < bsz; ++n) {
            const Saved& s = (*saved)[n];
            CMapMat dout(self.grad.ptr() + n * c * p, c, p);
            CMapMat hb(in_value(self, 0).ptr() + n * c * p, c, p);
            CMapMat cb(in_value(self, 1).ptr() + n * m * d, m, d);
            if (needs(self, 5)) MapMat(in_grad(self, 5).ptr(), c, a).noalias() += dout * s.o.transpose();
            if (needs(self, 6)) {
                Tensor& dbo = in_grad(self, 6);
                for (std::size_t ch = 0; ch < c; ++ch) dbo[ch] += dout.row(ch).sum();
            }
            const bool upstream = needs(self, 0) || needs(self, 1) || needs(self, 2) || needs(self, 3) || needs(self, 4);
            if (!upstream) continue;
            RowMat d_o = wom.transpose() * dout;      // (A, P)
            RowMat d_v = d_o * s.att;                 // (A, M)
            RowMat d_att = d_o.transpose() * s.v;     // (P, M)
            RowMat d_logits = s.att.cwiseProduct(d_att);
            for (std::size_t i = 0; i < p; ++i) {
                const double dot = d_logits.row(i).sum();
                d_logits.row(i) -= s.att.row(i) * dot;
            }
            d_logits *= inv_sqrt;
            RowMat d_q = s.k * d_logits.transpose();  // (A, P)
            RowMat d_k = s.q * d_logits;              // (A, M)
            if (needs(self, 0)) MapMat(in_grad(self, 0).ptr() + n * c * p, c, p).noalias() += wqm.transpose() * d_q;
            if (needs(self, 2)) MapMat(in_grad(self, 2).ptr(), a, c).noalias() += d_q * hb.transpose();
            if (needs(self, 3)) MapMat(in_grad(self, 3).ptr(), a, d).noalias() += d_k * cb;
            if (needs(self, 4)) MapMat(in_grad(self, 4).ptr(), a, d).noalias() += d_v * cb;
            if (needs(self, 1)) {
                MapMat dc(in_grad(self, 1).ptr() + n * m * d, m, d);
                dc.noalias() += d_k.transpose() * wkm;
                dc.noalias() += d_v.transpose() * wvm;
            }
        }
    });
}

Var mse(const Var& pred, const Var& target) {
    require(pred.shape() == target.shape(),
            "mse: shape mismatch " + shape_str(pred.shape()) + " vs " + shape_str(target.shape()));
    const std::size_t n = pred.value().size();
    require(n > 0, "mse: empty input");
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double diff = pred.value()[i] - target.value()[i];
        total += diff * diff;
    }
    return Var::make(Tensor({1}, total / static_cast<double>(n)), {pred, target}, [n](detail::Node& self) {
        const Tensor& pv = in_value(self, 0);
        const Tensor& tv = in_value(self, 1);
        const double k = 2.0 * self.grad[0] / static_cast<double>(n);
        if (needs(self, 0)) {
            Tensor& g = in_grad(self, 0);
            for (std::size_t i = 0; i < n; ++i) g[i] += k * (pv[i] - tv[i]);
        }
        if (needs(self, 1)) {
            Tensor& g = in_grad(self, 1);
            for (std::size_t i = 0; i < n; ++i) g[i] -= k * (pv[i] - tv[i]);
        }
    });
}

Var matmul(const Var& a, const Var& b) {
    check_rank(a, 2, "matmul");
    check_rank(b, 2, "matmul");
    const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
    require(b.shape()[0] == k, "matmul: inner dimensions differ");
    Tensor out({m, n});
    MapMat(out.ptr(), m, n).noalias() = CMapMat(a.value().ptr(), m, k) * CMapMat(b.value().ptr(), k, n);
    return Var::make(std::move(out), {a, b}, [=](detail::Node& self) {
        CMapMat dy(self.grad.ptr(), m, n);
        if (needs(self, 0))
            MapMat(in_grad(self, 0).ptr(), m, k).noalias() += dy * CMapMat(in_value(self, 1).ptr(), k, n).transpose();
        if (needs(self, 1))
            MapMat(in_grad(self, 1).ptr(), k, n).noalias() += CMapMat(in_value(self, 0).ptr(), m, k).transpose() * dy;
    });
}

Var matmul_nt(const Var& a, const Var& b) {
    check_rank(a, 2, "matmul_nt");
    check_rank(b, 2, "matmul_nt");
    const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[0];
    require(b.shape()[1] == k, "matmul_nt: inner dimensions differ");
    Tensor out({m, n});
    MapMat(out.ptr(), m, n).noalias() = CMapMat(a.value().ptr(), m, k) * CMapMat(b.value().ptr(), n, k).transpose();
    return Var::make(std::move(out), {a, b}, [=](detail::Node& self) {
        CMapMat dy(self.grad.ptr(), m, n);
        if (needs(self, 0))
            MapMat(in_grad(self, 0).ptr(), m, k).noalias() += dy * CMapMat(in_value(self, 1).ptr(), n, k);
        if (needs(self, 1))
            MapMat(in_grad(self, 1).ptr(), n, k).noalias() += dy.transpose() * CMapMat(in_value(self, 0).ptr(), m, k);
    });
}

Var softmax_rows(const Var& x) {
    check_rank(x, 2, "softmax_rows");
    const std::size_t rows = x.shape()[0], cols = x.shape()[1];
    Tensor out(x.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* src = x.value().ptr() + r * cols;
        double* dst = out.ptr() + r * cols;
        const double mx = *std::max_element(src, src + cols);
        double total = 0.0;
        for (std::size_t j = 0; j < cols; ++j) total += (dst[j] = std::exp(src[j] - mx));
        for (std::size_t j = 0; j < cols; ++j) dst[j] /= total;
    }
    auto y = std::make_shared<Tensor>(out);
    return Var::make(std::move(out), {x}, [=](detail::Node& self) {
        Tensor& g = in_grad(self, 0);
        for (std::size_t r = 0; r < rows; ++r) {
            const double* yr = y->ptr() + r * cols;
            const double* dy = self.grad.ptr() + r * cols;
            double dot = 0.0;
            for (std::size_t j = 0; j < cols; ++j) dot += yr[j] * dy[j];
            for (std::size_t j = 0; j < cols; ++j) g[r * cols + j] += yr[j] * (dy[j] - dot);
        }
    });
}

Var normalize_rows(const Var& x) {
    check_rank(x, 2, "normalize_rows");
    const std::size_t rows = x.shape()[0], cols = x.shape()[1];
    auto rstd = std::make_shared<std::vector<double>>(rows);
    Tensor out(x.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* src = x.value().ptr() + r * cols;
        double mean = 0.0;
        for (std::size_t j = 0; j < cols; ++j) mean += src[j];
        mean /= static_cast<double>(cols);
        double var = 0.0;
        for (std::size_t j = 0; j < cols; ++j) var += (src[j] - mean) * (src[j] - mean);
        var /= static_cast<double>(cols);
        require(var > 0.0, "degenerate seed");
        (*rstd)[r] = 1.0 / std::sqrt(var);
        for (std::size_t j = 0; j < cols; ++j) out[r * cols + j] = (src[j] - mean) * (*rstd)[r];
    }
    auto y = std::make_shared<Tensor>(out);
    return Var::make(std::move(out), {x}, [=](detail::Node& self) {
        Tensor& g = in_grad(self, 0);
        for (std::size_t r = 0; r < rows; ++r) {
            const double* yr = y->ptr() + r * cols;
            const double* dy = self.grad.ptr() + r * cols;
            double m1 = 0.0, m2 = 0.0;
            for (std::size_t j = 0; j < cols; ++j) {
                m1 += dy[j];
                m2 += dy[j] * yr[j];
            }
            m1 /= static_cast<double>(cols);
            m2 /= static_cast<double>(cols);
            for (std::size_t j = 0; j < cols; ++j) g[r * cols + j] += (*rstd)[r] * (dy[j] - m1 - yr[j] * m2);
        }
    });
}

Var token_affine(const Var& x, const Var& w, const Var& b) {
    check_rank(x, 2, "token_affine");
    require(x.shape()[0] == 1, "token_affine: expects a single input token");
    const std::size_t d = x.shape()[1], n = w.shape().at(0);
    require(w.shape() == Shape{n} && b.shape() == Shape{n}, "token_affine: weight/bias shape mismatch");
    Tensor out({n, d});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) out[i * d + j] = w.value()[i] * x.value()[j] + b.value()[i];
    return Var::make(std::move(out), {x, w, b}, [=](detail::Node& self) {
        const Tensor& xv = in_value(self, 0);
        const Tensor& wv = in_value(self, 1);
        for (std::size_t i = 0; i < n; ++i) {
            const double* dy = self.grad.ptr() + i * d;
            double dw = 0.0, db = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                dw += dy[j] * xv[j];
                db += dy[j];
            }
            if (needs(self, 0)) {
                Tensor& gx = in_grad(self, 0);
                for (std::size_t j = 0; j < d; ++j) gx[j] += wv[i] * dy[j];
            }
            if (needs(self, 1)) in_grad(self, 1)[i] += dw;
            if (needs(self, 2)) in_grad(self, 2)[i] += db;
        }
    });
}

Var gather_rows(const Var& table, const std::vector<std::size_t>& idx) {
    check_rank(table, 2, "gather_rows");
    const std::size_t n = table.shape()[0], d = table.shape()[1];
    Tensor out({idx.size(), d});
    for (std::size_t r = 0; r < idx.size(); ++r) {
        require(idx[r] < n, "gather_rows: index out of range");
        std::copy_n(table.value().ptr() + idx[r] * d, d, out.ptr() + r * d);
    }
    return Var::make(std::move(out), {table}, [=](detail::Node& self) {
        Tensor& g = in_grad(self, 0);
        for (std::size_t r = 0; r < idx.size(); ++r)
            for (std::size_t j = 0; j < d; ++j) g[idx[r] * d + j] += self.grad[r * d + j];
    });
}

}  // namespace lsast::ops
