#pragma once

#include <cstddef>
#include <vector>

#include "lsast/autograd.hpp"

// Differentiable tensor operations. Image tensors are (batch, channels, height, width).
namespace lsast::ops {

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var sum(const Var& a);
Var reshape(const Var& a, Shape shape);

Var silu(const Var& x);

// x (B, C, H, W) + v (B, C) broadcast over space.
Var add_channel_bias(const Var& x, const Var& v);

// w (Cout, Cin, k, k); bias (Cout) may be undefined.
Var conv2d(const Var& x, const Var& w, const Var& bias, int stride, int pad);
Var avg_pool2(const Var& x);
Var upsample_nearest2(const Var& x);
Var concat_channels(const Var& a, const Var& b);
Var group_norm(const Var& x, const Var& gamma, const Var& beta, int groups, double eps = 1e-5);

// x (R, in), w (out, in), b (out) -> (R, out).
Var linear(const Var& x, const Var& w, const Var& b);

// Single-head cross-attention of image features h (B, C, H, W) over context tokens ctx (B, M, D).
// q = wq h, k = wk ctx, v = wv ctx, out = wo softmax(q k^T / sqrt(A)) v + bo; returns out only.
// wq (A, C), wk (A, D), wv (A, D), wo (C, A), bo (C).
Var cross_attention(const Var& h, const Var& ctx, const Var& wq, const Var& wk, const Var& wv, const Var& wo,
                    const Var& bo);

// Mean of squared differences over every element.
Var mse(const Var& pred, const Var& target);

// 2-D helpers used by the prompt space.
Var matmul(const Var& a, const Var& b);     // (M, K) x (K, N)
Var matmul_nt(const Var& a, const Var& b);  // (M, K) x (N, K)^T
Var softmax_rows(const Var& x);             // max-subtracted, per row
Var normalize_rows(const Var& x);           // zero mean, unit population variance per row
// x (1, D), w (N), b (N) -> row i = w_i * x + b_i.
Var token_affine(const Var& x, const Var& w, const Var& b);
// table (N, D) -> (idx.size(), D).
Var gather_rows(const Var& table, const std::vector<std::size_t>& idx);

}  // namespace lsast::ops
