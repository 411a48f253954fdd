#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ban/autograd.hpp"

// Differentiable primitives. Matrices are [rows, cols]; spatial maps are
// channels-last [H, W, C]. Every op records its backward only when an input
// requires a gradient.
namespace ban::ops {

// [M,K] x [K,N] -> [M,N]
Var matmul(const Var& a, const Var& b);
// [M,K] x [N,K]^T -> [M,N]
Var matmul_nt(const Var& a, const Var& b);
// x [N,Cin] · w [Cin,Cout] + b [Cout]; `b` may be undefined.
Var linear(const Var& x, const Var& w, const Var& b);

Var add(const Var& a, const Var& b);
Var scale(const Var& a, float factor);
Var abs_diff(const Var& a, const Var& b);
Var relu(const Var& x);
Var gelu(const Var& x);

Var reshape(const Var& x, Shape shape);

// Column (last-axis) slicing and concatenation on [N, C] or [H, W, C].
Var slice_last(const Var& x, int64_t start, int64_t count);
Var concat_last(const std::vector<Var>& parts);
// Row slicing and concatenation on [N, C].
Var slice_rows(const Var& x, int64_t start, int64_t count);
Var concat_rows(const Var& a, const Var& b);

// Per-row normalization over the last axis followed by a per-channel affine.
Var layer_norm(const Var& x, const Var& gain, const Var& bias, float eps);
// Per-row division by the L2 norm (max(norm, eps)).
Var l2_normalize_rows(const Var& x, float eps = 1e-12f);
// Numerically stable softmax along each row of [N, M].
Var softmax_rows(const Var& x);

// x [H,W,Cin], w [k,k,Cin,Cout], b [Cout] (may be undefined), zero padding.
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);
// Group normalization over [H, W, C] with per-channel affine.
Var group_norm(const Var& x, int groups, const Var& gamma, const Var& beta, float eps);
// Bilinear resampling of [H, W, C] using half-pixel centers with edge clamping.
Var resize_bilinear(const Var& x, int64_t out_h, int64_t out_w);

// Mean pixel-wise cross-entropy of logits [H,W,K] against class indices.
// Pixels equal to `ignore_index` are excluded from the mean.
Var cross_entropy(const Var& logits, std::span<const int32_t> labels, int32_t ignore_index = 255);

Var sum(const Var& x);
// sum(x ⊙ weights) with constant weights; handy for gradient checks.
Var weighted_sum(const Var& x, const Tensor& weights);

// Plain (non-differentiable) bilinear resampling with the same convention.
Tensor resize_bilinear(const Tensor& x, int64_t out_h, int64_t out_w);

}  // namespace ban::ops
