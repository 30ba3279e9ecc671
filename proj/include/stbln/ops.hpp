#pragma once

#include <cstddef>
#include <vector>

#include "stbln/tensor.hpp"

namespace stbln {

enum class Mode { Train, Eval };

// Shape-only and elementwise ops. All record onto the active tape when an
// input requires grad.

Tensor reshape(const Tensor& a, Shape shape);
/// Generalised transpose; out.shape[i] = a.shape[axes[i]].
Tensor permute(const Tensor& a, const std::vector<std::size_t>& axes);
Tensor transpose(const Tensor& a);  // 2-D only

Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor relu(const Tensor& a);

/// Adds bias[c] to every element whose axis-1 index is c.
Tensor bias_add(const Tensor& x, const Tensor& bias);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// sum(a * weights) with constant weights; the usual random-projection loss.
Tensor weighted_sum(const Tensor& a, const Tensor& weights);

/// [m x k] * [k x n].
Tensor matmul(const Tensor& a, const Tensor& b);
/// L * L^T, computed so that the result is exactly symmetric.
Tensor gram(const Tensor& l);

/// Softmax over the last axis of a 2-D tensor.
Tensor softmax(const Tensor& logits);

/// Mean over every axis after the first two: [N x C x ...] -> [N x C].
Tensor global_avg_pool(const Tensor& x);

struct Conv2dOptions {
    std::size_t stride_t = 1;
    std::size_t pad_t = 0;
};

/// Cross-correlation of [N x C_in x T x V] with [C_out x C_in x k_t x k_v].
/// Stride and zero padding apply to the T axis only. `bias` may be empty.
Tensor conv2d(const Tensor& input, const Tensor& filters, const Tensor& bias, Conv2dOptions options = {});

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

struct BatchNormState {
    std::vector<double> running_mean;
    std::vector<double> running_var;

    explicit BatchNormState(std::size_t channels = 0) : running_mean(channels, 0.0), running_var(channels, 1.0) {}
};

/// Per-channel normalisation over all axes except axis 1. Train mode uses
/// batch statistics and updates `state` by exponential moving average;
/// eval mode uses `state` as is.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormState& state, Mode mode,
                  double eps = kBatchNormEps, double momentum = kBatchNormMomentum);

}  // namespace stbln
