#pragma once

// Naive reference implementations used as test oracles: plain loops over
// every index, written without any of the library's vectorised paths.

#include <cstdint>
#include <vector>

#include "stbln/network.hpp"

namespace oracle {

struct Counters {
    std::uint64_t macs = 0;
    std::uint64_t elementwise = 0;
};

/// Dense [n x c x t x v] array.
struct Array4 {
    std::size_t n = 0, c = 0, t = 0, v = 0;
    std::vector<double> d;

    Array4() = default;
    Array4(std::size_t n_, std::size_t c_, std::size_t t_, std::size_t v_)
        : n(n_), c(c_), t(t_), v(v_), d(n_ * c_ * t_ * v_, 0.0) {}
    explicit Array4(const stbln::Tensor& x);

    double& at(std::size_t a, std::size_t b, std::size_t k, std::size_t j) { return d[((a * c + b) * t + k) * v + j]; }
    double at(std::size_t a, std::size_t b, std::size_t k, std::size_t j) const {
        return d[((a * c + b) * t + k) * v + j];
    }
};

/// Entry by entry: A_ij / sqrt((sum_k A_ik + eps) (sum_k A_jk + eps)).
std::vector<double> normalize(const std::vector<double>& a, std::size_t v, double eps);

/// Effective mixing matrices of a layer, from its masks and normalised
/// binary partitions.
std::vector<std::vector<double>> mixing(const stbln::STLayer& layer, const stbln::PartitionedAdjacency* adj);

/// y[n][o][t][i] = sum_p sum_j G_p[i][j] (b_p[o] + sum_c W_p[o][c] x[n][c][t][j])
Array4 spatial(const Array4& x, const std::vector<stbln::ConvParams>& channel,
               const std::vector<std::vector<double>>& g, std::size_t v_out, Counters* counters = nullptr);

Array4 conv(const Array4& x, const stbln::Tensor& filters, const stbln::Tensor& bias, std::size_t stride,
            std::size_t pad, Counters* counters = nullptr);

Array4 batch_norm(const Array4& x, const stbln::Tensor& gamma, const stbln::Tensor& beta,
                  const stbln::BatchNormState& state, stbln::Mode mode, Counters* counters = nullptr);

/// Logits [n x K] of the whole network.
std::vector<double> forward(const stbln::Model& model, const stbln::Tensor& x, stbln::Mode mode,
                            Counters* counters = nullptr);

}  // namespace oracle
