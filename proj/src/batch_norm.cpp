#include <cmath>

#include "stbln/errors.hpp"
#include "stbln/ops.hpp"

namespace stbln {

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormState& state, Mode mode,
                  double eps, double momentum) {
    if (x.ndim() < 2) throw DimensionError("batch_norm: expected [N x C x ...], got " + to_string(x.shape()));
    const std::size_t n = x.dim(0);
    const std::size_t c = x.dim(1);
    const std::size_t inner = x.numel() / (n * c);
    if (gamma.numel() != c || beta.numel() != c) {
        throw DimensionError("batch_norm: gamma/beta must have " + std::to_string(c) + " entries");
    }
    if (state.running_mean.size() != c || state.running_var.size() != c) {
        throw DimensionError("batch_norm: running statistics sized for a different channel count");
    }
    const double count = static_cast<double>(n * inner);
    auto in = x.data();
    auto gm = gamma.data();
    auto bt = beta.data();

    std::vector<double> mu(c), inv_std(c);
    if (mode == Mode::Train) {
        for (std::size_t ch = 0; ch < c; ++ch) {
            double s = 0.0;
            for (std::size_t b = 0; b < n; ++b) {
                const double* p = in.data() + (b * c + ch) * inner;
                for (std::size_t i = 0; i < inner; ++i) s += p[i];
            }
            const double m = s / count;
            double ss = 0.0;
            for (std::size_t b = 0; b < n; ++b) {
                const double* p = in.data() + (b * c + ch) * inner;
                for (std::size_t i = 0; i < inner; ++i) ss += (p[i] - m) * (p[i] - m);
            }
            const double var = ss / count;
            mu[ch] = m;
            inv_std[ch] = 1.0 / std::sqrt(var + eps);
            const double unbiased = count > 1.0 ? ss / (count - 1.0) : var;
            state.running_mean[ch] = (1.0 - momentum) * state.running_mean[ch] + momentum * m;
            state.running_var[ch] = (1.0 - momentum) * state.running_var[ch] + momentum * unbiased;
        }
    } else {
        for (std::size_t ch = 0; ch < c; ++ch) {
            mu[ch] = state.running_mean[ch];
            inv_std[ch] = 1.0 / std::sqrt(state.running_var[ch] + eps);
        }
    }

    std::vector<double> values(in.size());
    for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t base = (b * c + ch) * inner;
            const double a = gm[ch] * inv_std[ch];
            const double off = bt[ch] - a * mu[ch];
            for (std::size_t i = 0; i < inner; ++i) values[base + i] = a * in[base + i] + off;
        }
    }
    Tensor out(x.shape(), std::move(values));

    if (autograd::should_record({&x, &gamma, &beta})) {
        const bool train = mode == Mode::Train;
        autograd::record(
            "batch_norm", {x, gamma, beta}, out,
            [x, gamma, beta, mu, inv_std, n, c, inner, count, train](std::span<const double> g) mutable {
                auto in = x.data();
                auto gm = gamma.data();
                for (std::size_t ch = 0; ch < c; ++ch) {
                    double sum_g = 0.0;
                    double sum_g_xhat = 0.0;
                    for (std::size_t b = 0; b < n; ++b) {
                        const std::size_t base = (b * c + ch) * inner;
                        for (std::size_t i = 0; i < inner; ++i) {
                            const double xhat = (in[base + i] - mu[ch]) * inv_std[ch];
                            sum_g += g[base + i];
                            sum_g_xhat += g[base + i] * xhat;
                        }
                    }
                    if (gamma.requires_grad()) gamma.grad_buffer()[ch] += sum_g_xhat;
                    if (beta.requires_grad()) beta.grad_buffer()[ch] += sum_g;
                    if (!x.requires_grad()) continue;
                    auto dx = x.grad_buffer();
                    const double a = gm[ch] * inv_std[ch];
                    for (std::size_t b = 0; b < n; ++b) {
                        const std::size_t base = (b * c + ch) * inner;
                        for (std::size_t i = 0; i < inner; ++i) {
                            if (train) {
                                const double xhat = (in[base + i] - mu[ch]) * inv_std[ch];
                                dx[base + i] += a * (g[base + i] - sum_g / count - xhat * sum_g_xhat / count);
                            } else {
                                dx[base + i] += a * g[base + i];
                            }
                        }
                    }
                }
            });
    }
    return out;
}

}  // namespace stbln
