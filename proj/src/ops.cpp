#include "stbln/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "stbln/errors.hpp"

namespace stbln {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shapes " + to_string(a.shape()) + " and " + to_string(b.shape()) +
                             " differ");
    }
}

}  // namespace

Tensor reshape(const Tensor& a, Shape shape) {
    if (numel(shape) != a.numel()) {
        throw DimensionError("reshape: cannot view " + to_string(a.shape()) + " as " + to_string(shape));
    }
    Tensor out(std::move(shape), std::vector<double>(a.data().begin(), a.data().end()));
    if (autograd::should_record({&a})) {
        autograd::record("reshape", {a}, out, [a](std::span<const double> g) mutable { a.accumulate_grad(g); });
    }
    return out;
}

Tensor permute(const Tensor& a, const std::vector<std::size_t>& axes) {
    const auto& in_shape = a.shape();
    const std::size_t rank = in_shape.size();
    if (axes.size() != rank) throw DimensionError("permute: axis list does not match rank of " + to_string(in_shape));
    std::vector<bool> seen(rank, false);
    for (auto ax : axes) {
        if (ax >= rank || seen[ax]) throw DimensionError("permute: invalid axis permutation");
        seen[ax] = true;
    }
    Shape out_shape(rank);
    for (std::size_t i = 0; i < rank; ++i) out_shape[i] = in_shape[axes[i]];

    std::vector<std::size_t> in_strides(rank, 1);
    for (std::size_t i = rank; i-- > 1;) in_strides[i - 1] = in_strides[i] * in_shape[i];
    // Stride in the input of each output axis.
    std::vector<std::size_t> strides(rank);
    for (std::size_t i = 0; i < rank; ++i) strides[i] = in_strides[axes[i]];

    // Flat output index -> flat input index.
    const std::size_t n = a.numel();
    std::vector<std::size_t> mapping(n);
    std::vector<std::size_t> counter(rank, 0);
    std::size_t src = 0;
    for (std::size_t k = 0; k < n; ++k) {
        mapping[k] = src;
        for (std::size_t ax = rank; ax-- > 0;) {
            if (++counter[ax] < out_shape[ax]) {
                src += strides[ax];
                break;
            }
            src -= strides[ax] * (out_shape[ax] - 1);
            counter[ax] = 0;
        }
    }

    auto in = a.data();
    std::vector<double> values(n);
    for (std::size_t k = 0; k < n; ++k) values[k] = in[mapping[k]];
    Tensor out(out_shape, std::move(values));
    if (autograd::should_record({&a})) {
        autograd::record("permute", {a}, out, [a, mapping = std::move(mapping)](std::span<const double> g) mutable {
            auto buf = a.grad_buffer();
            for (std::size_t k = 0; k < g.size(); ++k) buf[mapping[k]] += g[k];
        });
    }
    return out;
}

Tensor transpose(const Tensor& a) {
    if (a.ndim() != 2) throw DimensionError("transpose: expected a matrix, got " + to_string(a.shape()));
    return permute(a, {1, 0});
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    auto x = a.data();
    auto y = b.data();
    std::vector<double> values(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) values[k] = x[k] + y[k];
    Tensor out(a.shape(), std::move(values));
    if (autograd::should_record({&a, &b})) {
        autograd::record("add", {a, b}, out, [a, b](std::span<const double> g) mutable {
            if (a.requires_grad()) a.accumulate_grad(g);
            if (b.requires_grad()) b.accumulate_grad(g);
        });
    }
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    auto x = a.data();
    auto y = b.data();
    std::vector<double> values(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) values[k] = x[k] * y[k];
    Tensor out(a.shape(), std::move(values));
    if (autograd::should_record({&a, &b})) {
        autograd::record("mul", {a, b}, out, [a, b](std::span<const double> g) mutable {
            if (a.requires_grad()) {
                auto buf = a.grad_buffer();
                auto y = b.data();
                for (std::size_t k = 0; k < g.size(); ++k) buf[k] += g[k] * y[k];
            }
            if (b.requires_grad()) {
                auto buf = b.grad_buffer();
                auto x = a.data();
                for (std::size_t k = 0; k < g.size(); ++k) buf[k] += g[k] * x[k];
            }
        });
    }
    return out;
}

Tensor scale(const Tensor& a, double factor) {
    auto x = a.data();
    std::vector<double> values(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) values[k] = x[k] * factor;
    Tensor out(a.shape(), std::move(values));
    if (autograd::should_record({&a})) {
        autograd::record("scale", {a}, out, [a, factor](std::span<const double> g) mutable {
            auto buf = a.grad_buffer();
            for (std::size_t k = 0; k < g.size(); ++k) buf[k] += g[k] * factor;
        });
    }
    return out;
}

Tensor relu(const Tensor& a) {
    auto x = a.data();
    std::vector<double> values(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) values[k] = x[k] > 0.0 ? x[k] : 0.0;
    Tensor out(a.shape(), std::move(values));
    if (autograd::should_record({&a})) {
        autograd::record("relu", {a}, out, [a](std::span<const double> g) mutable {
            auto buf = a.grad_buffer();
            auto x = a.data();
            for (std::size_t k = 0; k < g.size(); ++k) {
                if (x[k] > 0.0) buf[k] += g[k];
            }
        });
    }
    return out;
}

Tensor bias_add(const Tensor& x, const Tensor& bias) {
    if (x.ndim() < 2 || bias.numel() != x.dim(1)) {
        throw DimensionError("bias_add: bias " + to_string(bias.shape()) + " does not match axis 1 of " +
                             to_string(x.shape()));
    }
    const std::size_t outer = x.dim(0);
    const std::size_t channels = x.dim(1);
    const std::size_t inner = x.numel() / (outer * channels);
    auto in = x.data();
    auto b = bias.data();
    std::vector<double> values(in.size());
    for (std::size_t n = 0; n < outer; ++n) {
        for (std::size_t c = 0; c < channels; ++c) {
            const std::size_t base = (n * channels + c) * inner;
            for (std::size_t i = 0; i < inner; ++i) values[base + i] = in[base + i] + b[c];
        }
    }
    Tensor out(x.shape(), std::move(values));
    if (autograd::should_record({&x, &bias})) {
        autograd::record("bias_add", {x, bias}, out,
                         [x, bias, outer, channels, inner](std::span<const double> g) mutable {
                             if (x.requires_grad()) x.accumulate_grad(g);
                             if (bias.requires_grad()) {
                                 auto buf = bias.grad_buffer();
                                 for (std::size_t n = 0; n < outer; ++n) {
                                     for (std::size_t c = 0; c < channels; ++c) {
                                         const std::size_t base = (n * channels + c) * inner;
                                         double acc = 0.0;
                                         for (std::size_t i = 0; i < inner; ++i) acc += g[base + i];
                                         buf[c] += acc;
                                     }
                                 }
                             }
                         });
    }
    return out;
}

Tensor sum(const Tensor& a) {
    auto x = a.data();
    Tensor out = Tensor::scalar(std::accumulate(x.begin(), x.end(), 0.0));
    if (autograd::should_record({&a})) {
        autograd::record("sum", {a}, out, [a](std::span<const double> g) mutable {
            auto buf = a.grad_buffer();
            for (auto& v : buf) v += g[0];
        });
    }
    return out;
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

Tensor weighted_sum(const Tensor& a, const Tensor& weights) {
    require_same_shape(a, weights, "weighted_sum");
    auto x = a.data();
    auto w = weights.data();
    double acc = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) acc += x[k] * w[k];
    Tensor out = Tensor::scalar(acc);
    if (autograd::should_record({&a})) {
        autograd::record("weighted_sum", {a}, out, [a, weights](std::span<const double> g) mutable {
            auto buf = a.grad_buffer();
            auto w = weights.data();
            for (std::size_t k = 0; k < buf.size(); ++k) buf[k] += g[0] * w[k];
        });
    }
    return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0)) {
        throw DimensionError("matmul: cannot multiply " + to_string(a.shape()) + " by " + to_string(b.shape()));
    }
    const auto m = static_cast<Eigen::Index>(a.dim(0));
    const auto k = static_cast<Eigen::Index>(a.dim(1));
    const auto n = static_cast<Eigen::Index>(b.dim(1));
    Tensor out = Tensor::zeros({a.dim(0), b.dim(1)});
    {
        auto o = out.mutable_data();
        MutMap(o.data(), m, n).noalias() = ConstMap(a.data().data(), m, k) * ConstMap(b.data().data(), k, n);
    }
    if (autograd::should_record({&a, &b})) {
        autograd::record("matmul", {a, b}, out, [a, b, m, k, n](std::span<const double> g) mutable {
            ConstMap dc(g.data(), m, n);
            if (a.requires_grad()) {
                MutMap(a.grad_buffer().data(), m, k).noalias() += dc * ConstMap(b.data().data(), k, n).transpose();
            }
            if (b.requires_grad()) {
                MutMap(b.grad_buffer().data(), k, n).noalias() += ConstMap(a.data().data(), m, k).transpose() * dc;
            }
        });
    }
    return out;
}

Tensor gram(const Tensor& l) {
    if (l.ndim() != 2) throw DimensionError("gram: expected a matrix, got " + to_string(l.shape()));
    const std::size_t rows = l.dim(0);
    const std::size_t cols = l.dim(1);
    auto x = l.data();
    std::vector<double> values(rows * rows);
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = i; j < rows; ++j) {
            double acc = 0.0;
            for (std::size_t q = 0; q < cols; ++q) acc += x[i * cols + q] * x[j * cols + q];
            values[i * rows + j] = acc;
            values[j * rows + i] = acc;
        }
    }
    Tensor out({rows, rows}, std::move(values));
    if (autograd::should_record({&l})) {
        autograd::record("gram", {l}, out, [l, rows, cols](std::span<const double> g) mutable {
            // dL = (G + G^T) L
            auto buf = l.grad_buffer();
            auto x = l.data();
            for (std::size_t i = 0; i < rows; ++i) {
                for (std::size_t j = 0; j < rows; ++j) {
                    const double s = g[i * rows + j] + g[j * rows + i];
                    if (s == 0.0) continue;
                    for (std::size_t q = 0; q < cols; ++q) buf[i * cols + q] += s * x[j * cols + q];
                }
            }
        });
    }
    return out;
}

Tensor softmax(const Tensor& logits) {
    if (logits.ndim() != 2) throw DimensionError("softmax: expected [N x K], got " + to_string(logits.shape()));
    const std::size_t rows = logits.dim(0);
    const std::size_t k = logits.dim(1);
    auto x = logits.data();
    std::vector<double> values(x.size());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = x.data() + r * k;
        const double mx = *std::max_element(row, row + k);
        double z = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            values[r * k + j] = std::exp(row[j] - mx);
            z += values[r * k + j];
        }
        for (std::size_t j = 0; j < k; ++j) values[r * k + j] /= z;
    }
    Tensor out({rows, k}, std::move(values));
    if (autograd::should_record({&logits})) {
        autograd::record("softmax", {logits}, out, [logits, out, rows, k](std::span<const double> g) mutable {
            auto buf = logits.grad_buffer();
            auto p = out.data();
            for (std::size_t r = 0; r < rows; ++r) {
                double dot = 0.0;
                for (std::size_t j = 0; j < k; ++j) dot += g[r * k + j] * p[r * k + j];
                for (std::size_t j = 0; j < k; ++j) buf[r * k + j] += p[r * k + j] * (g[r * k + j] - dot);
            }
        });
    }
    return out;
}

Tensor global_avg_pool(const Tensor& x) {
    if (x.ndim() < 2) throw DimensionError("global_avg_pool: expected [N x C x ...], got " + to_string(x.shape()));
    const std::size_t n = x.dim(0);
    const std::size_t c = x.dim(1);
    const std::size_t inner = x.numel() / (n * c);
    auto in = x.data();
    std::vector<double> values(n * c);
    for (std::size_t k = 0; k < n * c; ++k) {
        double acc = 0.0;
        for (std::size_t i = 0; i < inner; ++i) acc += in[k * inner + i];
        values[k] = acc / static_cast<double>(inner);
    }
    Tensor out({n, c}, std::move(values));
    if (autograd::should_record({&x})) {
        autograd::record("global_avg_pool", {x}, out, [x, n, c, inner](std::span<const double> g) mutable {
            auto buf = x.grad_buffer();
            const double w = 1.0 / static_cast<double>(inner);
            for (std::size_t k = 0; k < n * c; ++k) {
                for (std::size_t i = 0; i < inner; ++i) buf[k * inner + i] += g[k] * w;
            }
        });
    }
    return out;
}

}  // namespace stbln
