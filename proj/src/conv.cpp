#include <Eigen/Core>
#include <algorithm>

#include "stbln/errors.hpp"
#include "stbln/ops.hpp"

namespace stbln {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

struct ConvGeometry {
    std::size_t n, c_in, t_in, v_in;
    std::size_t c_out, k_t, k_v;
    std::size_t stride, pad;
    std::size_t t_out, v_out;

    std::size_t patch() const { return c_in * k_t * k_v; }
    std::size_t positions() const { return t_out * v_out; }
    bool pointwise() const { return k_t == 1 && k_v == 1 && stride == 1 && pad == 0; }
};

// col[(ci*k_t + dt)*k_v + dv][to*v_out + vo] = x[ci][to*stride - pad + dt][vo + dv]
void im2col(const ConvGeometry& g, const double* x, double* col) {
    const std::size_t cols = g.positions();
    for (std::size_t ci = 0; ci < g.c_in; ++ci) {
        for (std::size_t dt = 0; dt < g.k_t; ++dt) {
            for (std::size_t dv = 0; dv < g.k_v; ++dv) {
                double* row = col + ((ci * g.k_t + dt) * g.k_v + dv) * cols;
                for (std::size_t to = 0; to < g.t_out; ++to) {
                    const auto t = static_cast<std::ptrdiff_t>(to * g.stride + dt) - static_cast<std::ptrdiff_t>(g.pad);
                    double* dst = row + to * g.v_out;
                    if (t < 0 || t >= static_cast<std::ptrdiff_t>(g.t_in)) {
                        std::fill(dst, dst + g.v_out, 0.0);
                        continue;
                    }
                    const double* src = x + (ci * g.t_in + static_cast<std::size_t>(t)) * g.v_in + dv;
                    std::copy(src, src + g.v_out, dst);
                }
            }
        }
    }
}

void col2im_add(const ConvGeometry& g, const double* col, double* dx) {
    const std::size_t cols = g.positions();
    for (std::size_t ci = 0; ci < g.c_in; ++ci) {
        for (std::size_t dt = 0; dt < g.k_t; ++dt) {
            for (std::size_t dv = 0; dv < g.k_v; ++dv) {
                const double* row = col + ((ci * g.k_t + dt) * g.k_v + dv) * cols;
                for (std::size_t to = 0; to < g.t_out; ++to) {
                    const auto t = static_cast<std::ptrdiff_t>(to * g.stride + dt) - static_cast<std::ptrdiff_t>(g.pad);
                    if (t < 0 || t >= static_cast<std::ptrdiff_t>(g.t_in)) continue;
                    double* dst = dx + (ci * g.t_in + static_cast<std::size_t>(t)) * g.v_in + dv;
                    const double* src = row + to * g.v_out;
                    for (std::size_t vo = 0; vo < g.v_out; ++vo) dst[vo] += src[vo];
                }
            }
        }
    }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& filters, const Tensor& bias, Conv2dOptions options) {
    if (input.ndim() != 4 || filters.ndim() != 4) {
        throw DimensionError("conv2d: expected 4-D input and filters, got " + to_string(input.shape()) + " and " +
                             to_string(filters.shape()));
    }
    if (filters.dim(1) != input.dim(1)) {
        throw DimensionError("conv2d: filters " + to_string(filters.shape()) + " do not match input channels of " +
                             to_string(input.shape()));
    }
    if (options.stride_t == 0) throw DimensionError("conv2d: stride must be at least 1");
    ConvGeometry g{};
    g.n = input.dim(0);
    g.c_in = input.dim(1);
    g.t_in = input.dim(2);
    g.v_in = input.dim(3);
    g.c_out = filters.dim(0);
    g.k_t = filters.dim(2);
    g.k_v = filters.dim(3);
    g.stride = options.stride_t;
    g.pad = options.pad_t;
    if (g.k_v > g.v_in || g.k_t > g.t_in + 2 * g.pad) {
        throw DimensionError("conv2d: kernel " + to_string(filters.shape()) + " larger than padded input " +
                             to_string(input.shape()) + " (pad " + std::to_string(g.pad) + ")");
    }
    if (bias.defined() && bias.numel() != g.c_out) {
        throw DimensionError("conv2d: bias " + to_string(bias.shape()) + " does not match " +
                             std::to_string(g.c_out) + " filters");
    }
    g.t_out = (g.t_in + 2 * g.pad - g.k_t) / g.stride + 1;
    g.v_out = g.v_in - g.k_v + 1;

    const auto rows = static_cast<Eigen::Index>(g.c_out);
    const auto patch = static_cast<Eigen::Index>(g.patch());
    const auto cols = static_cast<Eigen::Index>(g.positions());
    const std::size_t in_stride = g.c_in * g.t_in * g.v_in;
    const std::size_t out_stride = g.c_out * g.positions();

    Tensor out = Tensor::zeros({g.n, g.c_out, g.t_out, g.v_out});
    {
        auto o = out.mutable_data();
        ConstMap w(filters.data().data(), rows, patch);
        std::vector<double> col(g.pointwise() ? 0 : g.patch() * g.positions());
        for (std::size_t n = 0; n < g.n; ++n) {
            const double* x = input.data().data() + n * in_stride;
            const double* src = x;
            if (!g.pointwise()) {
                im2col(g, x, col.data());
                src = col.data();
            }
            MutMap y(o.data() + n * out_stride, rows, cols);
            y.noalias() = w * ConstMap(src, patch, cols);
            if (bias.defined()) {
                auto b = bias.data();
                for (Eigen::Index c = 0; c < rows; ++c) y.row(c).array() += b[static_cast<std::size_t>(c)];
            }
        }
    }

    if (autograd::should_record({&input, &filters, &bias})) {
        autograd::record(
            "conv2d", {input, filters, bias}, out,
            [input, filters, bias, g, rows, patch, cols, in_stride, out_stride](std::span<const double> grad) mutable {
                std::vector<double> col(g.pointwise() ? 0 : g.patch() * g.positions());
                std::vector<double> dcol(g.patch() * g.positions());
                ConstMap w(filters.data().data(), rows, patch);
                for (std::size_t n = 0; n < g.n; ++n) {
                    ConstMap dy(grad.data() + n * out_stride, rows, cols);
                    const double* x = input.data().data() + n * in_stride;
                    if (filters.requires_grad()) {
                        const double* src = x;
                        if (!g.pointwise()) {
                            im2col(g, x, col.data());
                            src = col.data();
                        }
                        MutMap(filters.grad_buffer().data(), rows, patch).noalias() +=
                            dy * ConstMap(src, patch, cols).transpose();
                    }
                    if (input.requires_grad()) {
                        double* dx = input.grad_buffer().data() + n * in_stride;
                        if (g.pointwise()) {
                            MutMap(dx, patch, cols).noalias() += w.transpose() * dy;
                        } else {
                            MutMap(dcol.data(), patch, cols).noalias() = w.transpose() * dy;
                            col2im_add(g, dcol.data(), dx);
                        }
                    }
                    if (bias.defined() && bias.requires_grad()) {
                        auto db = bias.grad_buffer();
                        for (Eigen::Index c = 0; c < rows; ++c) db[static_cast<std::size_t>(c)] += dy.row(c).sum();
                    }
                }
            });
    }
    return out;
}

}  // namespace stbln
