#include "stbln/layers.hpp"

#include <Eigen/Core>
#include <Eigen/QR>
#include <cmath>

#include "stbln/errors.hpp"

namespace stbln {

std::string_view to_string(VariantKind kind) {
    switch (kind) {
        case VariantKind::Multiplicative: return "multiplicative";
        case VariantKind::Additive: return "additive";
        case VariantKind::Symmetric: return "symmetric";
        case VariantKind::Bilinear: return "bilinear";
    }
    return "unknown";
}

VariantKind parse_variant(std::string_view name) {
    for (auto k : {VariantKind::Multiplicative, VariantKind::Additive, VariantKind::Symmetric, VariantKind::Bilinear}) {
        if (to_string(k) == name) return k;
    }
    throw ConfigError("unknown spatial variant '" + std::string(name) +
                      "' (expected multiplicative, additive, symmetric or bilinear)");
}

BatchNormParams::BatchNormParams(std::size_t channels)
    : gamma(channels ? Tensor::filled({channels}, 1.0, true) : Tensor()),
      beta(channels ? Tensor::zeros({channels}, true) : Tensor()),
      state(channels) {}

Residual residual_kind(std::size_t in_channels, std::size_t in_nodes, std::size_t out_channels,
                       std::size_t out_nodes, std::size_t stride) {
    if (in_nodes != out_nodes) return Residual::Flatten;
    if (in_channels != out_channels || stride != 1) return Residual::Pointwise;
    return Residual::Identity;
}

namespace {

Tensor uniform_tensor(Shape shape, double bound, Rng& rng) {
    Tensor t = Tensor::zeros(std::move(shape), true);
    for (auto& v : t.mutable_data()) v = rng.uniform(-bound, bound);
    return t;
}

ConvParams make_conv(std::size_t filters, std::size_t channels, std::size_t k_t, std::size_t k_v, std::size_t fan_in,
                     std::size_t fan_out, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    return ConvParams{uniform_tensor({filters, channels, k_t, k_v}, bound, rng), Tensor::zeros({filters}, true)};
}

ConvParams make_residual(Residual kind, const LayerShape& s, Rng& rng) {
    switch (kind) {
        case Residual::Pointwise:
            return make_conv(s.out_channels, s.in_channels, 1, 1, s.in_channels, s.out_channels, rng);
        case Residual::Flatten:
            return make_conv(s.out_channels * s.out_nodes, s.in_channels, 1, s.in_nodes, s.in_channels * s.in_nodes,
                             s.out_channels * s.out_nodes, rng);
        default: return {};
    }
}

Tensor random_orthonormal(std::size_t rows, std::size_t cols, Rng& rng) {
    const std::size_t tall = std::max(rows, cols);
    const std::size_t wide = std::min(rows, cols);
    Eigen::MatrixXd g(static_cast<Eigen::Index>(tall), static_cast<Eigen::Index>(wide));
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
        for (Eigen::Index j = 0; j < g.cols(); ++j) g(i, j) = rng.normal();
    }
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(g.rows(), g.cols());
    Tensor out = Tensor::zeros({rows, cols}, true);
    auto d = out.mutable_data();
    const double s = 1.0 / std::sqrt(static_cast<double>(cols));
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) {
            const double v = rows >= cols ? q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))
                                          : q(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i));
            d[i * cols + j] = s * v;
        }
    }
    return out;
}

void require_layer_input(const Tensor& h, std::size_t channels, std::size_t nodes) {
    if (h.ndim() != 4 || h.dim(1) != channels || h.dim(3) != nodes) {
        throw DimensionError("layer expects [N x " + std::to_string(channels) + " x T x " + std::to_string(nodes) +
                             "] input, got " + to_string(h.shape()));
    }
}

}  // namespace

Tensor mix_nodes(const Tensor& x, const Tensor& g) {
    if (x.ndim() != 4 || g.ndim() != 2 || g.dim(1) != x.dim(3)) {
        throw DimensionError("mix_nodes: mixing matrix " + to_string(g.shape()) + " does not fit input " +
                             to_string(x.shape()));
    }
    using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using ConstMap = Eigen::Map<const RowMatrix>;
    using MutMap = Eigen::Map<RowMatrix>;
    const std::size_t n = x.dim(0), c = x.dim(1), t = x.dim(2), v_in = x.dim(3), v_out = g.dim(0);
    const auto rows = static_cast<Eigen::Index>(n * c * t);
    const auto vi = static_cast<Eigen::Index>(v_in), vo = static_cast<Eigen::Index>(v_out);
    Tensor out = Tensor::zeros({n, c, t, v_out});
    MutMap(out.mutable_data().data(), rows, vo).noalias() =
        ConstMap(x.data().data(), rows, vi) * ConstMap(g.data().data(), vo, vi).transpose();
    if (autograd::should_record({&x, &g})) {
        autograd::record("mix_nodes", {x, g}, out, [x, g, rows, vi, vo](std::span<const double> grad) {
            ConstMap dy(grad.data(), rows, vo);
            if (x.requires_grad()) {
                MutMap(x.grad_buffer().data(), rows, vi).noalias() += dy * ConstMap(g.data().data(), vo, vi);
            }
            if (g.requires_grad()) {
                MutMap(g.grad_buffer().data(), vo, vi).noalias() += dy.transpose() * ConstMap(x.data().data(), rows, vi);
            }
        });
    }
    return out;
}

Tensor symmetric_mask(const Tensor& l) {
    if (l.ndim() != 2 || l.dim(1) > l.dim(0)) {
        throw DimensionError("symmetric_mask: factor must be V x q with 1 <= q <= V, got " + to_string(l.shape()));
    }
    return gram(l);
}

Tensor spatial_forward(const Tensor& h, const std::vector<ConvParams>& channel, const std::vector<Tensor>& mixing) {
    if (channel.size() != mixing.size() || channel.empty()) {
        throw ConfigError("spatial_forward: need one mixing matrix per channel transform");
    }
    Tensor total;
    for (std::size_t p = 0; p < channel.size(); ++p) {
        Tensor mid = conv2d(h, channel[p].filters, channel[p].bias);
        Tensor part = mix_nodes(mid, mixing[p]);
        total = total.defined() ? add(total, part) : part;
    }
    return total;
}

Tensor temporal_forward(const Tensor& h, const ConvParams& conv, std::size_t stride) {
    const std::size_t k = conv.filters.dim(2);
    if (k % 2 == 0) throw ConfigError("temporal kernel size must be odd, got " + std::to_string(k));
    if (conv.filters.dim(3) != 1) throw ConfigError("temporal filters must be k x 1");
    return conv2d(h, conv.filters, conv.bias, Conv2dOptions{stride, (k - 1) / 2});
}

Tensor residual_forward(const Tensor& h, Residual kind, const ConvParams& conv, std::size_t stride,
                        std::size_t out_channels, std::size_t out_nodes) {
    switch (kind) {
        case Residual::None: throw ContractError("residual_forward called for a missing connection");
        case Residual::Identity: return h;
        case Residual::Pointwise: return conv2d(h, conv.filters, conv.bias, Conv2dOptions{stride, 0});
        case Residual::Flatten: {
            Tensor y = conv2d(h, conv.filters, conv.bias, Conv2dOptions{stride, 0});  // N x (C*V) x T' x 1
            const std::size_t n = y.dim(0), t = y.dim(2);
            Tensor grouped = reshape(y, {n, out_channels, out_nodes, t});
            return permute(grouped, {0, 1, 3, 2});
        }
    }
    throw ContractError("unknown residual kind");
}

STLayer::STLayer(LayerShape shape, SpatialVariant variant, const PartitionedAdjacency* adjacency, BilinearInit init,
                 Rng& rng)
    : shape_(shape), variant_(variant) {
    const auto& s = shape_;
    if (s.in_channels == 0 || s.out_channels == 0 || s.in_nodes == 0 || s.out_nodes == 0 || s.stride == 0) {
        throw ConfigError("layer dimensions must be positive");
    }
    if (s.temporal_kernel % 2 == 0) {
        throw ConfigError("temporal kernel size must be odd, got " + std::to_string(s.temporal_kernel));
    }
    if (variant_.needs_adjacency()) {
        if (adjacency == nullptr) {
            throw ConfigError(std::string(to_string(variant_.kind)) + " layer requires a skeleton adjacency");
        }
        if (s.in_nodes != s.out_nodes) {
            throw ConfigError(std::string(to_string(variant_.kind)) + " layer cannot change the number of nodes (" +
                              std::to_string(s.in_nodes) + " -> " + std::to_string(s.out_nodes) + ")");
        }
        if (adjacency->joints() != s.in_nodes) {
            throw ConfigError("adjacency has " + std::to_string(adjacency->joints()) + " joints but layer input has " +
                              std::to_string(s.in_nodes) + " nodes");
        }
        adjacency_.assign(adjacency->normalized.begin(), adjacency->normalized.end());
    }
    // A 1-joint skeleton keeps the full adjacency formulation; only the
    // bilinear layer collapses to a plain channel map.
    const bool collapse = degenerate() && !variant_.needs_adjacency();
    const std::size_t branches = collapse ? 1 : kPartitions;
    for (std::size_t p = 0; p < branches; ++p) {
        params_.channel.push_back(make_conv(s.out_channels, s.in_channels, 1, 1, s.in_channels, s.out_channels, rng));
    }
    if (!collapse) {
        const std::size_t v = s.in_nodes;
        for (std::size_t p = 0; p < kPartitions; ++p) {
            switch (variant_.kind) {
                case VariantKind::Multiplicative: params_.masks.push_back(Tensor::filled({v, v}, 1.0, true)); break;
                case VariantKind::Additive: params_.masks.push_back(Tensor::zeros({v, v}, true)); break;
                case VariantKind::Symmetric: {
                    const std::size_t q = variant_.rank == 0 ? v : variant_.rank;
                    if (q > v) throw ConfigError("symmetric rank q must not exceed V");
                    Tensor l = Tensor::zeros({v, q}, true);
                    for (auto& x : l.mutable_data()) x = rng.normal(0.0, kSymmetricInitStd);
                    params_.masks.push_back(l);
                    break;
                }
                case VariantKind::Bilinear: {
                    const bool from_graph = init == BilinearInit::Adjacency && adjacency != nullptr &&
                                            s.in_nodes == s.out_nodes && adjacency->joints() == s.in_nodes;
                    if (from_graph) {
                        Tensor u = adjacency->normalized[p].clone();
                        u.set_requires_grad(true);
                        for (auto& x : u.mutable_data()) x += rng.uniform(-kBilinearInitNoise, kBilinearInitNoise);
                        params_.masks.push_back(u);
                    } else {
                        params_.masks.push_back(random_orthonormal(s.out_nodes, s.in_nodes, rng));
                    }
                    break;
                }
            }
        }
    }
    params_.spatial_bn = BatchNormParams(s.out_channels);
    const std::size_t k = s.temporal_kernel;
    params_.temporal = make_conv(s.out_channels, s.out_channels, k, 1, s.out_channels * k, s.out_channels * k, rng);
    params_.temporal_bn = BatchNormParams(s.out_channels);

    residual_v_ = collapse ? Residual::None : residual_kind(s.in_channels, s.in_nodes, s.out_channels, s.out_nodes, 1);
    residual_t_ = residual_kind(s.in_channels, s.in_nodes, s.out_channels, s.out_nodes, s.stride);
    params_.residual_v = make_residual(residual_v_, s, rng);
    params_.residual_t = make_residual(residual_t_, s, rng);
}

std::vector<Tensor> STLayer::compute_mixing() const {
    std::vector<Tensor> out;
    for (std::size_t p = 0; p < params_.masks.size(); ++p) {
        const Tensor& m = params_.masks[p];
        switch (variant_.kind) {
            case VariantKind::Multiplicative: out.push_back(mul(adjacency_[p], m)); break;
            case VariantKind::Additive: out.push_back(add(adjacency_[p], m)); break;
            case VariantKind::Symmetric: out.push_back(add(adjacency_[p], symmetric_mask(m))); break;
            case VariantKind::Bilinear: out.push_back(m); break;
        }
    }
    return out;
}

std::vector<Tensor> STLayer::mixing_matrices() const {
    if (GradTape::active() != nullptr) return compute_mixing();
    bool fresh = cache_.size() == params_.masks.size() && cache_keys_.size() == params_.masks.size();
    for (std::size_t p = 0; fresh && p < params_.masks.size(); ++p) {
        fresh = cache_keys_[p].same_storage(params_.masks[p]) && cache_versions_[p] == params_.masks[p].version();
    }
    if (!fresh) {
        cache_ = compute_mixing();
        cache_keys_ = params_.masks;
        cache_versions_.clear();
        for (const auto& m : params_.masks) cache_versions_.push_back(m.version());
    }
    return cache_;
}

Tensor STLayer::spatial(const Tensor& h) const {
    require_layer_input(h, shape_.in_channels, shape_.in_nodes);
    if (params_.masks.empty()) return conv2d(h, params_.channel[0].filters, params_.channel[0].bias);
    return spatial_forward(h, params_.channel, mixing_matrices());
}

Tensor STLayer::forward(const Tensor& h, Mode mode) {
    const auto& s = shape_;
    Tensor x = spatial(h);
    x = batch_norm(x, params_.spatial_bn.gamma, params_.spatial_bn.beta, params_.spatial_bn.state, mode);
    if (residual_v_ != Residual::None) {
        Tensor r = residual_forward(h, residual_v_, params_.residual_v, 1, s.out_channels, s.out_nodes);
        if (r.shape() != x.shape()) throw ContractError("Residual/V shape mismatch after projection");
        x = add(x, r);
    }
    x = relu(x);
    Tensor y = temporal_forward(x, params_.temporal, s.stride);
    y = batch_norm(y, params_.temporal_bn.gamma, params_.temporal_bn.beta, params_.temporal_bn.state, mode);
    Tensor r = residual_forward(h, residual_t_, params_.residual_t, s.stride, s.out_channels, s.out_nodes);
    if (r.shape() != y.shape()) throw ContractError("Residual/T shape mismatch after projection");
    return relu(add(y, r));
}

std::vector<NamedTensor> STLayer::parameters(const std::string& prefix) const {
    std::vector<NamedTensor> out;
    for (std::size_t p = 0; p < params_.channel.size(); ++p) {
        out.emplace_back(prefix + "spatial.W" + std::to_string(p), params_.channel[p].filters);
        out.emplace_back(prefix + "spatial.b" + std::to_string(p), params_.channel[p].bias);
    }
    const char* mask_name = variant_.kind == VariantKind::Symmetric ? "spatial.L"
                            : variant_.kind == VariantKind::Bilinear ? "spatial.U"
                                                                      : "spatial.M";
    for (std::size_t p = 0; p < params_.masks.size(); ++p) {
        out.emplace_back(prefix + mask_name + std::to_string(p), params_.masks[p]);
    }
    out.emplace_back(prefix + "bn1.gamma", params_.spatial_bn.gamma);
    out.emplace_back(prefix + "bn1.beta", params_.spatial_bn.beta);
    out.emplace_back(prefix + "temporal.W", params_.temporal.filters);
    out.emplace_back(prefix + "temporal.b", params_.temporal.bias);
    out.emplace_back(prefix + "bn2.gamma", params_.temporal_bn.gamma);
    out.emplace_back(prefix + "bn2.beta", params_.temporal_bn.beta);
    if (params_.residual_v.filters.defined()) {
        out.emplace_back(prefix + "res_v.W", params_.residual_v.filters);
        out.emplace_back(prefix + "res_v.b", params_.residual_v.bias);
    }
    if (params_.residual_t.filters.defined()) {
        out.emplace_back(prefix + "res_t.W", params_.residual_t.filters);
        out.emplace_back(prefix + "res_t.b", params_.residual_t.bias);
    }
    return out;
}

std::vector<std::pair<std::string, BatchNormState*>> STLayer::batch_norm_states(const std::string& prefix) {
    return {{prefix + "bn1", &params_.spatial_bn.state}, {prefix + "bn2", &params_.temporal_bn.state}};
}

std::vector<std::pair<std::string, const BatchNormState*>> STLayer::batch_norm_states(const std::string& prefix) const {
    return {{prefix + "bn1", &params_.spatial_bn.state}, {prefix + "bn2", &params_.temporal_bn.state}};
}

}  // namespace stbln
