#include "stbln/network.hpp"

#include <algorithm>
#include <cmath>

#include "stbln/errors.hpp"

namespace stbln {

std::vector<LayerSpec> NetworkConfig::reference_layers(SpatialVariant variant) {
    std::vector<LayerSpec> layers;
    const std::size_t channels[10] = {64, 64, 64, 64, 128, 128, 128, 256, 256, 256};
    for (std::size_t l = 0; l < 10; ++l) {
        const std::size_t stride = (l == 4 || l == 7) ? 2 : 1;
        layers.push_back(LayerSpec{channels[l], stride, 0, variant});
    }
    return layers;
}

NetworkConfig NetworkConfig::reference(SpatialVariant variant) {
    NetworkConfig c;
    c.layers = reference_layers(variant);
    return c;
}

std::vector<ResolvedLayer> resolve_layers(const NetworkConfig& config) {
    if (config.layers.empty()) throw ConfigError("network needs at least one layer");
    if (config.num_classes < 1) throw ConfigError("network needs at least one class");
    if (config.in_channels == 0 || config.frames == 0 || config.joints == 0) {
        throw ConfigError("input dimensions must be positive");
    }
    if (config.temporal_kernel % 2 == 0) {
        throw ConfigError("temporal kernel size must be odd, got " + std::to_string(config.temporal_kernel));
    }
    if (config.lambda && (*config.lambda < 1 || *config.lambda > config.layers.size())) {
        throw ConfigError("lambda must lie in 1.." + std::to_string(config.layers.size()));
    }
    std::vector<ResolvedLayer> out;
    std::size_t channels = config.in_channels;
    std::size_t frames = config.frames;
    std::size_t nodes = config.joints;
    for (std::size_t i = 0; i < config.layers.size(); ++i) {
        const std::size_t l = i + 1;
        const LayerSpec& spec = config.layers[i];
        if (spec.channels == 0 || spec.stride == 0) throw ConfigError("layer " + std::to_string(l) + ": zero size");
        std::size_t out_nodes = spec.nodes == 0 ? nodes : spec.nodes;
        if (config.lambda && l >= *config.lambda) {
            if (spec.variant.needs_adjacency()) {
                throw ConfigError("layer " + std::to_string(l) + " uses the " +
                                  std::string(to_string(spec.variant.kind)) +
                                  " variant at or after lambda; the adjacency is undefined once joints are aggregated");
            }
            out_nodes = 1;
        }
        if (spec.variant.needs_adjacency() && (nodes != config.joints || out_nodes != config.joints)) {
            throw ConfigError("layer " + std::to_string(l) + ": " + std::string(to_string(spec.variant.kind)) +
                              " variant needs V = " + std::to_string(config.joints) + " nodes in and out");
        }
        ResolvedLayer r;
        r.shape = LayerShape{channels, spec.channels, nodes, out_nodes, spec.stride, config.temporal_kernel};
        r.variant = spec.variant;
        r.in_frames = frames;
        r.out_frames = (frames + spec.stride - 1) / spec.stride;
        out.push_back(r);
        channels = spec.channels;
        frames = r.out_frames;
        nodes = out_nodes;
    }
    return out;
}

bool needs_adjacency(const NetworkConfig& config) {
    return std::any_of(config.layers.begin(), config.layers.end(),
                       [](const LayerSpec& s) { return s.variant.needs_adjacency(); });
}

Model::Model(NetworkConfig config, std::optional<SkeletonTemplate> skeleton, std::uint64_t seed)
    : config_(std::move(config)), skeleton_(std::move(skeleton)) {
    plan_ = resolve_layers(config_);
    if (needs_adjacency(config_) && !skeleton_) {
        throw ConfigError("an adjacency-based variant needs a skeleton template");
    }
    if (skeleton_) {
        if (skeleton_->joints != config_.joints) {
            throw ConfigError("skeleton has " + std::to_string(skeleton_->joints) + " joints, input has " +
                              std::to_string(config_.joints));
        }
        adjacency_ = build_partitions(*skeleton_);
    }
    Rng rng(seed);
    if (config_.input_bn) input_bn_ = BatchNormParams(config_.in_channels * config_.joints);
    const PartitionedAdjacency* adj = adjacency_ ? &*adjacency_ : nullptr;
    for (const auto& r : plan_) layers_.emplace_back(r.shape, r.variant, adj, config_.bilinear_init, rng);
    const std::size_t features = plan_.back().shape.out_channels;
    const double bound = std::sqrt(6.0 / static_cast<double>(features + config_.num_classes));
    head_weight_ = Tensor::zeros({config_.num_classes, features}, true);
    for (auto& w : head_weight_.mutable_data()) w = rng.uniform(-bound, bound);
    head_bias_ = Tensor::zeros({config_.num_classes}, true);
}

Tensor Model::forward(const Tensor& batch, Mode mode) {
    if (batch.ndim() != 4 || batch.dim(1) != config_.in_channels || batch.dim(2) != config_.frames ||
        batch.dim(3) != config_.joints) {
        throw DimensionError("model expects [N x " + std::to_string(config_.in_channels) + " x " +
                             std::to_string(config_.frames) + " x " + std::to_string(config_.joints) +
                             "] input, got " + to_string(batch.shape()));
    }
    Tensor h = batch;
    if (config_.input_bn) {
        const std::size_t n = batch.dim(0), c = config_.in_channels, t = config_.frames, v = config_.joints;
        Tensor x = reshape(permute(batch, {0, 3, 1, 2}), {n, v * c, t, 1});
        x = batch_norm(x, input_bn_.gamma, input_bn_.beta, input_bn_.state, mode);
        h = permute(reshape(x, {n, v, c, t}), {0, 2, 3, 1});
    }
    for (auto& layer : layers_) h = layer.forward(h, mode);
    Tensor pooled = global_avg_pool(h);
    return bias_add(matmul(pooled, transpose(head_weight_)), head_bias_);
}

std::vector<NamedTensor> Model::parameters() const {
    std::vector<NamedTensor> out;
    if (config_.input_bn) {
        out.emplace_back("input_bn.gamma", input_bn_.gamma);
        out.emplace_back("input_bn.beta", input_bn_.beta);
    }
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        auto p = layers_[l].parameters("layer" + std::to_string(l + 1) + ".");
        out.insert(out.end(), p.begin(), p.end());
    }
    out.emplace_back("head.W", head_weight_);
    out.emplace_back("head.b", head_bias_);
    return out;
}

std::vector<std::pair<std::string, BatchNormState*>> Model::batch_norm_states() {
    std::vector<std::pair<std::string, BatchNormState*>> out;
    if (config_.input_bn) out.emplace_back("input_bn", &input_bn_.state);
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        auto s = layers_[l].batch_norm_states("layer" + std::to_string(l + 1) + ".");
        out.insert(out.end(), s.begin(), s.end());
    }
    return out;
}

std::vector<std::pair<std::string, const BatchNormState*>> Model::batch_norm_states() const {
    std::vector<std::pair<std::string, const BatchNormState*>> out;
    if (config_.input_bn) out.emplace_back("input_bn", &input_bn_.state);
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        auto s = layers_[l].batch_norm_states("layer" + std::to_string(l + 1) + ".");
        out.insert(out.end(), s.begin(), s.end());
    }
    return out;
}

std::size_t Model::parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : parameters()) n += t.numel();
    return n;
}

std::vector<std::size_t> argmax_rows(const Tensor& scores) {
    if (scores.ndim() != 2) throw DimensionError("argmax_rows: expected [N x K], got " + to_string(scores.shape()));
    const std::size_t k = scores.dim(1);
    auto d = scores.data();
    std::vector<std::size_t> out(scores.dim(0));
    for (std::size_t r = 0; r < out.size(); ++r) {
        const auto row = d.subspan(r * k, k);
        out[r] = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    }
    return out;
}

std::vector<std::size_t> fuse_two_stream(const Tensor& scores_a, const Tensor& scores_b) {
    if (scores_a.shape() != scores_b.shape()) {
        throw DimensionError("fuse_two_stream: score shapes " + to_string(scores_a.shape()) + " and " +
                             to_string(scores_b.shape()) + " differ");
    }
    return argmax_rows(add(scores_a, scores_b));
}

Tensor bones_from_joints(const Tensor& joints, const SkeletonTemplate& skeleton, std::size_t root) {
    if (joints.ndim() != 4 || joints.dim(3) != skeleton.joints) {
        throw DimensionError("bones_from_joints: input " + to_string(joints.shape()) + " does not match a " +
                             std::to_string(skeleton.joints) + "-joint skeleton");
    }
    const auto parent = skeleton.parents(root);
    const std::size_t v = skeleton.joints;
    const std::size_t rows = joints.numel() / v;
    auto in = joints.data();
    std::vector<double> out(in.size());
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < v; ++j) out[r * v + j] = in[r * v + j] - in[r * v + parent[j]];
    }
    return Tensor(joints.shape(), std::move(out));
}

}  // namespace stbln
