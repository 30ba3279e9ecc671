#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "stbln/graph.hpp"
#include "stbln/layers.hpp"
#include "stbln/ops.hpp"

namespace stbln {

struct LayerSpec {
    std::size_t channels = 64;
    std::size_t stride = 1;
    /// Output node count V^(l); 0 keeps the input node count.
    std::size_t nodes = 0;
    SpatialVariant variant;

    bool operator==(const LayerSpec&) const = default;
};

struct NetworkConfig {
    std::vector<LayerSpec> layers;
    /// Aggregation layer (1-based): V^(l) = 1 from this layer on.
    std::optional<std::size_t> lambda;
    std::size_t num_classes = 60;
    std::size_t in_channels = 3;
    std::size_t frames = 300;
    std::size_t joints = 25;
    std::size_t temporal_kernel = kTemporalKernel;
    bool input_bn = true;
    BilinearInit bilinear_init = BilinearInit::Adjacency;

    /// Ten layers: 4 x 64, 3 x 128, 3 x 256 channels; stride 2 at layers 5 and 8.
    static std::vector<LayerSpec> reference_layers(SpatialVariant variant);
    /// Reference plan on 3 x 300 x 25 input with 60 classes.
    static NetworkConfig reference(SpatialVariant variant = {VariantKind::Bilinear, 0});

    bool operator==(const NetworkConfig&) const = default;
};

/// A layer of the plan after lambda and shape propagation.
struct ResolvedLayer {
    LayerShape shape;
    SpatialVariant variant;
    std::size_t in_frames = 0;
    std::size_t out_frames = 0;
};

/// Validates the config and propagates (C, T, V) through every layer.
/// Throws ConfigError on an invalid plan.
std::vector<ResolvedLayer> resolve_layers(const NetworkConfig& config);

bool needs_adjacency(const NetworkConfig& config);

/// Full network: optional input BN over the (C_in * V) axis, the layer
/// stack, global average pooling and a linear classifier.
class Model {
public:
    /// `skeleton` is required when any layer uses an adjacency-based variant;
    /// for bilinear layers it only seeds the U_p initialisation.
    Model(NetworkConfig config, std::optional<SkeletonTemplate> skeleton, std::uint64_t seed);

    /// [N x C_in x T x V] -> logits [N x num_classes].
    Tensor forward(const Tensor& batch, Mode mode);

    const NetworkConfig& config() const { return config_; }
    const std::vector<ResolvedLayer>& plan() const { return plan_; }
    const std::optional<SkeletonTemplate>& skeleton() const { return skeleton_; }
    const std::optional<PartitionedAdjacency>& adjacency() const { return adjacency_; }

    std::vector<STLayer>& layers() { return layers_; }
    const std::vector<STLayer>& layers() const { return layers_; }
    Tensor& head_weight() { return head_weight_; }
    Tensor& head_bias() { return head_bias_; }
    BatchNormParams& input_bn() { return input_bn_; }

    /// Every trainable tensor in a fixed order, with stable names.
    std::vector<NamedTensor> parameters() const;
    std::vector<std::pair<std::string, BatchNormState*>> batch_norm_states();
    std::vector<std::pair<std::string, const BatchNormState*>> batch_norm_states() const;
    std::size_t parameter_count() const;

private:
    NetworkConfig config_;
    std::optional<SkeletonTemplate> skeleton_;
    std::optional<PartitionedAdjacency> adjacency_;
    std::vector<ResolvedLayer> plan_;
    BatchNormParams input_bn_;
    std::vector<STLayer> layers_;
    Tensor head_weight_;
    Tensor head_bias_;
};

/// Sums two streams' softmax scores and returns the argmax per row.
std::vector<std::size_t> fuse_two_stream(const Tensor& scores_a, const Tensor& scores_b);

/// bone[v] = joint[v] - joint[parent(v)]; the root's bone is zero.
Tensor bones_from_joints(const Tensor& joints, const SkeletonTemplate& skeleton,
                         std::size_t root = SkeletonTemplate::kNtuRoot);

std::vector<std::size_t> argmax_rows(const Tensor& scores);

}  // namespace stbln
