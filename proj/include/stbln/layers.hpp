#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "stbln/gradcheck.hpp"
#include "stbln/graph.hpp"
#include "stbln/ops.hpp"
#include "stbln/random.hpp"
#include "stbln/tensor.hpp"

namespace stbln {

/// How a layer mixes information across joints.
enum class VariantKind {
    Multiplicative,  // (A_p * M_p), mask initialised to ones
    Additive,        // (A_p + M_p), mask initialised to zeros
    Symmetric,       // (A_p + L_p L_p^T)
    Bilinear,        // free U_p of size V_out x V_in, no adjacency
};

std::string_view to_string(VariantKind kind);
/// Accepts the lower-case names printed by to_string(). Throws ConfigError.
VariantKind parse_variant(std::string_view name);

struct SpatialVariant {
    VariantKind kind = VariantKind::Bilinear;
    /// Width q of the factor L_p for Symmetric; 0 selects q = V.
    std::size_t rank = 0;

    bool needs_adjacency() const { return kind != VariantKind::Bilinear; }
    bool operator==(const SpatialVariant&) const = default;
};

enum class BilinearInit {
    Adjacency,  // U_p = A_p + uniform(+-1e-6) when the adjacency fits
    Random,     // orthonormal random scaled by 1/sqrt(V_in)
};

inline constexpr std::size_t kTemporalKernel = 9;
inline constexpr double kBilinearInitNoise = 1e-6;
inline constexpr double kSymmetricInitStd = 1e-3;

struct LayerShape {
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::size_t in_nodes = 0;
    std::size_t out_nodes = 0;
    std::size_t stride = 1;
    std::size_t temporal_kernel = kTemporalKernel;

    bool degenerate() const { return in_nodes == 1 && out_nodes == 1; }
    bool operator==(const LayerShape&) const = default;
};

struct ConvParams {
    Tensor filters;
    Tensor bias;
};

struct BatchNormParams {
    Tensor gamma;
    Tensor beta;
    BatchNormState state;

    explicit BatchNormParams(std::size_t channels = 0);
};

enum class Residual {
    None,       // no connection
    Identity,   // input added as is
    Pointwise,  // C_out filters of C_in x 1 x 1, strided in T
    Flatten,    // C_out * V_out filters of C_in x 1 x V_in, reshaped
};

/// Residual used for a connection from an input of (C_in, V_in) to an output
/// of (C_out, V_out) at temporal stride `stride`.
Residual residual_kind(std::size_t in_channels, std::size_t in_nodes, std::size_t out_channels,
                       std::size_t out_nodes, std::size_t stride);

struct STLayerParams {
    std::vector<ConvParams> channel;  // W_p, b_p; one entry in the degenerate layer
    std::vector<Tensor> masks;        // M_p, L_p or U_p by variant; empty when degenerate
    BatchNormParams spatial_bn;
    ConvParams temporal;
    BatchNormParams temporal_bn;
    ConvParams residual_v;  // defined only for Pointwise / Flatten
    ConvParams residual_t;
};

// Building blocks. Each accepts and returns [N x C x T x V] tensors.

/// out[n,c,t,i] = sum_j g[i][j] * x[n,c,t,j]
Tensor mix_nodes(const Tensor& x, const Tensor& g);

/// M = L L^T for L of size V x q, 1 <= q <= V.
Tensor symmetric_mask(const Tensor& l);

/// Sum over partitions of G_p applied on the joint axis to conv1x1(h; W_p),
/// before any normalisation or activation.
Tensor spatial_forward(const Tensor& h, const std::vector<ConvParams>& channel, const std::vector<Tensor>& mixing);

/// Same-padded temporal convolution with filters [C x C x k x 1], k odd.
Tensor temporal_forward(const Tensor& h, const ConvParams& conv, std::size_t stride);

/// Applies a residual connection of the given kind; `conv` is ignored for
/// Identity. Output is [N x out_channels x ceil(T/stride) x out_nodes].
Tensor residual_forward(const Tensor& h, Residual kind, const ConvParams& conv, std::size_t stride,
                        std::size_t out_channels, std::size_t out_nodes);

/// One spatio-temporal layer:
///   spatial mixing -> BN -> (+ Residual/V) -> ReLU
///   -> temporal conv -> BN -> (+ Residual/T) -> ReLU
/// With V_in = V_out = 1 the joint mixing collapses to one 1x1 channel
/// convolution and Residual/V is dropped.
class STLayer {
public:
    STLayer(LayerShape shape, SpatialVariant variant, const PartitionedAdjacency* adjacency, BilinearInit init,
            Rng& rng);

    const LayerShape& shape() const { return shape_; }
    const SpatialVariant& variant() const { return variant_; }
    bool degenerate() const { return shape_.degenerate(); }
    Residual residual_v() const { return residual_v_; }
    Residual residual_t() const { return residual_t_; }

    STLayerParams& params() { return params_; }
    const STLayerParams& params() const { return params_; }

    /// Effective G_p per partition. Differentiable when a tape is active;
    /// otherwise cached until a mask parameter changes.
    std::vector<Tensor> mixing_matrices() const;

    /// Pre-activation spatial output.
    Tensor spatial(const Tensor& h) const;

    Tensor forward(const Tensor& h, Mode mode);

    std::vector<NamedTensor> parameters(const std::string& prefix) const;
    std::vector<std::pair<std::string, BatchNormState*>> batch_norm_states(const std::string& prefix);
    std::vector<std::pair<std::string, const BatchNormState*>> batch_norm_states(const std::string& prefix) const;

private:
    std::vector<Tensor> compute_mixing() const;

    LayerShape shape_;
    SpatialVariant variant_;
    std::vector<Tensor> adjacency_;  // normalised A_p, adjacency variants only
    STLayerParams params_;
    Residual residual_v_ = Residual::None;
    Residual residual_t_ = Residual::None;

    mutable std::vector<Tensor> cache_;
    mutable std::vector<Tensor> cache_keys_;
    mutable std::vector<std::uint64_t> cache_versions_;
};

}  // namespace stbln
