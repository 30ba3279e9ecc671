#include "stbln/gradcheck_suite.hpp"

#include <cmath>

#include "stbln/network.hpp"
#include "stbln/training.hpp"

namespace stbln {

namespace {

Tensor randn(Shape shape, Rng& rng, double sd = 1.0) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (auto& x : t.mutable_data()) x = rng.normal(0.0, sd);
    return t;
}

// Random projection normalised so the loss stays O(1).
Tensor projection_like(const Shape& shape, Rng& rng) {
    return randn(shape, rng, 1.0 / std::sqrt(static_cast<double>(numel(shape))));
}

// Moves masks away from their symmetric initial values so every entry
// carries a generic gradient.
void jitter(const std::vector<NamedTensor>& params, Rng& rng) {
    for (const auto& [name, t] : params) {
        if (name.find("spatial.M") == std::string::npos && name.find("spatial.L") == std::string::npos &&
            name.find("spatial.U") == std::string::npos && name.find("gamma") == std::string::npos &&
            name.find("beta") == std::string::npos && name.find(".b") == std::string::npos) {
            continue;
        }
        Tensor h = t;
        for (auto& x : h.mutable_data()) x += rng.normal(0.0, 0.3);
    }
}

GradCheckCase layer_case(const std::string& name, LayerShape shape, SpatialVariant variant,
                         const PartitionedAdjacency* adj, std::size_t frames, Rng& rng) {
    STLayer layer(shape, variant, adj, BilinearInit::Adjacency, rng);
    jitter(layer.parameters(""), rng);
    Tensor x = randn({2, shape.in_channels, frames, shape.in_nodes}, rng);
    const Shape out{2, shape.out_channels, (frames + shape.stride - 1) / shape.stride, shape.out_nodes};
    Tensor w = projection_like(out, rng);
    auto params = layer.parameters("");
    params.emplace_back("input", x);
    return {name, check_gradients([&] { return weighted_sum(layer.forward(x, Mode::Train), w); }, params)};
}

}  // namespace

SkeletonTemplate desk_skeleton() {
    SkeletonTemplate s;
    s.joints = 5;
    s.edges = {{0, 1}, {1, 2}, {1, 3}, {3, 4}};
    s.rest_pose = {Point3{0.0, 0.0, 0.0}, Point3{0.0, 0.5, 0.0}, Point3{0.0, 1.0, 0.1}, Point3{0.4, 0.6, 0.0},
                   Point3{0.8, 0.7, 0.0}};
    return s;
}

std::vector<GradCheckCase> run_gradcheck_suite(std::uint64_t seed) {
    Rng rng(seed);
    const auto skel = desk_skeleton();
    const auto adj = build_partitions(skel);
    std::vector<GradCheckCase> out;
    const std::size_t t = 8;
    const LayerShape widen{3, 4, 5, 5, 1, 3};

    out.push_back(layer_case("multiplicative layer", widen, {VariantKind::Multiplicative, 0}, &adj, t, rng));
    out.push_back(layer_case("additive layer", widen, {VariantKind::Additive, 0}, &adj, t, rng));
    out.push_back(layer_case("symmetric layer (q = V)", widen, {VariantKind::Symmetric, 0}, &adj, t, rng));
    out.push_back(layer_case("symmetric layer (q = 2)", widen, {VariantKind::Symmetric, 2}, &adj, t, rng));
    out.push_back(layer_case("bilinear layer", widen, {VariantKind::Bilinear, 0}, &adj, t, rng));
    out.push_back(layer_case("identity residuals", LayerShape{4, 4, 5, 5, 1, 3}, {VariantKind::Additive, 0}, &adj, t, rng));
    out.push_back(layer_case("pointwise residuals, stride 2", LayerShape{3, 4, 5, 5, 2, 3}, {VariantKind::Bilinear, 0},
                             &adj, t, rng));
    out.push_back(layer_case("flatten residuals (5 -> 2 nodes)", LayerShape{3, 4, 5, 2, 1, 3},
                             {VariantKind::Bilinear, 0}, nullptr, t, rng));
    out.push_back(layer_case("aggregation layer (5 -> 1 node)", LayerShape{3, 4, 5, 1, 2, 3},
                             {VariantKind::Bilinear, 0}, nullptr, t, rng));
    out.push_back(layer_case("one-node layer", LayerShape{4, 4, 1, 1, 1, 3}, {VariantKind::Bilinear, 0}, nullptr, t, rng));

    {
        ConvParams conv{randn({4, 4, 5, 1}, rng, 0.3), randn({4}, rng)};
        conv.filters.set_requires_grad(true);
        conv.bias.set_requires_grad(true);
        Tensor x = randn({2, 4, t, 3}, rng);
        Tensor w = projection_like({2, 4, t / 2, 3}, rng);
        out.push_back({"temporal conv (k = 5, stride 2)",
                       check_gradients([&] { return weighted_sum(temporal_forward(x, conv, 2), w); },
                                       {{"W", conv.filters}, {"b", conv.bias}, {"input", x}})});
    }
    for (Mode mode : {Mode::Train, Mode::Eval}) {
        Tensor x = randn({3, 4, t, 2}, rng, 2.0);
        Tensor gamma = randn({4}, rng);
        Tensor beta = randn({4}, rng);
        BatchNormState state(4);
        for (std::size_t c = 0; c < 4; ++c) {
            state.running_mean[c] = rng.normal();
            state.running_var[c] = 0.5 + rng.uniform();
        }
        Tensor w = projection_like(x.shape(), rng);
        out.push_back({mode == Mode::Train ? "batch norm (train)" : "batch norm (eval)",
                       check_gradients([&] { return weighted_sum(batch_norm(x, gamma, beta, state, mode), w); },
                                       {{"gamma", gamma}, {"beta", beta}, {"input", x}})});
    }
    {
        Tensor logits = randn({4, 5}, rng, 2.0);
        const std::vector<std::size_t> labels{0, 3, 4, 1};
        out.push_back({"cross entropy", check_gradients([&] { return cross_entropy(logits, labels); },
                                                        {{"logits", logits}})});
    }
    {
        NetworkConfig c;
        c.layers = {LayerSpec{4, 1, 0, {VariantKind::Symmetric, 2}}, LayerSpec{4, 2, 0, {VariantKind::Bilinear, 0}},
                    LayerSpec{4, 1, 0, {VariantKind::Bilinear, 0}}};
        c.lambda = 2;
        c.num_classes = 3;
        c.in_channels = 3;
        c.frames = t;
        c.joints = 5;
        c.temporal_kernel = 3;
        Model model(c, skel, rng.next_u64());
        jitter(model.parameters(), rng);
        Tensor x = randn({2, 3, t, 5}, rng);
        const std::vector<std::size_t> labels{1, 2};
        out.push_back({"network with input BN and lambda = 2",
                       check_gradients([&] { return cross_entropy(model.forward(x, Mode::Train), labels); },
                                       model.parameters())});
    }
    return out;
}

}  // namespace stbln
