#include <doctest.h>

#include <Eigen/Eigenvalues>

#include "helpers.hpp"
#include "oracle.hpp"
#include "stbln/errors.hpp"
#include "stbln/gradcheck_suite.hpp"
#include "stbln/layers.hpp"

using namespace stbln;
using testing::max_abs_diff;
using testing::randn;

namespace {

const LayerShape kShape{3, 4, 5, 5, 1, 3};

void copy_channel(const STLayer& from, STLayer& to) {
    for (std::size_t p = 0; p < from.params().channel.size(); ++p) {
        Tensor w = to.params().channel[p].filters;
        auto src = from.params().channel[p].filters.data();
        std::copy(src.begin(), src.end(), w.mutable_data().begin());
        Tensor b = to.params().channel[p].bias;
        auto bs = from.params().channel[p].bias.data();
        std::copy(bs.begin(), bs.end(), b.mutable_data().begin());
    }
}

double min_eigenvalue(const Tensor& m) {
    const auto n = static_cast<Eigen::Index>(m.dim(0));
    Eigen::MatrixXd a(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) a(i, j) = m.data()[static_cast<std::size_t>(i * n + j)];
    return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(a, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
}

}  // namespace

TEST_CASE("variant names round trip") {
    for (auto k : {VariantKind::Multiplicative, VariantKind::Additive, VariantKind::Symmetric, VariantKind::Bilinear}) {
        CHECK(parse_variant(to_string(k)) == k);
    }
    CHECK_THROWS_AS(parse_variant("attention"), ConfigError);
}

TEST_CASE("spatial forward matches the scalar oracle for every variant") {
    const auto adj = build_partitions(desk_skeleton());
    Rng rng(21);
    for (auto kind : {VariantKind::Multiplicative, VariantKind::Additive, VariantKind::Symmetric, VariantKind::Bilinear}) {
        STLayer layer(kShape, {kind, kind == VariantKind::Symmetric ? 2u : 0u}, &adj, BilinearInit::Adjacency, rng);
        for (auto& m : layer.params().masks)
            for (auto& x : m.mutable_data()) x += rng.normal(0.0, 0.2);
        for (auto& c : layer.params().channel)
            for (auto& x : c.bias.mutable_data()) x = rng.normal();
        Tensor x = randn({2, 3, 6, 5}, rng);
        const auto ref = oracle::spatial(oracle::Array4(x), layer.params().channel, oracle::mixing(layer, &adj), 5);
        CHECK(max_abs_diff(layer.spatial(x).data(), ref.d) < 1e-10);
    }
}

TEST_CASE("bilinear node reduction matches the oracle") {
    Rng rng(22);
    STLayer layer(LayerShape{3, 4, 5, 2, 1, 3}, {VariantKind::Bilinear, 0}, nullptr, BilinearInit::Random, rng);
    Tensor x = randn({2, 3, 4, 5}, rng);
    const auto ref = oracle::spatial(oracle::Array4(x), layer.params().channel, oracle::mixing(layer, nullptr), 2);
    CHECK(max_abs_diff(layer.spatial(x).data(), ref.d) < 1e-10);
    CHECK(layer.residual_v() == Residual::Flatten);
    CHECK(layer.residual_t() == Residual::Flatten);
}

TEST_CASE("additive, multiplicative and bilinear layers agree at initialisation") {
    const auto adj = build_partitions(desk_skeleton());
    Rng rng(23);
    STLayer add(kShape, {VariantKind::Additive, 0}, &adj, BilinearInit::Adjacency, rng);
    STLayer mul(kShape, {VariantKind::Multiplicative, 0}, &adj, BilinearInit::Adjacency, rng);
    STLayer bil(kShape, {VariantKind::Bilinear, 0}, &adj, BilinearInit::Adjacency, rng);
    for (auto& u : bil.params().masks) {  // U := A exactly
        auto a = adj.normalized[&u - bil.params().masks.data()].data();
        std::copy(a.begin(), a.end(), u.mutable_data().begin());
    }
    copy_channel(add, mul);
    copy_channel(add, bil);
    Tensor x = randn({2, 3, 6, 5}, rng);
    const Tensor ya = add.spatial(x);
    CHECK(max_abs_diff(ya.data(), mul.spatial(x).data()) < 1e-12);
    CHECK(max_abs_diff(ya.data(), bil.spatial(x).data()) < 1e-12);
}

TEST_CASE("bilinear U starts at the adjacency plus tiny noise") {
    const auto adj = build_partitions(desk_skeleton());
    Rng rng(24);
    STLayer bil(kShape, {VariantKind::Bilinear, 0}, &adj, BilinearInit::Adjacency, rng);
    for (std::size_t p = 0; p < kPartitions; ++p) {
        CHECK(max_abs_diff(bil.params().masks[p].data(), adj.normalized[p].data()) <= kBilinearInitNoise);
    }
    STLayer rnd(kShape, {VariantKind::Bilinear, 0}, &adj, BilinearInit::Random, rng);
    // orthonormal rows scaled by 1/sqrt(V): U U^T = I / V
    Tensor g = gram(rnd.params().masks[0]);
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 5; ++j) CHECK(g.at({i, j}) == doctest::Approx(i == j ? 0.2 : 0.0).epsilon(1e-12));
}

TEST_CASE("symmetric masks are symmetric positive semidefinite for any factor") {
    Rng rng(25);
    for (std::size_t q : {1u, 3u, 5u}) {
        Tensor l = randn({5, q}, rng, 2.0);
        Tensor m = symmetric_mask(l);
        for (std::size_t i = 0; i < 5; ++i)
            for (std::size_t j = 0; j < 5; ++j) CHECK(m.at({i, j}) == m.at({j, i}));
        CHECK(min_eigenvalue(m) >= -1e-10);
    }
    CHECK_THROWS_AS(symmetric_mask(randn({3, 4}, rng)), DimensionError);
}

TEST_CASE("residual kinds follow the shape change") {
    CHECK(residual_kind(4, 5, 4, 5, 1) == Residual::Identity);
    CHECK(residual_kind(3, 5, 4, 5, 1) == Residual::Pointwise);
    CHECK(residual_kind(4, 5, 4, 5, 2) == Residual::Pointwise);
    CHECK(residual_kind(4, 5, 4, 1, 1) == Residual::Flatten);
}

TEST_CASE("flatten residual groups filters by output node") {
    Rng rng(26);
    const std::size_t c_out = 2, v_out = 3;
    ConvParams conv{randn({c_out * v_out, 2, 1, 4}, rng), randn({c_out * v_out}, rng)};
    Tensor x = randn({1, 2, 3, 4}, rng);
    Tensor y = residual_forward(x, Residual::Flatten, conv, 1, c_out, v_out);
    CHECK(y.shape() == Shape{1, c_out, 3, v_out});
    for (std::size_t o = 0; o < c_out; ++o)
        for (std::size_t t = 0; t < 3; ++t)
            for (std::size_t i = 0; i < v_out; ++i) {
                const std::size_t f = o * v_out + i;
                double s = conv.bias.data()[f];
                for (std::size_t c = 0; c < 2; ++c)
                    for (std::size_t j = 0; j < 4; ++j) s += conv.filters.at({f, c, 0, j}) * x.at({0, c, t, j});
                CHECK(y.at({0, o, t, i}) == doctest::Approx(s).epsilon(1e-13));
            }
}

TEST_CASE("one-node layer is a single channel map without masks or Residual/V") {
    Rng rng(27);
    STLayer layer(LayerShape{4, 6, 1, 1, 1, 3}, {VariantKind::Bilinear, 0}, nullptr, BilinearInit::Adjacency, rng);
    CHECK(layer.params().channel.size() == 1);
    CHECK(layer.params().masks.empty());
    CHECK(layer.residual_v() == Residual::None);
    CHECK(layer.residual_t() == Residual::Pointwise);
    Tensor x = randn({2, 4, 5, 1}, rng);
    CHECK(layer.forward(x, Mode::Train).shape() == Shape{2, 6, 5, 1});
}

TEST_CASE("layer configuration errors") {
    const auto adj = build_partitions(desk_skeleton());
    Rng rng(28);
    CHECK_THROWS_AS(STLayer(kShape, {VariantKind::Additive, 0}, nullptr, BilinearInit::Adjacency, rng), ConfigError);
    CHECK_THROWS_AS(STLayer(LayerShape{3, 4, 5, 2, 1, 3}, {VariantKind::Multiplicative, 0}, &adj,
                            BilinearInit::Adjacency, rng),
                    ConfigError);
    CHECK_THROWS_AS(STLayer(LayerShape{3, 4, 4, 4, 1, 3}, {VariantKind::Additive, 0}, &adj, BilinearInit::Adjacency, rng),
                    ConfigError);
    CHECK_THROWS_AS(STLayer(LayerShape{3, 4, 5, 5, 1, 4}, {VariantKind::Bilinear, 0}, &adj, BilinearInit::Adjacency, rng),
                    ConfigError);
    CHECK_THROWS_AS(STLayer(kShape, {VariantKind::Symmetric, 6}, &adj, BilinearInit::Adjacency, rng), ConfigError);
    STLayer ok(kShape, {VariantKind::Additive, 0}, &adj, BilinearInit::Adjacency, rng);
    CHECK_THROWS_AS(ok.forward(randn({1, 2, 4, 5}, rng), Mode::Train), DimensionError);
}

TEST_CASE("temporal conv rejects even kernels") {
    Rng rng(29);
    ConvParams conv{randn({2, 2, 4, 1}, rng), Tensor::zeros({2})};
    CHECK_THROWS_AS(temporal_forward(randn({1, 2, 6, 3}, rng), conv, 1), ConfigError);
}

TEST_CASE("mixing cache follows mask updates") {
    const auto adj = build_partitions(desk_skeleton());
    Rng rng(30);
    STLayer layer(kShape, {VariantKind::Additive, 0}, &adj, BilinearInit::Adjacency, rng);
    Tensor x = randn({1, 3, 4, 5}, rng);
    const Tensor before = layer.spatial(x);
    layer.params().masks[1].mutable_data()[3] += 1.0;
    const Tensor after = layer.spatial(x);
    CHECK(max_abs_diff(before.data(), after.data()) > 1e-6);
    const auto ref = oracle::spatial(oracle::Array4(x), layer.params().channel, oracle::mixing(layer, &adj), 5);
    CHECK(max_abs_diff(after.data(), ref.d) < 1e-10);
}

TEST_CASE("the finite-difference suite passes on every block") {
    for (const auto& c : run_gradcheck_suite(7)) {
        INFO(c.name << ": worst " << c.result.worst_parameter << "[" << c.result.worst_index
                    << "] analytic " << c.result.worst_analytic << " numeric " << c.result.worst_numeric);
        CHECK(c.result.passed(kGradCheckTolerance));
    }
}
