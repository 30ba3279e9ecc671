#include <doctest.h>

#include "helpers.hpp"
#include "stbln/errors.hpp"
#include "stbln/gradcheck.hpp"
#include "stbln/ops.hpp"

using namespace stbln;
using testing::randn;

TEST_CASE("tensor construction validates shape") {
    CHECK_THROWS_AS(Tensor({2, 0}, {}), DimensionError);
    CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0}), DimensionError);
    Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
    CHECK(t.at({1, 2}) == 6.0);
    CHECK_THROWS_AS(t.at({2, 0}), DimensionError);
    CHECK_THROWS_AS(t.dim(2), DimensionError);
    CHECK_THROWS_AS(Tensor().shape(), ContractError);
}

TEST_CASE("handles alias storage and versions track writes") {
    Tensor a = Tensor::zeros({3});
    Tensor b = a;
    const auto v0 = a.version();
    b.mutable_data()[1] = 4.0;
    CHECK(a.data()[1] == 4.0);
    CHECK(a.version() == v0 + 1);
    Tensor c = a.clone();
    c.mutable_data()[1] = 0.0;
    CHECK(a.data()[1] == 4.0);
    CHECK_FALSE(c.same_storage(a));
}

TEST_CASE("backward requires a scalar loss and a non-empty tape") {
    Tensor x = Tensor::filled({2}, 1.0, true);
    GradTape tape;
    CHECK_THROWS_AS(tape.backward(Tensor::scalar(1.0)), ContractError);
    Tensor y;
    {
        TapeScope scope(tape);
        y = scale(x, 2.0);
    }
    CHECK_THROWS_AS(tape.backward(y), ContractError);
}

TEST_CASE("tape replays in reverse and leaves zero gradients on unused inputs") {
    Tensor x = Tensor({2}, {1.0, -2.0}, true);
    Tensor unused = Tensor({2}, {5.0, 5.0}, true);
    GradTape tape;
    Tensor loss;
    std::vector<std::string> order;
    {
        TapeScope scope(tape);
        Tensor masked = mul(unused, Tensor::zeros({2}));
        (void)masked;
        loss = sum(relu(x));
    }
    tape.backward(loss, [&](const GradTape::Entry& e) { order.push_back(e.op); });
    CHECK(order.front() == "sum");
    CHECK(x.grad_data()[0] == 1.0);
    CHECK(x.grad_data()[1] == 0.0);
    REQUIRE(unused.has_grad());
    CHECK(unused.grad_data()[0] == 0.0);
}

TEST_CASE("ops do not record without an active tape") {
    Tensor x = Tensor::filled({2}, 1.0, true);
    Tensor y = scale(x, 3.0);
    CHECK_FALSE(y.requires_grad());
    CHECK(GradTape::active() == nullptr);
}

TEST_CASE("matmul matches a naive triple loop") {
    Rng rng(3);
    Tensor a = randn({3, 4}, rng), b = randn({4, 5}, rng);
    Tensor c = matmul(a, b);
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 5; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < 4; ++k) s += a.at({i, k}) * b.at({k, j});
            CHECK(c.at({i, j}) == doctest::Approx(s).epsilon(1e-14));
        }
    }
    CHECK_THROWS_AS(matmul(a, a), DimensionError);
}

TEST_CASE("permute moves every element to its transposed index") {
    Rng rng(4);
    Tensor x = randn({2, 3, 4, 5}, rng);
    Tensor y = permute(x, {0, 3, 1, 2});
    CHECK(y.shape() == Shape{2, 5, 3, 4});
    for (std::size_t n = 0; n < 2; ++n)
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t t = 0; t < 4; ++t)
                for (std::size_t v = 0; v < 5; ++v) CHECK(y.at({n, v, c, t}) == x.at({n, c, t, v}));
    CHECK_THROWS_AS(permute(x, {0, 0, 1, 2}), DimensionError);
}

TEST_CASE("gram is exactly symmetric") {
    Rng rng(5);
    Tensor l = randn({6, 3}, rng);
    Tensor g = gram(l);
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = 0; j < 6; ++j) CHECK(g.at({i, j}) == g.at({j, i}));
}

TEST_CASE("softmax rows sum to one and survive large logits") {
    Tensor x({2, 3}, {1000.0, 1000.0, 1000.0, -5.0, 0.0, 5.0});
    Tensor p = softmax(x);
    for (std::size_t r = 0; r < 2; ++r) {
        double s = 0.0;
        for (std::size_t j = 0; j < 3; ++j) s += p.at({r, j});
        CHECK(s == doctest::Approx(1.0).epsilon(1e-15));
    }
    CHECK(p.at({0, 0}) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("elementwise and shape ops pass finite-difference checks") {
    Rng rng(6);
    Tensor a = randn({2, 3, 4}, rng), b = randn({2, 3, 4}, rng);
    Tensor bias = randn({3}, rng);
    Tensor m1 = randn({3, 4}, rng), m2 = randn({4, 2}, rng), l = randn({4, 2}, rng);
    Tensor w = randn({2, 4, 3}, rng);
    auto loss = [&] {
        Tensor x = add(mul(a, b), scale(a, 0.5));
        x = bias_add(x, bias);
        x = permute(x, {0, 2, 1});
        Tensor y = reshape(x, {8, 3});
        Tensor z = softmax(matmul(transpose(m1), transpose(y)));  // 4 x 8
        Tensor g = gram(l);
        return add(add(weighted_sum(x, w), sum(matmul(g, z))),
                   add(mean(matmul(m1, m2)), sum(global_avg_pool(reshape(a, {2, 3, 2, 2})))));
    };
    const auto r = check_gradients(loss, {{"a", a}, {"b", b}, {"bias", bias}, {"m1", m1}, {"m2", m2}, {"l", l}});
    INFO("worst " << r.worst_parameter << "[" << r.worst_index << "]");
    CHECK(r.passed(1e-7));
}
