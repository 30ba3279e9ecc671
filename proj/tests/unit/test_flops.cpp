#include <doctest.h>

#include <sstream>

#include "helpers.hpp"
#include "oracle.hpp"
#include "stbln/errors.hpp"
#include "stbln/flops.hpp"
#include "stbln/gradcheck_suite.hpp"

using namespace stbln;

namespace {

NetworkConfig small(VariantKind kind, std::optional<std::size_t> lambda) {
    NetworkConfig c;
    c.layers = {{4, 1, 0, {kind, 0}}, {6, 2, 0, {kind, 0}}, {8, 1, 0, {VariantKind::Bilinear, 0}},
                {8, 2, 0, {VariantKind::Bilinear, 0}}};
    c.lambda = lambda;
    c.num_classes = 3;
    c.frames = 9;
    c.joints = 5;
    c.temporal_kernel = 5;
    return c;
}

}  // namespace

TEST_CASE("closed-form counts equal the instrumented oracle") {
    Rng rng(41);
    for (auto kind : {VariantKind::Multiplicative, VariantKind::Symmetric, VariantKind::Bilinear}) {
        for (auto lambda : {std::optional<std::size_t>{}, std::optional<std::size_t>{3}}) {
            const auto cfg = small(kind, lambda);
            Model m(cfg, desk_skeleton(), 1);
            oracle::Counters counted;
            oracle::forward(m, testing::randn({1, 3, 9, 5}, rng), Mode::Eval, &counted);
            const auto report = count_model(cfg);
            INFO(to_string(kind) << " lambda " << lambda.value_or(0));
            CHECK(report.total_macs == counted.macs);
            CHECK(report.total_elementwise == counted.elementwise);
            CHECK(report.total_params == m.parameter_count());
        }
    }
    auto cfg = small(VariantKind::Bilinear, std::nullopt);
    cfg.layers[1].nodes = 2;
    Model m(cfg, std::nullopt, 1);
    oracle::Counters counted;
    oracle::forward(m, testing::randn({1, 3, 9, 5}, rng), Mode::Eval, &counted);
    CHECK(count_model(cfg).total_macs == counted.macs);
    CHECK(count_model(cfg).total_elementwise == counted.elementwise);
}

TEST_CASE("reference network is calibrated to its published cost") {
    const auto r = count_model(NetworkConfig::reference());
    CHECK(r.flops() == doctest::Approx(24.93e9).epsilon(1e-12));
    CHECK(r.total_params == Model(NetworkConfig::reference(), std::nullopt, 0).parameter_count());
}

TEST_CASE("lambda sweep is monotone") {
    const auto rows = sweep_lambda(NetworkConfig::reference());
    REQUIRE(rows.size() == 10);
    for (std::size_t i = 1; i < rows.size(); ++i) {
        CHECK(rows[i].flops > rows[i - 1].flops);
        CHECK(rows[i].params >= rows[i - 1].params);
    }
    const auto csv = lambda_sweep_csv(rows);
    CHECK(csv.rfind("lambda,flops,params\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 11);
}

TEST_CASE("speedup is a ratio of totals") {
    auto a = NetworkConfig::reference();
    a.lambda = 6;
    const auto ra = count_model(a);
    const auto rb = count_model(NetworkConfig::reference());
    CHECK(speedup(ra, rb) > 1.0);
    CHECK(speedup(ra, rb) * speedup(rb, ra) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK_THROWS_AS(speedup(FlopsReport{}, rb), ContractError);
}

TEST_CASE("per-layer entries add up to the totals") {
    const auto r = count_model(small(VariantKind::Bilinear, 2));
    std::uint64_t macs = 0;
    for (std::size_t l = 0; l <= 5; ++l) macs += r.layer_macs(l);
    CHECK(macs == r.total_macs);
    const auto text = r.to_text();
    CHECK(text.find("1 MAC = 2 FLOPs") != std::string::npos);
    CHECK(text.find("total_macs " + std::to_string(r.total_macs)) != std::string::npos);
}
