#pragma once

#include <algorithm>
#include <cmath>
#include <span>

#include "stbln/random.hpp"
#include "stbln/tensor.hpp"

namespace testing {

inline stbln::Tensor randn(stbln::Shape shape, stbln::Rng& rng, double sd = 1.0, bool grad = false) {
    stbln::Tensor t = stbln::Tensor::zeros(std::move(shape), grad);
    for (auto& x : t.mutable_data()) x = rng.normal(0.0, sd);
    return t;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return a.size() == b.size() ? m : INFINITY;
}

}  // namespace testing
