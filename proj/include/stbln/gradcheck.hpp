#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "stbln/tensor.hpp"

namespace stbln {

using NamedTensor = std::pair<std::string, Tensor>;

inline constexpr double kGradCheckFloor = 1e-6;

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::string worst_parameter;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    std::size_t checked = 0;

    bool passed(double tolerance) const { return max_rel_error < tolerance; }
};

/// Compares tape gradients of `loss_fn` against central differences
///   (f(x + h) - f(x - h)) / 2h
/// for every element of every listed parameter.
///
/// The error of an element is |a - n| / max(|a|, |n|, kGradCheckFloor). The
/// floor keeps gradients that are exactly zero (a bias feeding batch-norm)
/// from turning difference round-off into a huge ratio; keep losses O(1).
/// `loss_fn` must be deterministic; it is called once under a tape and twice
/// per element without one.
GradCheckResult check_gradients(const std::function<Tensor()>& loss_fn, const std::vector<NamedTensor>& params,
                                double h = 1e-5);

}  // namespace stbln
