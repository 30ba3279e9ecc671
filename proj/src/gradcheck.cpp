#include "stbln/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace stbln {

GradCheckResult check_gradients(const std::function<Tensor()>& loss_fn, const std::vector<NamedTensor>& params,
                                double h) {
    std::vector<Tensor> leaves;
    leaves.reserve(params.size());
    for (const auto& [name, t] : params) {
        Tensor leaf = t;
        leaf.set_requires_grad(true);
        leaf.zero_grad();
        leaves.push_back(leaf);
    }
    std::vector<std::vector<double>> analytic;
    {
        GradTape tape;
        TapeScope scope(tape);
        Tensor loss = loss_fn();
        tape.backward(loss);
        for (auto& leaf : leaves) {
            auto g = leaf.grad_buffer();
            analytic.emplace_back(g.begin(), g.end());
        }
    }

    GradCheckResult result;
    for (std::size_t p = 0; p < leaves.size(); ++p) {
        Tensor& leaf = leaves[p];
        for (std::size_t k = 0; k < leaf.numel(); ++k) {
            const double saved = leaf.data()[k];
            leaf.mutable_data()[k] = saved + h;
            const double plus = loss_fn().item();
            leaf.mutable_data()[k] = saved - h;
            const double minus = loss_fn().item();
            leaf.mutable_data()[k] = saved;

            const double numeric = (plus - minus) / (2.0 * h);
            const double a = analytic[p][k];
            const double denom = std::max({std::abs(a), std::abs(numeric), kGradCheckFloor});
            const double err = std::abs(a - numeric) / denom;
            ++result.checked;
            if (err > result.max_rel_error || result.checked == 1) {
                result.max_rel_error = err;
                result.worst_parameter = params[p].first;
                result.worst_index = k;
                result.worst_analytic = a;
                result.worst_numeric = numeric;
            }
        }
    }
    return result;
}

}  // namespace stbln
