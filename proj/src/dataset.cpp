#include "stbln/dataset.hpp"

#include "stbln/errors.hpp"

namespace stbln {

void Dataset::validate() const {
    if (channels == 0 || frames == 0 || joints == 0 || classes == 0) {
        throw DimensionError("dataset dimensions must be positive");
    }
    if (values.size() != size() * sample_size()) {
        throw DimensionError("dataset holds " + std::to_string(values.size()) + " values, expected " +
                             std::to_string(size()) + " x " + std::to_string(sample_size()));
    }
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= classes) {
            throw ContractError("label " + std::to_string(labels[i]) + " of sample " + std::to_string(i) +
                                " is not below the class count " + std::to_string(classes));
        }
    }
}

Tensor Dataset::batch(std::span<const std::size_t> indices) const {
    const std::size_t s = sample_size();
    std::vector<double> out(indices.size() * s);
    for (std::size_t b = 0; b < indices.size(); ++b) {
        if (indices[b] >= size()) throw ContractError("sample index out of range");
        const float* src = values.data() + indices[b] * s;
        for (std::size_t i = 0; i < s; ++i) out[b * s + i] = src[i];
    }
    return Tensor({indices.size(), channels, frames, joints}, std::move(out));
}

std::vector<std::size_t> Dataset::batch_labels(std::span<const std::size_t> indices) const {
    std::vector<std::size_t> out;
    out.reserve(indices.size());
    for (auto i : indices) out.push_back(labels.at(i));
    return out;
}

Dataset bones_dataset(const Dataset& joints, const SkeletonTemplate& skeleton, std::size_t root) {
    if (joints.joints != skeleton.joints) {
        throw DimensionError("dataset has " + std::to_string(joints.joints) + " joints, skeleton has " +
                             std::to_string(skeleton.joints));
    }
    const auto parent = skeleton.parents(root);
    Dataset out = joints;
    const std::size_t v = joints.joints;
    for (std::size_t r = 0; r < joints.values.size() / v; ++r) {
        const float* in = joints.values.data() + r * v;
        for (std::size_t j = 0; j < v; ++j) out.values[r * v + j] = in[j] - in[parent[j]];
    }
    return out;
}

}  // namespace stbln
