#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "stbln/graph.hpp"
#include "stbln/tensor.hpp"

namespace stbln {

/// Labelled skeleton sequences stored as float32, [N x C x T x V] row-major.
struct Dataset {
    std::size_t channels = 0;
    std::size_t frames = 0;
    std::size_t joints = 0;
    std::size_t classes = 0;
    std::vector<float> values;
    std::vector<std::uint32_t> labels;

    std::size_t size() const { return labels.size(); }
    std::size_t sample_size() const { return channels * frames * joints; }

    /// Throws DimensionError on inconsistent sizes, ContractError on a label >= classes.
    void validate() const;

    /// Gathers the listed samples into a [n x C x T x V] tensor.
    Tensor batch(std::span<const std::size_t> indices) const;
    std::vector<std::size_t> batch_labels(std::span<const std::size_t> indices) const;

    bool operator==(const Dataset&) const = default;
};

/// Bone stream of a joint dataset: every joint minus its parent towards `root`.
Dataset bones_dataset(const Dataset& joints, const SkeletonTemplate& skeleton,
                      std::size_t root = SkeletonTemplate::kNtuRoot);

}  // namespace stbln
