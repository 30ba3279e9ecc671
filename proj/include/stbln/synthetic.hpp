#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "stbln/dataset.hpp"
#include "stbln/graph.hpp"
#include "stbln/random.hpp"

namespace stbln {

/// One class's motion: the listed joints oscillate `cycles` times per
/// sequence. Joints further from the skeleton root swing wider.
struct MotionPattern {
    std::vector<std::size_t> joints;
    std::size_t cycles = 2;

    bool operator==(const MotionPattern&) const = default;
};

struct SyntheticSpec {
    std::size_t num_classes = 3;
    std::size_t train_per_class = 300;
    std::size_t test_per_class = 100;
    std::size_t frames = 64;
    double noise = 0.05;
    double amplitude = 0.3;
    /// Draw the swing direction per sample instead of always along x.
    bool random_direction = true;
    /// One per class; empty selects left/right-arm patterns on the NTU template.
    std::vector<MotionPattern> patterns;

    /// Throws ConfigError on an inconsistent spec.
    void validate(const SkeletonTemplate& skeleton) const;
    std::vector<MotionPattern> resolved_patterns(const SkeletonTemplate& skeleton) const;

    bool operator==(const SyntheticSpec&) const = default;
};

struct SyntheticData {
    Dataset train;
    Dataset test;
};

/// One [3 x T x V] sample of class `label`; the phase, amplitude jitter,
/// direction and noise are drawn from `rng` in that order.
std::vector<float> synthetic_sample(const SyntheticSpec& spec, const SkeletonTemplate& skeleton,
                                    const std::vector<MotionPattern>& patterns, std::size_t label, Rng& rng);

/// Train and test splits drawn from independent streams of `seed`.
SyntheticData generate_synthetic(const SyntheticSpec& spec, const SkeletonTemplate& skeleton, std::uint64_t seed);

}  // namespace stbln
