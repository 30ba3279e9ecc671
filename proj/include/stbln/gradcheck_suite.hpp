#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stbln/gradcheck.hpp"
#include "stbln/graph.hpp"

namespace stbln {

inline constexpr double kGradCheckTolerance = 1e-4;

struct GradCheckCase {
    std::string name;
    GradCheckResult result;
};

/// Five joints: a chain 0-1-2 with two branches 1-3-4.
SkeletonTemplate desk_skeleton();

/// Finite-difference checks of every building block on small shapes
/// (C <= 4, T <= 8, V <= 5): each spatial variant, temporal conv, BN,
/// identity / pointwise / flatten residuals, the 1-node layer,
/// cross-entropy and a two-layer network with input BN.
std::vector<GradCheckCase> run_gradcheck_suite(std::uint64_t seed = 1);

}  // namespace stbln
