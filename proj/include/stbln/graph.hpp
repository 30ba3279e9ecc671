#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "stbln/tensor.hpp"

namespace stbln {

using Edge = std::pair<std::size_t, std::size_t>;
using Point3 = std::array<double, 3>;

/// Joint set with its natural (undirected) connections and a canonical
/// rest pose used for the centre-of-gravity partitioning.
struct SkeletonTemplate {
    std::size_t joints = 0;
    std::vector<Edge> edges;
    std::vector<Point3> rest_pose;
    std::vector<std::string> names;

    /// Throws ConfigError on out-of-range endpoints, self loops, duplicate
    /// edges or a rest pose of the wrong size.
    void validate() const;
    bool connected() const;
    bool is_tree() const;

    /// Parent of every joint in the tree rooted at `root`; the root maps to
    /// itself. Throws ConfigError when the edge set is not a spanning tree.
    std::vector<std::size_t> parents(std::size_t root) const;

    /// Built-in 25-joint NTU RGB+D skeleton (24 bones).
    static SkeletonTemplate ntu25();
    static constexpr std::size_t kNtuRoot = 20;  // spine at the shoulders

    /// Text format: `V E`, then E lines `i j`, then V lines `x y z`.
    static SkeletonTemplate parse(std::istream& in);
    static SkeletonTemplate load(const std::filesystem::path& path);
    std::string to_text() const;
};

/// Symmetric 0/1 matrix of the template's edges.
Tensor undirected_adjacency(const SkeletonTemplate& skeleton);

inline constexpr double kAdjacencyEpsilon = 0.001;
inline constexpr std::size_t kPartitions = 3;

/// The three neighbour subsets: root, centripetal, centrifugal.
struct PartitionedAdjacency {
    std::array<Tensor, kPartitions> binary;
    std::array<Tensor, kPartitions> normalized;
    double epsilon = kAdjacencyEpsilon;
    std::vector<std::string> warnings;

    std::size_t joints() const { return binary[0].dim(0); }
};

/// A[i][j] / sqrt((rowsum_i + eps) * (rowsum_j + eps)).
Tensor normalize_adjacency(const Tensor& a, double epsilon);

/// Splits each joint's neighbourhood by distance to the rest pose's centre
/// of gravity: A_1 = I, A_2 holds neighbours strictly closer than the root,
/// A_3 the rest (ties included).
PartitionedAdjacency build_partitions(const SkeletonTemplate& skeleton, double epsilon = kAdjacencyEpsilon);

}  // namespace stbln
