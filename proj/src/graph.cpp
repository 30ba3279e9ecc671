#include "stbln/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <queue>
#include <set>
#include <sstream>

#include "stbln/errors.hpp"

namespace stbln {

void SkeletonTemplate::validate() const {
    if (joints == 0) throw ConfigError("skeleton template has no joints");
    std::set<Edge> seen;
    for (const auto& [i, j] : edges) {
        if (i >= joints || j >= joints) {
            throw ConfigError("edge (" + std::to_string(i) + ", " + std::to_string(j) + ") out of range for " +
                              std::to_string(joints) + " joints");
        }
        if (i == j) throw ConfigError("self loop on joint " + std::to_string(i));
        if (!seen.insert({std::min(i, j), std::max(i, j)}).second) {
            throw ConfigError("duplicate edge (" + std::to_string(i) + ", " + std::to_string(j) + ")");
        }
    }
    if (rest_pose.size() != joints) {
        throw ConfigError("rest pose has " + std::to_string(rest_pose.size()) + " joints, expected " +
                          std::to_string(joints));
    }
    if (!names.empty() && names.size() != joints) throw ConfigError("joint name count does not match joint count");
}

bool SkeletonTemplate::connected() const {
    if (joints == 0) return false;
    std::vector<std::vector<std::size_t>> nbr(joints);
    for (const auto& [i, j] : edges) {
        nbr[i].push_back(j);
        nbr[j].push_back(i);
    }
    std::vector<bool> visited(joints, false);
    std::queue<std::size_t> q;
    q.push(0);
    visited[0] = true;
    std::size_t count = 1;
    while (!q.empty()) {
        auto u = q.front();
        q.pop();
        for (auto v : nbr[u]) {
            if (!visited[v]) {
                visited[v] = true;
                ++count;
                q.push(v);
            }
        }
    }
    return count == joints;
}

bool SkeletonTemplate::is_tree() const { return edges.size() + 1 == joints && connected(); }

std::vector<std::size_t> SkeletonTemplate::parents(std::size_t root) const {
    if (!is_tree()) throw ConfigError("bone computation needs a spanning tree; edge set is not a tree");
    if (root >= joints) throw ConfigError("root joint out of range");
    std::vector<std::vector<std::size_t>> nbr(joints);
    for (const auto& [i, j] : edges) {
        nbr[i].push_back(j);
        nbr[j].push_back(i);
    }
    std::vector<std::size_t> parent(joints, joints);
    parent[root] = root;
    std::queue<std::size_t> q;
    q.push(root);
    while (!q.empty()) {
        auto u = q.front();
        q.pop();
        for (auto v : nbr[u]) {
            if (parent[v] == joints) {
                parent[v] = u;
                q.push(v);
            }
        }
    }
    return parent;
}

SkeletonTemplate SkeletonTemplate::ntu25() {
    SkeletonTemplate s;
    s.joints = 25;
    // 1-based NTU bone list, shifted to 0-based.
    const std::vector<Edge> one_based = {{1, 2},   {2, 21},  {3, 21},  {4, 3},   {5, 21},  {6, 5},
                                         {7, 6},   {8, 7},   {9, 21},  {10, 9},  {11, 10}, {12, 11},
                                         {13, 1},  {14, 13}, {15, 14}, {16, 15}, {17, 1},  {18, 17},
                                         {19, 18}, {20, 19}, {22, 23}, {23, 8},  {24, 25}, {25, 12}};
    for (const auto& [i, j] : one_based) s.edges.emplace_back(i - 1, j - 1);
    // Standing pose in metres, y up, origin at the base of the spine.
    s.rest_pose = {
        {0.00, 0.00, 0.00},    // 0  spine base
        {0.00, 0.25, 0.00},    // 1  spine mid
        {0.00, 0.58, 0.00},    // 2  neck
        {0.00, 0.72, 0.00},    // 3  head
        {-0.18, 0.48, 0.00},   // 4  left shoulder
        {-0.22, 0.22, 0.02},   // 5  left elbow
        {-0.24, -0.02, 0.04},  // 6  left wrist
        {-0.25, -0.08, 0.04},  // 7  left hand
        {0.18, 0.48, 0.00},    // 8  right shoulder
        {0.22, 0.22, 0.02},    // 9  right elbow
        {0.24, -0.02, 0.04},   // 10 right wrist
        {0.25, -0.08, 0.04},   // 11 right hand
        {-0.09, -0.02, 0.00},  // 12 left hip
        {-0.10, -0.45, 0.02},  // 13 left knee
        {-0.10, -0.85, 0.00},  // 14 left ankle
        {-0.10, -0.90, 0.08},  // 15 left foot
        {0.09, -0.02, 0.00},   // 16 right hip
        {0.10, -0.45, 0.02},   // 17 right knee
        {0.10, -0.85, 0.00},   // 18 right ankle
        {0.10, -0.90, 0.08},   // 19 right foot
        {0.00, 0.50, 0.00},    // 20 spine shoulder
        {-0.26, -0.15, 0.05},  // 21 left hand tip
        {-0.22, -0.10, 0.07},  // 22 left thumb
        {0.26, -0.15, 0.05},   // 23 right hand tip
        {0.22, -0.10, 0.07},   // 24 right thumb
    };
    s.names = {"spine_base",    "spine_mid",     "neck",       "head",       "left_shoulder",
               "left_elbow",    "left_wrist",    "left_hand",  "right_shoulder", "right_elbow",
               "right_wrist",   "right_hand",    "left_hip",   "left_knee",  "left_ankle",
               "left_foot",     "right_hip",     "right_knee", "right_ankle", "right_foot",
               "spine_shoulder", "left_hand_tip", "left_thumb", "right_hand_tip", "right_thumb"};
    return s;
}

SkeletonTemplate SkeletonTemplate::parse(std::istream& in) {
    std::size_t line_no = 0;
    std::string line;
    auto next_line = [&]() -> std::istringstream {
        while (std::getline(in, line)) {
            ++line_no;
            const auto first = line.find_first_not_of(" \t\r");
            if (first == std::string::npos || line[first] == '#') continue;
            return std::istringstream(line);
        }
        throw ParseError("skeleton template: unexpected end of file after line " + std::to_string(line_no),
                         line_no + 1);
    };
    SkeletonTemplate s;
    std::size_t edge_count = 0;
    {
        auto ls = next_line();
        if (!(ls >> s.joints >> edge_count)) {
            throw ParseError("skeleton template line " + std::to_string(line_no) + ": expected `V E`", line_no);
        }
    }
    for (std::size_t e = 0; e < edge_count; ++e) {
        auto ls = next_line();
        std::size_t i = 0, j = 0;
        if (!(ls >> i >> j)) {
            throw ParseError("skeleton template line " + std::to_string(line_no) + ": expected `i j`", line_no);
        }
        s.edges.emplace_back(i, j);
    }
    for (std::size_t v = 0; v < s.joints; ++v) {
        auto ls = next_line();
        Point3 p{};
        if (!(ls >> p[0] >> p[1] >> p[2])) {
            throw ParseError("skeleton template line " + std::to_string(line_no) + ": expected `x y z`", line_no);
        }
        s.rest_pose.push_back(p);
    }
    try {
        s.validate();
    } catch (const ConfigError& e) {
        throw ParseError(std::string("skeleton template: ") + e.what(), line_no);
    }
    return s;
}

SkeletonTemplate SkeletonTemplate::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open skeleton template " + path.string());
    return parse(in);
}

std::string SkeletonTemplate::to_text() const {
    std::ostringstream os;
    os.precision(17);
    os << joints << ' ' << edges.size() << '\n';
    for (const auto& [i, j] : edges) os << i << ' ' << j << '\n';
    for (const auto& p : rest_pose) os << p[0] << ' ' << p[1] << ' ' << p[2] << '\n';
    return os.str();
}

Tensor undirected_adjacency(const SkeletonTemplate& skeleton) {
    const std::size_t v = skeleton.joints;
    Tensor a = Tensor::zeros({v, v});
    auto d = a.mutable_data();
    for (const auto& [i, j] : skeleton.edges) {
        d[i * v + j] = 1.0;
        d[j * v + i] = 1.0;
    }
    return a;
}

Tensor normalize_adjacency(const Tensor& a, double epsilon) {
    if (a.ndim() != 2 || a.dim(0) != a.dim(1)) {
        throw DimensionError("normalize_adjacency: expected a square matrix, got " + to_string(a.shape()));
    }
    const std::size_t v = a.dim(0);
    auto in = a.data();
    std::vector<double> degree(v, epsilon);
    for (std::size_t i = 0; i < v; ++i) {
        for (std::size_t j = 0; j < v; ++j) degree[i] += in[i * v + j];
    }
    Tensor out = Tensor::zeros({v, v});
    auto o = out.mutable_data();
    for (std::size_t i = 0; i < v; ++i) {
        for (std::size_t j = 0; j < v; ++j) {
            if (in[i * v + j] == 0.0) continue;
            o[i * v + j] = in[i * v + j] / std::sqrt(degree[i] * degree[j]);
        }
    }
    return out;
}

PartitionedAdjacency build_partitions(const SkeletonTemplate& skeleton, double epsilon) {
    skeleton.validate();
    const std::size_t v = skeleton.joints;
    PartitionedAdjacency out;
    out.epsilon = epsilon;
    if (!skeleton.connected()) {
        out.warnings.push_back("skeleton template is disconnected; isolated joints keep only their self-connection");
    }

    Point3 cog{0.0, 0.0, 0.0};
    for (const auto& p : skeleton.rest_pose) {
        for (int k = 0; k < 3; ++k) cog[k] += p[k];
    }
    for (int k = 0; k < 3; ++k) cog[k] /= static_cast<double>(v);
    std::vector<double> dist(v);
    double scale = 0.0;
    for (std::size_t i = 0; i < v; ++i) {
        double s = 0.0;
        for (int k = 0; k < 3; ++k) s += (skeleton.rest_pose[i][k] - cog[k]) * (skeleton.rest_pose[i][k] - cog[k]);
        dist[i] = std::sqrt(s);
        scale = std::max(scale, dist[i]);
    }
    // Distances equal up to rounding count as ties.
    const double tie = 1e-9 * std::max(scale, 1.0);

    out.binary[0] = Tensor::eye(v);
    out.binary[1] = Tensor::zeros({v, v});
    out.binary[2] = Tensor::zeros({v, v});
    auto centripetal = out.binary[1].mutable_data();
    auto centrifugal = out.binary[2].mutable_data();
    auto assign = [&](std::size_t root, std::size_t nbr) {
        if (dist[nbr] < dist[root] - tie) {
            centripetal[root * v + nbr] = 1.0;
        } else {
            centrifugal[root * v + nbr] = 1.0;
        }
    };
    for (const auto& [i, j] : skeleton.edges) {
        assign(i, j);
        assign(j, i);
    }
    for (std::size_t p = 0; p < kPartitions; ++p) out.normalized[p] = normalize_adjacency(out.binary[p], epsilon);
    return out;
}

}  // namespace stbln
