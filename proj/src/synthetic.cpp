#include "stbln/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numbers>

#include "stbln/errors.hpp"

namespace stbln {

namespace {

// NTU joints (0-based) from shoulder to fingertips.
const std::vector<std::size_t> kLeftArm = {4, 5, 6, 7, 21, 22};
const std::vector<std::size_t> kRightArm = {8, 9, 10, 11, 23, 24};

std::vector<std::size_t> hop_distance(const SkeletonTemplate& s, std::size_t root) {
    std::vector<std::vector<std::size_t>> nbr(s.joints);
    for (auto [a, b] : s.edges) {
        nbr[a].push_back(b);
        nbr[b].push_back(a);
    }
    const std::size_t unreached = s.joints;
    std::vector<std::size_t> d(s.joints, unreached);
    std::deque<std::size_t> q{root};
    d[root] = 0;
    while (!q.empty()) {
        const auto u = q.front();
        q.pop_front();
        for (auto w : nbr[u]) {
            if (d[w] == unreached) {
                d[w] = d[u] + 1;
                q.push_back(w);
            }
        }
    }
    for (auto& x : d) {
        if (x == unreached) x = 1;
    }
    return d;
}

}  // namespace

std::vector<MotionPattern> SyntheticSpec::resolved_patterns(const SkeletonTemplate& skeleton) const {
    if (!patterns.empty()) return patterns;
    if (skeleton.joints != 25) {
        throw ConfigError("default motion patterns need the 25-joint NTU template; list patterns explicitly");
    }
    std::vector<MotionPattern> out;
    for (std::size_t c = 0; c < num_classes; ++c) {
        out.push_back(MotionPattern{c % 2 == 0 ? kLeftArm : kRightArm, 2 * (1 + c / 2)});
    }
    return out;
}

void SyntheticSpec::validate(const SkeletonTemplate& skeleton) const {
    if (num_classes == 0 || frames == 0 || train_per_class + test_per_class == 0) {
        throw ConfigError("synthetic spec needs classes, frames and samples");
    }
    if (noise < 0.0 || amplitude <= 0.0) throw ConfigError("synthetic noise must be >= 0 and amplitude > 0");
    if (!patterns.empty() && patterns.size() != num_classes) {
        throw ConfigError("synthetic spec lists " + std::to_string(patterns.size()) + " patterns for " +
                          std::to_string(num_classes) + " classes");
    }
    for (const auto& p : resolved_patterns(skeleton)) {
        if (p.joints.empty() || p.cycles == 0) throw ConfigError("motion pattern needs joints and cycles >= 1");
        for (auto j : p.joints) {
            if (j >= skeleton.joints) throw ConfigError("motion pattern joint " + std::to_string(j) + " out of range");
        }
    }
}

std::vector<float> synthetic_sample(const SyntheticSpec& spec, const SkeletonTemplate& skeleton,
                                    const std::vector<MotionPattern>& patterns, std::size_t label, Rng& rng) {
    const std::size_t t_len = spec.frames, v = skeleton.joints;
    const auto& pattern = patterns.at(label);
    const auto depth = hop_distance(skeleton, v == 25 ? SkeletonTemplate::kNtuRoot : 0);
    std::size_t deepest = 1;
    for (auto j : pattern.joints) deepest = std::max(deepest, depth[j]);

    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double gain = spec.amplitude * rng.uniform(0.8, 1.2);
    Point3 dir{1.0, 0.0, 0.0};
    if (spec.random_direction) {
        double norm = 0.0;
        while (norm < 1e-6) {
            for (auto& x : dir) x = rng.normal();
            norm = std::sqrt(dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]);
        }
        for (auto& x : dir) x /= norm;
    }
    std::vector<double> swing(v, 0.0);
    for (auto j : pattern.joints) swing[j] = gain * static_cast<double>(depth[j]) / static_cast<double>(deepest);

    std::vector<float> out(3 * t_len * v);
    const double omega = 2.0 * std::numbers::pi * static_cast<double>(pattern.cycles) / static_cast<double>(t_len);
    for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t t = 0; t < t_len; ++t) {
            const double wave = std::sin(omega * static_cast<double>(t) + phase) * dir[c];
            for (std::size_t j = 0; j < v; ++j) {
                double x = skeleton.rest_pose[j][c] + swing[j] * wave;
                if (spec.noise > 0.0) x += rng.normal(0.0, spec.noise);
                out[(c * t_len + t) * v + j] = static_cast<float>(x);
            }
        }
    }
    return out;
}

SyntheticData generate_synthetic(const SyntheticSpec& spec, const SkeletonTemplate& skeleton, std::uint64_t seed) {
    skeleton.validate();
    spec.validate(skeleton);
    const auto patterns = spec.resolved_patterns(skeleton);
    Rng root(seed);
    Rng streams[2] = {root.split(), root.split()};
    const std::size_t per_class[2] = {spec.train_per_class, spec.test_per_class};
    SyntheticData data;
    Dataset* splits[2] = {&data.train, &data.test};
    for (int s = 0; s < 2; ++s) {
        Dataset& d = *splits[s];
        d.channels = 3;
        d.frames = spec.frames;
        d.joints = skeleton.joints;
        d.classes = spec.num_classes;
        d.values.reserve(per_class[s] * spec.num_classes * d.sample_size());
        // Classes interleaved so any prefix is balanced.
        for (std::size_t i = 0; i < per_class[s]; ++i) {
            for (std::size_t c = 0; c < spec.num_classes; ++c) {
                auto x = synthetic_sample(spec, skeleton, patterns, c, streams[s]);
                d.values.insert(d.values.end(), x.begin(), x.end());
                d.labels.push_back(static_cast<std::uint32_t>(c));
            }
        }
    }
    return data;
}

}  // namespace stbln
