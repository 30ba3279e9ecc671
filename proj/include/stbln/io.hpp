#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "stbln/dataset.hpp"
#include "stbln/network.hpp"
#include "stbln/training.hpp"

namespace stbln {

// Binary formats are little-endian. Decoders throw ParseError whose
// position() is the byte offset where the problem was found.

inline constexpr std::uint32_t kDatasetFormatVersion = 1;
inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

/// `STBN`, version, N, C, T, V, K (u32 each), N*C*T*V float32, N u32 labels.
std::string encode_dataset(const Dataset& data);
Dataset decode_dataset(const std::string& bytes);
void save_dataset(const std::filesystem::path& path, const Dataset& data);
Dataset load_dataset(const std::filesystem::path& path);

struct Blob {
    std::string name;
    Shape shape;
    std::vector<float> values;

    bool operator==(const Blob&) const = default;
};

struct Checkpoint {
    NetworkConfig config;
    std::optional<SkeletonTemplate> skeleton;
    std::vector<Blob> parameters;   // Model::parameters() order
    std::vector<Blob> batch_norm;   // per BN: "<name>.mean" then "<name>.var"
    std::string rng_state;
    std::uint64_t epoch = 0;

    bool operator==(const Checkpoint&) const;
};

Checkpoint make_checkpoint(const Model& model, const std::string& rng_state, std::uint64_t epoch);
/// Rebuilds the model; every blob name and shape must match the config.
Model restore_model(const Checkpoint& checkpoint);

std::string encode_checkpoint(const Checkpoint& checkpoint);
Checkpoint decode_checkpoint(const std::string& bytes);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Per-sample score rows with header `p0,...,p{K-1}`.
std::string scores_csv(const Tensor& scores);
Tensor parse_scores_csv(const std::string& text);
/// One label per row with header `label`.
std::string labels_csv(const std::vector<std::uint32_t>& labels);
std::vector<std::uint32_t> parse_labels_csv(const std::string& text);

std::string read_file(const std::filesystem::path& path);
/// Writes through a temporary file and rename, so readers never see a
/// partially written file.
void write_file(const std::filesystem::path& path, const std::string& bytes);

}  // namespace stbln
