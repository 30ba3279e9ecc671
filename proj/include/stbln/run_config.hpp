#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "stbln/network.hpp"
#include "stbln/synthetic.hpp"
#include "stbln/training.hpp"

namespace stbln {

struct DataSection {
    enum class Source { Synthetic, File };
    Source source = Source::Synthetic;
    SyntheticSpec synthetic;
    std::uint64_t seed = 1;
    /// Dataset files; relative paths resolve against the config file.
    std::filesystem::path train_path;
    std::filesystem::path test_path;
    /// "joint" or "bone" (bone vectors derived from joint coordinates).
    std::string stream = "joint";

    bool operator==(const DataSection&) const = default;
};

struct GraphSection {
    /// "ntu25" or a template file path.
    std::string template_name = "ntu25";

    bool operator==(const GraphSection&) const = default;
};

/// Contents of a run config file. Input dimensions of `network` are filled
/// in from the data unless the file sets `input = CxTxV`.
struct RunConfig {
    NetworkConfig network = NetworkConfig::reference();
    bool input_given = false;
    TrainConfig train;
    DataSection data;
    GraphSection graph;

    bool operator==(const RunConfig&) const = default;
};

/// INI-style text with [network], [train], [data] and [graph] sections.
/// Unknown sections or keys and malformed values throw ParseError naming
/// the key, with the 1-based line number as position().
RunConfig parse_run_config(std::istream& in, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

/// Every key with its value; parse_run_config(format_run_config(c)) == c.
std::string format_run_config(const RunConfig& config);

/// Skeleton named by the [graph] section.
SkeletonTemplate resolve_graph(const GraphSection& graph, const std::filesystem::path& base_dir = {});

/// `C:stride[:nodes]` entries separated by commas.
std::vector<LayerSpec> parse_layers(const std::string& text, SpatialVariant variant);
std::string format_layers(const std::vector<LayerSpec>& layers);

}  // namespace stbln
