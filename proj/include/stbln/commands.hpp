#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>

#include "stbln/flops.hpp"
#include "stbln/run_config.hpp"

namespace stbln {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitValidation = 2, kExitNumerical = 3 };

/// Runs `fn`, printing any error to `err` and mapping it to an exit code:
/// numerical failures to 3, every other library or file error to 2.
int run_guarded(const std::function<int()>& fn, std::ostream& err);

/// Fills the network's input dimensions from the data section unless the
/// config fixes them, and returns the skeleton named by [graph].
SkeletonTemplate prepare_network(RunConfig& config);

/// Train and test splits described by the [data] section, in the chosen stream.
SyntheticData load_data(const RunConfig& config, const SkeletonTemplate& skeleton);

struct TrainOutputs {
    TrainLog log;
    std::filesystem::path final_checkpoint;
};

/// Writes `train_log.csv`, `epoch_NNNN.stbc` checkpoints and `final.stbc` into `out_dir`.
TrainOutputs cmd_train(const std::filesystem::path& config_path, const std::filesystem::path& out_dir,
                       std::optional<std::uint64_t> seed, std::ostream& out);

/// Prints the accuracy; writes softmax rows and labels as CSV when paths are given.
double cmd_eval(const std::filesystem::path& checkpoint, const std::filesystem::path& dataset,
                const std::filesystem::path& scores_out, const std::filesystem::path& labels_out, std::ostream& out);

/// Per-layer report and lambda sweep; the reference network when no config is given.
FlopsReport cmd_flops(const std::optional<std::filesystem::path>& config_path, const std::filesystem::path& out_dir,
                      std::ostream& out);

/// Returns true when every case is below the tolerance.
bool cmd_gradcheck(std::uint64_t seed, std::ostream& out);

/// Writes `train.stbn` and `test.stbn` into `out_dir`.
void cmd_gen_data(const std::optional<std::filesystem::path>& config_path, const std::filesystem::path& out_dir,
                  std::optional<std::uint64_t> seed, std::ostream& out);

/// Accuracy of the argmax of summed score rows. `labels` is a dataset file
/// or a `label` CSV.
double cmd_fuse(const std::filesystem::path& scores_a, const std::filesystem::path& scores_b,
                const std::filesystem::path& labels, std::ostream& out);

}  // namespace stbln
