#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "stbln/dataset.hpp"
#include "stbln/network.hpp"
#include "stbln/random.hpp"

namespace stbln {

/// Mean over the batch of -log softmax(logits)[label]. Throws ContractError
/// on a label outside [0, K).
Tensor cross_entropy(const Tensor& logits, const std::vector<std::size_t>& labels);

struct TrainConfig {
    std::size_t epochs = 50;
    std::size_t batch_size = 64;
    double lr = 0.1;
    std::vector<std::size_t> lr_drop_epochs{30, 40};
    double lr_drop_factor = 10.0;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    std::uint64_t seed = 0;
    /// Arithmetic precision; only "float64" is implemented.
    std::string precision = "float64";
    /// Write a checkpoint every this many epochs (0: only after the last).
    std::size_t checkpoint_every = 0;

    /// Throws ConfigError.
    void validate() const;
    bool operator==(const TrainConfig&) const = default;
};

/// Step schedule over 0-based epochs: lr / factor^(number of drops <= epoch).
double learning_rate(const TrainConfig& config, std::size_t epoch);

/// Momentum buffers, one per parameter in Model::parameters() order.
struct SgdState {
    std::vector<std::vector<double>> velocity;
};

/// In-place update with each parameter's accumulated gradient:
///   v = momentum * v + (g + weight_decay * p);  p -= lr(epoch) * v
/// Throws NumericalError naming the parameter if a gradient is not finite.
void sgd_step(const std::vector<NamedTensor>& params, SgdState& state, const TrainConfig& config, std::size_t epoch);

struct EpochRecord {
    std::size_t epoch = 0;  // 0-based
    double lr = 0.0;
    double train_loss = 0.0;
    double train_acc = 0.0;
    double test_acc = 0.0;  // NaN without a test split

    bool operator==(const EpochRecord&) const = default;
};

struct TrainLog {
    std::vector<EpochRecord> epochs;

    /// `epoch,lr,train_loss,train_acc,test_acc`, values printed round-trip exact.
    std::string csv() const;
};

/// Everything besides the model needed to describe where training stands.
struct TrainState {
    Rng rng;
    SgdState sgd;
    std::size_t epoch = 0;  // epochs completed
};

struct TrainHooks {
    std::function<void(const EpochRecord&)> on_epoch;
    /// Called after the epochs selected by checkpoint_every and after the last.
    std::function<void(const Model&, const TrainState&)> checkpoint;
};

/// Trains with mini-batch SGD on shuffled data. Deterministic for a given
/// model, data and config. Throws NumericalError as soon as the loss is
/// not finite, so checkpoints already written stay the last good ones.
TrainLog train(Model& model, const Dataset& train_set, const Dataset* test_set, const TrainConfig& config,
               const TrainHooks& hooks = {});

struct EvalResult {
    double accuracy = 0.0;
    Tensor scores;  // softmax rows, [N x K]
    std::vector<std::size_t> predictions;
};

EvalResult evaluate(Model& model, const Dataset& data, std::size_t batch_size = 64);

/// Fraction of rows whose argmax equals the label.
double accuracy(const std::vector<std::size_t>& predictions, const std::vector<std::uint32_t>& labels);

/// Throws DimensionError when the dataset does not fit the model's input.
void check_compatible(const Model& model, const Dataset& data);

}  // namespace stbln
