#include "stbln/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "stbln/errors.hpp"

namespace stbln {

Tensor cross_entropy(const Tensor& logits, const std::vector<std::size_t>& labels) {
    if (logits.ndim() != 2) throw DimensionError("cross_entropy: expected [N x K] logits, got " + to_string(logits.shape()));
    const std::size_t n = logits.dim(0), k = logits.dim(1);
    if (labels.size() != n) {
        throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for " + std::to_string(n) +
                             " rows");
    }
    for (auto y : labels) {
        if (y >= k) throw ContractError("cross_entropy: label " + std::to_string(y) + " outside [0, " + std::to_string(k) + ")");
    }
    auto x = logits.data();
    std::vector<double> prob(n * k);
    double loss = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
        const double* row = x.data() + r * k;
        const double mx = *std::max_element(row, row + k);
        double z = 0.0;
        for (std::size_t j = 0; j < k; ++j) z += std::exp(row[j] - mx);
        const double log_z = mx + std::log(z);
        for (std::size_t j = 0; j < k; ++j) prob[r * k + j] = std::exp(row[j] - log_z);
        loss += log_z - row[labels[r]];
    }
    Tensor out = Tensor::scalar(loss / static_cast<double>(n));
    if (autograd::should_record({&logits})) {
        autograd::record("cross_entropy", {logits}, out,
                         [logits, prob = std::move(prob), labels, n, k](std::span<const double> g) {
                             auto buf = logits.grad_buffer();
                             const double s = g[0] / static_cast<double>(n);
                             for (std::size_t r = 0; r < n; ++r) {
                                 for (std::size_t j = 0; j < k; ++j) {
                                     const double target = j == labels[r] ? 1.0 : 0.0;
                                     buf[r * k + j] += s * (prob[r * k + j] - target);
                                 }
                             }
                         });
    }
    return out;
}

void TrainConfig::validate() const {
    if (epochs == 0) throw ConfigError("epochs must be positive");
    if (batch_size == 0) throw ConfigError("batch size must be positive");
    if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("learning rate must be positive");
    if (!(lr_drop_factor > 0.0)) throw ConfigError("learning-rate drop factor must be positive");
    if (momentum < 0.0 || weight_decay < 0.0) throw ConfigError("momentum and weight decay must be non-negative");
    for (std::size_t i = 0; i < lr_drop_epochs.size(); ++i) {
        if (i > 0 && lr_drop_epochs[i] <= lr_drop_epochs[i - 1]) {
            throw ConfigError("learning-rate drop epochs must be strictly increasing");
        }
        if (lr_drop_epochs[i] >= epochs) {
            throw ConfigError("learning-rate drop epoch " + std::to_string(lr_drop_epochs[i]) +
                              " is not below the epoch count " + std::to_string(epochs));
        }
    }
    if (precision != "float64") {
        throw ConfigError("precision '" + precision + "' is not supported; training runs in float64");
    }
}

double learning_rate(const TrainConfig& config, std::size_t epoch) {
    double lr = config.lr;
    for (auto e : config.lr_drop_epochs) {
        if (epoch >= e) lr /= config.lr_drop_factor;
    }
    return lr;
}

void sgd_step(const std::vector<NamedTensor>& params, SgdState& state, const TrainConfig& config, std::size_t epoch) {
    if (state.velocity.empty()) {
        for (const auto& [name, p] : params) state.velocity.emplace_back(p.numel(), 0.0);
    }
    if (state.velocity.size() != params.size()) throw ContractError("optimizer state does not match the parameters");
    const double lr = learning_rate(config, epoch);
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& [name, p] = params[i];
        auto g = p.grad_data();
        if (!g.empty() && g.size() != p.numel()) {
            throw DimensionError("gradient of " + name + " has " + std::to_string(g.size()) + " entries, expected " +
                                 std::to_string(p.numel()));
        }
        for (std::size_t j = 0; j < g.size(); ++j) {
            if (!std::isfinite(g[j])) {
                throw NumericalError("non-finite gradient in parameter " + name + " at index " + std::to_string(j));
            }
        }
        auto& v = state.velocity[i];
        if (v.size() != p.numel()) throw ContractError("optimizer state for " + name + " has the wrong size");
        Tensor handle = p;
        auto w = handle.mutable_data();
        for (std::size_t j = 0; j < w.size(); ++j) {
            const double grad = (g.empty() ? 0.0 : g[j]) + config.weight_decay * w[j];
            v[j] = config.momentum * v[j] + grad;
            w[j] -= lr * v[j];
        }
    }
}

std::string TrainLog::csv() const {
    std::string out = "epoch,lr,train_loss,train_acc,test_acc\n";
    char line[160];
    for (const auto& e : epochs) {
        std::snprintf(line, sizeof line, "%zu,%.17g,%.17g,%.17g,%.17g\n", e.epoch, e.lr, e.train_loss, e.train_acc,
                      e.test_acc);
        out += line;
    }
    return out;
}

void check_compatible(const Model& model, const Dataset& data) {
    data.validate();
    const auto& c = model.config();
    if (data.channels != c.in_channels || data.frames != c.frames || data.joints != c.joints) {
        throw DimensionError("dataset samples are " + std::to_string(data.channels) + " x " +
                             std::to_string(data.frames) + " x " + std::to_string(data.joints) + " but the model takes " +
                             std::to_string(c.in_channels) + " x " + std::to_string(c.frames) + " x " +
                             std::to_string(c.joints));
    }
    if (data.classes > c.num_classes) {
        throw DimensionError("dataset has " + std::to_string(data.classes) + " classes, the model outputs " +
                             std::to_string(c.num_classes));
    }
}

double accuracy(const std::vector<std::size_t>& predictions, const std::vector<std::uint32_t>& labels) {
    if (predictions.size() != labels.size()) throw DimensionError("accuracy: prediction and label counts differ");
    if (labels.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::size_t hits = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) hits += predictions[i] == labels[i];
    return static_cast<double>(hits) / static_cast<double>(labels.size());
}

EvalResult evaluate(Model& model, const Dataset& data, std::size_t batch_size) {
    check_compatible(model, data);
    if (batch_size == 0) throw ConfigError("batch size must be positive");
    const std::size_t k = model.config().num_classes;
    std::vector<double> scores;
    scores.reserve(data.size() * k);
    EvalResult r;
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < data.size(); start += batch_size) {
        idx.resize(std::min(batch_size, data.size() - start));
        std::iota(idx.begin(), idx.end(), start);
        Tensor p = softmax(model.forward(data.batch(idx), Mode::Eval));
        scores.insert(scores.end(), p.data().begin(), p.data().end());
        for (auto y : argmax_rows(p)) r.predictions.push_back(y);
    }
    r.scores = Tensor({data.size(), k}, std::move(scores));
    r.accuracy = accuracy(r.predictions, data.labels);
    return r;
}

TrainLog train(Model& model, const Dataset& train_set, const Dataset* test_set, const TrainConfig& config,
               const TrainHooks& hooks) {
    config.validate();
    check_compatible(model, train_set);
    if (test_set != nullptr) check_compatible(model, *test_set);
    if (train_set.size() == 0) throw ConfigError("training set is empty");

    TrainState state{Rng(config.seed).split(), {}, 0};
    const auto params = model.parameters();
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);
    TrainLog log;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[state.rng.below(i)]);
        double loss_sum = 0.0;
        std::size_t hits = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t count = std::min(config.batch_size, order.size() - start);
            std::span<const std::size_t> idx(order.data() + start, count);
            const auto labels = train_set.batch_labels(idx);
            for (const auto& [name, p] : params) p.zero_grad();
            GradTape tape;
            Tensor loss;
            {
                TapeScope scope(tape);
                Tensor logits = model.forward(train_set.batch(idx), Mode::Train);
                loss = cross_entropy(logits, labels);
                const auto pred = argmax_rows(logits);
                for (std::size_t i = 0; i < count; ++i) hits += pred[i] == labels[i];
            }
            if (!std::isfinite(loss.item())) {
                throw NumericalError("training loss is not finite at epoch " + std::to_string(epoch) + ", batch " +
                                     std::to_string(start / config.batch_size));
            }
            tape.backward(loss);
            sgd_step(params, state.sgd, config, epoch);
            loss_sum += loss.item() * static_cast<double>(count);
        }
        EpochRecord rec;
        rec.epoch = epoch;
        rec.lr = learning_rate(config, epoch);
        rec.train_loss = loss_sum / static_cast<double>(order.size());
        rec.train_acc = static_cast<double>(hits) / static_cast<double>(order.size());
        rec.test_acc = test_set != nullptr ? evaluate(model, *test_set, config.batch_size).accuracy
                                           : std::numeric_limits<double>::quiet_NaN();
        log.epochs.push_back(rec);
        state.epoch = epoch + 1;
        if (hooks.on_epoch) hooks.on_epoch(rec);
        const bool last = epoch + 1 == config.epochs;
        const bool due = config.checkpoint_every != 0 && (epoch + 1) % config.checkpoint_every == 0;
        if (hooks.checkpoint && (last || due)) hooks.checkpoint(model, state);
    }
    return log;
}

}  // namespace stbln
