#include "stbln/commands.hpp"

#include <cstdio>
#include <filesystem>
#include <ostream>

#include "stbln/errors.hpp"
#include "stbln/gradcheck_suite.hpp"
#include "stbln/io.hpp"

namespace stbln {

namespace fs = std::filesystem;

int run_guarded(const std::function<int()>& fn, std::ostream& err) {
    try {
        return fn();
    } catch (const NumericalError& e) {
        err << "numerical failure: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const ParseError& e) {
        err << "parse error: " << e.what() << '\n';
    } catch (const ConfigError& e) {
        err << "invalid configuration: " << e.what() << '\n';
    } catch (const DimensionError& e) {
        err << "shape mismatch: " << e.what() << '\n';
    } catch (const ContractError& e) {
        err << "invalid input: " << e.what() << '\n';
    } catch (const fs::filesystem_error& e) {
        err << "file error: " << e.what() << '\n';
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
    }
    return kExitValidation;
}

SyntheticData load_data(const RunConfig& config, const SkeletonTemplate& skeleton) {
    SyntheticData data;
    if (config.data.source == DataSection::Source::Synthetic) {
        data = generate_synthetic(config.data.synthetic, skeleton, config.data.seed);
    } else {
        if (config.data.train_path.empty()) throw ConfigError("[data] source = file needs train_path");
        data.train = load_dataset(config.data.train_path);
        if (!config.data.test_path.empty()) data.test = load_dataset(config.data.test_path);
    }
    if (config.data.stream == "bone") {
        data.train = bones_dataset(data.train, skeleton);
        if (data.test.size() > 0) data.test = bones_dataset(data.test, skeleton);
    }
    return data;
}

SkeletonTemplate prepare_network(RunConfig& config) {
    SkeletonTemplate skeleton = resolve_graph(config.graph);
    if (!config.input_given) {
        auto& n = config.network;
        if (config.data.source == DataSection::Source::Synthetic) {
            n.in_channels = 3;
            n.frames = config.data.synthetic.frames;
            n.joints = skeleton.joints;
        } else {
            if (config.data.train_path.empty()) throw ConfigError("[data] source = file needs train_path");
            const Dataset d = load_dataset(config.data.train_path);
            n.in_channels = d.channels;
            n.frames = d.frames;
            n.joints = d.joints;
        }
    }
    return skeleton;
}

TrainOutputs cmd_train(const fs::path& config_path, const fs::path& out_dir, std::optional<std::uint64_t> seed,
                       std::ostream& out) {
    RunConfig config = load_run_config(config_path);
    if (seed) config.train.seed = *seed;
    config.train.validate();
    const SkeletonTemplate skeleton = prepare_network(config);
    const SyntheticData data = load_data(config, skeleton);
    Model model(config.network, skeleton, config.train.seed);
    fs::create_directories(out_dir);

    TrainOutputs result;
    const fs::path log_path = out_dir / "train_log.csv";
    TrainLog partial;
    TrainHooks hooks;
    hooks.on_epoch = [&](const EpochRecord& r) {
        partial.epochs.push_back(r);
        write_file(log_path, partial.csv());
        char line[160];
        std::snprintf(line, sizeof line, "epoch %zu  lr %.6g  loss %.6f  train_acc %.4f  test_acc %.4f\n", r.epoch,
                      r.lr, r.train_loss, r.train_acc, r.test_acc);
        out << line << std::flush;
    };
    hooks.checkpoint = [&](const Model& m, const TrainState& state) {
        const auto bytes = encode_checkpoint(make_checkpoint(m, state.rng.state(), state.epoch));
        char name[32];
        std::snprintf(name, sizeof name, "epoch_%04zu.stbc", state.epoch);
        write_file(out_dir / name, bytes);
        if (state.epoch == config.train.epochs) {
            result.final_checkpoint = out_dir / "final.stbc";
            write_file(result.final_checkpoint, bytes);
        }
    };
    out << "training " << model.parameter_count() << " parameters on " << data.train.size() << " samples\n";
    result.log = train(model, data.train, data.test.size() > 0 ? &data.test : nullptr, config.train, hooks);
    out << "wrote " << log_path.string() << " and " << result.final_checkpoint.string() << '\n';
    return result;
}

double cmd_eval(const fs::path& checkpoint, const fs::path& dataset, const fs::path& scores_out,
                const fs::path& labels_out, std::ostream& out) {
    Model model = restore_model(load_checkpoint(checkpoint));
    const Dataset data = load_dataset(dataset);
    const EvalResult r = evaluate(model, data);
    if (!scores_out.empty()) write_file(scores_out, scores_csv(r.scores));
    if (!labels_out.empty()) write_file(labels_out, labels_csv(data.labels));
    char line[96];
    std::snprintf(line, sizeof line, "accuracy %.6f (%zu samples)\n", r.accuracy, data.size());
    out << line;
    return r.accuracy;
}

FlopsReport cmd_flops(const std::optional<fs::path>& config_path, const fs::path& out_dir, std::ostream& out) {
    NetworkConfig network = NetworkConfig::reference();
    if (config_path) {
        RunConfig config = load_run_config(*config_path);
        prepare_network(config);
        network = config.network;
    }
    const FlopsReport report = count_model(network);
    const auto sweep = sweep_lambda(network);
    const std::string text = report.to_text();
    out << text;
    char line[96];
    std::snprintf(line, sizeof line, "total %.4f GFLOPs, %llu parameters\n", report.flops() / 1e9,
                  static_cast<unsigned long long>(report.total_params));
    out << line;
    if (!out_dir.empty()) {
        write_file(out_dir / "flops_report.txt", text);
        write_file(out_dir / "lambda_sweep.csv", lambda_sweep_csv(sweep));
    }
    return report;
}

bool cmd_gradcheck(std::uint64_t seed, std::ostream& out) {
    bool ok = true;
    for (const auto& c : run_gradcheck_suite(seed)) {
        const bool pass = c.result.passed(kGradCheckTolerance);
        ok = ok && pass;
        char line[256];
        std::snprintf(line, sizeof line, "%s  %-40s max rel err %.3e over %zu entries (worst %s[%zu])\n",
                      pass ? "ok  " : "FAIL", c.name.c_str(), c.result.max_rel_error, c.result.checked,
                      c.result.worst_parameter.c_str(), c.result.worst_index);
        out << line;
    }
    return ok;
}

void cmd_gen_data(const std::optional<fs::path>& config_path, const fs::path& out_dir,
                  std::optional<std::uint64_t> seed, std::ostream& out) {
    RunConfig config = config_path ? load_run_config(*config_path) : RunConfig{};
    if (seed) config.data.seed = *seed;
    if (config.data.source != DataSection::Source::Synthetic) {
        throw ConfigError("gen-data needs [data] source = synthetic");
    }
    const SkeletonTemplate skeleton = resolve_graph(config.graph);
    const SyntheticData data = load_data(config, skeleton);
    save_dataset(out_dir / "train.stbn", data.train);
    save_dataset(out_dir / "test.stbn", data.test);
    out << "wrote " << data.train.size() << " training and " << data.test.size() << " test samples to "
        << out_dir.string() << '\n';
}

double cmd_fuse(const fs::path& scores_a, const fs::path& scores_b, const fs::path& labels, std::ostream& out) {
    const Tensor a = parse_scores_csv(read_file(scores_a));
    const Tensor b = parse_scores_csv(read_file(scores_b));
    const std::string label_bytes = read_file(labels);
    const auto y = label_bytes.rfind("STBN", 0) == 0 ? decode_dataset(label_bytes).labels : parse_labels_csv(label_bytes);
    if (y.size() != a.dim(0)) {
        throw DimensionError("score files have " + std::to_string(a.dim(0)) + " rows but there are " +
                             std::to_string(y.size()) + " labels");
    }
    const double acc_a = accuracy(argmax_rows(a), y);
    const double acc_b = accuracy(argmax_rows(b), y);
    const double fused = accuracy(fuse_two_stream(a, b), y);
    char line[128];
    std::snprintf(line, sizeof line, "stream a %.6f  stream b %.6f  fused %.6f\n", acc_a, acc_b, fused);
    out << line;
    return fused;
}

}  // namespace stbln
