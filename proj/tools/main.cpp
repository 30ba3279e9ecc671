#include <CLI11.hpp>
#include <iostream>

#include "stbln/commands.hpp"
#include "stbln/runtime.hpp"

namespace fs = std::filesystem;
using namespace stbln;

int main(int argc, char** argv) {
    tune_allocator();
    CLI::App app{"Spatio-temporal bilinear network for skeleton action recognition"};
    app.require_subcommand(0, 1);
    bool dump_defaults = false;
    app.add_flag("--dump-defaults", dump_defaults, "Print a run config with every key at its default and exit");

    auto* train = app.add_subcommand("train", "Train a model from a run config");
    fs::path train_config, train_out;
    std::optional<std::uint64_t> train_seed;
    train->add_option("config", train_config, "Run config file")->required()->check(CLI::ExistingFile);
    train->add_option("-o,--out", train_out, "Output directory")->required();
    train->add_option("--seed", train_seed, "Override [train] seed");

    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset file");
    fs::path eval_ckpt, eval_data, eval_scores, eval_labels;
    eval->add_option("checkpoint", eval_ckpt)->required()->check(CLI::ExistingFile);
    eval->add_option("dataset", eval_data)->required()->check(CLI::ExistingFile);
    eval->add_option("--scores", eval_scores, "Write softmax rows as CSV");
    eval->add_option("--labels", eval_labels, "Write labels as CSV");

    auto* flops = app.add_subcommand("flops", "Count FLOPs and parameters");
    std::optional<fs::path> flops_config;
    fs::path flops_out;
    flops->add_option("config", flops_config, "Run config (default: reference bilinear network)")
        ->check(CLI::ExistingFile);
    flops->add_option("-o,--out", flops_out, "Write flops_report.txt and lambda_sweep.csv here");

    auto* grad = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
    std::uint64_t grad_seed = 1;
    grad->add_option("--seed", grad_seed);

    auto* gen = app.add_subcommand("gen-data", "Write synthetic train/test dataset files");
    std::optional<fs::path> gen_config;
    fs::path gen_out;
    std::optional<std::uint64_t> gen_seed;
    gen->add_option("config", gen_config, "Run config whose [data] and [graph] sections are used")
        ->check(CLI::ExistingFile);
    gen->add_option("-o,--out", gen_out, "Output directory")->required();
    gen->add_option("--seed", gen_seed, "Override [data] seed");

    auto* fuse = app.add_subcommand("fuse", "Fuse two score files and report accuracy");
    fs::path fuse_a, fuse_b, fuse_labels;
    fuse->add_option("scores_a", fuse_a)->required()->check(CLI::ExistingFile);
    fuse->add_option("scores_b", fuse_b)->required()->check(CLI::ExistingFile);
    fuse->add_option("labels", fuse_labels, "Dataset file or label CSV")->required()->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }
    if (dump_defaults) {
        std::cout << format_run_config(RunConfig{});
        return kExitOk;
    }
    auto& out = std::cout;
    auto& err = std::cerr;
    if (*train) return run_guarded([&] { cmd_train(train_config, train_out, train_seed, out); return 0; }, err);
    if (*eval) return run_guarded([&] { cmd_eval(eval_ckpt, eval_data, eval_scores, eval_labels, out); return 0; }, err);
    if (*flops) return run_guarded([&] { cmd_flops(flops_config, flops_out, out); return 0; }, err);
    if (*grad) return run_guarded([&] { return cmd_gradcheck(grad_seed, out) ? 0 : int{kExitNumerical}; }, err);
    if (*gen) return run_guarded([&] { cmd_gen_data(gen_config, gen_out, gen_seed, out); return 0; }, err);
    if (*fuse) return run_guarded([&] { cmd_fuse(fuse_a, fuse_b, fuse_labels, out); return 0; }, err);
    std::cerr << app.help();
    return kExitUsage;
}
