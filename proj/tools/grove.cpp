// grove: command-line front end for the forest library.
//
// Subcommands: generate, train, stream, bench, predict. Each accepts an
// optional key = value config file plus flags; flags are applied after the
// file in command-line order, so later settings win.

#include <exception>
#include <iostream>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "grove/experiment.hpp"

namespace {

/// Settings collected while parsing one subcommand, applied in order.
struct Overrides {
    std::string config_path;
    std::vector<std::pair<std::string, std::string>> entries;
};

using OverridesPtr = std::shared_ptr<Overrides>;

/// Bind a flag that writes one config key.
void bind_key(CLI::App* cmd, const OverridesPtr& ov, const std::string& flag, const std::string& key,
          const std::string& help) {
    cmd->add_option_function<std::string>(
        flag, [ov, key](const std::string& v) { ov->entries.emplace_back(key, v); }, help);
}

/// Bind a boolean flag that writes a fixed key=value pair when present.
void bind_flag(CLI::App* cmd, const OverridesPtr& ov, const std::string& flag, const std::string& key,
               const std::string& value, const std::string& help) {
    cmd->add_flag_function(
        flag, [ov, key, value](std::int64_t) { ov->entries.emplace_back(key, value); }, help);
}

OverridesPtr add_common(CLI::App* cmd) {
    auto ov = std::make_shared<Overrides>();
    cmd->add_option("--config", ov->config_path, "key = value config file");
    cmd->add_option_function<std::string>(
        "--set",
        [ov](const std::string& kv) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos)
                throw CLI::ValidationError("--set expects key=value, got '" + kv + "'");
            ov->entries.emplace_back(kv.substr(0, eq), kv.substr(eq + 1));
        },
        "override any config key, e.g. --set trees=200");
    return ov;
}

void add_data_flags(CLI::App* cmd, const OverridesPtr& ov) {
    cmd->add_option_function<std::string>(
        "--data",
        [ov](const std::string& v) {
            ov->entries.emplace_back("data.source", "csv");
            ov->entries.emplace_back("data.csv", v);
        },
        "train on this CSV file instead of simulating");
    bind_key(cmd, ov, "--schema", "data.schema", "column-role schema for --data");
    bind_key(cmd, ov, "--rows", "data.rows", "simulated dataset size");
    bind_key(cmd, ov, "--data-seed", "data.seed", "simulation seed");
    bind_key(cmd, ov, "--bias", "bias.kind", "dataset permutation: none, unbalanced, xbiases");
    bind_key(cmd, ov, "--bias-p", "bias.p", "class-1 share of the first half (unbalanced)");
    bind_key(cmd, ov, "--bias-parts", "bias.parts", "part count (xbiases)");
    cmd->add_option_function<std::string>(
        "--test-rows",
        [ov](const std::string& v) {
            ov->entries.emplace_back("test.source", "simulate");
            ov->entries.emplace_back("test.rows", v);
        },
        "also simulate a test set of this size");
    cmd->add_option_function<std::string>(
        "--test-data",
        [ov](const std::string& v) {
            ov->entries.emplace_back("test.source", "csv");
            ov->entries.emplace_back("test.csv", v);
        },
        "evaluate on this CSV test set");
    bind_key(cmd, ov, "--test-schema", "test.schema", "column-role schema for --test-data");
}

void add_train_flags(CLI::App* cmd, const OverridesPtr& ov) {
    bind_key(cmd, ov, "--variant", "variant", "standard, subsample, moon, blb, or dac");
    bind_key(cmd, ov, "--trees", "trees", "total tree count Q");
    bind_key(cmd, ov, "--m", "m", "subsample size m");
    bind_key(cmd, ov, "--fraction", "fraction", "subsample fraction f (m = floor(f n))");
    bind_key(cmd, ov, "--chunks", "chunks", "subsample or chunk count K (blb, dac)");
    bind_key(cmd, ov, "--group-trees", "group_trees", "trees per subsample or chunk q (blb, dac)");
    bind_key(cmd, ov, "--mtry", "mtry", "features tried per node (0: floor(sqrt(p)))");
    bind_key(cmd, ov, "--max-leaves", "max_leaves", "leaf budget per tree (0: unlimited)");
    bind_key(cmd, ov, "--max-depth", "max_depth", "depth cap (0: unlimited)");
    bind_key(cmd, ov, "--split-mode", "split_mode", "exhaustive or ert");
    bind_key(cmd, ov, "--candidates", "candidates", "random split candidates per node (ert)");
    bind_key(cmd, ov, "--seed", "seed", "master seed");
    bind_key(cmd, ov, "--workers", "workers", "worker threads (0: all cores)");
    bind_key(cmd, ov, "--model-out", "model.out", "save the trained model here");
    bind_key(cmd, ov, "--report", "report.out", "append a report record here");
    bind_flag(cmd, ov, "--importance", "importance", "true", "compute permutation variable importance");
    bind_flag(cmd, ov, "--no-oob", "oob", "false", "skip the full out-of-bag error");
    bind_flag(cmd, ov, "--no-bd", "bd", "false", "skip the variant-specific error approximation");
}

grove::ExperimentConfig resolve(const OverridesPtr& ov) {
    grove::ExperimentConfig config;
    if (!ov->config_path.empty()) grove::apply_config_file(config, ov->config_path);
    for (const auto& [key, value] : ov->entries) config.set(key, value);
    return config;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"grove: random-forest variants for large classification datasets"};
    app.require_subcommand(1);

    CLI::App* generate = app.add_subcommand("generate", "simulate a dataset and write CSV + schema");
    auto gen_ov = add_common(generate);
    add_data_flags(generate, gen_ov);
    bind_key(generate, gen_ov, "--out", "out.csv", "output CSV path");
    bind_key(generate, gen_ov, "--schema-out", "out.schema", "output schema path (default: <out>.schema)");
    bind_key(generate, gen_ov, "--balance", "data.class_balance", "P(class 1)");
    generate->callback([gen_ov]() { grove::run_generate(resolve(gen_ov), std::cout); });

    CLI::App* train = app.add_subcommand("train", "train a batch forest and evaluate it");
    auto train_ov = add_common(train);
    add_data_flags(train, train_ov);
    add_train_flags(train, train_ov);
    train->callback([train_ov]() { grove::run_train(resolve(train_ov), std::cout); });

    CLI::App* stream = app.add_subcommand("stream", "feed rows through an online forest");
    auto stream_ov = add_common(stream);
    add_data_flags(stream, stream_ov);
    bind_key(stream, stream_ov, "--trees", "trees", "online tree count");
    bind_key(stream, stream_ov, "--candidates", "candidates", "pre-drawn split candidates per leaf");
    bind_key(stream, stream_ov, "--lambda", "lambda", "replication rate");
    bind_key(stream, stream_ov, "--alpha", "split_min_count", "arrivals needed before a leaf may split");
    bind_key(stream, stream_ov, "--beta", "split_min_decrease", "impurity decrease needed to commit a split");
    bind_key(stream, stream_ov, "--rho", "two_stream_rho", "structure-stream probability (two-stream mode)");
    bind_key(stream, stream_ov, "--max-depth", "max_depth", "depth cap (0: unlimited)");
    bind_key(stream, stream_ov, "--range-lo", "range_lo", "declared lower feature bound");
    bind_key(stream, stream_ov, "--range-hi", "range_hi", "declared upper feature bound");
    bind_key(stream, stream_ov, "--checkpoint-every", "checkpoint_every", "checkpoint cadence in rows (0: off)");
    bind_key(stream, stream_ov, "--report-every", "report_every", "progress cadence in rows (0: off)");
    bind_key(stream, stream_ov, "--model-out", "model.out", "checkpoint / final model path");
    bind_key(stream, stream_ov, "--report", "report.out", "append a report record here");
    bind_key(stream, stream_ov, "--seed", "seed", "master seed");
    stream->callback([stream_ov]() { grove::run_stream(resolve(stream_ov), std::cout); });

    CLI::App* bench = app.add_subcommand("bench", "sweep K, q, or f and record timings");
    auto bench_ov = add_common(bench);
    add_data_flags(bench, bench_ov);
    add_train_flags(bench, bench_ov);
    bind_key(bench, bench_ov, "--sweep", "bench.sweep", "parameter to sweep: K, q, or f");
    bind_key(bench, bench_ov, "--values", "bench.values", "comma-separated sweep values");
    bind_key(bench, bench_ov, "--reps", "bench.reps", "repetitions per cell (median time kept)");
    bench->callback([bench_ov]() { grove::run_bench(resolve(bench_ov), std::cout); });

    CLI::App* predict = app.add_subcommand("predict", "apply a saved model to a CSV");
    auto pred_ov = add_common(predict);
    bind_key(predict, pred_ov, "--model", "model.in", "model file (batch forest or online checkpoint)");
    predict->add_option_function<std::string>(
        "--data",
        [pred_ov](const std::string& v) { pred_ov->entries.emplace_back("data.csv", v); },
        "CSV file to predict");
    bind_key(predict, pred_ov, "--schema", "data.schema", "column-role schema for --data");
    bind_key(predict, pred_ov, "--out", "predictions.out", "write row,prediction CSV here");
    bind_key(predict, pred_ov, "--workers", "workers", "worker threads (0: all cores)");
    predict->callback([pred_ov]() { grove::run_predict(resolve(pred_ov), std::cout); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
