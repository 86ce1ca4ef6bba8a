#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "grove/csv.hpp"
#include "grove/dataset.hpp"
#include "grove/eval.hpp"
#include "grove/forest.hpp"
#include "grove/online.hpp"
#include "grove/resample.hpp"

namespace grove {

/// Everything a run needs, resolved from defaults, an optional key=value
/// config file, and command-line flags (flags win). Every emitted report
/// record echoes the resolved values.
struct ExperimentConfig {
    // dataset
    std::string data_source = "simulate";  // simulate | csv
    std::size_t rows = 100000;
    std::uint64_t data_seed = 1;
    double class_balance = 0.5;
    double submodel1_prob = 0.7;
    bool standardize = true;
    std::string data_csv, data_schema;
    std::string bias = "none";  // none | unbalanced | xbiases
    double bias_p = 0.5;
    std::uint32_t bias_parts = 2;
    std::uint64_t bias_seed = 9;
    // test set
    std::string test_source = "none";  // none | simulate | csv
    std::size_t test_rows = 0;
    std::uint64_t test_seed = 2;
    std::string test_csv, test_schema;
    // variant and resampling
    std::string variant = "standard";  // standard | subsample | moon | blb | dac
    std::uint32_t trees = 100;
    std::size_t m = 0;       // explicit subsample size; 0 defers to fraction
    double fraction = 0.0;   // f: m = floor(f * n) when m == 0
    std::uint32_t chunks = 0;
    std::uint32_t group_trees = 0;
    // tree growth
    std::uint32_t mtry = 0;  // 0: floor(sqrt(p))
    std::uint32_t max_leaves = 500;
    std::uint32_t max_depth = 0;
    double min_node_weight = 2.0;
    std::string split_mode = "exhaustive";  // exhaustive | ert
    std::uint32_t candidates = 10;          // S: ert and online candidate count
    // online
    double lambda = 1.0;
    std::uint32_t split_min_count = 50;
    double split_min_decrease = 0.01;
    double two_stream_rho = 0.0;
    double range_lo = -6.0;
    double range_hi = 6.0;
    std::uint32_t checkpoint_every = 0;
    std::uint32_t report_every = 10000;
    // run
    std::uint64_t seed = 42;
    unsigned workers = 0;  // 0: hardware concurrency
    bool oob = true;
    bool bd = true;
    bool importance = false;
    std::string model_out, report_out, out_csv, out_schema, predictions_out, model_in;
    // bench
    std::string sweep = "K";  // K | q | f
    std::vector<double> sweep_values;
    std::uint32_t reps = 1;

    void set(const std::string& key, const std::string& value);
    std::vector<std::pair<std::string, std::string>> resolved() const;
};

namespace detail {

inline bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw std::invalid_argument("config key '" + key + "': expected a boolean, got '" + v + "'");
}

inline std::string format_double(double v) {
    std::ostringstream out;
    out << std::setprecision(12) << v;
    return out.str();
}

}  // namespace detail

inline void ExperimentConfig::set(const std::string& key, const std::string& value) {
    try {
        if (key == "data.source") data_source = value;
        else if (key == "data.rows") rows = std::stoull(value);
        else if (key == "data.seed") data_seed = std::stoull(value);
        else if (key == "data.class_balance") class_balance = std::stod(value);
        else if (key == "data.submodel1_prob") submodel1_prob = std::stod(value);
        else if (key == "data.standardize") standardize = detail::parse_bool(value, key);
        else if (key == "data.csv") data_csv = value;
        else if (key == "data.schema") data_schema = value;
        else if (key == "bias.kind") bias = value;
        else if (key == "bias.p") bias_p = std::stod(value);
        else if (key == "bias.parts") bias_parts = static_cast<std::uint32_t>(std::stoul(value));
        else if (key == "bias.seed") bias_seed = std::stoull(value);
        else if (key == "test.source") test_source = value;
        else if (key == "test.rows") test_rows = std::stoull(value);
        else if (key == "test.seed") test_seed = std::stoull(value);
        else if (key == "test.csv") test_csv = value;
        else if (key == "test.schema") test_schema = value;
        else if (key == "variant") variant = value;
        else if (key == "trees") trees = static_cast<std::uint32_t>(std::stoul(value));
        else if (key == "m") m = std::stoull(value);
        else if (key == "fraction") fraction = std::stod(value);
        else if (key == "chunks") chunks = static_cast<std::uint32_t>(std::stoul(value));
        else if (key == "group_trees") group_trees = static_cast<std::uint32_t>(std::stoul(value));
        else if (key == "mtry") mtry = static_cast<std::uint32_t>(std::stoul(value));
        else if (key == "max_leaves") max_leaves = static_cast<std::uint32_t>(std::stoul(value));
        else if (key == "max_depth") max_depth = static_cast<std::uint32_t>(std::stoul(value));
        else if (key == "min_node_weight") min_node_weight = std::stod(value);
        else if (key == "split_mode") split_mode = value;
        else if (key == "candidates") candidates = static_cast<std::uint32_t>(std::stoul(value));
        else if (key == "lambda") lambda = std::stod(value);
        else if (key == "split_min_count") split_min_count = static_cast<std::uint32_t>(std::stoul(value));
        else if (key == "split_min_decrease") split_min_decrease = std::stod(value);
        else if (key == "two_stream_rho") two_stream_rho = std::stod(value);
        else if (key == "range_lo") range_lo = std::stod(value);
        else if (key == "range_hi") range_hi = std::stod(value);
        else if (key == "checkpoint_every") checkpoint_every = static_cast<std::uint32_t>(std::stoul(value));
        else if (key == "report_every") report_every = static_cast<std::uint32_t>(std::stoul(value));
        else if (key == "seed") seed = std::stoull(value);
        else if (key == "workers") workers = static_cast<unsigned>(std::stoul(value));
        else if (key == "oob") oob = detail::parse_bool(value, key);
        else if (key == "bd") bd = detail::parse_bool(value, key);
        else if (key == "importance") importance = detail::parse_bool(value, key);
        else if (key == "model.out") model_out = value;
        else if (key == "model.in") model_in = value;
        else if (key == "report.out") report_out = value;
        else if (key == "out.csv") out_csv = value;
        else if (key == "out.schema") out_schema = value;
        else if (key == "predictions.out") predictions_out = value;
        else if (key == "bench.sweep") sweep = value;
        else if (key == "bench.values") {
            // Accepts ',' on the command line and ';' as echoed inside report
            // records, so a resolved config replays losslessly.
            sweep_values.clear();
            std::string item;
            for (const char c : value + ",") {
                if (c != ',' && c != ';') {
                    item += c;
                    continue;
                }
                if (!item.empty()) sweep_values.push_back(std::stod(item));
                item.clear();
            }
        }
        else if (key == "bench.reps") reps = static_cast<std::uint32_t>(std::stoul(value));
        else throw std::invalid_argument("unknown config key '" + key + "'");
    } catch (const std::invalid_argument&) {
        throw;
    } catch (const std::exception&) {
        throw std::invalid_argument("config key '" + key + "': bad value '" + value + "'");
    }
}

inline std::vector<std::pair<std::string, std::string>> ExperimentConfig::resolved() const {
    using detail::format_double;
    std::ostringstream values;
    for (std::size_t i = 0; i < sweep_values.size(); ++i)
        values << (i ? ";" : "") << format_double(sweep_values[i]);
    return {
        {"data.source", data_source},
        {"data.rows", std::to_string(rows)},
        {"data.seed", std::to_string(data_seed)},
        {"data.class_balance", format_double(class_balance)},
        {"data.submodel1_prob", format_double(submodel1_prob)},
        {"data.standardize", standardize ? "true" : "false"},
        {"data.csv", data_csv},
        {"data.schema", data_schema},
        {"bias.kind", bias},
        {"bias.p", format_double(bias_p)},
        {"bias.parts", std::to_string(bias_parts)},
        {"bias.seed", std::to_string(bias_seed)},
        {"test.source", test_source},
        {"test.rows", std::to_string(test_rows)},
        {"test.seed", std::to_string(test_seed)},
        {"test.csv", test_csv},
        {"test.schema", test_schema},
        {"variant", variant},
        {"trees", std::to_string(trees)},
        {"m", std::to_string(m)},
        {"fraction", format_double(fraction)},
        {"chunks", std::to_string(chunks)},
        {"group_trees", std::to_string(group_trees)},
        {"mtry", std::to_string(mtry)},
        {"max_leaves", std::to_string(max_leaves)},
        {"max_depth", std::to_string(max_depth)},
        {"min_node_weight", format_double(min_node_weight)},
        {"split_mode", split_mode},
        {"candidates", std::to_string(candidates)},
        {"lambda", format_double(lambda)},
        {"split_min_count", std::to_string(split_min_count)},
        {"split_min_decrease", format_double(split_min_decrease)},
        {"two_stream_rho", format_double(two_stream_rho)},
        {"range_lo", format_double(range_lo)},
        {"range_hi", format_double(range_hi)},
        {"checkpoint_every", std::to_string(checkpoint_every)},
        {"report_every", std::to_string(report_every)},
        {"seed", std::to_string(seed)},
        {"workers", std::to_string(workers)},
        {"oob", oob ? "true" : "false"},
        {"bd", bd ? "true" : "false"},
        {"importance", importance ? "true" : "false"},
        {"bench.sweep", sweep},
        {"bench.values", values.str()},
        {"bench.reps", std::to_string(reps)},
    };
}

/// Parse a key = value config file ('#' comments, blank lines ignored).
inline std::vector<std::pair<std::string, std::string>> read_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    std::vector<std::pair<std::string, std::string>> entries;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": expected 'key = value'");
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        entries.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return entries;
}

inline void apply_config_file(ExperimentConfig& config, const std::string& path) {
    for (const auto& [key, value] : read_config_file(path)) config.set(key, value);
}

/// Metrics of one run. Optional fields stay empty when not computed.
struct EvalReport {
    std::string command;
    std::uint32_t trees = 0;
    std::size_t rows_used = 0;
    double train_seconds = 0.0;
    double eval_seconds = 0.0;
    std::optional<double> err_forest_value;
    std::optional<double> bd_err_value;
    std::optional<double> err_test_value;
    std::optional<double> oob_estimate;
    std::optional<double> mean_leaf_gini_value;
    std::uint64_t oob_evaluated = 0;
    std::uint64_t oob_skipped = 0;
    std::vector<double> importance;
};

inline const std::vector<std::string>& report_metric_columns() {
    static const std::vector<std::string> cols = {
        "command",       "rows_used",   "trees_trained", "train_seconds", "eval_seconds",
        "err_forest",    "bd_err_forest", "err_test",    "oob_estimate",  "mean_leaf_gini",
        "oob_evaluated", "oob_skipped", "importance",
    };
    return cols;
}

inline std::string report_header(const ExperimentConfig& config) {
    std::ostringstream out;
    for (const auto& [key, value] : config.resolved()) out << key << ',';
    const auto& cols = report_metric_columns();
    for (std::size_t i = 0; i < cols.size(); ++i) out << cols[i] << (i + 1 < cols.size() ? "," : "");
    return out.str();
}

inline std::string report_line(const ExperimentConfig& config, const EvalReport& report) {
    using detail::format_double;
    std::ostringstream out;
    for (const auto& [key, value] : config.resolved()) out << value << ',';
    auto opt = [&](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
    out << report.command << ',' << report.rows_used << ',' << report.trees << ','
        << format_double(report.train_seconds) << ',' << format_double(report.eval_seconds) << ','
        << opt(report.err_forest_value) << ',' << opt(report.bd_err_value) << ',' << opt(report.err_test_value)
        << ',' << opt(report.oob_estimate) << ',' << opt(report.mean_leaf_gini_value) << ','
        << report.oob_evaluated << ',' << report.oob_skipped << ',';
    for (std::size_t j = 0; j < report.importance.size(); ++j)
        out << (j ? ";" : "") << format_double(report.importance[j]);
    return out.str();
}

/// Append a record to a report CSV, writing the header first when the file is
/// new or empty. Records are append-safe: identical runs produce identical
/// lines except for the two timing columns.
inline void append_report(const std::string& path, const ExperimentConfig& config, const EvalReport& report) {
    if (path.empty()) return;
    bool need_header = true;
    {
        std::ifstream probe(path);
        std::string first;
        if (probe && std::getline(probe, first) && !first.empty()) need_header = false;
    }
    std::ofstream out(path, std::ios::app);
    if (!out) throw std::runtime_error("cannot open report file: " + path);
    if (need_header) out << report_header(config) << '\n';
    out << report_line(config, report) << '\n';
}

inline Dataset load_dataset_from_config(const std::string& source, std::size_t rows, std::uint64_t seed,
                                        double class_balance, double submodel1_prob, bool standardize,
                                        const std::string& csv_path, const std::string& schema_path) {
    if (source == "simulate") {
        SimulationSpec spec;
        spec.n = rows;
        spec.seed = seed;
        spec.class_balance = class_balance;
        spec.submodel1_prob = submodel1_prob;
        spec.standardize = standardize;
        return simulate(spec);
    }
    if (source == "csv") {
        if (csv_path.empty()) throw std::invalid_argument("csv data source needs a file path");
        if (schema_path.empty()) throw std::invalid_argument("csv data source needs a schema path");
        return load_csv(csv_path, CsvSchema::load(schema_path)).ds;
    }
    throw std::invalid_argument("unknown data source '" + source + "'");
}

/// Build the training dataset (bias permutation applied when requested).
inline Dataset build_dataset(const ExperimentConfig& config) {
    Dataset ds = load_dataset_from_config(config.data_source, config.rows, config.data_seed,
                                          config.class_balance, config.submodel1_prob, config.standardize,
                                          config.data_csv, config.data_schema);
    if (config.bias == "none") return ds;
    if (config.bias == "unbalanced") return permute_unbalanced(ds, config.bias_p, config.bias_seed);
    if (config.bias == "xbiases") return permute_xbiases(ds, config.bias_parts);
    throw std::invalid_argument("unknown bias kind '" + config.bias + "'");
}

inline std::optional<Dataset> build_test_dataset(const ExperimentConfig& config) {
    if (config.test_source == "none") return std::nullopt;
    return load_dataset_from_config(config.test_source, config.test_rows, config.test_seed,
                                    config.class_balance, config.submodel1_prob, config.standardize,
                                    config.test_csv, config.test_schema);
}

inline std::size_t resolve_m(const ExperimentConfig& config, std::size_t n) {
    if (config.m > 0) return config.m;
    if (config.fraction > 0.0) return static_cast<std::size_t>(std::floor(config.fraction * static_cast<double>(n)));
    throw std::invalid_argument("variant '" + config.variant + "' needs an explicit m or fraction");
}

inline ResamplePlan build_plan(const ExperimentConfig& config, std::size_t n) {
    ResamplePlan plan;
    plan.scheme = scheme_from_name(config.variant);
    plan.n = n;
    plan.trees = config.trees;
    plan.master_seed = config.seed;
    plan.lambda = config.lambda;
    switch (plan.scheme) {
        case Scheme::kStandard:
            break;
        case Scheme::kSubsample:
        case Scheme::kMoon:
            plan.m = resolve_m(config, n);
            break;
        case Scheme::kBlb:
            plan.m = resolve_m(config, n);
            plan.chunks = config.chunks;
            plan.group_trees = config.group_trees;
            break;
        case Scheme::kDac:
            plan.chunks = config.chunks;
            plan.group_trees = config.group_trees;
            break;
        case Scheme::kPoisson:
            throw std::invalid_argument("the poisson scheme streams online; use the stream command");
    }
    plan.validate();
    return plan;
}

inline TreeParams build_tree_params(const ExperimentConfig& config) {
    TreeParams params;
    params.mtry = config.mtry;
    params.max_leaves = config.max_leaves;
    params.max_depth = config.max_depth;
    params.min_node_weight = config.min_node_weight;
    if (config.split_mode == "exhaustive") params.split_mode = SplitMode::kExhaustiveGini;
    else if (config.split_mode == "ert") params.split_mode = SplitMode::kErt;
    else throw std::invalid_argument("unknown split mode '" + config.split_mode + "'");
    params.ert_candidates = config.candidates;
    return params;
}

struct TrainOutcome {
    Forest forest;
    EvalReport report;
};

/// Train a batch forest per config and evaluate it. The clock separates
/// training (resampling + growth) from evaluation; dataset construction is
/// excluded from both.
inline TrainOutcome run_train(const ExperimentConfig& config, std::ostream& log) {
    const Dataset ds = build_dataset(config);
    const std::optional<Dataset> test = build_test_dataset(config);
    const unsigned workers = effective_workers(config.workers, config.trees);

    TrainOutcome outcome;
    outcome.forest = train(ds, build_plan(config, ds.n_rows), build_tree_params(config), workers);
    EvalReport& report = outcome.report;
    report.command = "train";
    report.trees = static_cast<std::uint32_t>(outcome.forest.trees.size());
    report.rows_used = ds.n_rows;
    report.train_seconds = outcome.forest.train_seconds;

    const auto eval_start = std::chrono::steady_clock::now();
    const Scheme scheme = outcome.forest.plan.scheme;
    if (config.oob) {
        const OobError oob = err_forest(outcome.forest, ds, workers);
        report.err_forest_value = oob.rate;
        report.oob_evaluated = oob.evaluated;
        report.oob_skipped = oob.skipped;
    }
    if (config.bd) {
        if (scheme == Scheme::kSubsample || scheme == Scheme::kDac)
            report.bd_err_value = bd_err_samp_dac(outcome.forest, ds, workers).rate;
        else if (scheme == Scheme::kBlb)
            report.bd_err_value = bd_err_blb(outcome.forest, ds, workers).rate;
        else if (scheme == Scheme::kMoon)
            report.bd_err_value = bd_err_moon(outcome.forest, ds, workers).rate;
    }
    if (test) report.err_test_value = err_test(outcome.forest, *test, workers);
    report.mean_leaf_gini_value = mean_leaf_gini(outcome.forest);
    if (config.importance)
        report.importance = variable_importance(outcome.forest, ds, config.seed, workers).values;
    report.eval_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - eval_start).count();

    if (!config.model_out.empty()) save_forest(outcome.forest, config.model_out);
    append_report(config.report_out, config, report);

    log << "trained " << report.trees << " trees (" << config.variant << ") on " << report.rows_used
        << " rows in " << report.train_seconds << "s\n";
    auto show = [&log](const char* name, const std::optional<double>& v) {
        if (v) log << "  " << name << " = " << *v << "\n";
    };
    show("errForest", report.err_forest_value);
    show("BDerrForest", report.bd_err_value);
    show("errTest", report.err_test_value);
    show("mean_leaf_gini", report.mean_leaf_gini_value);
    if (!report.importance.empty()) {
        log << "  importance =";
        for (double v : report.importance) log << ' ' << v;
        log << "\n";
    }
    return outcome;
}

struct StreamOutcome {
    std::optional<double> final_oob;
    std::optional<double> err_test_value;
    EvalReport report;
};

/// Feed a dataset through an online forest in row order, reporting the rolling
/// out-of-bag estimate and writing periodic checkpoints.
inline StreamOutcome run_stream(const ExperimentConfig& config, std::ostream& log,
                                OnlineForest* keep_forest = nullptr) {
    const Dataset ds = build_dataset(config);
    const std::optional<Dataset> test = build_test_dataset(config);

    OnlineParams params;
    params.trees = config.trees;
    params.candidates = config.candidates;
    params.max_depth = config.max_depth;
    params.lambda = config.lambda;
    params.split_min_count = config.split_min_count;
    params.split_min_decrease = config.split_min_decrease;
    params.two_stream_rho = config.two_stream_rho;
    params.seed = config.seed;
    params.n_features = static_cast<std::uint32_t>(ds.n_cols);
    params.n_classes = static_cast<std::uint32_t>(ds.n_classes);
    params.range_lo.assign(ds.n_cols, config.range_lo);
    params.range_hi.assign(ds.n_cols, config.range_hi);
    OnlineForest forest(params);

    const auto start = std::chrono::steady_clock::now();
    for (std::size_t i = 0; i < ds.n_rows; ++i) {
        forest.update(ds.row(i), static_cast<std::uint32_t>(ds.labels[i]));
        if (config.report_every && (i + 1) % config.report_every == 0) {
            const auto est = forest.oob_estimate();
            log << "rows " << (i + 1) << " oob "
                << (est ? detail::format_double(*est) : std::string("unavailable")) << "\n";
        }
        if (config.checkpoint_every && !config.model_out.empty() && (i + 1) % config.checkpoint_every == 0)
            save_online_forest(forest, config.model_out);
    }
    const double train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!config.model_out.empty()) save_online_forest(forest, config.model_out);

    StreamOutcome outcome;
    outcome.final_oob = forest.oob_estimate();
    EvalReport& report = outcome.report;
    report.command = "stream";
    report.trees = config.trees;
    report.rows_used = ds.n_rows;
    report.train_seconds = train_seconds;
    report.oob_estimate = outcome.final_oob;
    report.oob_evaluated = forest.oob_evaluated();
    const auto eval_start = std::chrono::steady_clock::now();
    if (test) {
        outcome.err_test_value = err_test(forest, *test, effective_workers(config.workers, test->n_rows));
        report.err_test_value = outcome.err_test_value;
    }
    report.eval_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - eval_start).count();
    append_report(config.report_out, config, report);

    log << "streamed " << ds.n_rows << " rows through " << config.trees << " online trees in "
        << train_seconds << "s\n";
    log << "  final oob "
        << (outcome.final_oob ? detail::format_double(*outcome.final_oob) : std::string("unavailable")) << "\n";
    if (outcome.err_test_value) log << "  errTest = " << *outcome.err_test_value << "\n";
    if (keep_forest) *keep_forest = forest;
    return outcome;
}

/// Sweep one parameter (K, q, or f) with everything else fixed; one record per
/// swept value with the median training time over bench.reps repetitions.
/// Error metrics come from the first repetition (identical seeds make the
/// repeats identical apart from timing).
inline std::vector<EvalReport> run_bench(const ExperimentConfig& config, std::ostream& log) {
    if (config.sweep_values.empty()) throw std::invalid_argument("bench needs bench.values");
    const Dataset ds = build_dataset(config);
    const std::optional<Dataset> test = build_test_dataset(config);
    const unsigned workers = effective_workers(config.workers, config.trees);

    std::vector<EvalReport> records;
    for (const double value : config.sweep_values) {
        ExperimentConfig cell = config;
        if (config.sweep == "K") {
            cell.chunks = static_cast<std::uint32_t>(value);
            if (cell.group_trees == 0) throw std::invalid_argument("bench sweep K needs group_trees");
            cell.trees = cell.chunks * cell.group_trees;
        } else if (config.sweep == "q") {
            cell.group_trees = static_cast<std::uint32_t>(value);
            if (cell.chunks == 0) throw std::invalid_argument("bench sweep q needs chunks");
            cell.trees = cell.chunks * cell.group_trees;
        } else if (config.sweep == "f") {
            cell.fraction = value;
            cell.m = 0;
        } else {
            throw std::invalid_argument("bench sweep must be K, q, or f");
        }

        const ResamplePlan plan = build_plan(cell, ds.n_rows);
        const TreeParams params = build_tree_params(cell);
        std::vector<double> times;
        Forest forest;
        for (std::uint32_t rep = 0; rep < std::max(1u, cell.reps); ++rep) {
            Forest trained = train(ds, plan, params, workers);
            times.push_back(trained.train_seconds);
            if (rep == 0) forest = std::move(trained);
        }
        std::sort(times.begin(), times.end());
        const double median = times[times.size() / 2];

        EvalReport report;
        report.command = "bench";
        report.trees = static_cast<std::uint32_t>(forest.trees.size());
        report.rows_used = ds.n_rows;
        report.train_seconds = median;
        const auto eval_start = std::chrono::steady_clock::now();
        const Scheme scheme = forest.plan.scheme;
        if (cell.oob) {
            const OobError oob = err_forest(forest, ds, workers);
            report.err_forest_value = oob.rate;
            report.oob_evaluated = oob.evaluated;
            report.oob_skipped = oob.skipped;
        }
        if (cell.bd) {
            if (scheme == Scheme::kSubsample || scheme == Scheme::kDac)
                report.bd_err_value = bd_err_samp_dac(forest, ds, workers).rate;
            else if (scheme == Scheme::kBlb && forest.group_count() >= 2)
                report.bd_err_value = bd_err_blb(forest, ds, workers).rate;
            else if (scheme == Scheme::kMoon)
                report.bd_err_value = bd_err_moon(forest, ds, workers).rate;
        }
        if (test) report.err_test_value = err_test(forest, *test, workers);
        report.mean_leaf_gini_value = mean_leaf_gini(forest);
        report.eval_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - eval_start).count();
        append_report(cell.report_out, cell, report);
        records.push_back(report);
        log << "bench " << config.sweep << "=" << value << " trees=" << report.trees
            << " train=" << median << "s";
        if (report.err_forest_value) log << " errForest=" << *report.err_forest_value;
        if (report.bd_err_value) log << " bd=" << *report.bd_err_value;
        log << "\n";
    }
    return records;
}

/// Simulate a dataset (with optional bias permutation) and write it plus its
/// schema next to it.
inline void run_generate(const ExperimentConfig& config, std::ostream& log) {
    if (config.out_csv.empty()) throw std::invalid_argument("generate needs out.csv");
    const Dataset ds = build_dataset(config);
    write_csv(ds, config.out_csv);
    const std::string schema_path = config.out_schema.empty() ? config.out_csv + ".schema" : config.out_schema;
    schema_for(ds).save(schema_path);
    log << "wrote " << ds.n_rows << " rows x " << ds.n_cols << " features to " << config.out_csv
        << " (schema " << schema_path << ")\n";
}

/// Predict a CSV with a saved batch forest or online checkpoint. When the
/// input has labels the misclassification rate is reported too.
inline void run_predict(const ExperimentConfig& config, std::ostream& log) {
    if (config.model_in.empty()) throw std::invalid_argument("predict needs model.in");
    if (config.data_csv.empty() || config.data_schema.empty())
        throw std::invalid_argument("predict needs data.csv and data.schema");
    const CsvLoad loaded = load_csv(config.data_csv, CsvSchema::load(config.data_schema));
    const Dataset& ds = loaded.ds;

    BinaryReader probe = BinaryReader::from_file(config.model_in);
    std::vector<std::uint32_t> predictions(ds.n_rows);
    const std::string magic = probe.peek_magic();
    if (magic == "GRFO") {
        const Forest forest = load_forest(config.model_in);
        predictions = predict_batch(forest, ds, effective_workers(config.workers, ds.n_rows));
    } else if (magic == "GRON") {
        const OnlineForest forest = load_online_forest(config.model_in);
        for (std::size_t i = 0; i < ds.n_rows; ++i) predictions[i] = forest.predict(ds.row(i));
    } else {
        throw std::runtime_error("unrecognized model file: " + config.model_in);
    }

    if (!config.predictions_out.empty()) {
        std::ofstream out(config.predictions_out, std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open predictions file: " + config.predictions_out);
        out << "row,prediction\n";
        for (std::size_t i = 0; i < predictions.size(); ++i) out << i << ',' << predictions[i] << '\n';
    }
    std::uint64_t wrong = 0;
    for (std::size_t i = 0; i < ds.n_rows; ++i)
        wrong += predictions[i] != static_cast<std::uint32_t>(ds.labels[i]);
    log << "predicted " << ds.n_rows << " rows";
    if (ds.n_classes > 1)
        log << ", error " << (static_cast<double>(wrong) / static_cast<double>(std::max<std::size_t>(1, ds.n_rows)));
    log << "\n";
}

}  // namespace grove
