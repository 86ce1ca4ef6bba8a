#include <catch2/catch_amalgamated.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "grove/experiment.hpp"

namespace {

std::filesystem::path scratch_dir() {
    const auto dir = std::filesystem::temp_directory_path() / "grove_experiment_tests";
    std::filesystem::create_directories(dir);
    return dir;
}

std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

std::vector<std::string> lines_of(const std::filesystem::path& path) {
    std::ifstream in(path);
    REQUIRE(in);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    return lines;
}

std::size_t count_fields(const std::string& line) {
    return static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
}

/// A small but complete training config: simulated data, a subsample forest,
/// and a simulated test set.
grove::ExperimentConfig small_train_config() {
    grove::ExperimentConfig config;
    config.rows = 400;
    config.data_seed = 5;
    config.test_source = "simulate";
    config.test_rows = 150;
    config.test_seed = 6;
    config.variant = "subsample";
    config.trees = 8;
    config.fraction = 0.5;
    config.max_leaves = 16;
    config.seed = 77;
    config.workers = 1;
    return config;
}

}  // namespace

TEST_CASE("config keys round-trip through set and resolved") {
    grove::ExperimentConfig config;
    config.set("variant", "blb");
    config.set("trees", "40");
    config.set("chunks", "8");
    config.set("group_trees", "5");
    config.set("fraction", "0.25");
    config.set("data.rows", "12345");
    config.set("oob", "false");
    config.set("bench.values", "5,10,15");

    auto value_of = [&](const std::string& key) {
        for (const auto& [k, v] : config.resolved())
            if (k == key) return v;
        FAIL("missing resolved key " + key);
        return std::string();
    };
    CHECK(value_of("variant") == "blb");
    CHECK(value_of("trees") == "40");
    CHECK(value_of("chunks") == "8");
    CHECK(value_of("group_trees") == "5");
    CHECK(value_of("fraction") == "0.25");
    CHECK(value_of("data.rows") == "12345");
    CHECK(value_of("oob") == "false");
    CHECK(value_of("bench.values") == "5;10;15");  // ';' keeps report CSVs one column

    // Every resolved pair must feed back through set() and reproduce itself.
    grove::ExperimentConfig replay;
    for (const auto& [k, v] : config.resolved()) replay.set(k, v);
    CHECK(replay.resolved() == config.resolved());
}

TEST_CASE("unknown keys and malformed values are rejected") {
    grove::ExperimentConfig config;
    CHECK_THROWS_AS(config.set("no.such.key", "1"), std::invalid_argument);
    CHECK_THROWS_AS(config.set("trees", "many"), std::invalid_argument);
    CHECK_THROWS_AS(config.set("fraction", "half"), std::invalid_argument);
    CHECK_THROWS_AS(config.set("oob", "maybe"), std::invalid_argument);
}

TEST_CASE("config files apply keys in order with comments ignored") {
    const auto dir = scratch_dir();
    const auto path = dir / "run.conf";
    {
        std::ofstream out(path, std::ios::trunc);
        out << "# experiment setup\n"
            << "\n"
            << "variant = dac\n"
            << "chunks=4\n"
            << "  group_trees =  3   # trailing comment\n"
            << "trees = 12\n";
    }
    grove::ExperimentConfig config;
    grove::apply_config_file(config, path.string());
    CHECK(config.variant == "dac");
    CHECK(config.chunks == 4);
    CHECK(config.group_trees == 3);
    CHECK(config.trees == 12);

    CHECK_THROWS(grove::read_config_file((dir / "absent.conf").string()));
    const auto broken = dir / "broken.conf";
    {
        std::ofstream out(broken, std::ios::trunc);
        out << "this line has no equals sign\n";
    }
    CHECK_THROWS(grove::read_config_file(broken.string()));
}

TEST_CASE("report files get one header and append-stable lines") {
    const auto dir = scratch_dir();
    const auto path = dir / "report.csv";
    std::filesystem::remove(path);

    grove::ExperimentConfig config;
    grove::EvalReport report;
    report.command = "train";
    report.trees = 7;
    report.rows_used = 1000;
    report.err_forest_value = 0.125;
    report.importance = {0.25, 0.0, -0.125};
    grove::append_report(path.string(), config, report);
    grove::append_report(path.string(), config, report);

    const auto lines = lines_of(path);
    REQUIRE(lines.size() == 3);
    CHECK(lines[0] == grove::report_header(config));
    CHECK(lines[1] == lines[2]);  // deterministic fields, identical timings here
    CHECK(count_fields(lines[0]) == count_fields(lines[1]));
    CHECK(lines[0].find(",err_forest,") != std::string::npos);
    CHECK(lines[0].rfind(",importance") == lines[0].size() - std::string(",importance").size());
    CHECK(lines[1].find("0.25;0;-0.125") != std::string::npos);  // importance joined by ';'
}

TEST_CASE("generated datasets round-trip through files") {
    const auto dir = scratch_dir();
    grove::ExperimentConfig config;
    config.rows = 120;
    config.data_seed = 11;
    config.out_csv = (dir / "sim.csv").string();
    std::ostringstream log;
    grove::run_generate(config, log);
    CHECK(log.str().find("120 rows") != std::string::npos);

    grove::ExperimentConfig reader;
    reader.set("data.source", "csv");
    reader.set("data.csv", config.out_csv);
    reader.set("data.schema", config.out_csv + ".schema");
    const grove::Dataset loaded = grove::build_dataset(reader);
    const grove::Dataset direct = grove::build_dataset(config);
    REQUIRE(loaded.n_rows == direct.n_rows);
    REQUIRE(loaded.n_cols == direct.n_cols);
    CHECK(loaded.features == direct.features);  // full-precision text round-trip
    CHECK(loaded.labels == direct.labels);
    CHECK(loaded.column_names == direct.column_names);

    grove::ExperimentConfig no_target;
    CHECK_THROWS(grove::run_generate(no_target, log));
}

TEST_CASE("training runs reproduce byte-identical models and reports") {
    const auto dir = scratch_dir();
    grove::ExperimentConfig config = small_train_config();
    std::ostringstream log;

    config.model_out = (dir / "model_a.bin").string();
    const grove::TrainOutcome first = grove::run_train(config, log);
    config.model_out = (dir / "model_b.bin").string();
    const grove::TrainOutcome second = grove::run_train(config, log);

    CHECK(slurp(dir / "model_a.bin") == slurp(dir / "model_b.bin"));
    CHECK(first.report.rows_used == 400);
    CHECK(first.report.trees == 8);
    REQUIRE(first.report.err_forest_value.has_value());
    REQUIRE(first.report.bd_err_value.has_value());
    REQUIRE(first.report.err_test_value.has_value());
    CHECK(first.report.err_forest_value == second.report.err_forest_value);
    CHECK(first.report.bd_err_value == second.report.bd_err_value);
    CHECK(first.report.err_test_value == second.report.err_test_value);
    CHECK(first.report.command == "train");

    // Disabling the estimators empties their columns.
    grove::ExperimentConfig lean = small_train_config();
    lean.oob = false;
    lean.bd = false;
    const grove::TrainOutcome bare = grove::run_train(lean, log);
    CHECK_FALSE(bare.report.err_forest_value.has_value());
    CHECK_FALSE(bare.report.bd_err_value.has_value());
    CHECK(bare.report.err_test_value.has_value());

    // Requesting importance fills one value per feature.
    grove::ExperimentConfig vi = small_train_config();
    vi.trees = 4;
    vi.importance = true;
    CHECK(grove::run_train(vi, log).report.importance.size() == 7);
}

TEST_CASE("explicit subsample sizes beat fractions") {
    grove::ExperimentConfig config;
    config.m = 50;
    config.fraction = 0.9;
    CHECK(grove::resolve_m(config, 1000) == 50);
    config.m = 0;
    CHECK(grove::resolve_m(config, 1000) == 900);
    config.fraction = 0.0;
    CHECK_THROWS(grove::resolve_m(config, 1000));

    grove::ExperimentConfig plan_cfg = small_train_config();
    plan_cfg.fraction = 0.25;
    const grove::ResamplePlan plan = grove::build_plan(plan_cfg, 400);
    CHECK(plan.scheme == grove::Scheme::kSubsample);
    CHECK(plan.m == 100);
    CHECK(plan.trees == 8);
}

TEST_CASE("bench cells mirror plain training runs") {
    grove::ExperimentConfig config = small_train_config();
    config.fraction = 0.0;
    config.sweep = "f";
    config.sweep_values = {0.2};
    config.reps = 2;
    std::ostringstream log;
    const std::vector<grove::EvalReport> records = grove::run_bench(config, log);
    REQUIRE(records.size() == 1);

    grove::ExperimentConfig plain = small_train_config();
    plain.fraction = 0.2;
    const grove::TrainOutcome direct = grove::run_train(plain, log);
    CHECK(records[0].err_forest_value == direct.report.err_forest_value);
    CHECK(records[0].bd_err_value == direct.report.bd_err_value);
    CHECK(records[0].err_test_value == direct.report.err_test_value);
    CHECK(records[0].trees == direct.report.trees);
    CHECK(records[0].command == "bench");

    grove::ExperimentConfig empty_sweep = config;
    empty_sweep.sweep_values.clear();
    CHECK_THROWS(grove::run_bench(empty_sweep, log));
    grove::ExperimentConfig bad_sweep = config;
    bad_sweep.sweep = "z";
    CHECK_THROWS(grove::run_bench(bad_sweep, log));
}

TEST_CASE("stream runs write loadable checkpoints and score a test set") {
    const auto dir = scratch_dir();
    grove::ExperimentConfig config;
    config.rows = 1500;
    config.data_seed = 21;
    config.test_source = "simulate";
    config.test_rows = 300;
    config.test_seed = 22;
    config.trees = 5;
    config.candidates = 10;
    config.split_min_count = 30;
    config.max_depth = 8;
    config.seed = 23;
    config.report_every = 1000;
    config.model_out = (dir / "stream.bin").string();
    std::ostringstream log;

    const grove::StreamOutcome outcome = grove::run_stream(config, log);
    CHECK(outcome.report.command == "stream");
    CHECK(outcome.report.rows_used == 1500);
    REQUIRE(outcome.report.err_test_value.has_value());
    CHECK(outcome.report.err_test_value.value() < 0.5);  // far better than coin flips
    CHECK(outcome.report.oob_evaluated > 0);

    const grove::OnlineForest restored = grove::load_online_forest(config.model_out);
    CHECK(restored.observations() == 1500);
    CHECK(restored.params().trees == 5);
}
