#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <vector>

#include "grove/rng.hpp"
#include "grove/tree.hpp"

namespace {

grove::Dataset make_dataset(std::size_t n_cols, std::uint32_t n_classes,
                            const std::vector<std::vector<double>>& rows,
                            const std::vector<std::int32_t>& labels) {
    grove::Dataset ds;
    ds.n_rows = rows.size();
    ds.n_cols = n_cols;
    ds.n_classes = n_classes;
    ds.labels = labels;
    for (const auto& r : rows) ds.features.insert(ds.features.end(), r.begin(), r.end());
    for (std::size_t j = 0; j < n_cols; ++j) ds.column_names.push_back("x" + std::to_string(j + 1));
    return ds;
}

grove::WeightedRows unit_rows(std::size_t n) {
    grove::WeightedRows rows;
    for (std::size_t i = 0; i < n; ++i) {
        rows.indices.push_back(static_cast<std::uint32_t>(i));
        rows.weights.push_back(1.0);
    }
    return rows;
}

/// Brute-force reference: every feature, every midpoint between consecutive
/// distinct sorted values, weighted Gini decrease computed from scratch by
/// scanning rows against the threshold. Ties keep lowest feature then lowest
/// threshold, exactly like the production rule.
std::optional<grove::SplitCandidate> oracle_best_split(const grove::Dataset& ds,
                                                       const grove::WeightedRows& rows,
                                                       const std::vector<std::uint32_t>& features) {
    const std::size_t c_count = ds.n_classes;
    std::vector<double> counts(c_count, 0.0);
    double total = 0.0;
    for (std::size_t k = 0; k < rows.indices.size(); ++k) {
        counts[static_cast<std::uint32_t>(ds.labels[rows.indices[k]])] += rows.weights[k];
        total += rows.weights[k];
    }
    double node_sq = 0.0;
    for (double c : counts) node_sq += (c / total) * (c / total);
    const double node_gini = 1.0 - node_sq;

    std::optional<grove::SplitCandidate> best;
    for (const std::uint32_t f : features) {
        std::set<double> values;
        for (const std::uint32_t i : rows.indices) values.insert(ds.at(i, f));
        std::vector<double> sorted(values.begin(), values.end());
        for (std::size_t v = 0; v + 1 < sorted.size(); ++v) {
            double mid = sorted[v] + (sorted[v + 1] - sorted[v]) * 0.5;
            if (!(mid < sorted[v + 1])) mid = sorted[v];
            std::vector<double> left(c_count, 0.0);
            double lw = 0.0;
            for (std::size_t k = 0; k < rows.indices.size(); ++k) {
                if (ds.at(rows.indices[k], f) <= mid) {
                    left[static_cast<std::uint32_t>(ds.labels[rows.indices[k]])] += rows.weights[k];
                    lw += rows.weights[k];
                }
            }
            const double rw = total - lw;
            if (!(lw > 0.0) || !(rw > 0.0)) continue;
            double lsq = 0.0, rsq = 0.0;
            for (std::size_t c = 0; c < c_count; ++c) {
                const double lf = left[c] / lw;
                const double rf = (counts[c] - left[c]) / rw;
                lsq += lf * lf;
                rsq += rf * rf;
            }
            const double decrease = node_gini - (lw / total) * (1.0 - lsq) - (rw / total) * (1.0 - rsq);
            if (!(decrease > 0.0)) continue;
            const bool wins = !best || decrease > best->decrease ||
                              (decrease == best->decrease &&
                               (f < best->feature || (f == best->feature && mid < best->threshold)));
            if (wins) best = grove::SplitCandidate{f, mid, decrease};
        }
    }
    return best;
}

std::string tree_bytes(const grove::Tree& tree) {
    grove::BinaryWriter out;
    grove::serialize_tree(tree, out);
    return out.bytes();
}

}  // namespace

TEST_CASE("exhaustive split reproduces the hand-computed two-row cases") {
    const std::vector<std::uint32_t> all = {0};
    SECTION("one unit-weight row per class") {
        const auto ds = make_dataset(1, 2, {{1.0}, {2.0}}, {0, 1});
        const auto cand = grove::best_split_exhaustive(ds, unit_rows(2), all);
        REQUIRE(cand.has_value());
        CHECK(cand->feature == 0);
        CHECK(cand->threshold == 1.5);
        CHECK(cand->decrease == 0.5);
    }
    SECTION("unbalanced weights give the weighted node impurity") {
        const auto ds = make_dataset(1, 2, {{1.0}, {2.0}}, {0, 1});
        grove::WeightedRows rows;
        rows.indices = {0, 1};
        rows.weights = {3.0, 1.0};
        const auto cand = grove::best_split_exhaustive(ds, rows, all);
        REQUIRE(cand.has_value());
        CHECK(cand->threshold == 1.5);
        CHECK(cand->decrease == 0.375);  // Gini(3,1) with pure children
    }
    SECTION("pure node yields nothing") {
        const auto ds = make_dataset(1, 2, {{1.0}, {2.0}}, {1, 1});
        CHECK_FALSE(grove::best_split_exhaustive(ds, unit_rows(2), all).has_value());
    }
    SECTION("constant feature yields nothing") {
        const auto ds = make_dataset(1, 2, {{5.0}, {5.0}}, {0, 1});
        CHECK_FALSE(grove::best_split_exhaustive(ds, unit_rows(2), all).has_value());
    }
}

TEST_CASE("exhaustive split matches the brute-force oracle on random nodes") {
    grove::Rng rng(2024);
    for (int trial = 0; trial < 60; ++trial) {
        const std::size_t n = 2 + rng.next_below(499);
        const std::size_t p = 1 + rng.next_below(7);
        const std::uint32_t c_count = 2 + static_cast<std::uint32_t>(rng.next_below(2));
        std::vector<std::vector<double>> rows(n, std::vector<double>(p));
        std::vector<std::int32_t> labels(n);
        const bool discrete = trial % 2 == 0;  // force duplicate values half the time
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < p; ++j)
                rows[i][j] = discrete ? static_cast<double>(rng.next_below(5)) : rng.next_double();
            labels[i] = static_cast<std::int32_t>(rng.next_below(c_count));
        }
        const auto ds = make_dataset(p, c_count, rows, labels);

        grove::WeightedRows wr = unit_rows(n);
        if (trial % 3 == 0)  // integer weights stay exactly representable
            for (auto& w : wr.weights) w = static_cast<double>(1 + rng.next_below(4));

        std::vector<std::uint32_t> features(p);
        for (std::size_t j = 0; j < p; ++j) features[j] = static_cast<std::uint32_t>(j);

        const auto got = grove::best_split_exhaustive(ds, wr, features);
        const auto want = oracle_best_split(ds, wr, features);
        REQUIRE(got.has_value() == want.has_value());
        if (got) {
            CHECK(got->feature == want->feature);
            CHECK(got->threshold == want->threshold);
            CHECK(got->decrease == want->decrease);
        }
    }
}

TEST_CASE("ert split draws candidates reproducibly and finds the optimum with many draws") {
    const auto ds = make_dataset(1, 2, {{0.1}, {0.2}, {0.8}, {0.9}}, {0, 0, 1, 1});
    const grove::WeightedRows rows = unit_rows(4);

    SECTION("pure node yields nothing") {
        const auto pure = make_dataset(1, 2, {{0.1}, {0.9}}, {1, 1});
        grove::Rng rng(1);
        CHECK_FALSE(grove::best_split_ert(pure, unit_rows(2), 10, rng).has_value());
    }
    SECTION("a single candidate is returned as drawn") {
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            grove::Rng lib(seed), replay(seed);
            const auto cand = grove::best_split_ert(ds, rows, 1, lib);
            const auto f = static_cast<std::uint32_t>(replay.next_below(1));
            const double u = replay.next_double();
            double threshold = 0.1 + u * 0.8;
            if (!(threshold < 0.9)) threshold = 0.1;
            REQUIRE(cand.has_value());  // every threshold in [0.1,0.9) separates here
            CHECK(cand->feature == f);
            CHECK(cand->threshold == threshold);
        }
    }
    SECTION("with many candidates the optimum is found on almost every seed") {
        std::vector<std::uint32_t> all = {0};
        const double optimum = oracle_best_split(ds, rows, all)->decrease;
        int hits = 0;
        for (std::uint64_t seed = 0; seed < 100; ++seed) {
            grove::Rng rng(seed);
            const auto cand = grove::best_split_ert(ds, rows, 1000, rng);
            REQUIRE(cand.has_value());
            hits += std::abs(cand->decrease - optimum) < 1e-9;
        }
        CHECK(hits >= 99);
    }
    SECTION("drawn thresholds stay within the node's observed range") {
        grove::Rng rng(77);
        for (int i = 0; i < 50; ++i) {
            const auto cand = grove::best_split_ert(ds, rows, 3, rng);
            if (!cand) continue;
            CHECK(cand->threshold >= 0.1);
            CHECK(cand->threshold < 0.9);
        }
    }
}

TEST_CASE("grow_tree handles the documented base cases") {
    SECTION("pure input grows a single leaf") {
        const auto ds = make_dataset(1, 2, {{1.0}, {2.0}, {3.0}}, {1, 1, 1});
        grove::TreeParams params;
        params.mtry = 1;
        const grove::Tree tree = grove::grow_tree(ds, unit_rows(3), params);
        REQUIRE(tree.nodes.size() == 1);
        CHECK(tree.nodes[0].is_leaf());
        CHECK(tree.nodes[0].prediction == 1);
        CHECK(tree.depth == 0);
    }
    SECTION("two separable clusters produce one pure split") {
        const auto ds = make_dataset(1, 2, {{0.1}, {0.2}, {0.8}, {0.9}}, {0, 0, 1, 1});
        grove::TreeParams params;
        params.mtry = 1;
        const grove::Tree tree = grove::grow_tree(ds, unit_rows(4), params);
        REQUIRE(tree.leaf_count() == 2);
        const auto& root = tree.nodes[0];
        REQUIRE_FALSE(root.is_leaf());
        CHECK(root.threshold > 0.2);
        CHECK(root.threshold < 0.8);
        CHECK(tree.nodes[root.left].class_counts == std::vector<double>{2.0, 0.0});
        CHECK(tree.nodes[root.right].class_counts == std::vector<double>{0.0, 2.0});
        CHECK(tree.predict(std::vector<double>{0.15}) == 0);
        CHECK(tree.predict(std::vector<double>{0.85}) == 1);
    }
    SECTION("empty input is rejected") {
        const auto ds = make_dataset(1, 2, {{1.0}}, {0});
        CHECK_THROWS(grove::grow_tree(ds, grove::WeightedRows{}, grove::TreeParams{}));
    }
    SECTION("mtry larger than the feature count is rejected") {
        const auto ds = make_dataset(2, 2, {{1.0, 0.0}, {2.0, 1.0}}, {0, 1});
        grove::TreeParams params;
        params.mtry = 3;
        CHECK_THROWS(grove::grow_tree(ds, unit_rows(2), params));
    }
}

TEST_CASE("best-first growth expands the largest decrease first and respects the budget") {
    // Feature 0 separates classes perfectly (decrease 0.5); feature 1 only
    // partially. With a budget of 2 leaves the root must use feature 0.
    const auto ds = make_dataset(
        2, 2, {{0.0, 0.0}, {0.0, 1.0}, {0.0, 0.0}, {1.0, 1.0}, {1.0, 0.0}, {1.0, 1.0}}, {0, 0, 0, 1, 1, 1});
    grove::TreeParams params;
    params.mtry = 2;
    params.max_leaves = 2;
    const grove::Tree tree = grove::grow_tree(ds, unit_rows(6), params);
    REQUIRE(tree.leaf_count() == 2);
    CHECK(tree.nodes[0].feature == 0);
}

TEST_CASE("leaf budget and depth cap are enforced on noisy data") {
    grove::Rng rng(5);
    std::vector<std::vector<double>> rows(300, std::vector<double>(3));
    std::vector<std::int32_t> labels(300);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (auto& v : rows[i]) v = rng.next_double();
        labels[i] = static_cast<std::int32_t>(rng.next_below(2));
    }
    const auto ds = make_dataset(3, 2, rows, labels);

    SECTION("max_leaves is hit exactly when impurity remains") {
        for (const std::uint32_t budget : {1u, 2u, 5u, 16u}) {
            grove::TreeParams params;
            params.mtry = 3;
            params.max_leaves = budget;
            params.seed = 9;
            const grove::Tree tree = grove::grow_tree(ds, unit_rows(300), params);
            CHECK(tree.leaf_count() == budget);
            CHECK(tree.nodes.size() == 2 * budget - 1);  // binary-tree identity
        }
    }
    SECTION("max_depth bounds the tree") {
        grove::TreeParams params;
        params.mtry = 3;
        params.max_depth = 3;
        params.seed = 9;
        const grove::Tree tree = grove::grow_tree(ds, unit_rows(300), params);
        CHECK(tree.depth <= 3);
    }
    SECTION("min_node_weight stops splitting small nodes") {
        grove::TreeParams params;
        params.mtry = 3;
        params.min_node_weight = 1000.0;
        const grove::Tree tree = grove::grow_tree(ds, unit_rows(300), params);
        CHECK(tree.nodes.size() == 1);
    }
}

TEST_CASE("integer weights are equivalent to replicated rows") {
    grove::Rng rng(31);
    for (const bool ert : {false, true}) {
        std::vector<std::vector<double>> raw(80, std::vector<double>(4));
        std::vector<std::int32_t> labels(80);
        for (std::size_t i = 0; i < raw.size(); ++i) {
            for (auto& v : raw[i]) v = static_cast<double>(rng.next_below(6));
            labels[i] = static_cast<std::int32_t>(rng.next_below(2));
        }
        const auto ds = make_dataset(4, 2, raw, labels);

        grove::WeightedRows weighted;
        grove::WeightedRows replicated;
        for (std::uint32_t i = 0; i < 80; ++i) {
            const std::uint64_t w = 1 + rng.next_below(4);
            weighted.indices.push_back(i);
            weighted.weights.push_back(static_cast<double>(w));
            for (std::uint64_t r = 0; r < w; ++r) {
                replicated.indices.push_back(i);
                replicated.weights.push_back(1.0);
            }
        }

        grove::TreeParams params;
        params.mtry = ert ? 0 : 2;  // exercise the random feature subset too
        params.split_mode = ert ? grove::SplitMode::kErt : grove::SplitMode::kExhaustiveGini;
        params.ert_candidates = 8;
        params.seed = 123;
        const grove::Tree a = grove::grow_tree(ds, weighted, params);
        const grove::Tree b = grove::grow_tree(ds, replicated, params);
        CHECK(tree_bytes(a) == tree_bytes(b));
    }
}

TEST_CASE("growth is deterministic and serialization round-trips") {
    grove::Rng rng(41);
    std::vector<std::vector<double>> raw(120, std::vector<double>(5));
    std::vector<std::int32_t> labels(120);
    for (std::size_t i = 0; i < raw.size(); ++i) {
        for (auto& v : raw[i]) v = rng.next_double();
        labels[i] = static_cast<std::int32_t>(rng.next_below(3));
    }
    const auto ds = make_dataset(5, 3, raw, labels);
    grove::TreeParams params;
    params.mtry = 2;
    params.max_leaves = 12;
    params.seed = 77;

    const grove::Tree a = grove::grow_tree(ds, unit_rows(120), params);
    const grove::Tree b = grove::grow_tree(ds, unit_rows(120), params);
    const std::string bytes = tree_bytes(a);
    CHECK(bytes == tree_bytes(b));

    grove::BinaryReader in(bytes);
    const grove::Tree back = grove::deserialize_tree(in);
    CHECK(tree_bytes(back) == bytes);
    CHECK(back.depth == a.depth);
    CHECK(back.leaf_count() == a.leaf_count());
    for (int i = 0; i < 50; ++i) {
        std::vector<double> x(5);
        for (auto& v : x) v = rng.next_double();
        CHECK(back.predict(x) == a.predict(x));
    }
    CHECK_FALSE(grove::tree_to_text(a).empty());
}

TEST_CASE("accepted splits never increase impurity and leaves predict by argmax") {
    grove::Rng rng(53);
    std::vector<std::vector<double>> raw(200, std::vector<double>(4));
    std::vector<std::int32_t> labels(200);
    for (std::size_t i = 0; i < raw.size(); ++i) {
        for (auto& v : raw[i]) v = rng.next_double();
        labels[i] = static_cast<std::int32_t>(rng.next_below(3));
    }
    const auto ds = make_dataset(4, 3, raw, labels);
    grove::TreeParams params;
    params.mtry = 4;
    params.max_leaves = 20;
    const grove::Tree tree = grove::grow_tree(ds, unit_rows(200), params);

    // Recompute every leaf's membership by walking rows down the tree; counts
    // and argmax-with-lowest-id predictions must agree with the stored leaves.
    std::vector<std::vector<double>> counts(tree.nodes.size(), std::vector<double>(3, 0.0));
    for (std::size_t i = 0; i < ds.n_rows; ++i)
        counts[tree.leaf_for(ds.row(i))][static_cast<std::uint32_t>(ds.labels[i])] += 1.0;
    for (std::size_t id = 0; id < tree.nodes.size(); ++id) {
        const auto& node = tree.nodes[id];
        if (!node.is_leaf()) continue;
        CHECK(node.class_counts == counts[id]);
        std::uint32_t want = 0;
        for (std::uint32_t c = 1; c < 3; ++c)
            if (counts[id][c] > counts[id][want]) want = c;
        CHECK(node.prediction == want);
    }
}

TEST_CASE("fully grown trees memorize distinct training rows") {
    grove::Rng rng(61);
    std::vector<std::vector<double>> raw(150, std::vector<double>(3));
    std::vector<std::int32_t> labels(150);
    for (std::size_t i = 0; i < raw.size(); ++i) {
        for (auto& v : raw[i]) v = rng.next_double();  // continuous, so rows are distinct
        labels[i] = static_cast<std::int32_t>(rng.next_below(2));
    }
    const auto ds = make_dataset(3, 2, raw, labels);
    grove::TreeParams params;
    params.mtry = 3;  // full feature access guarantees purity is reachable
    const grove::Tree tree = grove::grow_tree(ds, unit_rows(150), params);
    for (std::size_t i = 0; i < ds.n_rows; ++i)
        CHECK(tree.predict(ds.row(i)) == static_cast<std::uint32_t>(ds.labels[i]));
}

TEST_CASE("leaf prediction ties break toward the lowest class id") {
    const auto ds = make_dataset(1, 3, {{1.0}, {1.0}, {1.0}, {1.0}}, {2, 1, 2, 1});
    grove::TreeParams params;
    params.mtry = 1;
    const grove::Tree tree = grove::grow_tree(ds, unit_rows(4), params);
    REQUIRE(tree.nodes.size() == 1);  // constant feature, nothing to split
    CHECK(tree.nodes[0].prediction == 1);
}
