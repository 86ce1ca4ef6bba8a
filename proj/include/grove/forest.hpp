#pragma once

#include <chrono>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "grove/dataset.hpp"
#include "grove/io.hpp"
#include "grove/parallel.hpp"
#include "grove/resample.hpp"
#include "grove/tree.hpp"

namespace grove {

/// A trained forest: trees, the exact training rows of each tree (for
/// out-of-bag work), the plan that produced them, and the subforest grouping.
/// group_offsets has one [offsets[g], offsets[g+1]) tree range per subforest;
/// blb/dac forests get one group per subsample/chunk, everything else one
/// group overall. train_seconds is runtime metadata and is not serialized.
struct Forest {
    std::vector<Tree> trees;
    std::vector<WeightedRows> inbag;
    ResamplePlan plan;
    TreeParams tree_params;
    std::uint32_t n_features = 0;
    std::uint32_t n_classes = 0;
    std::vector<std::uint32_t> group_offsets;
    double train_seconds = 0.0;

    std::uint32_t group_count() const {
        return group_offsets.size() < 2 ? (trees.empty() ? 0 : 1)
                                        : static_cast<std::uint32_t>(group_offsets.size() - 1);
    }
};

inline std::uint32_t argmax_lowest(std::span<const std::uint32_t> votes) {
    std::uint32_t best = 0;
    for (std::uint32_t c = 1; c < votes.size(); ++c)
        if (votes[c] > votes[best]) best = c;
    return best;
}

/// Train the trees [tree_begin, tree_end) of a plan. Tree t always draws its
/// rows and grow seed from (master seed, t), so training any range on any
/// worker count yields the identical trees; train() is the full range and
/// chunk-wise dac training plus merge reproduces it exactly.
inline Forest train_tree_range(const Dataset& ds, const ResamplePlan& plan, const TreeParams& params,
                               unsigned workers, std::uint32_t tree_begin, std::uint32_t tree_end) {
    if (workers < 1) throw std::invalid_argument("train: workers must be >= 1");
    if (plan.n != ds.n_rows) throw std::invalid_argument("train: plan was built for a different row count");
    if (tree_begin >= tree_end || tree_end > plan.trees) throw std::invalid_argument("train: bad tree range");
    ds.validate();
    ResampleSequence seq(plan);

    Forest forest;
    forest.plan = plan;
    forest.tree_params = params;
    forest.n_features = static_cast<std::uint32_t>(ds.n_cols);
    forest.n_classes = static_cast<std::uint32_t>(ds.n_classes);
    const std::uint32_t count = tree_end - tree_begin;
    forest.trees.resize(count);
    forest.inbag.resize(count);

    const auto start = std::chrono::steady_clock::now();
    parallel_for(count, workers, [&](std::size_t k) {
        const std::uint32_t tree_id = tree_begin + static_cast<std::uint32_t>(k);
        WeightedRows rows = seq.tree_input(tree_id);
        TreeParams tp = params;
        tp.seed = derive_seed(plan.master_seed, kStreamTreeGrow, tree_id);
        forest.trees[k] = grow_tree(ds, rows, tp);
        forest.inbag[k] = std::move(rows);
    });
    forest.train_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    // Clip the plan's group boundaries to the trained range.
    const auto full = seq.group_offsets();
    forest.group_offsets.push_back(0);
    for (std::size_t g = 1; g < full.size(); ++g) {
        const std::uint32_t clipped = std::min(std::max(full[g], tree_begin), tree_end) - tree_begin;
        if (clipped > forest.group_offsets.back()) forest.group_offsets.push_back(clipped);
    }
    if (forest.group_offsets.size() < 2) forest.group_offsets.push_back(count);
    return forest;
}

inline Forest train(const Dataset& ds, const ResamplePlan& plan, const TreeParams& params, unsigned workers) {
    return train_tree_range(ds, plan, params, workers, 0, plan.trees);
}

/// Unweighted majority vote over all trees, ties to the lowest class id.
inline std::uint32_t predict(const Forest& forest, std::span<const double> x) {
    if (forest.trees.empty()) throw std::runtime_error("predict: empty forest");
    std::vector<std::uint32_t> votes(forest.n_classes, 0);
    for (const auto& tree : forest.trees) ++votes[tree.predict(x)];
    return argmax_lowest(votes);
}

inline std::vector<std::uint32_t> predict_batch(const Forest& forest, const double* data, std::size_t rows,
                                                unsigned workers) {
    if (forest.trees.empty()) throw std::runtime_error("predict: empty forest");
    std::vector<std::uint32_t> out(rows);
    parallel_for(rows, workers, [&](std::size_t i) {
        out[i] = predict(forest, {data + i * forest.n_features, forest.n_features});
    });
    return out;
}

inline std::vector<std::uint32_t> predict_batch(const Forest& forest, const Dataset& ds, unsigned workers) {
    if (ds.n_cols != forest.n_features) throw std::invalid_argument("predict: feature count mismatch");
    return predict_batch(forest, ds.features.data(), ds.n_rows, workers);
}

/// Concatenate forests trained on datasets with identical shape. Tree order
/// follows the argument order and each input's subforest boundaries are kept.
inline Forest merge(const std::vector<Forest>& parts) {
    if (parts.empty()) throw std::invalid_argument("merge: no forests given");
    Forest out;
    out.plan = parts.front().plan;
    out.tree_params = parts.front().tree_params;
    out.n_features = parts.front().n_features;
    out.n_classes = parts.front().n_classes;
    out.group_offsets.push_back(0);
    for (const Forest& part : parts) {
        if (part.n_features != out.n_features || part.n_classes != out.n_classes)
            throw std::invalid_argument("merge: forests disagree on feature or class count");
        const auto base = static_cast<std::uint32_t>(out.trees.size());
        out.trees.insert(out.trees.end(), part.trees.begin(), part.trees.end());
        out.inbag.insert(out.inbag.end(), part.inbag.begin(), part.inbag.end());
        if (part.group_offsets.size() >= 2) {
            for (std::size_t g = 1; g < part.group_offsets.size(); ++g)
                out.group_offsets.push_back(base + part.group_offsets[g]);
        } else {
            out.group_offsets.push_back(base + static_cast<std::uint32_t>(part.trees.size()));
        }
        out.train_seconds += part.train_seconds;
    }
    return out;
}

inline void serialize_params(const TreeParams& params, BinaryWriter& out) {
    out.u32(params.mtry);
    out.u32(params.max_leaves);
    out.u32(params.max_depth);
    out.f64(params.min_node_weight);
    out.u8(params.split_mode == SplitMode::kErt ? 1 : 0);
    out.u32(params.ert_candidates);
    out.u64(params.seed);
}

inline TreeParams deserialize_params(BinaryReader& in) {
    TreeParams params;
    params.mtry = in.u32();
    params.max_leaves = in.u32();
    params.max_depth = in.u32();
    params.min_node_weight = in.f64();
    params.split_mode = in.u8() ? SplitMode::kErt : SplitMode::kExhaustiveGini;
    params.ert_candidates = in.u32();
    params.seed = in.u64();
    return params;
}

/// Forest file: plan and parameters, subforest boundaries, tree blobs, and
/// the per-tree inbag records. Byte-stable for identical forests.
inline void serialize_forest(const Forest& forest, BinaryWriter& out) {
    out.magic("GRFO");
    out.u32(1);
    serialize_plan(forest.plan, out);
    serialize_params(forest.tree_params, out);
    out.u32(forest.n_features);
    out.u32(forest.n_classes);
    out.u32(static_cast<std::uint32_t>(forest.group_offsets.size()));
    for (std::uint32_t off : forest.group_offsets) out.u32(off);
    out.u32(static_cast<std::uint32_t>(forest.trees.size()));
    for (const auto& tree : forest.trees) serialize_tree(tree, out);
    for (const auto& rows : forest.inbag) {
        out.u32(static_cast<std::uint32_t>(rows.indices.size()));
        for (std::size_t k = 0; k < rows.indices.size(); ++k) {
            out.u32(rows.indices[k]);
            out.f64(rows.weights[k]);
        }
    }
}

inline Forest deserialize_forest(BinaryReader& in) {
    in.expect_magic("GRFO", "forest");
    const std::uint32_t version = in.u32();
    if (version != 1) throw std::runtime_error("unsupported forest format version " + std::to_string(version));
    Forest forest;
    forest.plan = deserialize_plan(in);
    forest.tree_params = deserialize_params(in);
    forest.n_features = in.u32();
    forest.n_classes = in.u32();
    forest.group_offsets.resize(in.u32());
    for (auto& off : forest.group_offsets) off = in.u32();
    forest.trees.resize(in.u32());
    for (auto& tree : forest.trees) tree = deserialize_tree(in);
    forest.inbag.resize(forest.trees.size());
    for (auto& rows : forest.inbag) {
        const std::uint32_t count = in.u32();
        rows.indices.resize(count);
        rows.weights.resize(count);
        for (std::uint32_t k = 0; k < count; ++k) {
            rows.indices[k] = in.u32();
            rows.weights[k] = in.f64();
        }
    }
    return forest;
}

inline void save_forest(const Forest& forest, const std::string& path) {
    BinaryWriter out;
    serialize_forest(forest, out);
    out.save(path);
}

inline Forest load_forest(const std::string& path) {
    BinaryReader in = BinaryReader::from_file(path);
    return deserialize_forest(in);
}

}  // namespace grove
