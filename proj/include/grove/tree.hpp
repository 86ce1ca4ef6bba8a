#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <queue>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "grove/dataset.hpp"
#include "grove/io.hpp"
#include "grove/rng.hpp"

namespace grove {

/// Distinct row ids with positive real weights. Bootstrap draws become
/// (index, multiplicity) pairs; the subsample-weighting schemes put real
/// bootstrap weights here without materializing replicated rows.
struct WeightedRows {
    std::vector<std::uint32_t> indices;
    std::vector<double> weights;

    double total_weight() const {
        double t = 0.0;
        for (double w : weights) t += w;
        return t;
    }

    void validate(std::size_t n_rows) const {
        if (indices.size() != weights.size()) throw std::runtime_error("weighted rows: index/weight size mismatch");
        for (std::uint32_t i : indices)
            if (i >= n_rows) throw std::runtime_error("weighted rows: index out of range");
        for (double w : weights)
            if (!(w > 0.0)) throw std::runtime_error("weighted rows: weights must be positive");
    }
};

enum class SplitMode { kExhaustiveGini, kErt };

struct TreeParams {
    std::uint32_t mtry = 0;        // features tried per node; 0 means floor(sqrt(p))
    std::uint32_t max_leaves = 0;  // leaf budget; 0 means unlimited
    std::uint32_t max_depth = 0;   // 0 means unlimited
    double min_node_weight = 2.0;  // minimal total weight to attempt a split
    SplitMode split_mode = SplitMode::kExhaustiveGini;
    std::uint32_t ert_candidates = 10;  // S, only used by kErt
    std::uint64_t seed = 0;
};

/// A candidate split. decrease is the weighted Gini decrease
///   G(node) - (W_L/W) G(L) - (W_R/W) G(R)
/// with G(c) = 1 - sum_k (c_k / W)^2 over weighted class counts.
struct SplitCandidate {
    std::uint32_t feature = 0;
    double threshold = 0.0;
    double decrease = 0.0;
};

struct TreeNode {
    std::int32_t feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    std::uint32_t left = 0;
    std::uint32_t right = 0;
    std::uint32_t prediction = 0;           // leaves only
    std::vector<double> class_counts;       // leaves only, weighted

    bool is_leaf() const { return feature < 0; }
};

struct Tree {
    std::vector<TreeNode> nodes;  // root at index 0
    std::uint32_t n_classes = 0;
    std::uint32_t depth = 0;

    std::size_t leaf_count() const {
        std::size_t leaves = 0;
        for (const auto& node : nodes) leaves += node.is_leaf();
        return leaves;
    }

    /// Route an observation to its leaf: left when x[feature] <= threshold.
    std::uint32_t leaf_for(std::span<const double> x) const {
        std::uint32_t id = 0;
        while (!nodes[id].is_leaf())
            id = x[static_cast<std::size_t>(nodes[id].feature)] <= nodes[id].threshold ? nodes[id].left
                                                                                       : nodes[id].right;
        return id;
    }

    std::uint32_t predict(std::span<const double> x) const { return nodes[leaf_for(x)].prediction; }

    /// Bitmask of features used by at least one split.
    std::vector<bool> used_features(std::size_t p) const {
        std::vector<bool> used(p, false);
        for (const auto& node : nodes)
            if (!node.is_leaf()) used[static_cast<std::size_t>(node.feature)] = true;
        return used;
    }
};

inline double gini(const std::vector<double>& counts, double total) {
    if (total <= 0.0) return 0.0;
    double sq = 0.0;
    for (double c : counts) {
        const double frac = c / total;
        sq += frac * frac;
    }
    return 1.0 - sq;
}

namespace detail {

struct SplitEntry {
    double value;
    double weight;
    std::uint32_t label;
};

struct GrowScratch {
    std::vector<SplitEntry> entries;
    std::vector<double> left_counts;
    std::vector<double> right_counts;
    std::vector<std::uint32_t> features;
    std::vector<std::uint32_t> part_idx;
    std::vector<double> part_w;
};

/// Midpoint of two consecutive distinct values, nudged down to the lower value
/// if rounding would land it on the upper one (which would route both sides left).
inline double split_midpoint(double lo, double hi) {
    const double mid = lo + (hi - lo) * 0.5;
    return mid < hi ? mid : lo;
}

inline bool candidate_beats(double d, std::uint32_t f, double t, const SplitCandidate& best) {
    if (d != best.decrease) return d > best.decrease;
    if (f != best.feature) return f < best.feature;
    return t < best.threshold;
}

/// Exhaustive Gini scan over midpoints of consecutive distinct sorted values,
/// for the given feature subset. Features are scanned in ascending order and
/// ties keep the first (lowest feature, then lowest threshold) candidate.
inline std::optional<SplitCandidate> best_split_exhaustive_core(
    const Dataset& ds, const std::uint32_t* idx, const double* w, std::size_t count,
    const std::vector<double>& node_counts, double node_weight, double node_gini,
    std::span<const std::uint32_t> features, GrowScratch& scratch) {
    if (node_gini <= 0.0 || count < 2) return std::nullopt;
    SplitCandidate best;
    best.decrease = 0.0;
    bool found = false;
    const std::size_t n_classes = node_counts.size();
    scratch.left_counts.assign(n_classes, 0.0);
    auto& entries = scratch.entries;
    for (const std::uint32_t f : features) {
        entries.resize(count);
        for (std::size_t k = 0; k < count; ++k)
            entries[k] = {ds.at(idx[k], f), w[k], static_cast<std::uint32_t>(ds.labels[idx[k]])};
        std::sort(entries.begin(), entries.end(),
                  [](const SplitEntry& a, const SplitEntry& b) { return a.value < b.value; });
        std::fill(scratch.left_counts.begin(), scratch.left_counts.end(), 0.0);
        double left_weight = 0.0;
        for (std::size_t k = 0; k + 1 < count; ++k) {
            scratch.left_counts[entries[k].label] += entries[k].weight;
            left_weight += entries[k].weight;
            if (!(entries[k].value < entries[k + 1].value)) continue;
            const double right_weight = node_weight - left_weight;
            double left_sq = 0.0, right_sq = 0.0;
            for (std::size_t c = 0; c < n_classes; ++c) {
                const double lf = scratch.left_counts[c] / left_weight;
                const double rf = (node_counts[c] - scratch.left_counts[c]) / right_weight;
                left_sq += lf * lf;
                right_sq += rf * rf;
            }
            const double decrease = node_gini - (left_weight / node_weight) * (1.0 - left_sq) -
                                    (right_weight / node_weight) * (1.0 - right_sq);
            if (decrease > 0.0) {
                const double threshold = split_midpoint(entries[k].value, entries[k + 1].value);
                if (!found || candidate_beats(decrease, f, threshold, best)) {
                    best = {f, threshold, decrease};
                    found = true;
                }
            }
        }
    }
    if (!found) return std::nullopt;
    return best;
}

/// Extremely-randomized candidate search: S independent (feature, threshold)
/// draws, feature uniform over all columns, threshold uniform over the node's
/// observed [min, max] of that feature; best positive decrease wins. Candidates
/// whose threshold separates nothing are discarded.
inline std::optional<SplitCandidate> best_split_ert_core(
    const Dataset& ds, const std::uint32_t* idx, const double* w, std::size_t count,
    const std::vector<double>& node_counts, double node_weight, double node_gini,
    std::uint32_t s_candidates, Rng& rng, GrowScratch& scratch) {
    if (node_gini <= 0.0 || count < 2) return std::nullopt;
    const std::size_t p = ds.n_cols;
    const std::size_t n_classes = node_counts.size();
    SplitCandidate best;
    best.decrease = 0.0;
    bool found = false;
    std::vector<double> lo(p, 0.0), hi(p, 0.0);
    std::vector<bool> scanned(p, false);
    for (std::uint32_t s = 0; s < s_candidates; ++s) {
        const auto f = static_cast<std::uint32_t>(rng.next_below(p));
        const double u = rng.next_double();
        if (!scanned[f]) {
            double mn = ds.at(idx[0], f), mx = mn;
            for (std::size_t k = 1; k < count; ++k) {
                const double v = ds.at(idx[k], f);
                mn = std::min(mn, v);
                mx = std::max(mx, v);
            }
            lo[f] = mn;
            hi[f] = mx;
            scanned[f] = true;
        }
        if (!(lo[f] < hi[f])) continue;  // constant feature in this node
        double threshold = lo[f] + u * (hi[f] - lo[f]);
        if (!(threshold < hi[f])) threshold = lo[f];
        scratch.left_counts.assign(n_classes, 0.0);
        double left_weight = 0.0;
        for (std::size_t k = 0; k < count; ++k) {
            if (ds.at(idx[k], f) <= threshold) {
                scratch.left_counts[static_cast<std::uint32_t>(ds.labels[idx[k]])] += w[k];
                left_weight += w[k];
            }
        }
        const double right_weight = node_weight - left_weight;
        if (!(left_weight > 0.0) || !(right_weight > 0.0)) continue;
        double left_sq = 0.0, right_sq = 0.0;
        for (std::size_t c = 0; c < n_classes; ++c) {
            const double lf = scratch.left_counts[c] / left_weight;
            const double rf = (node_counts[c] - scratch.left_counts[c]) / right_weight;
            left_sq += lf * lf;
            right_sq += rf * rf;
        }
        const double decrease = node_gini - (left_weight / node_weight) * (1.0 - left_sq) -
                                (right_weight / node_weight) * (1.0 - right_sq);
        if (decrease > 0.0 && (!found || candidate_beats(decrease, f, threshold, best))) {
            best = {f, threshold, decrease};
            found = true;
        }
    }
    if (!found) return std::nullopt;
    return best;
}

}  // namespace detail

/// Stand-alone exhaustive best split over a weighted node, for the given
/// feature subset. Returns nothing when no split has positive decrease.
inline std::optional<SplitCandidate> best_split_exhaustive(const Dataset& ds, const WeightedRows& rows,
                                                           std::span<const std::uint32_t> features) {
    rows.validate(ds.n_rows);
    std::vector<double> counts(ds.n_classes, 0.0);
    for (std::size_t k = 0; k < rows.indices.size(); ++k)
        counts[static_cast<std::uint32_t>(ds.labels[rows.indices[k]])] += rows.weights[k];
    const double total = rows.total_weight();
    detail::GrowScratch scratch;
    return detail::best_split_exhaustive_core(ds, rows.indices.data(), rows.weights.data(), rows.indices.size(),
                                              counts, total, gini(counts, total), features, scratch);
}

/// Stand-alone extremely-randomized best split with S drawn candidates.
inline std::optional<SplitCandidate> best_split_ert(const Dataset& ds, const WeightedRows& rows,
                                                    std::uint32_t s_candidates, Rng& rng) {
    rows.validate(ds.n_rows);
    std::vector<double> counts(ds.n_classes, 0.0);
    for (std::size_t k = 0; k < rows.indices.size(); ++k)
        counts[static_cast<std::uint32_t>(ds.labels[rows.indices[k]])] += rows.weights[k];
    const double total = rows.total_weight();
    detail::GrowScratch scratch;
    return detail::best_split_ert_core(ds, rows.indices.data(), rows.weights.data(), rows.indices.size(), counts,
                                       total, gini(counts, total), s_candidates, rng, scratch);
}

/// Grow a tree best-first: a frontier of expandable leaves is kept ordered by
/// the Gini decrease of each leaf's best split (ties expand the earliest
/// created node), and leaves are expanded until the leaf budget or the
/// frontier is exhausted. Deterministic for identical (ds, rows, params), and
/// invariant under replacing integer weights by replicated rows.
inline Tree grow_tree(const Dataset& ds, const WeightedRows& rows, const TreeParams& params) {
    rows.validate(ds.n_rows);
    if (rows.indices.empty()) throw std::invalid_argument("grow_tree: empty training rows");
    if (ds.n_classes < 1) throw std::invalid_argument("grow_tree: dataset has no classes");
    const std::size_t p = ds.n_cols;
    std::uint32_t mtry = params.mtry;
    if (mtry == 0) mtry = std::max(1u, static_cast<std::uint32_t>(std::floor(std::sqrt(static_cast<double>(p)))));
    if (mtry > p) throw std::invalid_argument("grow_tree: mtry exceeds feature count");
    if (params.split_mode == SplitMode::kErt && params.ert_candidates == 0)
        throw std::invalid_argument("grow_tree: ert mode needs at least one candidate");

    Tree tree;
    tree.n_classes = static_cast<std::uint32_t>(ds.n_classes);
    std::vector<std::uint32_t> idx = rows.indices;
    std::vector<double> w = rows.weights;
    Rng rng(params.seed);
    detail::GrowScratch scratch;

    struct Pending {
        double decrease;
        std::uint32_t node;
        SplitCandidate cand;
        std::uint32_t begin, end, depth;
    };
    struct PendingOrder {
        bool operator()(const Pending& a, const Pending& b) const {
            if (a.decrease != b.decrease) return a.decrease < b.decrease;
            return a.node > b.node;  // ties expand the earlier node
        }
    };
    std::priority_queue<Pending, std::vector<Pending>, PendingOrder> frontier;

    auto make_leaf = [&](std::size_t begin, std::size_t end) {
        TreeNode node;
        node.class_counts.assign(ds.n_classes, 0.0);
        for (std::size_t k = begin; k < end; ++k)
            node.class_counts[static_cast<std::uint32_t>(ds.labels[idx[k]])] += w[k];
        node.prediction = 0;
        for (std::uint32_t c = 1; c < ds.n_classes; ++c)
            if (node.class_counts[c] > node.class_counts[node.prediction]) node.prediction = c;
        tree.nodes.push_back(std::move(node));
        return static_cast<std::uint32_t>(tree.nodes.size() - 1);
    };

    auto consider = [&](std::uint32_t node_id, std::uint32_t begin, std::uint32_t end, std::uint32_t depth) {
        const TreeNode& node = tree.nodes[node_id];
        double total = 0.0;
        for (double c : node.class_counts) total += c;
        if (total < params.min_node_weight) return;
        if (params.max_depth > 0 && depth >= params.max_depth) return;
        const double node_gini = gini(node.class_counts, total);
        std::optional<SplitCandidate> cand;
        if (params.split_mode == SplitMode::kExhaustiveGini) {
            auto& features = scratch.features;
            if (mtry == p) {
                features.resize(p);
                for (std::size_t j = 0; j < p; ++j) features[j] = static_cast<std::uint32_t>(j);
            } else {
                features.resize(p);
                for (std::size_t j = 0; j < p; ++j) features[j] = static_cast<std::uint32_t>(j);
                for (std::uint32_t k = 0; k < mtry; ++k) {
                    const std::size_t j = k + static_cast<std::size_t>(rng.next_below(p - k));
                    std::swap(features[k], features[j]);
                }
                features.resize(mtry);
                std::sort(features.begin(), features.end());
            }
            cand = detail::best_split_exhaustive_core(ds, idx.data() + begin, w.data() + begin, end - begin,
                                                      node.class_counts, total, node_gini, features, scratch);
        } else {
            cand = detail::best_split_ert_core(ds, idx.data() + begin, w.data() + begin, end - begin,
                                               node.class_counts, total, node_gini, params.ert_candidates, rng,
                                               scratch);
        }
        if (cand) frontier.push({cand->decrease, node_id, *cand, begin, end, depth});
    };

    make_leaf(0, idx.size());
    consider(0, 0, static_cast<std::uint32_t>(idx.size()), 0);
    std::size_t leaves = 1;

    while (!frontier.empty() && (params.max_leaves == 0 || leaves < params.max_leaves)) {
        const Pending top = frontier.top();
        frontier.pop();

        // Stable partition of the segment by the chosen split.
        auto& li = scratch.part_idx;
        auto& lw = scratch.part_w;
        li.clear();
        lw.clear();
        std::size_t fill = top.begin;
        for (std::size_t k = top.begin; k < top.end; ++k) {
            if (ds.at(idx[k], top.cand.feature) <= top.cand.threshold) {
                li.push_back(idx[k]);
                lw.push_back(w[k]);
            } else {
                idx[fill] = idx[k];
                w[fill] = w[k];
                ++fill;
            }
        }
        const auto mid = static_cast<std::uint32_t>(top.begin + li.size());
        std::copy_backward(idx.begin() + top.begin, idx.begin() + fill, idx.begin() + top.end);
        std::copy_backward(w.begin() + top.begin, w.begin() + fill, w.begin() + top.end);
        std::copy(li.begin(), li.end(), idx.begin() + top.begin);
        std::copy(lw.begin(), lw.end(), w.begin() + top.begin);

        const std::uint32_t left = make_leaf(top.begin, mid);
        const std::uint32_t right = make_leaf(mid, top.end);
        TreeNode& parent = tree.nodes[top.node];
        parent.feature = static_cast<std::int32_t>(top.cand.feature);
        parent.threshold = top.cand.threshold;
        parent.left = left;
        parent.right = right;
        parent.class_counts.clear();
        parent.class_counts.shrink_to_fit();
        ++leaves;
        tree.depth = std::max(tree.depth, top.depth + 1);
        consider(left, top.begin, mid, top.depth + 1);
        consider(right, mid, top.end, top.depth + 1);
    }
    return tree;
}

/// Versioned binary tree blob (little-endian).
inline void serialize_tree(const Tree& tree, BinaryWriter& out) {
    out.magic("GRTR");
    out.u32(1);
    out.u32(tree.n_classes);
    out.u32(tree.depth);
    out.u32(static_cast<std::uint32_t>(tree.nodes.size()));
    for (const auto& node : tree.nodes) {
        if (node.is_leaf()) {
            out.u8(0);
            out.u32(node.prediction);
            for (std::uint32_t c = 0; c < tree.n_classes; ++c)
                out.f64(c < node.class_counts.size() ? node.class_counts[c] : 0.0);
        } else {
            out.u8(1);
            out.u32(static_cast<std::uint32_t>(node.feature));
            out.f64(node.threshold);
            out.u32(node.left);
            out.u32(node.right);
        }
    }
}

inline Tree deserialize_tree(BinaryReader& in) {
    in.expect_magic("GRTR", "tree");
    const std::uint32_t version = in.u32();
    if (version != 1) throw std::runtime_error("unsupported tree format version " + std::to_string(version));
    Tree tree;
    tree.n_classes = in.u32();
    tree.depth = in.u32();
    const std::uint32_t count = in.u32();
    tree.nodes.resize(count);
    for (auto& node : tree.nodes) {
        if (in.u8() == 0) {
            node.feature = -1;
            node.prediction = in.u32();
            node.class_counts.resize(tree.n_classes);
            for (std::uint32_t c = 0; c < tree.n_classes; ++c) node.class_counts[c] = in.f64();
        } else {
            node.feature = static_cast<std::int32_t>(in.u32());
            node.threshold = in.f64();
            node.left = in.u32();
            node.right = in.u32();
        }
    }
    return tree;
}

/// Human-readable dump, one node per line, children indented under parents.
inline std::string tree_to_text(const Tree& tree) {
    std::ostringstream out;
    auto walk = [&](auto&& self, std::uint32_t id, int indent) -> void {
        for (int i = 0; i < indent; ++i) out << "  ";
        const TreeNode& node = tree.nodes[id];
        if (node.is_leaf()) {
            out << "node " << id << " leaf prediction=" << node.prediction << " counts=[";
            for (std::size_t c = 0; c < node.class_counts.size(); ++c)
                out << (c ? "," : "") << node.class_counts[c];
            out << "]\n";
        } else {
            out << "node " << id << " split x" << (node.feature + 1) << " <= " << node.threshold << "\n";
            self(self, node.left, indent + 1);
            self(self, node.right, indent + 1);
        }
    };
    if (!tree.nodes.empty()) walk(walk, 0, 0);
    return out.str();
}

}  // namespace grove
