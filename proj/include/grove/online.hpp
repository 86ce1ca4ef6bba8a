#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "grove/io.hpp"
#include "grove/rng.hpp"

namespace grove {

/// Online forest configuration. Feature value ranges must be declared up
/// front (range_lo/range_hi, one entry per feature); they seed the root
/// candidate thresholds before any data has been seen.
struct OnlineParams {
    std::uint32_t trees = 0;            // Q
    std::uint32_t candidates = 10;      // S drawn splits per growing leaf
    std::uint32_t max_depth = 0;        // no split commits at this depth; 0 means unlimited
    double lambda = 1.0;                // Poisson replication mean
    std::uint32_t split_min_count = 50; // alpha: arrivals needed before a commit
    double split_min_decrease = 0.01;   // beta: Gini decrease needed to commit
    double two_stream_rho = 0.0;        // 0: Poisson replication; >0: structure-stream probability
    std::uint64_t seed = 0;
    std::uint32_t n_features = 0;
    std::uint32_t n_classes = 2;
    std::vector<double> range_lo, range_hi;

    void validate() const {
        if (trees == 0) throw std::invalid_argument("online params: tree count must be positive");
        if (candidates == 0) throw std::invalid_argument("online params: need at least one candidate split");
        if (n_features == 0) throw std::invalid_argument("online params: feature count must be positive");
        if (n_classes < 2) throw std::invalid_argument("online params: need at least two classes");
        if (!(lambda > 0.0)) throw std::invalid_argument("online params: lambda must be positive");
        if (!(two_stream_rho >= 0.0 && two_stream_rho <= 1.0))
            throw std::invalid_argument("online params: rho out of [0,1]");
        if (range_lo.size() != n_features || range_hi.size() != n_features)
            throw std::invalid_argument("online params: declared ranges must cover every feature");
        for (std::size_t j = 0; j < range_lo.size(); ++j)
            if (!(range_lo[j] < range_hi[j]))
                throw std::invalid_argument("online params: each declared range needs lo < hi");
    }
};

/// One drawn candidate split of a growing leaf, with the class counts of the
/// two children it would create, accumulated since the candidate set was made.
struct OnlineCandidate {
    std::uint32_t feature = 0;
    double threshold = 0.0;
    std::vector<double> left_counts, right_counts;
};

struct OnlineNode {
    std::int32_t feature = -1;  // -1 marks a growing leaf
    double threshold = 0.0;
    std::uint32_t left = 0, right = 0;
    std::uint32_t depth = 0;
    // Leaf payload. est_counts drive predictions; arrival_counts (and the
    // candidate child counts) drive split decisions. In replication mode both
    // see every arrival; in two-stream mode est_counts sees only the
    // estimation stream and the rest only the structure stream.
    std::vector<double> est_counts;
    std::vector<double> arrival_counts;
    std::vector<OnlineCandidate> candidates;
    std::vector<double> seen_lo, seen_hi;  // observed ranges, structure arrivals
    bool seen_any = false;

    bool is_leaf() const { return feature < 0; }
};

struct OnlineTree {
    std::vector<OnlineNode> nodes;
    Rng rng;

    std::uint32_t leaf_for(std::span<const double> x) const {
        std::uint32_t id = 0;
        while (!nodes[id].is_leaf())
            id = x[static_cast<std::size_t>(nodes[id].feature)] <= nodes[id].threshold ? nodes[id].left
                                                                                       : nodes[id].right;
        return id;
    }

    /// Class with the largest estimation count; an untouched leaf predicts 0.
    std::uint32_t predict(std::span<const double> x) const {
        const OnlineNode& leaf = nodes[leaf_for(x)];
        std::uint32_t best = 0;
        for (std::uint32_t c = 1; c < leaf.est_counts.size(); ++c)
            if (leaf.est_counts[c] > leaf.est_counts[best]) best = c;
        return best;
    }
};

/// Online random forest: per observation each tree draws an independent
/// Poisson(lambda) replication count (or, in two-stream mode, a one-shot
/// structure/estimation assignment) and growing leaves commit the best of S
/// pre-drawn candidate splits once enough arrivals have accumulated.
/// Committed splits are immutable. Trees with replication count zero supply
/// the running out-of-bag estimate, evaluated at arrival time and never
/// revised.
class OnlineForest {
public:
    explicit OnlineForest(const OnlineParams& params) : params_(params) {
        params_.validate();
        trees_.resize(params_.trees);
        for (std::uint32_t t = 0; t < params_.trees; ++t) {
            trees_[t].rng = Rng(derive_seed(params_.seed, kStreamOnlineTree, t));
            trees_[t].nodes.push_back(fresh_leaf(trees_[t], 0, nullptr));
        }
    }

    const OnlineParams& params() const { return params_; }
    const std::vector<OnlineTree>& trees() const { return trees_; }
    bool two_stream() const { return params_.two_stream_rho > 0.0; }
    std::uint64_t observations() const { return observations_; }
    std::uint64_t replication_draws() const { return k_draws_; }
    std::uint64_t replication_zeroes() const { return k_zeroes_; }

    /// Feed one observation to every tree.
    void update(std::span<const double> x, std::uint32_t label) {
        check_input(x, label);
        if (two_stream()) {
            for (auto& tree : trees_) {
                const bool structure = tree.rng.next_double() < params_.two_stream_rho;
                apply(tree, x, label, 1, structure ? StreamKind::kStructure : StreamKind::kEstimation);
            }
            ++observations_;
            return;
        }
        // Draw every tree's replication count first, then score the
        // observation on the k == 0 trees (which this update leaves intact).
        k_scratch_.resize(trees_.size());
        for (std::size_t t = 0; t < trees_.size(); ++t) {
            k_scratch_[t] = trees_[t].rng.poisson(params_.lambda);
            ++k_draws_;
            k_zeroes_ += k_scratch_[t] == 0;
        }
        std::vector<std::uint32_t> votes(params_.n_classes, 0);
        bool any_oob = false;
        for (std::size_t t = 0; t < trees_.size(); ++t) {
            if (k_scratch_[t] != 0) continue;
            ++votes[trees_[t].predict(x)];
            any_oob = true;
        }
        if (any_oob) {
            std::uint32_t best = 0;
            for (std::uint32_t c = 1; c < params_.n_classes; ++c)
                if (votes[c] > votes[best]) best = c;
            ++oob_total_;
            oob_wrong_ += best != label;
        }
        for (std::size_t t = 0; t < trees_.size(); ++t)
            if (k_scratch_[t] > 0)
                apply(trees_[t], x, label, k_scratch_[t], StreamKind::kBoth);
        ++observations_;
    }

    /// Update a single tree with an explicit replication count. k == 0 leaves
    /// the tree untouched. Exposed as the building block update() is made of.
    void update_tree(std::size_t t, std::span<const double> x, std::uint32_t label, std::uint64_t k) {
        check_input(x, label);
        if (k > 0) apply(trees_.at(t), x, label, k, StreamKind::kBoth);
    }

    /// Majority vote over the trees, ties to the lowest class id.
    std::uint32_t predict(std::span<const double> x) const {
        std::vector<std::uint32_t> votes(params_.n_classes, 0);
        for (const auto& tree : trees_) ++votes[tree.predict(x)];
        std::uint32_t best = 0;
        for (std::uint32_t c = 1; c < params_.n_classes; ++c)
            if (votes[c] > votes[best]) best = c;
        return best;
    }

    /// Running average of out-of-bag misclassifications. Unavailable until
    /// some observation has drawn k == 0 somewhere, and always unavailable in
    /// two-stream mode (it performs no online bootstrap).
    std::optional<double> oob_estimate() const {
        if (oob_total_ == 0) return std::nullopt;
        return static_cast<double>(oob_wrong_) / static_cast<double>(oob_total_);
    }

    std::uint64_t oob_evaluated() const { return oob_total_; }

    void serialize(BinaryWriter& out) const;
    static OnlineForest deserialize(BinaryReader& in);

private:
    enum class StreamKind { kBoth, kStructure, kEstimation };

    void check_input(std::span<const double> x, std::uint32_t label) const {
        if (x.size() != params_.n_features) throw std::invalid_argument("online update: feature count mismatch");
        for (double v : x)
            if (!std::isfinite(v)) throw std::invalid_argument("online update: non-finite feature value");
        if (label >= params_.n_classes) throw std::invalid_argument("online update: label out of range");
    }

    /// A new growing leaf. Candidate thresholds draw from the parent's
    /// observed ranges where it saw spread, falling back to the declared
    /// ranges (the root always uses the declared ranges).
    OnlineNode fresh_leaf(OnlineTree& tree, std::uint32_t depth, const OnlineNode* parent) {
        OnlineNode node;
        node.depth = depth;
        node.est_counts.assign(params_.n_classes, 0.0);
        node.arrival_counts.assign(params_.n_classes, 0.0);
        node.seen_lo.assign(params_.n_features, 0.0);
        node.seen_hi.assign(params_.n_features, 0.0);
        const bool can_split = params_.max_depth == 0 || depth < params_.max_depth;
        if (!can_split) return node;  // no candidates needed at the depth cap
        node.candidates.resize(params_.candidates);
        for (auto& cand : node.candidates) {
            cand.feature = static_cast<std::uint32_t>(tree.rng.next_below(params_.n_features));
            double lo = params_.range_lo[cand.feature];
            double hi = params_.range_hi[cand.feature];
            if (parent && parent->seen_any && parent->seen_lo[cand.feature] < parent->seen_hi[cand.feature]) {
                lo = parent->seen_lo[cand.feature];
                hi = parent->seen_hi[cand.feature];
            }
            cand.threshold = lo + tree.rng.next_double() * (hi - lo);
            cand.left_counts.assign(params_.n_classes, 0.0);
            cand.right_counts.assign(params_.n_classes, 0.0);
        }
        return node;
    }

    void apply(OnlineTree& tree, std::span<const double> x, std::uint32_t label, std::uint64_t k,
               StreamKind stream) {
        const std::uint32_t leaf_id = tree.leaf_for(x);
        OnlineNode& leaf = tree.nodes[leaf_id];
        const auto kd = static_cast<double>(k);
        if (stream != StreamKind::kStructure) leaf.est_counts[label] += kd;
        if (stream == StreamKind::kEstimation) return;

        leaf.arrival_counts[label] += kd;
        if (!leaf.seen_any) {
            for (std::uint32_t j = 0; j < params_.n_features; ++j) leaf.seen_lo[j] = leaf.seen_hi[j] = x[j];
            leaf.seen_any = true;
        } else {
            for (std::uint32_t j = 0; j < params_.n_features; ++j) {
                leaf.seen_lo[j] = std::min(leaf.seen_lo[j], x[j]);
                leaf.seen_hi[j] = std::max(leaf.seen_hi[j], x[j]);
            }
        }
        for (auto& cand : leaf.candidates)
            (x[cand.feature] <= cand.threshold ? cand.left_counts : cand.right_counts)[label] += kd;

        maybe_split(tree, leaf_id);
    }

    /// Commit the best candidate once the leaf accumulated split_min_count
    /// arrivals and some candidate cleanly separates with a Gini decrease of
    /// at least split_min_decrease. Ties keep the earliest drawn candidate.
    void maybe_split(OnlineTree& tree, std::uint32_t leaf_id) {
        OnlineNode& leaf = tree.nodes[leaf_id];
        if (leaf.candidates.empty()) return;
        double total = 0.0;
        for (double c : leaf.arrival_counts) total += c;
        if (total < static_cast<double>(params_.split_min_count)) return;

        auto gini_of = [](const std::vector<double>& counts, double w) {
            if (w <= 0.0) return 0.0;
            double sq = 0.0;
            for (double c : counts) {
                const double f = c / w;
                sq += f * f;
            }
            return 1.0 - sq;
        };
        const double node_gini = gini_of(leaf.arrival_counts, total);
        int best = -1;
        double best_decrease = 0.0;
        for (std::size_t s = 0; s < leaf.candidates.size(); ++s) {
            const auto& cand = leaf.candidates[s];
            double wl = 0.0, wr = 0.0;
            for (double c : cand.left_counts) wl += c;
            for (double c : cand.right_counts) wr += c;
            if (!(wl > 0.0) || !(wr > 0.0)) continue;
            const double decrease = node_gini - (wl / total) * gini_of(cand.left_counts, wl) -
                                    (wr / total) * gini_of(cand.right_counts, wr);
            if (best < 0 ? decrease >= params_.split_min_decrease : decrease > best_decrease) {
                best = static_cast<int>(s);
                best_decrease = decrease;
            }
        }
        if (best < 0) return;

        const OnlineCandidate chosen = leaf.candidates[static_cast<std::size_t>(best)];
        OnlineNode left = fresh_leaf(tree, leaf.depth + 1, &leaf);
        OnlineNode right = fresh_leaf(tree, leaf.depth + 1, &leaf);
        if (!two_stream()) {
            // Replication mode: the candidate's partition is exactly the data
            // the children would have received, so they inherit it.
            left.est_counts = chosen.left_counts;
            right.est_counts = chosen.right_counts;
        }
        const auto left_id = static_cast<std::uint32_t>(tree.nodes.size());
        tree.nodes.push_back(std::move(left));
        const auto right_id = static_cast<std::uint32_t>(tree.nodes.size());
        tree.nodes.push_back(std::move(right));
        OnlineNode& parent = tree.nodes[leaf_id];  // re-fetch: push_back may reallocate
        parent.feature = static_cast<std::int32_t>(chosen.feature);
        parent.threshold = chosen.threshold;
        parent.left = left_id;
        parent.right = right_id;
        parent.est_counts.clear();
        parent.arrival_counts.clear();
        parent.candidates.clear();
        parent.seen_lo.clear();
        parent.seen_hi.clear();
    }

    OnlineParams params_;
    std::vector<OnlineTree> trees_;
    std::vector<std::uint64_t> k_scratch_;
    std::uint64_t observations_ = 0;
    std::uint64_t oob_wrong_ = 0;
    std::uint64_t oob_total_ = 0;
    std::uint64_t k_draws_ = 0;
    std::uint64_t k_zeroes_ = 0;
};

inline void OnlineForest::serialize(BinaryWriter& out) const {
    out.magic("GRON");
    out.u32(1);
    out.u32(params_.trees);
    out.u32(params_.candidates);
    out.u32(params_.max_depth);
    out.f64(params_.lambda);
    out.u32(params_.split_min_count);
    out.f64(params_.split_min_decrease);
    out.f64(params_.two_stream_rho);
    out.u64(params_.seed);
    out.u32(params_.n_features);
    out.u32(params_.n_classes);
    for (double v : params_.range_lo) out.f64(v);
    for (double v : params_.range_hi) out.f64(v);
    out.u64(observations_);
    out.u64(oob_wrong_);
    out.u64(oob_total_);
    out.u64(k_draws_);
    out.u64(k_zeroes_);
    for (const auto& tree : trees_) {
        const auto state = tree.rng.state();
        for (std::uint64_t word : state) out.u64(word);
        out.u8(tree.rng.has_cached_gauss() ? 1 : 0);
        out.f64(tree.rng.cached_gauss());
        out.u32(static_cast<std::uint32_t>(tree.nodes.size()));
        for (const auto& node : tree.nodes) {
            if (!node.is_leaf()) {
                out.u8(1);
                out.u32(static_cast<std::uint32_t>(node.feature));
                out.f64(node.threshold);
                out.u32(node.left);
                out.u32(node.right);
                out.u32(node.depth);
                continue;
            }
            out.u8(0);
            out.u32(node.depth);
            for (double c : node.est_counts) out.f64(c);
            for (double c : node.arrival_counts) out.f64(c);
            out.u8(node.seen_any ? 1 : 0);
            if (node.seen_any) {
                for (double v : node.seen_lo) out.f64(v);
                for (double v : node.seen_hi) out.f64(v);
            }
            out.u32(static_cast<std::uint32_t>(node.candidates.size()));
            for (const auto& cand : node.candidates) {
                out.u32(cand.feature);
                out.f64(cand.threshold);
                for (double c : cand.left_counts) out.f64(c);
                for (double c : cand.right_counts) out.f64(c);
            }
        }
    }
}

inline OnlineForest OnlineForest::deserialize(BinaryReader& in) {
    in.expect_magic("GRON", "online forest");
    const std::uint32_t version = in.u32();
    if (version != 1)
        throw std::runtime_error("unsupported online checkpoint version " + std::to_string(version));
    OnlineParams params;
    params.trees = in.u32();
    params.candidates = in.u32();
    params.max_depth = in.u32();
    params.lambda = in.f64();
    params.split_min_count = in.u32();
    params.split_min_decrease = in.f64();
    params.two_stream_rho = in.f64();
    params.seed = in.u64();
    params.n_features = in.u32();
    params.n_classes = in.u32();
    params.range_lo.resize(params.n_features);
    params.range_hi.resize(params.n_features);
    for (auto& v : params.range_lo) v = in.f64();
    for (auto& v : params.range_hi) v = in.f64();

    OnlineForest forest(params);
    forest.observations_ = in.u64();
    forest.oob_wrong_ = in.u64();
    forest.oob_total_ = in.u64();
    forest.k_draws_ = in.u64();
    forest.k_zeroes_ = in.u64();
    for (auto& tree : forest.trees_) {
        std::array<std::uint64_t, 4> state;
        for (auto& word : state) word = in.u64();
        const bool have_gauss = in.u8() != 0;
        const double gauss = in.f64();
        tree.rng.restore(state, have_gauss, gauss);
        tree.nodes.assign(in.u32(), OnlineNode{});
        for (auto& node : tree.nodes) {
            if (in.u8() == 1) {
                node.feature = static_cast<std::int32_t>(in.u32());
                node.threshold = in.f64();
                node.left = in.u32();
                node.right = in.u32();
                node.depth = in.u32();
                continue;
            }
            node.feature = -1;
            node.depth = in.u32();
            node.est_counts.resize(params.n_classes);
            node.arrival_counts.resize(params.n_classes);
            for (auto& c : node.est_counts) c = in.f64();
            for (auto& c : node.arrival_counts) c = in.f64();
            node.seen_any = in.u8() != 0;
            node.seen_lo.assign(params.n_features, 0.0);
            node.seen_hi.assign(params.n_features, 0.0);
            if (node.seen_any) {
                for (auto& v : node.seen_lo) v = in.f64();
                for (auto& v : node.seen_hi) v = in.f64();
            }
            node.candidates.resize(in.u32());
            for (auto& cand : node.candidates) {
                cand.feature = in.u32();
                cand.threshold = in.f64();
                cand.left_counts.resize(params.n_classes);
                cand.right_counts.resize(params.n_classes);
                for (auto& c : cand.left_counts) c = in.f64();
                for (auto& c : cand.right_counts) c = in.f64();
            }
        }
    }
    return forest;
}

inline void save_online_forest(const OnlineForest& forest, const std::string& path) {
    BinaryWriter out;
    forest.serialize(out);
    out.save(path);
}

inline OnlineForest load_online_forest(const std::string& path) {
    BinaryReader in = BinaryReader::from_file(path);
    return OnlineForest::deserialize(in);
}

}  // namespace grove
