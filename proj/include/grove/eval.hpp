#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "grove/dataset.hpp"
#include "grove/forest.hpp"
#include "grove/parallel.hpp"
#include "grove/resample.hpp"

namespace grove {

/// Out-of-bag style error estimate. Rows that never received a vote are
/// excluded from the denominator and reported in skipped. vote_events counts
/// (tree, row) prediction events, a cheap instrument for the m-out-of-n
/// coverage checks.
struct OobError {
    std::optional<double> rate;
    std::uint64_t evaluated = 0;
    std::uint64_t skipped = 0;
    std::uint64_t vote_events = 0;
};

namespace detail {

/// One bit per (tree, row): is the row part of the tree's training sample.
class InbagBits {
public:
    InbagBits(const Forest& forest, std::size_t n) : n_(n), words_((n + 63) / 64) {
        bits_.assign(words_ * forest.trees.size(), 0);
        for (std::size_t t = 0; t < forest.inbag.size(); ++t)
            for (std::uint32_t i : forest.inbag[t].indices) {
                if (i >= n) throw std::invalid_argument("forest inbag references a row outside the dataset");
                bits_[t * words_ + i / 64] |= 1ull << (i % 64);
            }
    }

    bool inbag(std::size_t tree, std::size_t row) const {
        return (bits_[tree * words_ + row / 64] >> (row % 64)) & 1;
    }

private:
    std::size_t n_;
    std::size_t words_;
    std::vector<std::uint64_t> bits_;
};

}  // namespace detail

/// Out-of-bag forest error: every row is predicted by majority vote of the
/// trees whose training sample does not contain it.
inline OobError err_forest(const Forest& forest, const Dataset& ds, unsigned workers) {
    if (forest.trees.empty()) throw std::runtime_error("err_forest: empty forest");
    if (ds.n_cols != forest.n_features) throw std::invalid_argument("err_forest: feature count mismatch");
    detail::InbagBits inbag(forest, ds.n_rows);
    std::atomic<std::uint64_t> wrong{0}, evaluated{0}, events{0};
    parallel_for(ds.n_rows, workers, [&](std::size_t i) {
        std::vector<std::uint32_t> votes(forest.n_classes, 0);
        std::uint64_t my_events = 0;
        for (std::size_t t = 0; t < forest.trees.size(); ++t) {
            if (inbag.inbag(t, i)) continue;
            ++votes[forest.trees[t].predict(ds.row(i))];
            ++my_events;
        }
        if (my_events == 0) return;
        events += my_events;
        ++evaluated;
        wrong += argmax_lowest(votes) != static_cast<std::uint32_t>(ds.labels[i]);
    });
    OobError out;
    out.evaluated = evaluated;
    out.skipped = ds.n_rows - evaluated;
    out.vote_events = events;
    if (out.evaluated > 0) out.rate = static_cast<double>(wrong) / static_cast<double>(out.evaluated);
    return out;
}

/// BDerrForest for the subsample and divide-and-conquer schemes: each
/// subforest is scored out-of-bag on its own subsample/chunk members only and
/// the chunk errors are averaged weighted by member count. With one group
/// (subsample scheme) this is just that group's local OOB error.
struct BdError {
    std::optional<double> rate;
    std::vector<double> group_rates;  // NaN for groups with no evaluable row
    std::uint64_t evaluated = 0;
    std::uint64_t skipped = 0;
};

inline BdError bd_err_samp_dac(const Forest& forest, const Dataset& ds, unsigned workers) {
    if (forest.plan.scheme != Scheme::kSubsample && forest.plan.scheme != Scheme::kDac)
        throw std::invalid_argument("bd_err_samp_dac: plan is not subsample or dac");
    if (forest.group_offsets.size() < 2) throw std::invalid_argument("bd_err_samp_dac: forest has no groups");
    detail::InbagBits inbag(forest, ds.n_rows);
    ResampleSequence seq(forest.plan);
    const auto groups = static_cast<std::uint32_t>(forest.group_offsets.size() - 1);

    BdError out;
    out.group_rates.assign(groups, std::numeric_limits<double>::quiet_NaN());
    double weighted = 0.0;
    std::uint64_t member_total = 0;
    for (std::uint32_t g = 0; g < groups; ++g) {
        const auto members = seq.group_members(g);
        const std::uint32_t t_begin = forest.group_offsets[g], t_end = forest.group_offsets[g + 1];
        std::atomic<std::uint64_t> wrong{0}, evaluated{0};
        parallel_for(members.size(), workers, [&](std::size_t k) {
            const std::uint32_t i = members[k];
            std::vector<std::uint32_t> votes(forest.n_classes, 0);
            std::uint32_t got = 0;
            for (std::uint32_t t = t_begin; t < t_end; ++t) {
                if (inbag.inbag(t, i)) continue;
                ++votes[forest.trees[t].predict(ds.row(i))];
                ++got;
            }
            if (got == 0) return;
            ++evaluated;
            wrong += argmax_lowest(votes) != static_cast<std::uint32_t>(ds.labels[i]);
        });
        out.evaluated += evaluated;
        out.skipped += members.size() - evaluated;
        if (evaluated > 0) {
            out.group_rates[g] = static_cast<double>(wrong) / static_cast<double>(evaluated);
            weighted += static_cast<double>(members.size()) * out.group_rates[g];
            member_total += members.size();
        }
    }
    if (member_total > 0) out.rate = weighted / static_cast<double>(member_total);
    return out;
}

/// BDerrForest for bag-of-little-bootstraps forests (needs K >= 2 subforests):
/// each subsampled observation is predicted by all trees of the other
/// subforests; misclassifications are averaged over all K*m membership slots
/// (an observation drawn into several subsamples counts once per subsample).
inline BdError bd_err_blb(const Forest& forest, const Dataset& ds, unsigned workers) {
    if (forest.plan.scheme != Scheme::kBlb) throw std::invalid_argument("bd_err_blb: plan is not blb");
    const auto groups = static_cast<std::uint32_t>(forest.group_offsets.size() - 1);
    if (groups < 2) throw std::invalid_argument("bd_err_blb: needs at least two subforests");
    ResampleSequence seq(forest.plan);

    BdError out;
    out.group_rates.assign(groups, 0.0);
    std::uint64_t wrong_total = 0, slots = 0;
    for (std::uint32_t g = 0; g < groups; ++g) {
        const auto members = seq.group_members(g);
        const std::uint32_t t_begin = forest.group_offsets[g], t_end = forest.group_offsets[g + 1];
        std::atomic<std::uint64_t> wrong{0};
        parallel_for(members.size(), workers, [&](std::size_t k) {
            const std::uint32_t i = members[k];
            std::vector<std::uint32_t> votes(forest.n_classes, 0);
            for (std::uint32_t t = 0; t < forest.trees.size(); ++t) {
                if (t >= t_begin && t < t_end) continue;  // own subforest sits out
                ++votes[forest.trees[t].predict(ds.row(i))];
            }
            wrong += argmax_lowest(votes) != static_cast<std::uint32_t>(ds.labels[i]);
        });
        out.group_rates[g] = members.empty() ? 0.0 : static_cast<double>(wrong) / static_cast<double>(members.size());
        wrong_total += wrong;
        slots += members.size();
        out.evaluated += members.size();
    }
    if (slots > 0) out.rate = static_cast<double>(wrong_total) / static_cast<double>(slots);
    return out;
}

/// BDerrForest for m-out-of-n forests: the plain OOB error restricted to the
/// union of the per-tree subsamples (deduplicated).
inline OobError bd_err_moon(const Forest& forest, const Dataset& ds, unsigned workers) {
    if (forest.plan.scheme != Scheme::kMoon) throw std::invalid_argument("bd_err_moon: plan is not moon");
    detail::InbagBits inbag(forest, ds.n_rows);
    std::vector<std::uint32_t> members;
    {
        std::vector<bool> seen(ds.n_rows, false);
        for (const auto& rows : forest.inbag)
            for (std::uint32_t i : rows.indices) seen[i] = true;
        for (std::size_t i = 0; i < ds.n_rows; ++i)
            if (seen[i]) members.push_back(static_cast<std::uint32_t>(i));
    }
    std::atomic<std::uint64_t> wrong{0}, evaluated{0}, events{0};
    parallel_for(members.size(), workers, [&](std::size_t k) {
        const std::uint32_t i = members[k];
        std::vector<std::uint32_t> votes(forest.n_classes, 0);
        std::uint64_t my_events = 0;
        for (std::size_t t = 0; t < forest.trees.size(); ++t) {
            if (inbag.inbag(t, i)) continue;
            ++votes[forest.trees[t].predict(ds.row(i))];
            ++my_events;
        }
        if (my_events == 0) return;
        events += my_events;
        ++evaluated;
        wrong += argmax_lowest(votes) != static_cast<std::uint32_t>(ds.labels[i]);
    });
    OobError out;
    out.evaluated = evaluated;
    out.skipped = members.size() - evaluated;
    out.vote_events = events;
    if (out.evaluated > 0) out.rate = static_cast<double>(wrong) / static_cast<double>(out.evaluated);
    return out;
}

/// Misclassification rate of a model on a labelled dataset.
template <class Model>
double err_test(const Model& model, const Dataset& ds, unsigned workers = 1) {
    if (ds.n_rows == 0) throw std::invalid_argument("err_test: empty test set");
    std::atomic<std::uint64_t> wrong{0};
    parallel_for(ds.n_rows, workers, [&](std::size_t i) {
        wrong += model.predict(ds.row(i)) != static_cast<std::uint32_t>(ds.labels[i]);
    });
    return static_cast<double>(wrong) / static_cast<double>(ds.n_rows);
}

inline double err_test(const Forest& forest, const Dataset& ds, unsigned workers = 1) {
    if (ds.n_cols != forest.n_features) throw std::invalid_argument("err_test: feature count mismatch");
    const auto pred = predict_batch(forest, ds, workers);
    std::uint64_t wrong = 0;
    for (std::size_t i = 0; i < ds.n_rows; ++i)
        wrong += pred[i] != static_cast<std::uint32_t>(ds.labels[i]);
    if (ds.n_rows == 0) throw std::invalid_argument("err_test: empty test set");
    return static_cast<double>(wrong) / static_cast<double>(ds.n_rows);
}

/// Permutation importance of every feature.
struct ViResult {
    std::vector<double> values;
    std::uint32_t skipped_trees = 0;  // trees with an empty out-of-bag set
};

/// Mean over trees of (per-tree OOB error after permuting feature j within the
/// tree's OOB rows, minus the unpermuted per-tree OOB error). Each (tree,
/// feature) pair draws a fresh permutation from its own seed substream, so the
/// result is reproducible and independent of evaluation order. Trees without
/// OOB rows are skipped and the divisor shrinks accordingly.
inline ViResult variable_importance(const Forest& forest, const Dataset& ds, std::uint64_t seed,
                                    unsigned workers) {
    if (forest.trees.empty()) throw std::runtime_error("variable_importance: empty forest");
    if (ds.n_cols != forest.n_features) throw std::invalid_argument("variable_importance: feature count mismatch");
    detail::InbagBits inbag(forest, ds.n_rows);
    const std::size_t p = ds.n_cols;
    const std::size_t q = forest.trees.size();
    std::vector<std::vector<double>> contrib(q);
    std::vector<std::uint8_t> skipped(q, 0);

    parallel_for(q, workers, [&](std::size_t t) {
        std::vector<std::uint32_t> oob;
        for (std::size_t i = 0; i < ds.n_rows; ++i)
            if (!inbag.inbag(t, i)) oob.push_back(static_cast<std::uint32_t>(i));
        contrib[t].assign(p, 0.0);
        if (oob.empty()) {
            skipped[t] = 1;
            return;
        }
        const Tree& tree = forest.trees[t];
        std::uint64_t wrong = 0;
        for (std::uint32_t i : oob) wrong += tree.predict(ds.row(i)) != static_cast<std::uint32_t>(ds.labels[i]);
        const double base = static_cast<double>(wrong) / static_cast<double>(oob.size());
        const auto used = tree.used_features(p);
        std::vector<double> x(p);
        std::vector<std::uint32_t> perm(oob.size());
        for (std::size_t j = 0; j < p; ++j) {
            if (!used[j]) continue;  // permuting an unused feature changes nothing
            Rng rng(derive_seed(seed, kStreamImportance, t * p + j));
            for (std::size_t k = 0; k < perm.size(); ++k) perm[k] = static_cast<std::uint32_t>(k);
            for (std::size_t k = 0; k + 1 < perm.size(); ++k) {
                const std::size_t swap_at = k + static_cast<std::size_t>(rng.next_below(perm.size() - k));
                std::swap(perm[k], perm[swap_at]);
            }
            std::uint64_t wrong_perm = 0;
            for (std::size_t k = 0; k < oob.size(); ++k) {
                const auto row = ds.row(oob[k]);
                std::copy(row.begin(), row.end(), x.begin());
                x[j] = ds.at(oob[perm[k]], j);
                wrong_perm += tree.predict(x) != static_cast<std::uint32_t>(ds.labels[oob[k]]);
            }
            contrib[t][j] = static_cast<double>(wrong_perm) / static_cast<double>(oob.size()) - base;
        }
    });

    ViResult out;
    out.values.assign(p, 0.0);
    for (std::size_t t = 0; t < q; ++t) out.skipped_trees += skipped[t];
    const std::size_t used_trees = q - out.skipped_trees;
    if (used_trees > 0) {
        for (std::size_t t = 0; t < q; ++t)
            for (std::size_t j = 0; j < p; ++j) out.values[j] += contrib[t][j];
        for (std::size_t j = 0; j < p; ++j) out.values[j] /= static_cast<double>(used_trees);
    }
    return out;
}

/// Expected number of distinct original rows in one tree's training sample,
/// per scheme. The 0.63 of the back-of-envelope formulas is kept exact as
/// 1 - (1 - 1/s)^s; dac uses the real-valued mean chunk size n/K.
inline double expected_unique(Scheme scheme, double n, double m, double k) {
    auto boot = [](double size) {
        return size <= 0.0 ? 0.0 : size * (1.0 - std::pow((size - 1.0) / size, size));
    };
    switch (scheme) {
        case Scheme::kStandard: return boot(n);
        case Scheme::kSubsample: return boot(m);
        case Scheme::kMoon: return m;
        case Scheme::kBlb: return m <= 0.0 ? 0.0 : m * (1.0 - std::pow((m - 1.0) / m, n));
        case Scheme::kDac: return boot(n / k);
        case Scheme::kPoisson: break;
    }
    throw std::invalid_argument("expected_unique: no closed form for this scheme");
}

/// Mean Gini impurity over all leaves of all trees (unweighted mean of leaf
/// impurities computed from the stored weighted class counts).
inline double mean_leaf_gini(const Forest& forest) {
    if (forest.trees.empty()) throw std::runtime_error("mean_leaf_gini: empty forest");
    double total = 0.0;
    std::size_t leaves = 0;
    for (const auto& tree : forest.trees) {
        for (const auto& node : tree.nodes) {
            if (!node.is_leaf()) continue;
            double w = 0.0;
            for (double c : node.class_counts) w += c;
            total += gini(node.class_counts, w);
            ++leaves;
        }
    }
    return leaves ? total / static_cast<double>(leaves) : 0.0;
}

}  // namespace grove
