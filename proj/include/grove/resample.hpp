#pragma once

#include <algorithm>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "grove/io.hpp"
#include "grove/rng.hpp"
#include "grove/tree.hpp"

namespace grove {

/// How tree training sets are drawn from the full dataset.
///   standard   one bootstrap of size n per tree
///   subsample  one shared subsample of size m, bootstraps of size m inside it
///   moon       one fresh m-without-replacement subsample per tree, weight 1
///   blb        K subsamples of size m; per tree, multinomial(n, 1/m) weights
///   dac        K contiguous chunks in file order, bootstraps within the chunk
///   poisson    online: Poisson(lambda) replication per arriving observation
enum class Scheme : std::uint8_t { kStandard, kSubsample, kMoon, kBlb, kDac, kPoisson };

inline const char* scheme_name(Scheme s) {
    switch (s) {
        case Scheme::kStandard: return "standard";
        case Scheme::kSubsample: return "subsample";
        case Scheme::kMoon: return "moon";
        case Scheme::kBlb: return "blb";
        case Scheme::kDac: return "dac";
        case Scheme::kPoisson: return "poisson";
    }
    return "?";
}

inline Scheme scheme_from_name(const std::string& name) {
    if (name == "standard") return Scheme::kStandard;
    if (name == "subsample") return Scheme::kSubsample;
    if (name == "moon") return Scheme::kMoon;
    if (name == "blb") return Scheme::kBlb;
    if (name == "dac") return Scheme::kDac;
    if (name == "poisson") return Scheme::kPoisson;
    throw std::invalid_argument("unknown resampling scheme '" + name + "'");
}

struct ResamplePlan {
    Scheme scheme = Scheme::kStandard;
    std::size_t n = 0;              // dataset rows the plan was built for
    std::uint32_t trees = 0;        // Q
    std::size_t m = 0;              // subsample size (subsample/moon/blb)
    std::uint32_t chunks = 0;       // K (blb/dac)
    std::uint32_t group_trees = 0;  // q, trees per subsample/chunk (blb/dac)
    double lambda = 1.0;            // poisson replication mean (online)
    std::uint64_t master_seed = 0;

    void validate() const {
        if (n == 0) throw std::invalid_argument("resample plan: dataset size must be positive");
        if (scheme != Scheme::kPoisson && trees == 0)
            throw std::invalid_argument("resample plan: tree count must be positive");
        switch (scheme) {
            case Scheme::kStandard:
                break;
            case Scheme::kSubsample:
            case Scheme::kMoon:
                if (m == 0 || m > n) throw std::invalid_argument("resample plan: need 1 <= m <= n");
                break;
            case Scheme::kBlb:
                if (m == 0 || m > n) throw std::invalid_argument("resample plan: need 1 <= m <= n");
                if (chunks == 0 || group_trees == 0 || chunks * group_trees != trees)
                    throw std::invalid_argument("resample plan: blb needs chunks * group_trees == trees");
                break;
            case Scheme::kDac:
                if (chunks == 0 || chunks > n)
                    throw std::invalid_argument("resample plan: need 1 <= chunks <= n");
                if (group_trees == 0 || chunks * group_trees != trees)
                    throw std::invalid_argument("resample plan: dac needs chunks * group_trees == trees");
                break;
            case Scheme::kPoisson:
                if (!(lambda > 0.0)) throw std::invalid_argument("resample plan: lambda must be positive");
                break;
        }
    }
};

/// Contiguous [begin, end) chunk ranges in file order; the first n % K chunks
/// take the extra row. Example: n=10, K=3 gives sizes {4,3,3}.
inline std::vector<std::pair<std::size_t, std::size_t>> partition_chunks(std::size_t n, std::uint32_t k) {
    if (k == 0 || k > n) throw std::invalid_argument("partition_chunks: need 1 <= K <= n");
    std::vector<std::pair<std::size_t, std::size_t>> ranges;
    ranges.reserve(k);
    const std::size_t base = n / k, rem = n % k;
    std::size_t begin = 0;
    for (std::uint32_t l = 0; l < k; ++l) {
        const std::size_t size = base + (l < rem ? 1 : 0);
        ranges.emplace_back(begin, begin + size);
        begin += size;
    }
    return ranges;
}

/// Standard bootstrap: n uniform draws with replacement over [0, n), returned
/// as ascending distinct indices with multiplicity weights.
inline WeightedRows bootstrap_standard(std::size_t n, std::uint64_t seed) {
    if (n == 0) throw std::invalid_argument("bootstrap_standard: n must be positive");
    Rng rng(seed);
    std::vector<std::uint32_t> counts(n, 0);
    for (std::size_t d = 0; d < n; ++d) ++counts[rng.next_below(n)];
    WeightedRows rows;
    for (std::size_t i = 0; i < n; ++i) {
        if (counts[i]) {
            rows.indices.push_back(static_cast<std::uint32_t>(i));
            rows.weights.push_back(static_cast<double>(counts[i]));
        }
    }
    return rows;
}

inline constexpr std::size_t kMultinomialCountingLimit = 100000;

/// Multinomial(n; 1/m, ..., 1/m) cell counts, always summing exactly to n.
/// Below the counting limit the n throws are counted directly; above it the
/// counts come from the chained conditional binomials
///   w_i ~ Binomial(n - w_0 - ... - w_{i-1}, 1 / (m - i)),
/// which needs O(m) draws instead of O(n).
inline std::vector<std::uint64_t> multinomial_uniform(std::size_t n, std::size_t m, Rng& rng,
                                                      std::size_t counting_limit = kMultinomialCountingLimit) {
    if (m == 0) throw std::invalid_argument("multinomial_uniform: m must be positive");
    std::vector<std::uint64_t> counts(m, 0);
    if (n <= counting_limit) {
        for (std::size_t d = 0; d < n; ++d) ++counts[rng.next_below(m)];
        return counts;
    }
    std::uint64_t remaining = n;
    for (std::size_t i = 0; i + 1 < m && remaining > 0; ++i) {
        const std::uint64_t w = rng.binomial(remaining, 1.0 / static_cast<double>(m - i));
        counts[i] = w;
        remaining -= w;
    }
    counts[m - 1] = remaining;
    return counts;
}

/// Bag-of-little-bootstraps weights for one tree: multinomial(n, 1/m) over the
/// m subsample slots.
inline std::vector<std::uint64_t> blb_weights(std::size_t m, std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    return multinomial_uniform(n, m, rng);
}

/// Deterministic per-tree training inputs for a plan. Shared structure (the
/// subsample of the subsample scheme, the K subsamples of blb, the chunk
/// ranges of dac) is derived once from the master seed; every tree input is
/// then a pure function of (plan, tree id), so evaluation order and worker
/// count cannot change the result.
class ResampleSequence {
public:
    explicit ResampleSequence(const ResamplePlan& plan) : plan_(plan) {
        plan_.validate();
        if (plan_.scheme == Scheme::kPoisson)
            throw std::invalid_argument("poisson is an online scheme with no batch tree inputs");
        switch (plan_.scheme) {
            case Scheme::kSubsample: {
                shared_subsample_ = subsample_indices(plan_.n, plan_.m, derive_seed(plan_.master_seed, kStreamSubsample, 0));
                std::sort(shared_subsample_.begin(), shared_subsample_.end());
                break;
            }
            case Scheme::kBlb: {
                blb_subsamples_.resize(plan_.chunks);
                for (std::uint32_t l = 0; l < plan_.chunks; ++l) {
                    blb_subsamples_[l] =
                        subsample_indices(plan_.n, plan_.m, derive_seed(plan_.master_seed, kStreamSubsample, l));
                    std::sort(blb_subsamples_[l].begin(), blb_subsamples_[l].end());
                }
                break;
            }
            case Scheme::kDac:
                chunk_ranges_ = partition_chunks(plan_.n, plan_.chunks);
                break;
            default:
                break;
        }
    }

    const ResamplePlan& plan() const { return plan_; }

    std::uint32_t tree_count() const { return plan_.trees; }

    std::uint32_t group_count() const {
        return (plan_.scheme == Scheme::kBlb || plan_.scheme == Scheme::kDac) ? plan_.chunks : 1;
    }

    std::uint32_t group_of(std::uint32_t tree_id) const {
        return group_count() == 1 ? 0 : tree_id / plan_.group_trees;
    }

    /// Subforest boundaries as offsets into [0, Q]: one group per subsample or
    /// chunk for blb/dac, a single group otherwise.
    std::vector<std::uint32_t> group_offsets() const {
        std::vector<std::uint32_t> offsets{0};
        const std::uint32_t groups = group_count();
        for (std::uint32_t g = 1; g <= groups; ++g)
            offsets.push_back(g == groups ? plan_.trees : g * plan_.group_trees);
        return offsets;
    }

    /// Row ids owned by a group: the shared subsample, the l-th blb subsample,
    /// the l-th chunk, or all rows for the single-group schemes.
    std::vector<std::uint32_t> group_members(std::uint32_t group) const {
        if (group >= group_count()) throw std::invalid_argument("group index out of range");
        switch (plan_.scheme) {
            case Scheme::kSubsample:
                return shared_subsample_;
            case Scheme::kBlb:
                return blb_subsamples_[group];
            case Scheme::kDac: {
                std::vector<std::uint32_t> members;
                members.reserve(chunk_ranges_[group].second - chunk_ranges_[group].first);
                for (std::size_t i = chunk_ranges_[group].first; i < chunk_ranges_[group].second; ++i)
                    members.push_back(static_cast<std::uint32_t>(i));
                return members;
            }
            default: {
                std::vector<std::uint32_t> members(plan_.n);
                for (std::size_t i = 0; i < plan_.n; ++i) members[i] = static_cast<std::uint32_t>(i);
                return members;
            }
        }
    }

    /// Training rows for one tree; indices always refer to the original dataset.
    WeightedRows tree_input(std::uint32_t tree_id) const {
        if (tree_id >= plan_.trees) throw std::invalid_argument("tree id out of range");
        switch (plan_.scheme) {
            case Scheme::kStandard:
                return bootstrap_standard(plan_.n, derive_seed(plan_.master_seed, kStreamBootstrap, tree_id));
            case Scheme::kSubsample: {
                // Bootstrap of size m inside the shared subsample, mapped back
                // to original row ids (which stay ascending because the shared
                // subsample is stored sorted).
                const WeightedRows local =
                    bootstrap_standard(plan_.m, derive_seed(plan_.master_seed, kStreamBootstrap, tree_id));
                WeightedRows rows;
                rows.weights = local.weights;
                rows.indices.reserve(local.indices.size());
                for (std::uint32_t slot : local.indices) rows.indices.push_back(shared_subsample_[slot]);
                return rows;
            }
            case Scheme::kMoon: {
                // m distinct rows, weight 1, no inner bootstrap.
                auto idx = subsample_indices(plan_.n, plan_.m, derive_seed(plan_.master_seed, kStreamSubsample, tree_id));
                std::sort(idx.begin(), idx.end());
                WeightedRows rows;
                rows.indices = std::move(idx);
                rows.weights.assign(plan_.m, 1.0);
                return rows;
            }
            case Scheme::kBlb: {
                const std::uint32_t group = tree_id / plan_.group_trees;
                const auto weights =
                    blb_weights(plan_.m, plan_.n, derive_seed(plan_.master_seed, kStreamBlbWeights, tree_id));
                WeightedRows rows;
                for (std::size_t slot = 0; slot < weights.size(); ++slot) {
                    if (weights[slot]) {
                        rows.indices.push_back(blb_subsamples_[group][slot]);
                        rows.weights.push_back(static_cast<double>(weights[slot]));
                    }
                }
                return rows;
            }
            case Scheme::kDac: {
                const std::uint32_t group = tree_id / plan_.group_trees;
                const auto [begin, end] = chunk_ranges_[group];
                const WeightedRows local =
                    bootstrap_standard(end - begin, derive_seed(plan_.master_seed, kStreamBootstrap, tree_id));
                WeightedRows rows;
                rows.weights = local.weights;
                rows.indices.reserve(local.indices.size());
                for (std::uint32_t off : local.indices)
                    rows.indices.push_back(static_cast<std::uint32_t>(begin + off));
                return rows;
            }
            case Scheme::kPoisson:
                break;
        }
        throw std::logic_error("unreachable");
    }

private:
    ResamplePlan plan_;
    std::vector<std::uint32_t> shared_subsample_;
    std::vector<std::vector<std::uint32_t>> blb_subsamples_;
    std::vector<std::pair<std::size_t, std::size_t>> chunk_ranges_;
};

/// Materialize every tree input of a plan (convenience for tests and small Q).
inline std::vector<WeightedRows> plan_tree_inputs(const ResamplePlan& plan) {
    ResampleSequence seq(plan);
    std::vector<WeightedRows> inputs;
    inputs.reserve(plan.trees);
    for (std::uint32_t t = 0; t < plan.trees; ++t) inputs.push_back(seq.tree_input(t));
    return inputs;
}

/// Plan as config-file lines (key = value), parseable by plan_from_config.
inline std::string plan_to_config(const ResamplePlan& plan) {
    std::ostringstream out;
    out << "variant = " << scheme_name(plan.scheme) << "\n";
    out << "rows = " << plan.n << "\n";
    out << "trees = " << plan.trees << "\n";
    if (plan.m) out << "m = " << plan.m << "\n";
    if (plan.chunks) out << "chunks = " << plan.chunks << "\n";
    if (plan.group_trees) out << "group_trees = " << plan.group_trees << "\n";
    if (plan.scheme == Scheme::kPoisson) out << "lambda = " << plan.lambda << "\n";
    out << "seed = " << plan.master_seed << "\n";
    return out.str();
}

inline ResamplePlan plan_from_config(const std::string& text) {
    ResamplePlan plan;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key == "variant") plan.scheme = scheme_from_name(value);
        else if (key == "rows") plan.n = std::stoull(value);
        else if (key == "trees") plan.trees = static_cast<std::uint32_t>(std::stoul(value));
        else if (key == "m") plan.m = std::stoull(value);
        else if (key == "chunks") plan.chunks = static_cast<std::uint32_t>(std::stoul(value));
        else if (key == "group_trees") plan.group_trees = static_cast<std::uint32_t>(std::stoul(value));
        else if (key == "lambda") plan.lambda = std::stod(value);
        else if (key == "seed") plan.master_seed = std::stoull(value);
        else throw std::invalid_argument("unknown resample plan key '" + key + "'");
    }
    plan.validate();
    return plan;
}

inline void serialize_plan(const ResamplePlan& plan, BinaryWriter& out) {
    out.u8(static_cast<std::uint8_t>(plan.scheme));
    out.u64(plan.n);
    out.u32(plan.trees);
    out.u64(plan.m);
    out.u32(plan.chunks);
    out.u32(plan.group_trees);
    out.f64(plan.lambda);
    out.u64(plan.master_seed);
}

inline ResamplePlan deserialize_plan(BinaryReader& in) {
    ResamplePlan plan;
    plan.scheme = static_cast<Scheme>(in.u8());
    plan.n = in.u64();
    plan.trees = in.u32();
    plan.m = in.u64();
    plan.chunks = in.u32();
    plan.group_trees = in.u32();
    plan.lambda = in.f64();
    plan.master_seed = in.u64();
    return plan;
}

}  // namespace grove
