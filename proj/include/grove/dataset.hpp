#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "grove/rng.hpp"

namespace grove {

/// Immutable-after-construction table of numeric features plus integer class
/// labels. Simulated datasets also carry a per-row submodel tag (1 or 2) used
/// by the x-bias permutation.
struct Dataset {
    std::size_t n_rows = 0;
    std::size_t n_cols = 0;
    std::size_t n_classes = 0;
    std::vector<double> features;  // row-major, n_rows * n_cols
    std::vector<std::int32_t> labels;
    std::vector<std::uint8_t> submodel_tags;  // empty when absent
    std::vector<std::string> column_names;

    std::span<const double> row(std::size_t i) const {
        return {features.data() + i * n_cols, n_cols};
    }

    double at(std::size_t i, std::size_t j) const { return features[i * n_cols + j]; }

    bool has_tags() const { return !submodel_tags.empty(); }

    void validate() const {
        if (features.size() != n_rows * n_cols) throw std::runtime_error("dataset: feature buffer size mismatch");
        if (labels.size() != n_rows) throw std::runtime_error("dataset: label count mismatch");
        if (!submodel_tags.empty() && submodel_tags.size() != n_rows)
            throw std::runtime_error("dataset: tag count mismatch");
        if (!column_names.empty() && column_names.size() != n_cols)
            throw std::runtime_error("dataset: column name count mismatch");
        for (double v : features)
            if (!std::isfinite(v)) throw std::runtime_error("dataset: non-finite feature value");
        for (std::int32_t y : labels)
            if (y < 0 || static_cast<std::size_t>(y) >= n_classes)
                throw std::runtime_error("dataset: label out of range");
    }
};

/// Build a new dataset from selected rows (in the given order).
inline Dataset take_rows(const Dataset& ds, const std::vector<std::uint32_t>& order) {
    Dataset out;
    out.n_rows = order.size();
    out.n_cols = ds.n_cols;
    out.n_classes = ds.n_classes;
    out.column_names = ds.column_names;
    out.features.resize(out.n_rows * out.n_cols);
    out.labels.resize(out.n_rows);
    if (ds.has_tags()) out.submodel_tags.resize(out.n_rows);
    for (std::size_t k = 0; k < order.size(); ++k) {
        const std::size_t i = order[k];
        if (i >= ds.n_rows) throw std::invalid_argument("take_rows: index out of range");
        std::copy_n(ds.features.data() + i * ds.n_cols, ds.n_cols, out.features.data() + k * out.n_cols);
        out.labels[k] = ds.labels[i];
        if (ds.has_tags()) out.submodel_tags[k] = ds.submodel_tags[i];
    }
    return out;
}

/// Parameters of the two-submodel Gaussian classification generator.
struct SimulationSpec {
    std::size_t n = 0;
    std::uint64_t seed = 0;
    double class_balance = 0.5;    // probability of class 1
    double submodel1_prob = 0.7;   // probability a row follows submodel 1
    bool standardize = true;       // center/scale columns to mean 0, variance 1
};

inline constexpr std::size_t kSimCols = 7;

/// Per-row draw path of the simulator, exposed so tests can replay the stream
/// independently of simulate(). Draw order: class uniform, submodel uniform,
/// then the seven feature normals.
inline void simulate_row(const SimulationSpec& spec, std::size_t i, double* x,
                         std::int32_t* label, std::uint8_t* tag) {
    Rng rng(derive_seed(spec.seed, kStreamWestonRow, i));
    const bool class1 = rng.next_double() < spec.class_balance;
    const double y = class1 ? 1.0 : -1.0;  // class 1 plays the +1 role
    const bool sub1 = rng.next_double() < spec.submodel1_prob;
    for (std::size_t j = 0; j < kSimCols; ++j) {
        double mean = 0.0;
        if (sub1 && j < 3) mean = static_cast<double>(j + 1) * y;
        if (!sub1 && j >= 3 && j < 6) mean = static_cast<double>(j - 2) * y;
        x[j] = mean + rng.normal();
    }
    *label = class1 ? 1 : 0;
    *tag = sub1 ? 1 : 2;
}

/// Simulate the two-submodel dataset: class 1 with probability class_balance,
/// submodel 1 with probability submodel1_prob; three informative Gaussian
/// coordinates per submodel (means 1,2,3 times the signed class), one pure
/// noise column. Rows draw from independent per-row substreams, so the result
/// is reproducible for a fixed (n, seed) no matter how generation is scheduled.
inline Dataset simulate(const SimulationSpec& spec) {
    Dataset ds;
    ds.n_rows = spec.n;
    ds.n_cols = kSimCols;
    ds.n_classes = 2;
    ds.features.resize(spec.n * kSimCols);
    ds.labels.resize(spec.n);
    ds.submodel_tags.resize(spec.n);
    ds.column_names = {"x1", "x2", "x3", "x4", "x5", "x6", "x7"};
    for (std::size_t i = 0; i < spec.n; ++i)
        simulate_row(spec, i, ds.features.data() + i * kSimCols, &ds.labels[i], &ds.submodel_tags[i]);

    if (spec.standardize && spec.n > 0) {
        // Population mean/variance per column, accumulated serially in row
        // order so the transform is bit-stable.
        for (std::size_t j = 0; j < kSimCols; ++j) {
            double mean = 0.0, m2 = 0.0;
            for (std::size_t i = 0; i < spec.n; ++i) {
                const double v = ds.features[i * kSimCols + j];
                const double delta = v - mean;
                mean += delta / static_cast<double>(i + 1);
                m2 += delta * (v - mean);
            }
            const double var = m2 / static_cast<double>(spec.n);
            const double scale = var > 0.0 ? 1.0 / std::sqrt(var) : 1.0;
            for (std::size_t i = 0; i < spec.n; ++i) {
                double& v = ds.features[i * kSimCols + j];
                v = (v - mean) * scale;
            }
        }
    }
    return ds;
}

/// Reorder a two-class dataset so the first floor(n/2) rows contain exactly
/// floor(p * floor(n/2)) class-1 rows and the remaining rows hold everything
/// else (for balanced data that lands at ~p class 0 in the second half).
/// Within each half the rows are shuffled. Throws when the class pools cannot
/// fill the first half.
inline Dataset permute_unbalanced(const Dataset& ds, double p, std::uint64_t seed) {
    if (ds.n_classes != 2) throw std::invalid_argument("permute_unbalanced: needs a two-class dataset");
    if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("permute_unbalanced: p must lie strictly in (0,1)");
    std::vector<std::uint32_t> pool0, pool1;
    for (std::size_t i = 0; i < ds.n_rows; ++i)
        (ds.labels[i] == 1 ? pool1 : pool0).push_back(static_cast<std::uint32_t>(i));

    const std::size_t half = ds.n_rows / 2;
    const std::size_t want1 = static_cast<std::size_t>(std::floor(p * static_cast<double>(half)));
    if (want1 > pool1.size() || half - want1 > pool0.size())
        throw std::runtime_error("permute_unbalanced: class counts cannot satisfy the target composition");

    Rng rng(derive_seed(seed, kStreamPermute));
    auto draw_from = [&rng](std::vector<std::uint32_t>& pool, std::size_t count, std::vector<std::uint32_t>& out) {
        for (std::size_t k = 0; k < count; ++k) {
            const std::size_t j = k + static_cast<std::size_t>(rng.next_below(pool.size() - k));
            std::swap(pool[k], pool[j]);
            out.push_back(pool[k]);
        }
        pool.erase(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(count));
    };
    auto shuffle = [&rng](std::vector<std::uint32_t>& v, std::size_t begin, std::size_t end) {
        for (std::size_t k = begin; k + 1 < end; ++k) {
            const std::size_t j = k + static_cast<std::size_t>(rng.next_below(end - k));
            std::swap(v[k], v[j]);
        }
    };

    std::vector<std::uint32_t> order;
    order.reserve(ds.n_rows);
    draw_from(pool1, want1, order);
    draw_from(pool0, half - want1, order);
    shuffle(order, 0, half);
    order.insert(order.end(), pool1.begin(), pool1.end());
    order.insert(order.end(), pool0.begin(), pool0.end());
    shuffle(order, half, order.size());
    return take_rows(ds, order);
}

/// Reorder a tagged dataset into P contiguous parts, each consisting of
/// submodel-1 rows followed by submodel-2 rows in the global proportion.
/// Parts 0..P-2 receive exactly floor(count/P) rows of each submodel (kept in
/// original order); the last part absorbs the remainders. Deterministic, no RNG.
inline Dataset permute_xbiases(const Dataset& ds, std::size_t parts) {
    if (parts == 0) throw std::invalid_argument("permute_xbiases: parts must be positive");
    if (!ds.has_tags()) throw std::invalid_argument("permute_xbiases: dataset has no submodel tags");
    std::vector<std::uint32_t> pool1, pool2;
    for (std::size_t i = 0; i < ds.n_rows; ++i)
        (ds.submodel_tags[i] == 1 ? pool1 : pool2).push_back(static_cast<std::uint32_t>(i));

    std::vector<std::uint32_t> order;
    order.reserve(ds.n_rows);
    std::size_t used1 = 0, used2 = 0;
    for (std::size_t part = 0; part < parts; ++part) {
        const bool last = part + 1 == parts;
        const std::size_t take1 = last ? pool1.size() - used1 : pool1.size() / parts;
        const std::size_t take2 = last ? pool2.size() - used2 : pool2.size() / parts;
        for (std::size_t k = 0; k < take1; ++k) order.push_back(pool1[used1 + k]);
        for (std::size_t k = 0; k < take2; ++k) order.push_back(pool2[used2 + k]);
        used1 += take1;
        used2 += take2;
    }
    return take_rows(ds, order);
}

/// m distinct row indices drawn uniformly without replacement (partial
/// Fisher-Yates). m == n yields a uniform permutation.
inline std::vector<std::uint32_t> subsample_indices(std::size_t n, std::size_t m, std::uint64_t seed) {
    if (m > n) throw std::invalid_argument("subsample: m exceeds n");
    std::vector<std::uint32_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = static_cast<std::uint32_t>(i);
    Rng rng(seed);
    for (std::size_t k = 0; k < m; ++k) {
        const std::size_t j = k + static_cast<std::size_t>(rng.next_below(n - k));
        std::swap(idx[k], idx[j]);
    }
    idx.resize(m);
    return idx;
}

inline std::vector<std::uint32_t> subsample(const Dataset& ds, std::size_t m, std::uint64_t seed) {
    return subsample_indices(ds.n_rows, m, seed);
}

}  // namespace grove
