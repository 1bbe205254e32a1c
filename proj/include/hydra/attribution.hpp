#pragma once

// Analytics over contribution reports: distribution statistics, inter-class
// matrices, method comparison (sign-error rate, Spearman), noisy-label
// cleaning, and sign-vector clustering scored by Jaccard index.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hydra/error.hpp"
#include "hydra/hypergrad.hpp"
#include "hydra/linalg.hpp"
#include "hydra/rng.hpp"

namespace hydra {

struct DistributionStats {
    double mean = 0.0;
    double std = 0.0;  // population
    std::vector<std::size_t> top;     // train indices, largest first
    std::vector<std::size_t> bottom;  // train indices, smallest first
};

inline DistributionStats distribution_stats(const ContributionReport& report, std::size_t k = 5) {
    std::vector<std::pair<double, std::size_t>> vals;
    for (const auto& e : report.entries)
        if (!e.test_index) vals.emplace_back(e.value, e.train_index);
    if (vals.empty()) throw ShapeError("distribution_stats: empty report");
    DistributionStats s;
    double sum = 0.0;
    for (const auto& v : vals) sum += v.first;
    s.mean = sum / static_cast<double>(vals.size());
    double ss = 0.0;
    for (const auto& v : vals) ss += (v.first - s.mean) * (v.first - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(vals.size()));

    std::sort(vals.begin(), vals.end());
    k = std::min(k, vals.size());
    for (std::size_t i = 0; i < k; ++i) s.bottom.push_back(vals[i].second);
    for (std::size_t i = 0; i < k; ++i) s.top.push_back(vals[vals.size() - 1 - i].second);
    return s;
}

struct InterClassMatrix {
    std::size_t classes = 0;
    std::vector<std::vector<double>> raw;
    std::vector<std::vector<double>> normalized;
    std::vector<double> row_sums;
    std::vector<double> col_sums;
    /// Set when some row or column sum is <= 0; those entries are normalized by |sum|.
    bool nonpositive_sum = false;
};

/// raw[a][b] = mean of C(k, k') over train samples k of class a and test samples k'
/// of class b; normalized entry = raw / sqrt(|row sum| * |col sum|), sign kept.
inline InterClassMatrix inter_class_matrix(const ContributionReport& pairs, std::span<const std::size_t> train_labels,
                                           std::span<const std::size_t> test_labels, std::size_t class_count) {
    InterClassMatrix m;
    m.classes = class_count;
    m.raw.assign(class_count, std::vector<double>(class_count, 0.0));
    std::vector<std::vector<std::size_t>> counts(class_count, std::vector<std::size_t>(class_count, 0));
    std::vector<bool> seen_train(class_count, false), seen_test(class_count, false);
    for (const auto& e : pairs.entries) {
        if (!e.test_index) continue;
        if (e.train_index >= train_labels.size() || *e.test_index >= test_labels.size())
            throw ShapeError("inter_class_matrix: entry index outside the label arrays");
        const std::size_t a = train_labels[e.train_index], b = test_labels[*e.test_index];
        if (a >= class_count || b >= class_count) throw ShapeError("inter_class_matrix: label out of range");
        m.raw[a][b] += e.value;
        ++counts[a][b];
        seen_train[a] = seen_test[b] = true;
    }
    for (std::size_t c = 0; c < class_count; ++c)
        if (!seen_train[c] || !seen_test[c])
            throw ShapeError("inter_class_matrix: class " + std::to_string(c) + " has no pairs");
    for (std::size_t a = 0; a < class_count; ++a)
        for (std::size_t b = 0; b < class_count; ++b)
            if (counts[a][b] > 0) m.raw[a][b] /= static_cast<double>(counts[a][b]);

    m.row_sums.assign(class_count, 0.0);
    m.col_sums.assign(class_count, 0.0);
    for (std::size_t a = 0; a < class_count; ++a)
        for (std::size_t b = 0; b < class_count; ++b) {
            m.row_sums[a] += m.raw[a][b];
            m.col_sums[b] += m.raw[a][b];
        }
    m.normalized.assign(class_count, std::vector<double>(class_count, 0.0));
    for (std::size_t a = 0; a < class_count; ++a)
        for (std::size_t b = 0; b < class_count; ++b) {
            if (m.row_sums[a] <= 0.0 || m.col_sums[b] <= 0.0) m.nonpositive_sum = true;
            const double d = std::sqrt(std::abs(m.row_sums[a]) * std::abs(m.col_sums[b]));
            m.normalized[a][b] = d == 0.0 ? 0.0 : m.raw[a][b] / d;
        }
    return m;
}

/// Copy of a report keeping only the whole-test-subset entries C(i).
inline ContributionReport whole_subset(const ContributionReport& r) {
    ContributionReport out = r;
    std::erase_if(out.entries, [](const ContributionEntry& e) { return e.test_index.has_value(); });
    return out;
}

inline bool has_pairs(const ContributionReport& r) {
    return std::any_of(r.entries.begin(), r.entries.end(), [](const ContributionEntry& e) { return e.test_index.has_value(); });
}

struct MethodComparison {
    std::string reference;
    std::string candidate;
    double sign_error_rate = 0.0;
    double spearman_rho = 0.0;
    std::size_t n = 0;
};

/// Average ranks (1-based); ties share the mean of their positions.
inline Vec average_ranks(std::span<const double> x) {
    std::vector<std::size_t> order(x.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    Vec ranks(x.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

/// Spearman's rho as the Pearson correlation of average ranks. Identical rank
/// vectors give 1; otherwise a constant input gives 0.
inline double spearman(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ShapeError("spearman: length mismatch");
    const Vec ra = average_ranks(a), rb = average_ranks(b);
    if (ra == rb) return 1.0;
    const double n = static_cast<double>(ra.size());
    const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
    const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t k = 0; k < ra.size(); ++k) {
        sab += (ra[k] - ma) * (rb[k] - mb);
        saa += (ra[k] - ma) * (ra[k] - ma);
        sbb += (rb[k] - mb) * (rb[k] - mb);
    }
    if (saa == 0.0 || sbb == 0.0) return 0.0;
    return sab / std::sqrt(saa * sbb);
}

inline int sign_of(double x) { return (x > 0.0) - (x < 0.0); }

inline double sign_error_rate(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ShapeError("sign_error_rate: length mismatch");
    if (a.empty()) return 0.0;
    std::size_t bad = 0;
    for (std::size_t k = 0; k < a.size(); ++k)
        if (sign_of(a[k]) != sign_of(b[k])) ++bad;
    return static_cast<double>(bad) / static_cast<double>(a.size());
}

/// Compares a candidate report to a reference over identical (train, test) keys.
inline MethodComparison compare_methods(const ContributionReport& reference, const ContributionReport& candidate) {
    using Key = std::pair<std::size_t, std::size_t>;
    static constexpr std::size_t all = std::numeric_limits<std::size_t>::max();
    auto keyed = [](const ContributionReport& r) {
        std::map<Key, double> m;
        for (const auto& e : r.entries) m[{e.train_index, e.test_index.value_or(all)}] = e.value;
        return m;
    };
    const auto ref = keyed(reference), cand = keyed(candidate);
    if (ref.size() != cand.size()) throw ShapeError("compare_methods: reports cover different index sets");
    Vec a, b;
    a.reserve(ref.size());
    b.reserve(ref.size());
    for (const auto& [key, value] : ref) {
        auto it = cand.find(key);
        if (it == cand.end()) throw ShapeError("compare_methods: reports cover different index sets");
        a.push_back(value);
        b.push_back(it->second);
    }
    MethodComparison mc;
    mc.reference = reference.method;
    mc.candidate = candidate.method;
    mc.n = a.size();
    mc.sign_error_rate = sign_error_rate(a, b);
    mc.spearman_rho = spearman(a, b);
    return mc;
}

/// Discards the floor(r * N) samples with the smallest C(i) (ties by ascending
/// index) and returns the retained indices in ascending order.
inline std::vector<std::size_t> clean_dataset(const ContributionReport& report, double noise_fraction) {
    if (!(noise_fraction > 0.0 && noise_fraction < 1.0)) throw ConfigError("clean_dataset: fraction must lie in (0, 1)");
    std::vector<std::pair<double, std::size_t>> vals;
    for (const auto& e : report.entries)
        if (!e.test_index) vals.emplace_back(e.value, e.train_index);
    std::sort(vals.begin(), vals.end());
    const auto drop = static_cast<std::size_t>(std::floor(noise_fraction * static_cast<double>(vals.size())));
    std::vector<std::size_t> kept;
    for (std::size_t k = drop; k < vals.size(); ++k) kept.push_back(vals[k].second);
    std::sort(kept.begin(), kept.end());
    return kept;
}

struct ClusterEvaluation {
    struct PerClass {
        std::size_t label = 0;
        std::size_t samples = 0;
        double jaccard_correct = 0.0;
        double jaccard_flipped = 0.0;
    };
    std::vector<PerClass> classes;
    double mean_jaccard_correct = 0.0;
    double mean_jaccard_flipped = 0.0;
};

struct SignClusterOptions {
    std::size_t restarts = 20;
    std::size_t max_iterations = 100;
    std::uint64_t seed = 0;
};

namespace detail {

/// Two-means on +-1 vectors; returns the cluster (0 or 1) of each row.
inline std::vector<int> two_means(const std::vector<Vec>& rows, const SignClusterOptions& opts, std::uint64_t tag) {
    const std::size_t n = rows.size(), dim = rows.front().size();
    std::vector<int> best;
    double best_inertia = INFINITY;
    for (std::size_t restart = 0; restart < opts.restarts; ++restart) {
        Rng rng = make_rng(opts.seed, {0xc1u, tag, restart});
        const std::size_t a = uniform_index(rng, n);
        std::size_t b = uniform_index(rng, n - 1);
        if (b >= a) ++b;
        std::vector<Vec> centers = {rows[a], rows[b]};
        std::vector<int> assign(n, -1);
        double inertia = 0.0;
        for (std::size_t it = 0; it < opts.max_iterations; ++it) {
            bool changed = false;
            inertia = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                double d[2] = {0.0, 0.0};
                for (int c = 0; c < 2; ++c)
                    for (std::size_t k = 0; k < dim; ++k) d[c] += (rows[i][k] - centers[c][k]) * (rows[i][k] - centers[c][k]);
                const int pick = d[1] < d[0] ? 1 : 0;
                inertia += d[pick];
                if (assign[i] != pick) {
                    assign[i] = pick;
                    changed = true;
                }
            }
            if (!changed) break;
            for (int c = 0; c < 2; ++c) {
                Vec sum(dim, 0.0);
                std::size_t count = 0;
                for (std::size_t i = 0; i < n; ++i)
                    if (assign[i] == c) {
                        axpy(1.0, rows[i], sum);
                        ++count;
                    }
                if (count > 0) {
                    scale(sum, 1.0 / static_cast<double>(count));
                    centers[c] = std::move(sum);
                }
            }
        }
        if (inertia < best_inertia) {
            best_inertia = inertia;
            best = assign;
        }
    }
    return best;
}

inline double jaccard(const std::vector<bool>& a, const std::vector<bool>& b) {
    std::size_t inter = 0, uni = 0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        inter += a[k] && b[k];
        uni += a[k] || b[k];
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

} // namespace detail

/// Clusters each class's sign vectors (one coordinate per probe point, zero
/// mapped to +1) into two groups and scores them against the flipped/correct
/// truth split. Clusters are matched to groups by the assignment with the
/// larger summed overlap.
inline ClusterEvaluation sign_cluster(const ContributionReport& pairs, std::span<const std::size_t> probe_indices,
                                      std::span<const std::size_t> train_labels, const std::vector<bool>& truth_flip_mask,
                                      const SignClusterOptions& opts = {}) {
    if (probe_indices.empty()) throw ShapeError("sign_cluster: no probe points");
    if (truth_flip_mask.size() != train_labels.size()) throw ShapeError("sign_cluster: mask length != labels length");
    std::map<std::size_t, std::size_t> probe_slot;
    for (std::size_t k = 0; k < probe_indices.size(); ++k) probe_slot[probe_indices[k]] = k;

    std::map<std::size_t, Vec> vectors;
    std::map<std::size_t, std::size_t> filled;
    for (const auto& e : pairs.entries) {
        if (!e.test_index) continue;
        auto it = probe_slot.find(*e.test_index);
        if (it == probe_slot.end()) continue;
        auto& v = vectors[e.train_index];
        if (v.empty()) v.assign(probe_indices.size(), 0.0);
        v[it->second] = e.value >= 0.0 ? 1.0 : -1.0;
        ++filled[e.train_index];
    }
    for (const auto& [i, count] : filled)
        if (count != probe_indices.size())
            throw ShapeError("sign_cluster: train sample " + std::to_string(i) + " lacks some probe pairs");

    std::map<std::size_t, std::vector<std::size_t>> by_class;
    for (const auto& [i, v] : vectors) {
        if (i >= train_labels.size()) throw ShapeError("sign_cluster: train index outside the label array");
        by_class[train_labels[i]].push_back(i);
    }

    ClusterEvaluation ev;
    for (const auto& [label, members] : by_class) {
        if (members.size() < 2)
            throw ShapeError("sign_cluster: class " + std::to_string(label) + " has fewer than 2 samples");
        std::vector<Vec> rows;
        for (std::size_t i : members) rows.push_back(vectors[i]);
        const std::vector<int> assign = detail::two_means(rows, opts, label);

        const std::size_t n = members.size();
        std::vector<bool> c0(n), c1(n), flipped(n), correct(n);
        for (std::size_t k = 0; k < n; ++k) {
            c0[k] = assign[k] == 0;
            c1[k] = assign[k] == 1;
            flipped[k] = truth_flip_mask[members[k]];
            correct[k] = !flipped[k];
        }
        auto overlap = [n](const std::vector<bool>& a, const std::vector<bool>& b) {
            std::size_t s = 0;
            for (std::size_t k = 0; k < n; ++k) s += a[k] && b[k];
            return s;
        };
        const bool straight = overlap(c0, correct) + overlap(c1, flipped) >= overlap(c1, correct) + overlap(c0, flipped);
        ClusterEvaluation::PerClass pc;
        pc.label = label;
        pc.samples = n;
        pc.jaccard_correct = detail::jaccard(straight ? c0 : c1, correct);
        pc.jaccard_flipped = detail::jaccard(straight ? c1 : c0, flipped);
        ev.classes.push_back(pc);
    }
    for (const auto& pc : ev.classes) {
        ev.mean_jaccard_correct += pc.jaccard_correct;
        ev.mean_jaccard_flipped += pc.jaccard_flipped;
    }
    if (!ev.classes.empty()) {
        ev.mean_jaccard_correct /= static_cast<double>(ev.classes.size());
        ev.mean_jaccard_flipped /= static_cast<double>(ev.classes.size());
    }
    return ev;
}

} // namespace hydra
