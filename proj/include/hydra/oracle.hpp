#pragma once

// Ground truth by retraining. Every run reuses the recorded batch schedule and
// learning rates, so only the data weights differ from the nominal run.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hydra/error.hpp"
#include "hydra/hypergrad.hpp"
#include "hydra/linalg.hpp"
#include "hydra/models.hpp"
#include "hydra/trainer.hpp"

namespace hydra {

struct OracleOptions {
    double delta = 1e-3;
    /// Halve delta while two successive estimates disagree by more than this (relative).
    double richardson_tolerance = 1e-2;
    std::size_t max_halvings = 6;
    std::size_t max_dataset_size = 200;
    std::size_t max_steps = 5000;
};

struct OracleResult {
    std::size_t index = 0;
    /// dL_test / d eps_i by central difference.
    double central_difference = 0.0;
    double delta = 0.0;
    double loss_plus = 0.0;
    double loss_minus = 0.0;
    /// L_test(eps_i = -1/N) - L_test(nominal), when computed.
    std::optional<double> loo_delta;
    std::uint64_t checksum_plus = 0;
    std::uint64_t checksum_minus = 0;
    std::size_t halvings = 0;
};

namespace detail {

inline void oracle_guard(const TrajectoryRecord& record, const OracleOptions& opts) {
    if (record.dataset_size > opts.max_dataset_size)
        throw ConfigError("oracle: dataset of " + std::to_string(record.dataset_size) + " samples exceeds the cost guard");
    if (record.total_steps() > opts.max_steps)
        throw ConfigError("oracle: trajectory of " + std::to_string(record.total_steps()) + " steps exceeds the cost guard");
}

struct PerturbedRun {
    double test_loss;
    std::uint64_t checksum;
};

inline PerturbedRun perturbed(const Model& model, const LabeledDataset& data, const TrajectoryRecord& record,
                              std::size_t i, double eps, const LabeledDataset& test) {
    Vec weights = record.data_weights;
    weights[i] += eps;
    const TrajectoryRecord run = retrain(model, data, record, weights);
    return {mean_loss(model, run.final_params, test), run.trajectory_checksum()};
}

} // namespace detail

/// Central difference [L_test(+delta) - L_test(-delta)] / (2 delta) around the
/// recorded data weights, with delta halved until two successive estimates agree.
inline OracleResult finite_difference_hypergradient(const Model& model, const LabeledDataset& data,
                                                    const TrajectoryRecord& record, std::size_t i,
                                                    const LabeledDataset& test, const OracleOptions& opts = {}) {
    detail::oracle_guard(record, opts);
    if (i >= data.size()) throw ShapeError("oracle: index outside the dataset");
    if (!(opts.delta > 0.0)) throw ConfigError("oracle: delta must be positive");

    auto estimate = [&](double d, OracleResult& r) {
        const auto plus = detail::perturbed(model, data, record, i, d, test);
        const auto minus = detail::perturbed(model, data, record, i, -d, test);
        r.delta = d;
        r.loss_plus = plus.test_loss;
        r.loss_minus = minus.test_loss;
        r.checksum_plus = plus.checksum;
        r.checksum_minus = minus.checksum;
        r.central_difference = (plus.test_loss - minus.test_loss) / (2.0 * d);
    };

    OracleResult res;
    res.index = i;
    estimate(opts.delta, res);
    for (std::size_t h = 0; h < opts.max_halvings; ++h) {
        OracleResult finer = res;
        estimate(res.delta / 2.0, finer);
        finer.halvings = h + 1;
        const double scale = std::max(std::abs(finer.central_difference), 1e-300);
        const bool agree = std::abs(finer.central_difference - res.central_difference) <= opts.richardson_tolerance * scale;
        res = finer;
        if (agree) break;
    }
    return res;
}

/// Retrains with eps_i = -1/N and reports L_test(without i) - L_test(nominal).
inline OracleResult leave_one_out(const Model& model, const LabeledDataset& data, const TrajectoryRecord& record,
                                  std::size_t i, const LabeledDataset& test, const OracleOptions& opts = {}) {
    detail::oracle_guard(record, opts);
    if (i >= data.size()) throw ShapeError("oracle: index outside the dataset");
    const TrajectoryRecord nominal = retrain(model, data, record, record.data_weights);
    const double base = mean_loss(model, nominal.final_params, test);
    const auto removed = detail::perturbed(model, data, record, i, -1.0 / static_cast<double>(data.size()), test);
    OracleResult res;
    res.index = i;
    res.delta = 1.0 / static_cast<double>(data.size());
    res.loss_minus = removed.test_loss;
    res.loss_plus = base;
    res.checksum_minus = removed.checksum;
    res.checksum_plus = nominal.trajectory_checksum();
    res.loo_delta = removed.test_loss - base;
    return res;
}

/// Oracle values on the contribution scale: oracle_fd stores -(1/N) dL_test/d eps_i,
/// oracle_loo stores the leave-one-out test-loss delta.
inline ContributionReport oracle_report(std::span<const OracleResult> results, const TrajectoryRecord& record,
                                        bool leave_one_out_values) {
    ContributionReport rep;
    rep.method = leave_one_out_values ? "oracle_loo" : "oracle_fd";
    rep.dataset_size = record.dataset_size;
    rep.trajectory_checksum = record.trajectory_checksum();
    const double inv_n = 1.0 / static_cast<double>(record.dataset_size);
    for (const auto& r : results) {
        if (leave_one_out_values && !r.loo_delta) throw ShapeError("oracle_report: result lacks a leave-one-out value");
        rep.entries.push_back({r.index, std::nullopt, leave_one_out_values ? *r.loo_delta : -inv_n * r.central_difference});
    }
    return rep;
}

/// Closed form for the scalar ridge model f(x) = w x with squared error at its
/// regularized minimizer w* = sum_k a_k x_k y_k / (sum_k a_k x_k^2 + lambda),
/// a_k = 1/N + eps_k. Returns dL_test(w*)/d eps_i by the chain rule.
struct RidgeClosedForm {
    double minimizer = 0.0;
    Vec hypergradients;  // dL_test / d eps_i for every training sample
};

inline RidgeClosedForm ridge_1d_closed_form(std::span<const double> x, std::span<const double> y,
                                            std::span<const double> eps, double lambda, std::span<const double> test_x,
                                            std::span<const double> test_y) {
    if (x.size() != y.size() || x.size() != eps.size() || test_x.size() != test_y.size())
        throw ShapeError("ridge_1d_closed_form: length mismatch");
    const double n = static_cast<double>(x.size());
    double num = 0.0, den = lambda;
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double a = 1.0 / n + eps[k];
        num += a * x[k] * y[k];
        den += a * x[k] * x[k];
    }
    RidgeClosedForm out;
    out.minimizer = num / den;
    double dtest = 0.0;
    for (std::size_t j = 0; j < test_x.size(); ++j) dtest += (out.minimizer * test_x[j] - test_y[j]) * test_x[j];
    dtest /= static_cast<double>(test_x.size());
    out.hypergradients.resize(x.size());
    for (std::size_t k = 0; k < x.size(); ++k)
        out.hypergradients[k] = dtest * (x[k] * y[k] - x[k] * x[k] * out.minimizer) / den;
    return out;
}

} // namespace hydra
