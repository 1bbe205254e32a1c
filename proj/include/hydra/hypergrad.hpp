#pragma once

// Per-sample hypergradients dw_t/d(eps_i) carried along a training trajectory.
//
// Both modes share the momentum recurrence
//   dv_t   = p dv_{t-1} + [H_{t-1} nabla_{t-1}] + lambda nabla_{t-1} + 1{i in batch_t} (N/B) g_{t-1,i}
//   nabla_t = nabla_{t-1} - eta_t dv_t
// with zero initial conditions. The exact mode includes the bracketed term,
// where H_{t-1} is the Hessian of the regularizer-free batch loss at w_{t-1};
// the approximate mode drops it and never evaluates a Hessian. p = 0 gives
// plain gradient descent.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hydra/error.hpp"
#include "hydra/linalg.hpp"
#include "hydra/models.hpp"
#include "hydra/trainer.hpp"

namespace hydra {

enum class HypergradMode { exact, approx };

inline const char* to_string(HypergradMode m) { return m == HypergradMode::exact ? "exact" : "approx"; }

struct HypergradState {
    std::size_t sample_index = 0;
    HypergradMode mode = HypergradMode::exact;
    Vec nabla;      // dw_t / d eps_i
    Vec mom_deriv;  // dv_t / d eps_i
    std::size_t step = 0;
};

class HypergradTracker {
public:
    HypergradTracker(HypergradMode mode, std::span<const std::size_t> indices, std::size_t parameter_count)
        : mode_(mode), scratch_(parameter_count), grad_(parameter_count) {
        states_.reserve(indices.size());
        for (std::size_t i : indices)
            states_.push_back({i, mode, Vec(parameter_count, 0.0), Vec(parameter_count, 0.0), 0});
    }

    HypergradMode mode() const noexcept { return mode_; }
    const std::vector<HypergradState>& states() const noexcept { return states_; }
    std::vector<HypergradState>& states() noexcept { return states_; }
    /// Number of batch Hessian-vector products evaluated so far.
    std::size_t hvp_calls() const noexcept { return hvp_calls_; }

    void on_step(const StepContext& ctx) {
        const double p = ctx.momentum;
        const double lambda = ctx.weight_decay;
        const double eta = ctx.learning_rate;
        const double source = static_cast<double>(ctx.dataset_size) / static_cast<double>(ctx.batch_size());
        for (auto& s : states_) {
            if (s.sample_index >= ctx.dataset_size)
                throw ShapeError("tracked index " + std::to_string(s.sample_index) + " outside the dataset");
            Vec& dv = s.mom_deriv;
            Vec& nabla = s.nabla;
            if (p != 1.0) scale(dv, p);
            if (mode_ == HypergradMode::exact) {
                ctx.batch_hvp(nabla, scratch_);
                ++hvp_calls_;
                axpy(1.0, scratch_, dv);
            }
            if (lambda != 0.0) axpy(lambda, nabla, dv);
            if (ctx.in_batch(s.sample_index)) {
                ctx.sample_gradient(s.sample_index, grad_);
                axpy(source, grad_, dv);
            }
            axpy(-eta, dv, nabla);
            if (!all_finite(nabla) || !all_finite(dv))
                throw DivergenceError("hypergradient of sample " + std::to_string(s.sample_index) + " is not finite",
                                      ctx.step);
            s.step = ctx.step;
        }
    }

    StepHook hook() {
        return [this](const StepContext& ctx) { on_step(ctx); };
    }

private:
    HypergradMode mode_;
    std::vector<HypergradState> states_;
    Vec scratch_, grad_;
    std::size_t hvp_calls_ = 0;
};

struct TrackResult {
    std::vector<HypergradState> states;
    std::size_t hvp_calls = 0;
};

inline void check_tracked(std::span<const std::size_t> indices, std::size_t n) {
    for (std::size_t i : indices)
        if (i >= n) throw ShapeError("tracked index " + std::to_string(i) + " outside [0, N)");
}

/// Replays the trajectory once, advancing every tracker in lockstep.
inline void track_all(const Model& model, const LabeledDataset& data, const TrajectoryRecord& record,
                      std::span<HypergradTracker* const> trackers) {
    replay(model, data, record, [&](const StepContext& ctx) {
        for (HypergradTracker* t : trackers) t->on_step(ctx);
    });
}

inline TrackResult track(const Model& model, const LabeledDataset& data, const TrajectoryRecord& record,
                         std::span<const std::size_t> tracked, HypergradMode mode) {
    check_tracked(tracked, data.size());
    HypergradTracker tracker(mode, tracked, model.parameter_count());
    HypergradTracker* ptr = &tracker;
    track_all(model, data, record, std::span<HypergradTracker* const>(&ptr, 1));
    return {std::move(tracker.states()), tracker.hvp_calls()};
}

/// Hessian-aware hypergradients at step T.
inline TrackResult track_exact(const Model& model, const LabeledDataset& data, const TrajectoryRecord& record,
                               std::span<const std::size_t> tracked) {
    return track(model, data, record, tracked, HypergradMode::exact);
}

/// Hessian-free hypergradients at step T; performs no Hessian-vector products.
inline TrackResult track_approx(const Model& model, const LabeledDataset& data, const TrajectoryRecord& record,
                                std::span<const std::size_t> tracked) {
    return track(model, data, record, tracked, HypergradMode::approx);
}

// ---------------------------------------------------------------------------

struct ContributionEntry {
    std::size_t train_index = 0;
    /// Empty when the value refers to the whole test subset.
    std::optional<std::size_t> test_index;
    double value = 0.0;
};

struct ContributionReport {
    /// exact | approx | influence_cg | influence_neumann | influence_dense | oracle_fd | oracle_loo
    std::string method;
    std::size_t dataset_size = 0;
    std::uint64_t trajectory_checksum = 0;
    std::string test_subset = "ALL";
    std::vector<ContributionEntry> entries;

    /// Values of the whole-subset entries, ordered as stored.
    Vec values() const {
        Vec out;
        for (const auto& e : entries)
            if (!e.test_index) out.push_back(e.value);
        return out;
    }

    std::vector<std::size_t> train_indices() const {
        std::vector<std::size_t> out;
        for (const auto& e : entries)
            if (!e.test_index) out.push_back(e.train_index);
        return out;
    }
};

/// C(i) = -(1/N) dL_test(w_T)/dw_T . nabla_{T,i}, with the test-loss gradient
/// taken exactly at the final parameters. With per_pair set, C(i, j) entries for
/// every test sample j are appended after the C(i) entries.
inline ContributionReport contribution(const Model& model, const TrajectoryRecord& record,
                                       std::span<const HypergradState> hypergrads, const LabeledDataset& test,
                                       bool per_pair = false, const std::string& method = "") {
    if (test.empty()) throw ShapeError("contribution: empty test subset");
    ContributionReport rep;
    rep.method = method.empty() && !hypergrads.empty() ? to_string(hypergrads.front().mode) : method;
    rep.dataset_size = record.dataset_size;
    rep.trajectory_checksum = record.trajectory_checksum();
    const double inv_n = 1.0 / static_cast<double>(record.dataset_size);
    const std::span<const double> w = record.final_params;

    const Vec g_test = mean_gradient(model, w, test);
    for (const auto& s : hypergrads) rep.entries.push_back({s.sample_index, std::nullopt, -inv_n * dot(g_test, s.nabla)});

    if (per_pair) {
        Vec gj(model.parameter_count());
        for (std::size_t j = 0; j < test.size(); ++j) {
            std::fill(gj.begin(), gj.end(), 0.0);
            model.loss_gradient(w, test.sample(j), gj, 1.0);
            for (const auto& s : hypergrads) rep.entries.push_back({s.sample_index, j, -inv_n * dot(gj, s.nabla)});
        }
    }
    return rep;
}

/// dL_test/d eps_i for one hypergradient (the quantity the retraining oracle measures).
inline double test_loss_derivative(const Model& model, std::span<const double> final_params,
                                   const HypergradState& state, const LabeledDataset& test) {
    return dot(mean_gradient(model, final_params, test), state.nabla);
}

// ---------------------------------------------------------------------------

struct ApproxErrorTrace {
    struct Point {
        std::size_t step = 0;
        double error_norm = 0.0;  // ||nabla_t - approx nabla_t||
        double bound = 0.0;       // L * M_w * eta_1 / (eta_t * lambda)
        double learning_rate = 0.0;
        double exact_norm = 0.0;
    };

    std::size_t sample_index = 0;
    double lipschitz = 0.0;  // L
    double max_norm = 0.0;   // M_w
    double weight_decay = 0.0;
    double initial_lr = 0.0;
    std::vector<Point> points;

    bool bound_holds() const {
        return std::all_of(points.begin(), points.end(), [](const Point& p) { return p.error_norm <= p.bound; });
    }
    double peak_error() const {
        double m = 0.0;
        for (const auto& p : points) m = std::max(m, p.error_norm);
        return m;
    }
};

struct ErrorTraceOptions {
    std::size_t record_stride = 1;
    std::size_t power_iterations = 200;
    std::uint64_t seed = 0;
};

/// Runs exact and approximate tracking in lockstep for one sample and records
/// the approximation error next to the analytic bound. L is the largest
/// power-iteration estimate of the full-data empirical-risk Hessian over the
/// stored snapshots (which always include w_T); M_w is the largest exact
/// hypergradient norm seen along the run.
inline ApproxErrorTrace error_trace(const Model& model, const LabeledDataset& data, const TrajectoryRecord& record,
                                    std::size_t index, const ErrorTraceOptions& opts = {}) {
    const double lambda = record.config.weight_decay;
    if (!(lambda > 0.0)) throw ConfigError("error_trace: the bound is undefined for weight_decay = 0");
    if (opts.record_stride == 0) throw ConfigError("error_trace: record_stride must be positive");
    const std::size_t idx[] = {index};
    check_tracked(idx, data.size());

    HypergradTracker exact(HypergradMode::exact, idx, model.parameter_count());
    HypergradTracker approx(HypergradMode::approx, idx, model.parameter_count());

    ApproxErrorTrace trace;
    trace.sample_index = index;
    trace.weight_decay = lambda;
    trace.initial_lr = record.learning_rates.empty() ? record.config.initial_lr : record.learning_rates.front();
    trace.points.push_back({0, 0.0, 0.0, trace.initial_lr, 0.0});

    const std::size_t total = record.total_steps();
    double running_max = 0.0;
    replay(model, data, record, [&](const StepContext& ctx) {
        exact.on_step(ctx);
        approx.on_step(ctx);
        const Vec& a = exact.states().front().nabla;
        const double n = norm2(a);
        running_max = std::max(running_max, n);
        if (ctx.step % opts.record_stride == 0 || ctx.step == total)
            trace.points.push_back({ctx.step, norm2(difference(a, approx.states().front().nabla)), 0.0,
                                    ctx.learning_rate, n});
    });
    trace.max_norm = running_max;

    Vec full_weights(data.size());
    for (std::size_t i = 0; i < data.size(); ++i)
        full_weights[i] = 1.0 / static_cast<double>(data.size()) + record.data_weights[i];
    double L = 0.0;
    for (const auto& [step, w] : record.snapshots) {
        const ParameterVector params = model.wrap(w);
        const LinearOperator op = [&](std::span<const double> v, std::span<double> out) {
            const ParameterVector hv = hessian_vector_product(model, params, data, full_weights, v);
            std::copy(hv.values.begin(), hv.values.end(), out.begin());
        };
        L = std::max(L, power_iteration_max_eig(op, model.parameter_count(), opts.power_iterations, opts.seed));
    }
    trace.lipschitz = L;
    for (auto& p : trace.points) p.bound = L * trace.max_norm * trace.initial_lr / (p.learning_rate * lambda);
    return trace;
}

} // namespace hydra
