#pragma once

// Deterministic gradient-descent training (full-batch GD, momentum, mini-batch
// SGD) with learning-rate schedules, weight decay, and a trajectory record that
// replays bit-for-bit.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hydra/error.hpp"
#include "hydra/linalg.hpp"
#include "hydra/models.hpp"
#include "hydra/rng.hpp"

namespace hydra {

struct Schedule {
    enum class Kind { constant, step_decay, exponential, reduce_on_plateau };

    Kind kind = Kind::constant;
    /// step_decay and reduce_on_plateau multiplier.
    double factor = 0.1;
    /// step_decay: the learning rate is multiplied once, when this many epochs have completed.
    std::size_t at_epoch = 1;
    /// exponential: eta_{t+1} = rate * eta_t, applied every step.
    double rate = 1.0;
    std::size_t patience = 2;
    /// Relative improvement of the monitored loss that resets patience (0.01%).
    double rel_threshold = 1e-4;
};

struct TrainingConfig {
    std::size_t epochs = 1;
    std::size_t batch_size = 1;
    double initial_lr = 0.1;
    Schedule schedule;
    double momentum = 0.0;
    double weight_decay = 0.0;
    std::uint64_t seed = 0;
    /// Snapshot every this many steps; 0 means once per epoch. Steps 0 and T are always kept.
    std::size_t snapshot_stride = 0;

    std::size_t steps_per_epoch(std::size_t n) const {
        const std::size_t b = std::min(batch_size, n);
        return (n + b - 1) / b;
    }
    std::size_t total_steps(std::size_t n) const { return epochs * steps_per_epoch(n); }

    void validate(std::size_t n) const {
        if (n == 0) throw ConfigError("training: empty dataset");
        if (epochs == 0) throw ConfigError("training: epochs must be positive");
        if (batch_size == 0) throw ConfigError("training: batch_size must be positive");
        if (!(initial_lr > 0.0) || !std::isfinite(initial_lr)) throw ConfigError("training: initial_lr must be > 0");
        if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("training: momentum must lie in [0, 1)");
        if (!(weight_decay >= 0.0)) throw ConfigError("training: weight_decay must be >= 0");
        // Schedules never raise the rate, so eta_1 * lambda bounds every step.
        if (weight_decay > 0.0 && !(initial_lr * weight_decay < 1.0))
            throw ConfigError("training: learning rate times weight decay must stay below 1");
        switch (schedule.kind) {
        case Schedule::Kind::constant: break;
        case Schedule::Kind::step_decay:
            if (!(schedule.factor > 0.0 && schedule.factor <= 1.0))
                throw ConfigError("step_decay: factor must lie in (0, 1]");
            break;
        case Schedule::Kind::exponential:
            if (!(schedule.rate > 0.0 && schedule.rate <= 1.0))
                throw ConfigError("exponential: rate must lie in (0, 1]");
            break;
        case Schedule::Kind::reduce_on_plateau:
            if (!(schedule.factor > 0.0 && schedule.factor < 1.0))
                throw ConfigError("reduce_on_plateau: factor must lie in (0, 1)");
            if (schedule.patience == 0) throw ConfigError("reduce_on_plateau: patience must be positive");
            if (!(schedule.rel_threshold >= 0.0)) throw ConfigError("reduce_on_plateau: rel_threshold must be >= 0");
            break;
        }
    }
};

/// Sample indices used at every step, in ascending order within each batch.
struct BatchSchedule {
    std::vector<std::vector<std::uint32_t>> steps;
};

/// Batches for one epoch: a seeded permutation keyed by (seed, epoch), cut into
/// consecutive chunks of batch_size (the last may be short).
inline std::vector<std::vector<std::uint32_t>> epoch_batches(std::size_t n, const TrainingConfig& config,
                                                             std::size_t epoch) {
    std::vector<std::uint32_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0u);
    const std::size_t b = std::min(config.batch_size, n);
    if (b < n) {
        Rng rng = make_rng(config.seed, {0xba7c, epoch});
        shuffle(perm.begin(), perm.end(), rng);
    }
    std::vector<std::vector<std::uint32_t>> out;
    for (std::size_t s = 0; s < n; s += b) {
        std::vector<std::uint32_t> batch(perm.begin() + static_cast<std::ptrdiff_t>(s),
                                         perm.begin() + static_cast<std::ptrdiff_t>(std::min(s + b, n)));
        std::sort(batch.begin(), batch.end());
        out.push_back(std::move(batch));
    }
    return out;
}

inline std::uint64_t checksum(std::span<const double> values) {
    std::uint64_t h = 1469598103934665603ULL;
    for (double v : values) {
        auto bits = std::bit_cast<std::uint64_t>(v);
        for (int k = 0; k < 8; ++k) {
            h ^= (bits >> (8 * k)) & 0xffu;
            h *= 1099511628211ULL;
        }
    }
    return h;
}

struct TrajectoryRecord {
    TrainingConfig config;
    std::size_t dataset_size = 0;
    /// Per-sample data-weight offsets epsilon_i used for this run.
    Vec data_weights;
    BatchSchedule batches;
    /// eta_t for t = 1..T, stored at index t - 1.
    Vec learning_rates;
    /// Batch objective at w_{t-1} (weighted batch loss plus lambda/2 ||w||^2).
    Vec losses;
    std::map<std::size_t, Vec> snapshots;
    Vec final_params;

    std::size_t total_steps() const noexcept { return learning_rates.size(); }
    const Vec& initial_params() const { return snapshots.at(0); }

    std::uint64_t trajectory_checksum() const {
        std::uint64_t h = 0;
        for (const auto& [step, w] : snapshots) h = splitmix64(h ^ checksum(w) ^ step);
        return splitmix64(h ^ checksum(final_params));
    }
};

/// Immutable view of one training step handed to hooks. params is w_{t-1};
/// the update to w_t happens after every hook returns.
struct StepContext {
    std::size_t step = 0;  // t, starting at 1
    std::size_t epoch = 0;
    std::span<const double> params;
    double learning_rate = 0.0;
    std::span<const std::uint32_t> batch;
    /// Loss coefficient of each batch member: 1/B + N * eps_i / B.
    std::span<const double> batch_weights;
    const Model* model = nullptr;
    const LabeledDataset* data = nullptr;
    double momentum = 0.0;
    double weight_decay = 0.0;
    std::size_t dataset_size = 0;

    std::size_t batch_size() const noexcept { return batch.size(); }

    bool in_batch(std::size_t i) const {
        return std::binary_search(batch.begin(), batch.end(), static_cast<std::uint32_t>(i));
    }

    /// g_{t-1,i}: gradient of sample i's loss at w_{t-1}. Overwrites out.
    void sample_gradient(std::size_t i, std::span<double> out) const {
        std::fill(out.begin(), out.end(), 0.0);
        model->loss_gradient(params, data->sample(i), out, 1.0);
    }

    /// Hessian of the regularizer-free batch loss at w_{t-1} applied to v. Overwrites out.
    void batch_hvp(std::span<const double> v, std::span<double> out) const {
        std::fill(out.begin(), out.end(), 0.0);
        for (std::size_t k = 0; k < batch.size(); ++k)
            if (batch_weights[k] != 0.0) model->hvp_accumulate(params, data->sample(batch[k]), v, out, batch_weights[k]);
    }
};

using StepHook = std::function<void(const StepContext&)>;

struct TrainOptions {
    /// Starting parameters; drawn from model.init_params(config.seed) when empty.
    std::optional<Vec> initial_params;
    /// Added to the monitored loss of reduce_on_plateau.
    const LabeledDataset* validation = nullptr;
    /// Divergence guard: abort once the loss exceeds this multiple of the first step's loss.
    double divergence_factor = 1e6;
};

namespace detail {

struct FixedSchedule {
    const BatchSchedule* batches;
    const Vec* learning_rates;
};

inline TrajectoryRecord run_training(const Model& model, const LabeledDataset& data, const TrainingConfig& config,
                                     std::span<const double> data_weights, const StepHook& hook, Vec w,
                                     const std::optional<FixedSchedule>& fixed, const TrainOptions& options) {
    const std::size_t n = data.size();
    config.validate(n);
    if (data_weights.size() != n) throw ShapeError("train: data_weights length != dataset length");
    if (w.size() != model.parameter_count()) throw ShapeError("train: initial parameters have the wrong length");

    const std::size_t per_epoch = config.steps_per_epoch(n);
    const std::size_t total = config.total_steps(n);
    const std::size_t stride = config.snapshot_stride == 0 ? per_epoch : config.snapshot_stride;
    if (fixed && (fixed->batches->steps.size() != total || fixed->learning_rates->size() != total))
        throw ConfigError("replay: recorded schedule does not match the configuration");

    TrajectoryRecord rec;
    rec.config = config;
    rec.dataset_size = n;
    rec.data_weights.assign(data_weights.begin(), data_weights.end());
    rec.learning_rates.reserve(total);
    rec.losses.reserve(total);
    rec.batches.steps.reserve(total);
    rec.snapshots[0] = w;

    const double lambda = config.weight_decay;
    const double p = config.momentum;
    const double N = static_cast<double>(n);
    Vec velocity(w.size(), 0.0), grad(w.size());
    Vec batch_weights;

    double lr = config.initial_lr;
    double best_monitor = INFINITY;
    std::size_t bad_epochs = 0;
    double first_loss = 0.0;
    std::size_t t = 0;

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::vector<std::vector<std::uint32_t>> generated;
        if (!fixed) generated = epoch_batches(n, config, epoch);

        for (std::size_t s = 0; s < per_epoch; ++s) {
            ++t;
            const std::vector<std::uint32_t>& batch = fixed ? fixed->batches->steps[t - 1] : generated[s];
            const double eta = fixed ? (*fixed->learning_rates)[t - 1] : lr;
            const double B = static_cast<double>(batch.size());

            batch_weights.resize(batch.size());
            for (std::size_t k = 0; k < batch.size(); ++k)
                batch_weights[k] = 1.0 / B + N * data_weights[batch[k]] / B;

            std::fill(grad.begin(), grad.end(), 0.0);
            double loss = 0.0;
            for (std::size_t k = 0; k < batch.size(); ++k)
                loss += batch_weights[k] * model.loss_gradient(w, data.sample(batch[k]), grad, batch_weights[k]);
            if (lambda != 0.0) {
                loss += 0.5 * lambda * dot(w, w);
                axpy(lambda, w, grad);
            }
            if (!std::isfinite(loss) || !all_finite(grad)) throw DivergenceError("training loss is not finite", t);
            if (t == 1) first_loss = loss;
            if (first_loss > 0.0 && loss > options.divergence_factor * first_loss)
                throw DivergenceError("training loss exceeded the divergence guard", t);

            if (hook) {
                StepContext ctx;
                ctx.step = t;
                ctx.epoch = epoch;
                ctx.params = w;
                ctx.learning_rate = eta;
                ctx.batch = batch;
                ctx.batch_weights = batch_weights;
                ctx.model = &model;
                ctx.data = &data;
                ctx.momentum = p;
                ctx.weight_decay = lambda;
                ctx.dataset_size = n;
                hook(ctx);
            }

            for (std::size_t k = 0; k < w.size(); ++k) {
                velocity[k] = p * velocity[k] + grad[k];
                w[k] -= eta * velocity[k];
            }

            rec.learning_rates.push_back(eta);
            rec.losses.push_back(loss);
            rec.batches.steps.push_back(batch);
            if (t % stride == 0 || t == total) rec.snapshots[t] = w;

            if (!fixed && config.schedule.kind == Schedule::Kind::exponential) lr *= config.schedule.rate;
        }

        if (fixed) continue;
        if (config.schedule.kind == Schedule::Kind::step_decay && epoch + 1 == config.schedule.at_epoch)
            lr *= config.schedule.factor;
        if (config.schedule.kind == Schedule::Kind::reduce_on_plateau) {
            double monitor = 0.0;
            for (std::size_t i = 0; i < n; ++i)
                monitor += (1.0 / N + data_weights[i]) * model.loss(w, data.sample(i));
            if (options.validation != nullptr && !options.validation->empty())
                monitor += mean_loss(model, w, *options.validation);
            if (monitor < best_monitor * (1.0 - config.schedule.rel_threshold)) {
                best_monitor = monitor;
                bad_epochs = 0;
            } else if (++bad_epochs >= config.schedule.patience) {
                lr *= config.schedule.factor;
                bad_epochs = 0;
            }
        }
    }
    rec.final_params = std::move(w);
    return rec;
}

} // namespace detail

/// Trains from scratch: batches come from the seeded per-epoch permutation and
/// eta_t from the schedule. step_hook sees every step before its update.
inline TrajectoryRecord train(const Model& model, const LabeledDataset& data, const TrainingConfig& config,
                              std::span<const double> data_weights, const StepHook& step_hook = {},
                              const TrainOptions& options = {}) {
    Vec w0 = options.initial_params ? *options.initial_params : model.init_params(config.seed).values;
    return detail::run_training(model, data, config, data_weights, step_hook, std::move(w0), std::nullopt, options);
}

/// Convenience overload for the nominal run (all data weights zero).
inline TrajectoryRecord train(const Model& model, const LabeledDataset& data, const TrainingConfig& config,
                              const StepHook& step_hook = {}, const TrainOptions& options = {}) {
    const Vec zeros(data.size(), 0.0);
    return train(model, data, config, zeros, step_hook, options);
}

/// Re-runs a recorded trajectory under different data weights. Batches and the
/// learning-rate sequence are taken from the record, not recomputed.
inline TrajectoryRecord retrain(const Model& model, const LabeledDataset& data, const TrajectoryRecord& record,
                                std::span<const double> data_weights, const StepHook& step_hook = {}) {
    if (data.size() != record.dataset_size) throw ShapeError("retrain: dataset size differs from the record");
    return detail::run_training(model, data, record.config, data_weights, step_hook, record.initial_params(),
                                detail::FixedSchedule{&record.batches, &record.learning_rates}, TrainOptions{});
}

/// Replays a record and checks that every snapshot and loss is reproduced bit-for-bit.
inline TrajectoryRecord replay(const Model& model, const LabeledDataset& data, const TrajectoryRecord& record,
                               const StepHook& step_hook = {}) {
    TrajectoryRecord again = retrain(model, data, record, record.data_weights, step_hook);
    for (std::size_t t = 0; t < again.losses.size(); ++t)
        if (std::bit_cast<std::uint64_t>(again.losses[t]) != std::bit_cast<std::uint64_t>(record.losses[t]))
            throw ReplayDivergenceError(t + 1);
    for (const auto& [step, w] : record.snapshots) {
        auto it = again.snapshots.find(step);
        if (it == again.snapshots.end() || checksum(it->second) != checksum(w)) throw ReplayDivergenceError(step);
    }
    return again;
}

} // namespace hydra
