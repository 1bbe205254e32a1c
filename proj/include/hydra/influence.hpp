#pragma once

// Influence-function baseline: IF(z_i, z_test) = -grad_test^T (H + delta I)^{-1} grad_i
// evaluated at the final parameters, with the inverse-Hessian-vector product
// from damped conjugate gradient, the stochastic Neumann series, or a dense solve.

#include <algorithm>
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
#include "hydra/rng.hpp"

namespace hydra {

enum class InverseHvpMethod { conjugate_gradient, neumann, dense };

inline const char* influence_tag(InverseHvpMethod m) {
    switch (m) {
    case InverseHvpMethod::conjugate_gradient: return "influence_cg";
    case InverseHvpMethod::neumann: return "influence_neumann";
    case InverseHvpMethod::dense: return "influence_dense";
    }
    return "influence";
}

struct InverseHvpConfig {
    InverseHvpMethod method = InverseHvpMethod::conjugate_gradient;
    double damping = 0.01;
    std::size_t cg_max_iters = 1000;
    double cg_tolerance = 1e-10;
    std::size_t neumann_depth = 500;
    std::size_t neumann_repeats = 4;
    /// Explicit Neumann scale; when empty, 1.1 x the largest power-iteration
    /// estimate of max |eig| over the single-sample damped Hessians.
    std::optional<double> neumann_scale;
    std::uint64_t seed = 0;
    bool include_regularizer_in_hessian = true;
    std::size_t power_iterations = 200;
    std::size_t sample_power_iterations = 50;
};

struct InverseHvpResult {
    Vec solution;
    std::size_t iterations = 0;
    /// ||(H + delta I) x - v|| / ||v|| for CG and dense; 0 for Neumann.
    double residual = 0.0;
    /// Mean per-coordinate variance of the Neumann repeats.
    double repeat_variance = 0.0;
    double scale = 0.0;
};

/// The damped training Hessian H_T (+ lambda I) + delta I as an operator.
class DampedHessian {
public:
    DampedHessian(const Model& model, std::span<const double> params, const LabeledDataset& train,
                  double weight_decay, const InverseHvpConfig& config)
        : model_(model), params_(params), train_(train),
          shift_(config.damping + (config.include_regularizer_in_hessian ? weight_decay : 0.0)) {
        if (config.damping < 0.0) throw ConfigError("damping must be >= 0");
        if (train.empty()) throw ShapeError("inverse_hvp: empty training set");
        inv_n_ = 1.0 / static_cast<double>(train.size());
    }

    std::size_t dim() const { return model_.parameter_count(); }
    double shift() const { return shift_; }

    void apply(std::span<const double> v, std::span<double> out) const {
        std::fill(out.begin(), out.end(), 0.0);
        for (std::size_t i = 0; i < train_.size(); ++i) model_.hvp_accumulate(params_, train_.sample(i), v, out, inv_n_);
        axpy(shift_, v, out);
    }

    /// Single-sample estimate H_d + shift I, whose expectation over uniform d is the full operator.
    void apply_sample(std::size_t d, std::span<const double> v, std::span<double> out) const {
        std::fill(out.begin(), out.end(), 0.0);
        model_.hvp_accumulate(params_, train_.sample(d), v, out, 1.0);
        axpy(shift_, v, out);
    }

    std::size_t sample_count() const { return train_.size(); }

private:
    const Model& model_;
    std::span<const double> params_;
    const LabeledDataset& train_;
    double shift_;
    double inv_n_ = 0.0;
};

namespace detail {

inline InverseHvpResult solve_cg(const DampedHessian& H, std::span<const double> v, const InverseHvpConfig& cfg) {
    const std::size_t n = H.dim();
    InverseHvpResult res;
    res.solution.assign(n, 0.0);
    const double vnorm = norm2(v);
    if (vnorm == 0.0) return res;

    Vec r(v.begin(), v.end()), p = r, Ap(n);
    double rr = dot(r, r);
    for (std::size_t it = 0; it < cfg.cg_max_iters; ++it) {
        if (std::sqrt(rr) <= cfg.cg_tolerance * vnorm) break;
        H.apply(p, Ap);
        const double pAp = dot(p, Ap);
        if (!(pAp > 0.0)) throw ConvergenceError("conjugate gradient met non-positive curvature", std::sqrt(rr) / vnorm);
        const double alpha = rr / pAp;
        axpy(alpha, p, res.solution);
        axpy(-alpha, Ap, r);
        const double rr_next = dot(r, r);
        const double beta = rr_next / rr;
        for (std::size_t k = 0; k < n; ++k) p[k] = r[k] + beta * p[k];
        rr = rr_next;
        res.iterations = it + 1;
    }
    // True residual, not the recursively updated one.
    H.apply(res.solution, Ap);
    res.residual = norm2(difference(Ap, v)) / vnorm;
    if (res.residual > cfg.cg_tolerance * 10.0 && std::sqrt(rr) > cfg.cg_tolerance * vnorm)
        throw ConvergenceError("conjugate gradient did not converge in " + std::to_string(cfg.cg_max_iters) +
                                   " iterations",
                               res.residual);
    return res;
}

inline InverseHvpResult solve_neumann(const DampedHessian& H, std::span<const double> v, const InverseHvpConfig& cfg) {
    const std::size_t n = H.dim();
    InverseHvpResult res;
    res.solution.assign(n, 0.0);
    if (cfg.neumann_repeats == 0 || cfg.neumann_depth == 0) throw ConfigError("neumann: depth and repeats must be positive");

    double s;
    if (cfg.neumann_scale) {
        s = *cfg.neumann_scale;
    } else {
        // Every single-sample operator must be a contraction after scaling, so
        // the scale covers the largest per-sample spectrum, not just the mean.
        s = 0.0;
        for (std::size_t d = 0; d < H.sample_count(); ++d) {
            const LinearOperator op = [&H, d](std::span<const double> x, std::span<double> y) { H.apply_sample(d, x, y); };
            s = std::max(s, power_iteration_max_eig(op, n, cfg.sample_power_iterations, derive_seed(cfg.seed, {0x5ca1e, d})));
        }
        s *= 1.1;
    }
    if (!(s > 0.0)) throw ScalingError("neumann: scale must be positive");
    res.scale = s;
    const double vnorm = norm2(v);
    if (vnorm == 0.0) return res;

    std::vector<Vec> runs;
    Vec r(n), hr(n);
    for (std::size_t rep = 0; rep < cfg.neumann_repeats; ++rep) {
        Rng rng = make_rng(cfg.seed, {0x4e75, rep});
        r.assign(v.begin(), v.end());
        for (std::size_t d = 0; d < cfg.neumann_depth; ++d) {
            const std::size_t pick = uniform_index(rng, H.sample_count());
            H.apply_sample(pick, r, hr);
            for (std::size_t k = 0; k < n; ++k) r[k] = v[k] + r[k] - hr[k] / s;
            const double rn = norm2(r);
            if (!std::isfinite(rn) || rn > 1e6 * vnorm)
                throw ScalingError("neumann iteration diverged at depth " + std::to_string(d + 1) +
                                   "; increase the scale (currently " + std::to_string(s) + ")");
        }
        for (double& x : r) x /= s;
        runs.push_back(r);
        axpy(1.0 / static_cast<double>(cfg.neumann_repeats), r, res.solution);
    }
    double var = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        double m2 = 0.0;
        for (const auto& run : runs) m2 += (run[k] - res.solution[k]) * (run[k] - res.solution[k]);
        var += m2 / static_cast<double>(runs.size());
    }
    res.repeat_variance = var / static_cast<double>(n);
    res.iterations = cfg.neumann_depth * cfg.neumann_repeats;
    return res;
}

/// Gaussian elimination with partial pivoting; a is consumed.
inline Vec lu_solve(DenseMatrix a, Vec b) {
    const std::size_t n = a.n;
    for (std::size_t c = 0; c < n; ++c) {
        std::size_t piv = c;
        for (std::size_t r = c + 1; r < n; ++r)
            if (std::abs(a(r, c)) > std::abs(a(piv, c))) piv = r;
        if (a(piv, c) == 0.0) throw NumericError("dense solve: singular matrix");
        if (piv != c) {
            for (std::size_t k = 0; k < n; ++k) std::swap(a(c, k), a(piv, k));
            std::swap(b[c], b[piv]);
        }
        for (std::size_t r = c + 1; r < n; ++r) {
            const double f = a(r, c) / a(c, c);
            if (f == 0.0) continue;
            for (std::size_t k = c; k < n; ++k) a(r, k) -= f * a(c, k);
            b[r] -= f * b[c];
        }
    }
    Vec x(n);
    for (std::size_t r = n; r-- > 0;) {
        double s = b[r];
        for (std::size_t k = r + 1; k < n; ++k) s -= a(r, k) * x[k];
        x[r] = s / a(r, r);
    }
    return x;
}

} // namespace detail

/// Approximates (H_T + delta I)^{-1} v with the configured method.
inline InverseHvpResult inverse_hvp(const Model& model, std::span<const double> params, const LabeledDataset& train,
                                    std::span<const double> v, double weight_decay, const InverseHvpConfig& config) {
    if (v.size() != model.parameter_count()) throw ShapeError("inverse_hvp: |v| != |w|");
    const DampedHessian H(model, params, train, weight_decay, config);
    switch (config.method) {
    case InverseHvpMethod::conjugate_gradient: return detail::solve_cg(H, v, config);
    case InverseHvpMethod::neumann: return detail::solve_neumann(H, v, config);
    case InverseHvpMethod::dense: {
        const Vec w(train.size(), 1.0 / static_cast<double>(train.size()));
        DenseMatrix M = dense_hessian(model, model.wrap(Vec(params.begin(), params.end())), train, w);
        for (std::size_t k = 0; k < M.n; ++k) M(k, k) += H.shift();
        InverseHvpResult res;
        res.solution = detail::lu_solve(M, Vec(v.begin(), v.end()));
        Vec check(M.n);
        H.apply(res.solution, check);
        const double vn = norm2(v);
        res.residual = vn == 0.0 ? 0.0 : norm2(difference(check, v)) / vn;
        return res;
    }
    }
    throw ConfigError("inverse_hvp: unknown method");
}

struct InfluenceEntry {
    std::size_t train_index = 0;
    std::optional<std::size_t> test_index;
    /// Raw IF(z_i, z_test).
    double influence = 0.0;
    /// IF / N.
    double per_sample = 0.0;
    /// -IF / N: estimated test-loss change from removing the sample, signed like C(i).
    double contribution = 0.0;
};

struct InfluenceReport {
    std::string method;
    std::size_t dataset_size = 0;
    std::vector<InfluenceEntry> entries;
    std::size_t iterations = 0;
    double residual = 0.0;
    double repeat_variance = 0.0;

    ContributionReport as_contribution(std::uint64_t trajectory_checksum = 0) const {
        ContributionReport rep;
        rep.method = method;
        rep.dataset_size = dataset_size;
        rep.trajectory_checksum = trajectory_checksum;
        for (const auto& e : entries) rep.entries.push_back({e.train_index, e.test_index, e.contribution});
        return rep;
    }
};

/// IF for one training sample, computed literally as -grad_test^T inverse_hvp(grad_i).
inline InfluenceEntry influence_of(const Model& model, std::span<const double> params, const LabeledDataset& train,
                                   std::size_t train_index, const LabeledDataset& test, double weight_decay,
                                   const InverseHvpConfig& config) {
    if (train_index >= train.size()) throw ShapeError("influence: train index out of range");
    Vec gi(model.parameter_count(), 0.0);
    model.loss_gradient(params, train.sample(train_index), gi, 1.0);
    const Vec g_test = mean_gradient(model, params, test);
    const InverseHvpResult inv = inverse_hvp(model, params, train, gi, weight_decay, config);
    const double value = -dot(g_test, inv.solution);
    const double n = static_cast<double>(train.size());
    return {train_index, std::nullopt, value, value / n, -value / n};
}

/// IF for many training samples against the mean test gradient. The damped
/// Hessian is symmetric, so one solve s = (H + delta I)^{-1} grad_test serves
/// every training sample: IF_i = -s^T grad_i. With per_pair set, one solve per
/// test sample adds IF(z_i, z_j) entries.
inline InfluenceReport influence(const Model& model, std::span<const double> params, const LabeledDataset& train,
                                 std::span<const std::size_t> train_indices, const LabeledDataset& test,
                                 double weight_decay, const InverseHvpConfig& config, bool per_pair = false) {
    if (test.empty()) throw ShapeError("influence: empty test subset");
    check_tracked(train_indices, train.size());
    InfluenceReport rep;
    rep.method = influence_tag(config.method);
    rep.dataset_size = train.size();
    const double n = static_cast<double>(train.size());

    std::vector<Vec> grads;
    grads.reserve(train_indices.size());
    for (std::size_t i : train_indices) {
        Vec g(model.parameter_count(), 0.0);
        model.loss_gradient(params, train.sample(i), g, 1.0);
        grads.push_back(std::move(g));
    }

    const Vec g_test = mean_gradient(model, params, test);
    const InverseHvpResult s = inverse_hvp(model, params, train, g_test, weight_decay, config);
    rep.iterations = s.iterations;
    rep.residual = s.residual;
    rep.repeat_variance = s.repeat_variance;
    for (std::size_t k = 0; k < train_indices.size(); ++k) {
        const double value = -dot(s.solution, grads[k]);
        rep.entries.push_back({train_indices[k], std::nullopt, value, value / n, -value / n});
    }

    if (per_pair) {
        Vec gj(model.parameter_count());
        for (std::size_t j = 0; j < test.size(); ++j) {
            std::fill(gj.begin(), gj.end(), 0.0);
            model.loss_gradient(params, test.sample(j), gj, 1.0);
            const InverseHvpResult sj = inverse_hvp(model, params, train, gj, weight_decay, config);
            for (std::size_t k = 0; k < train_indices.size(); ++k) {
                const double value = -dot(sj.solution, grads[k]);
                rep.entries.push_back({train_indices[k], j, value, value / n, -value / n});
            }
        }
    }
    return rep;
}

} // namespace hydra
