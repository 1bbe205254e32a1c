#pragma once

// Dense-tensor numerics and the differentiable model abstraction: per-sample
// loss and gradient, exact (R-operator) and finite-difference Hessian-vector
// products, dense Hessians for small models, and power iteration.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hydra/error.hpp"
#include "hydra/linalg.hpp"
#include "hydra/rng.hpp"

namespace hydra {

enum class ModelKind { logistic_regression, mlp };
enum class Activation { relu, identity };
enum class LossKind { cross_entropy, squared_error };
enum class SplitTag { train, validation, test };
enum class HvpMode { exact, finite_difference };

struct Tensor {
    std::vector<std::size_t> shape;
    Vec data;

    Tensor() = default;
    Tensor(std::vector<std::size_t> dims, Vec values) : shape(std::move(dims)), data(std::move(values)) {
        if (element_count(shape) != data.size())
            throw ShapeError("Tensor: product(shape) != length(data)");
        if (!all_finite(data)) throw NumericError("Tensor: non-finite entry");
    }

    static std::size_t element_count(const std::vector<std::size_t>& dims) {
        return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
    }

    std::size_t size() const noexcept { return data.size(); }
};

/// One training or test example, viewed without copying.
struct SampleView {
    std::span<const double> input;
    std::size_t label = 0;
    double target = 0.0;
};

struct LabeledDataset {
    std::vector<Tensor> inputs;
    std::vector<std::size_t> labels;
    /// Optional real-valued targets, used by squared-error models with one output.
    Vec targets;
    std::size_t class_count = 0;
    SplitTag split = SplitTag::train;

    std::size_t size() const noexcept { return inputs.size(); }
    bool empty() const noexcept { return inputs.empty(); }

    std::size_t input_size() const { return inputs.empty() ? 0 : inputs.front().size(); }

    SampleView sample(std::size_t i) const {
        return SampleView{inputs[i].data, labels[i],
                          targets.empty() ? static_cast<double>(labels[i]) : targets[i]};
    }

    void validate() const {
        if (inputs.size() != labels.size()) throw ShapeError("dataset: inputs and labels differ in length");
        if (!targets.empty() && targets.size() != labels.size())
            throw ShapeError("dataset: targets and labels differ in length");
        if (class_count == 0) throw ConfigError("dataset: class_count must be positive");
        for (std::size_t i = 0; i < inputs.size(); ++i) {
            if (labels[i] >= class_count) throw ShapeError("dataset: label out of range at " + std::to_string(i));
            if (inputs[i].size() != inputs.front().size())
                throw ShapeError("dataset: ragged inputs at " + std::to_string(i));
        }
    }

    LabeledDataset subset(std::span<const std::size_t> indices) const {
        LabeledDataset out;
        out.class_count = class_count;
        out.split = split;
        out.inputs.reserve(indices.size());
        out.labels.reserve(indices.size());
        for (std::size_t i : indices) {
            out.inputs.push_back(inputs.at(i));
            out.labels.push_back(labels.at(i));
            if (!targets.empty()) out.targets.push_back(targets.at(i));
        }
        return out;
    }
};

/// Content hash used as sample identity (input bytes plus label).
inline std::uint64_t sample_identity(const LabeledDataset& d, std::size_t i) {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](std::uint64_t v) { h = splitmix64(h ^ v); };
    for (double v : d.inputs[i].data) mix(std::bit_cast<std::uint64_t>(v));
    mix(d.labels[i]);
    return h;
}

/// Throws ShapeError if any test sample also occurs in the training split.
inline void check_disjoint(const LabeledDataset& train, const LabeledDataset& test) {
    std::vector<std::uint64_t> ids(train.size());
    for (std::size_t i = 0; i < train.size(); ++i) ids[i] = sample_identity(train, i);
    std::sort(ids.begin(), ids.end());
    for (std::size_t j = 0; j < test.size(); ++j)
        if (std::binary_search(ids.begin(), ids.end(), sample_identity(test, j)))
            throw ShapeError("train and test splits overlap at test sample " + std::to_string(j));
}

struct ParameterBlock {
    std::string name;
    std::size_t offset = 0;
    std::vector<std::size_t> shape;

    std::size_t size() const { return Tensor::element_count(shape); }
};

/// Named blocks that tile [0, total) without gaps or overlaps.
class ParameterLayout {
public:
    ParameterLayout() = default;
    explicit ParameterLayout(std::vector<ParameterBlock> blocks) : blocks_(std::move(blocks)) {
        std::size_t cursor = 0;
        for (const auto& b : blocks_) {
            if (b.offset != cursor) throw ShapeError("parameter layout: block '" + b.name + "' leaves a gap or overlaps");
            cursor += b.size();
        }
        total_ = cursor;
    }

    std::size_t total() const noexcept { return total_; }
    const std::vector<ParameterBlock>& blocks() const noexcept { return blocks_; }

    const ParameterBlock& find(const std::string& name) const {
        for (const auto& b : blocks_)
            if (b.name == name) return b;
        throw ShapeError("parameter layout: no block named '" + name + "'");
    }

private:
    std::vector<ParameterBlock> blocks_;
    std::size_t total_ = 0;
};

struct ParameterVector {
    Vec values;
    std::shared_ptr<const ParameterLayout> layout;

    std::size_t size() const noexcept { return values.size(); }

    std::span<const double> block(const std::string& name) const {
        const auto& b = layout->find(name);
        return std::span<const double>(values).subspan(b.offset, b.size());
    }
};

struct ModelSpec {
    ModelKind kind = ModelKind::logistic_regression;
    std::vector<std::size_t> layer_widths;
    Activation activation = Activation::relu;
    LossKind loss = LossKind::cross_entropy;
    bool bias = true;

    void validate() const {
        if (layer_widths.size() < 2) throw ConfigError("model: need at least input and output widths");
        for (std::size_t w : layer_widths)
            if (w == 0) throw ConfigError("model: layer widths must be positive");
        if (kind == ModelKind::logistic_regression && layer_widths.size() != 2)
            throw ConfigError("model: logistic regression has exactly two widths");
        if (kind == ModelKind::mlp && layer_widths.size() < 3)
            throw ConfigError("model: mlp needs at least one hidden layer");
    }

    /// Checks the first width against the input size and the last against the classes.
    void validate_for(std::size_t input_size, std::size_t class_count) const {
        validate();
        if (layer_widths.front() != input_size) throw ShapeError("model: first width does not match input size");
        const std::size_t out = layer_widths.back();
        const bool ok = out == class_count || (loss == LossKind::squared_error && out == 1);
        if (!ok) throw ShapeError("model: last width does not match class count");
    }
};

/// Fully connected network y = W_L s(... s(W_1 x + b_1) ...) + b_L with a
/// softmax cross-entropy or squared-error head. Logistic regression is the
/// zero-hidden-layer case. Parameters are flat, blocks ordered W0, b0, W1, b1, ...
class Model {
public:
    explicit Model(ModelSpec spec) : spec_(std::move(spec)) {
        spec_.validate();
        std::vector<ParameterBlock> blocks;
        std::size_t off = 0;
        for (std::size_t l = 0; l + 1 < spec_.layer_widths.size(); ++l) {
            const std::size_t in = spec_.layer_widths[l], out = spec_.layer_widths[l + 1];
            blocks.push_back({"W" + std::to_string(l), off, {out, in}});
            off += out * in;
            if (spec_.bias) {
                blocks.push_back({"b" + std::to_string(l), off, {out}});
                off += out;
            }
        }
        layout_ = std::make_shared<const ParameterLayout>(std::move(blocks));
    }

    const ModelSpec& spec() const noexcept { return spec_; }
    const std::shared_ptr<const ParameterLayout>& layout() const noexcept { return layout_; }
    std::size_t parameter_count() const noexcept { return layout_->total(); }
    std::size_t input_size() const noexcept { return spec_.layer_widths.front(); }
    std::size_t output_size() const noexcept { return spec_.layer_widths.back(); }
    std::size_t layer_count() const noexcept { return spec_.layer_widths.size() - 1; }

    ParameterVector wrap(Vec values) const {
        if (values.size() != parameter_count()) throw ShapeError("parameter vector has the wrong length");
        return ParameterVector{std::move(values), layout_};
    }

    ParameterVector zeros() const { return wrap(Vec(parameter_count(), 0.0)); }

    /// Glorot-uniform weights, zero biases.
    ParameterVector init_params(std::uint64_t seed) const {
        Rng rng = make_rng(seed, {0x1417});
        Vec w(parameter_count(), 0.0);
        for (const auto& b : layout_->blocks()) {
            if (b.name[0] != 'W') continue;
            const double limit = std::sqrt(6.0 / static_cast<double>(b.shape[0] + b.shape[1]));
            for (std::size_t k = 0; k < b.size(); ++k) w[b.offset + k] = (2.0 * uniform_unit(rng) - 1.0) * limit;
        }
        return wrap(std::move(w));
    }

    Vec outputs(std::span<const double> params, std::span<const double> input) const {
        Forward f = forward(params, input);
        return std::move(f.z.back());
    }

    std::size_t predict(std::span<const double> params, std::span<const double> input) const {
        const Vec out = outputs(params, input);
        if (out.size() == 1) return out[0] >= 0.5 ? 1 : 0;
        return static_cast<std::size_t>(std::max_element(out.begin(), out.end()) - out.begin());
    }

    double loss(std::span<const double> params, const SampleView& s) const {
        check(params, s);
        const Forward f = forward(params, s.input);
        return head_loss(f.z.back(), s);
    }

    /// Returns the loss and accumulates weight * d(loss)/dw into grad.
    double loss_gradient(std::span<const double> params, const SampleView& s, std::span<double> grad,
                         double weight) const {
        check(params, s);
        if (grad.size() != params.size()) throw ShapeError("gradient buffer has the wrong length");
        const Forward f = forward(params, s.input);
        const double value = head_loss(f.z.back(), s);
        Vec delta = head_delta(f.z.back(), s);
        backward(params, f, std::move(delta), grad, weight);
        return value;
    }

    /// Accumulates weight * (d^2 loss/dw^2) v into out via the R-operator.
    void hvp_accumulate(std::span<const double> params, const SampleView& s, std::span<const double> v,
                        std::span<double> out, double weight) const {
        check(params, s);
        if (v.size() != params.size() || out.size() != params.size())
            throw ShapeError("hvp: vector length does not match parameter count");
        const std::size_t L = layer_count();
        const Forward f = forward(params, s.input);

        // Forward R pass.
        std::vector<Vec> ra(L);  // R{a_l}, a_0 = x so R{a_0} = 0
        std::vector<Vec> rz(L);
        ra[0].assign(f.a[0].size(), 0.0);
        for (std::size_t l = 0; l < L; ++l) {
            const auto [in, outw] = dims(l);
            const double* W = params.data() + weight_offset(l);
            const double* V = v.data() + weight_offset(l);
            Vec z(outw, 0.0);
            for (std::size_t r = 0; r < outw; ++r) {
                double acc = spec_.bias ? v[bias_offset(l) + r] : 0.0;
                for (std::size_t c = 0; c < in; ++c) acc += W[r * in + c] * ra[l][c] + V[r * in + c] * f.a[l][c];
                z[r] = acc;
            }
            if (l + 1 < L) {
                Vec a(outw);
                for (std::size_t r = 0; r < outw; ++r) a[r] = act_deriv(f.z[l][r]) * z[r];
                ra[l + 1] = std::move(a);
            }
            rz[l] = std::move(z);
        }

        // Output delta and its R-derivative.
        const Vec& zout = f.z.back();
        Vec delta = head_delta(zout, s);
        Vec rdelta(zout.size());
        if (spec_.loss == LossKind::cross_entropy) {
            const Vec p = softmax(zout);
            double sr = 0.0;
            for (std::size_t k = 0; k < p.size(); ++k) sr += p[k] * rz[L - 1][k];
            for (std::size_t k = 0; k < p.size(); ++k) rdelta[k] = p[k] * (rz[L - 1][k] - sr);
        } else {
            rdelta = rz[L - 1];
        }

        for (std::size_t li = L; li-- > 0;) {
            const auto [in, outw] = dims(li);
            double* gW = out.data() + weight_offset(li);
            for (std::size_t r = 0; r < outw; ++r)
                for (std::size_t c = 0; c < in; ++c)
                    gW[r * in + c] += weight * (rdelta[r] * f.a[li][c] + delta[r] * ra[li][c]);
            if (spec_.bias)
                for (std::size_t r = 0; r < outw; ++r) out[bias_offset(li) + r] += weight * rdelta[r];
            if (li == 0) break;
            const double* W = params.data() + weight_offset(li);
            const double* V = v.data() + weight_offset(li);
            Vec nd(in, 0.0), nrd(in, 0.0);
            for (std::size_t c = 0; c < in; ++c) {
                double a1 = 0.0, a2 = 0.0;
                for (std::size_t r = 0; r < outw; ++r) {
                    a1 += W[r * in + c] * delta[r];
                    a2 += V[r * in + c] * delta[r] + W[r * in + c] * rdelta[r];
                }
                const double d = act_deriv(f.z[li - 1][c]);
                nd[c] = d * a1;
                nrd[c] = d * a2;
            }
            delta = std::move(nd);
            rdelta = std::move(nrd);
        }
        if (!all_finite(out)) throw NumericError("hvp: non-finite result");
    }

private:
    struct Forward {
        std::vector<Vec> a;  // a[l] is the input to layer l
        std::vector<Vec> z;  // z[l] is the pre-activation output of layer l
    };

    std::pair<std::size_t, std::size_t> dims(std::size_t l) const {
        return {spec_.layer_widths[l], spec_.layer_widths[l + 1]};
    }
    std::size_t weight_offset(std::size_t l) const { return layout_->blocks()[spec_.bias ? 2 * l : l].offset; }
    std::size_t bias_offset(std::size_t l) const { return layout_->blocks()[2 * l + 1].offset; }

    double activate(double z) const {
        return spec_.activation == Activation::relu ? (z > 0.0 ? z : 0.0) : z;
    }
    double act_deriv(double z) const {
        return spec_.activation == Activation::relu ? (z > 0.0 ? 1.0 : 0.0) : 1.0;
    }

    void check(std::span<const double> params, const SampleView& s) const {
        if (params.size() != parameter_count()) throw ShapeError("parameter vector has the wrong length");
        if (s.input.size() != input_size())
            throw ShapeError("sample has " + std::to_string(s.input.size()) + " features, model expects " +
                             std::to_string(input_size()));
        if (spec_.loss == LossKind::cross_entropy && s.label >= output_size())
            throw ShapeError("label " + std::to_string(s.label) + " out of range for model outputs");
        if (spec_.loss == LossKind::squared_error && output_size() > 1 && s.label >= output_size())
            throw ShapeError("label " + std::to_string(s.label) + " out of range for model outputs");
    }

    Forward forward(std::span<const double> params, std::span<const double> input) const {
        const std::size_t L = layer_count();
        Forward f;
        f.a.reserve(L);
        f.z.reserve(L);
        f.a.emplace_back(input.begin(), input.end());
        for (std::size_t l = 0; l < L; ++l) {
            const auto [in, outw] = dims(l);
            const double* W = params.data() + weight_offset(l);
            Vec z(outw);
            for (std::size_t r = 0; r < outw; ++r) {
                double acc = spec_.bias ? params[bias_offset(l) + r] : 0.0;
                for (std::size_t c = 0; c < in; ++c) acc += W[r * in + c] * f.a[l][c];
                z[r] = acc;
            }
            if (l + 1 < L) {
                Vec a(outw);
                for (std::size_t r = 0; r < outw; ++r) a[r] = activate(z[r]);
                f.a.push_back(std::move(a));
            }
            f.z.push_back(std::move(z));
        }
        if (!all_finite(f.z.back())) throw NumericError("forward pass produced non-finite outputs");
        return f;
    }

    static Vec softmax(const Vec& z) {
        const double m = *std::max_element(z.begin(), z.end());
        Vec p(z.size());
        double s = 0.0;
        for (std::size_t k = 0; k < z.size(); ++k) s += (p[k] = std::exp(z[k] - m));
        for (double& v : p) v /= s;
        return p;
    }

    Vec target_vector(const SampleView& s) const {
        if (output_size() == 1) return Vec{s.target};
        Vec t(output_size(), 0.0);
        t[s.label] = 1.0;
        return t;
    }

    double head_loss(const Vec& z, const SampleView& s) const {
        double value;
        if (spec_.loss == LossKind::cross_entropy) {
            const double m = *std::max_element(z.begin(), z.end());
            double se = 0.0;
            for (double v : z) se += std::exp(v - m);
            value = m + std::log(se) - z[s.label];
            value = std::max(value, 0.0);
        } else {
            const Vec t = target_vector(s);
            value = 0.0;
            for (std::size_t k = 0; k < z.size(); ++k) value += 0.5 * (z[k] - t[k]) * (z[k] - t[k]);
        }
        if (!std::isfinite(value)) throw NumericError("loss is not finite");
        return value;
    }

    Vec head_delta(const Vec& z, const SampleView& s) const {
        if (spec_.loss == LossKind::cross_entropy) {
            Vec p = softmax(z);
            p[s.label] -= 1.0;
            return p;
        }
        const Vec t = target_vector(s);
        Vec d(z.size());
        for (std::size_t k = 0; k < z.size(); ++k) d[k] = z[k] - t[k];
        return d;
    }

    void backward(std::span<const double> params, const Forward& f, Vec delta, std::span<double> grad,
                  double weight) const {
        for (std::size_t li = layer_count(); li-- > 0;) {
            const auto [in, outw] = dims(li);
            double* gW = grad.data() + weight_offset(li);
            for (std::size_t r = 0; r < outw; ++r) {
                const double dr = weight * delta[r];
                for (std::size_t c = 0; c < in; ++c) gW[r * in + c] += dr * f.a[li][c];
            }
            if (spec_.bias)
                for (std::size_t r = 0; r < outw; ++r) grad[bias_offset(li) + r] += weight * delta[r];
            if (li == 0) break;
            const double* W = params.data() + weight_offset(li);
            Vec nd(in, 0.0);
            for (std::size_t c = 0; c < in; ++c) {
                double acc = 0.0;
                for (std::size_t r = 0; r < outw; ++r) acc += W[r * in + c] * delta[r];
                nd[c] = act_deriv(f.z[li - 1][c]) * acc;
            }
            delta = std::move(nd);
        }
    }

    ModelSpec spec_;
    std::shared_ptr<const ParameterLayout> layout_;
};

// ---------------------------------------------------------------------------
// Free-function surface.

inline double per_sample_loss(const Model& model, const ParameterVector& params, const SampleView& sample) {
    return model.loss(params.values, sample);
}

inline ParameterVector per_sample_gradient(const Model& model, const ParameterVector& params,
                                           const SampleView& sample) {
    ParameterVector g = model.zeros();
    model.loss_gradient(params.values, sample, g.values, 1.0);
    return g;
}

/// sum_i weights[i] * grad loss_i, summed in ascending index order. Zero weights are skipped.
inline ParameterVector batch_gradient(const Model& model, const ParameterVector& params, const LabeledDataset& data,
                                      std::span<const double> weights) {
    if (weights.size() != data.size()) throw ShapeError("batch_gradient: weights length != dataset length");
    ParameterVector g = model.zeros();
    for (std::size_t i = 0; i < data.size(); ++i)
        if (weights[i] != 0.0) model.loss_gradient(params.values, data.sample(i), g.values, weights[i]);
    return g;
}

/// Exact weighted-loss Hessian-vector product over the given (index, weight) pairs.
inline void weighted_hvp(const Model& model, std::span<const double> params, const LabeledDataset& data,
                         std::span<const std::size_t> indices, std::span<const double> weights,
                         std::span<const double> v, std::span<double> out) {
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t k = 0; k < indices.size(); ++k)
        if (weights[k] != 0.0) model.hvp_accumulate(params, data.sample(indices[k]), v, out, weights[k]);
}

/// H^er v for the weighted empirical risk sum_i weights[i] * loss_i (no regularizer).
/// finite_difference mode uses r = eps_scale / max(1, ||v||).
inline ParameterVector hessian_vector_product(const Model& model, const ParameterVector& params,
                                              const LabeledDataset& data, std::span<const double> weights,
                                              std::span<const double> v, HvpMode mode = HvpMode::exact,
                                              double eps_scale = 1e-4) {
    if (weights.size() != data.size()) throw ShapeError("hvp: weights length != dataset length");
    if (v.size() != model.parameter_count()) throw ShapeError("hvp: |v| != |w|");
    ParameterVector out = model.zeros();
    if (mode == HvpMode::exact) {
        for (std::size_t i = 0; i < data.size(); ++i)
            if (weights[i] != 0.0) model.hvp_accumulate(params.values, data.sample(i), v, out.values, weights[i]);
        return out;
    }
    const double r = eps_scale / std::max(1.0, norm2(v));
    Vec wp = params.values, wm = params.values;
    axpy(r, v, wp);
    axpy(-r, v, wm);
    const ParameterVector gp = batch_gradient(model, model.wrap(wp), data, weights);
    const ParameterVector gm = batch_gradient(model, model.wrap(wm), data, weights);
    for (std::size_t k = 0; k < out.size(); ++k) out.values[k] = (gp.values[k] - gm.values[k]) / (2.0 * r);
    if (!all_finite(out.values))
        throw NumericError("finite-difference hvp is not finite at step r = " + std::to_string(r));
    return out;
}

/// Column-by-column dense Hessian from exact HVPs with basis vectors.
inline DenseMatrix dense_hessian(const Model& model, const ParameterVector& params, const LabeledDataset& data,
                                 std::span<const double> weights, std::size_t cap = 2000) {
    const std::size_t n = model.parameter_count();
    if (n > cap)
        throw ConfigError("dense_hessian: " + std::to_string(n) + " parameters exceeds cap " + std::to_string(cap));
    DenseMatrix H(n);
    Vec e(n, 0.0);
    for (std::size_t c = 0; c < n; ++c) {
        e[c] = 1.0;
        const ParameterVector col = hessian_vector_product(model, params, data, weights, e, HvpMode::exact);
        for (std::size_t r = 0; r < n; ++r) H(r, c) = col.values[r];
        e[c] = 0.0;
    }
    return H;
}

/// Symmetric linear operator: out = A in.
using LinearOperator = std::function<void(std::span<const double>, std::span<double>)>;

/// Estimates max |eigenvalue| of a symmetric operator by power iteration
/// from a seeded random start. Returns 0 for the zero operator.
inline double power_iteration_max_eig(const LinearOperator& op, std::size_t dim, std::size_t iterations,
                                      std::uint64_t seed) {
    if (iterations == 0) throw ConfigError("power iteration needs at least one iteration");
    if (dim == 0) return 0.0;
    Rng rng = make_rng(seed, {0x9e1});
    Vec v(dim), y(dim);
    for (double& x : v) x = standard_normal(rng);
    scale(v, 1.0 / norm2(v));
    double estimate = 0.0;
    for (std::size_t it = 0; it < iterations; ++it) {
        op(v, y);
        const double n = norm2(y);
        if (n == 0.0) return 0.0;
        if (!std::isfinite(n)) throw NumericError("power iteration diverged");
        estimate = n;
        for (std::size_t k = 0; k < dim; ++k) v[k] = y[k] / n;
    }
    return estimate;
}

/// Mean per-sample loss over a dataset (the test-loss definition).
inline double mean_loss(const Model& model, std::span<const double> params, const LabeledDataset& data) {
    if (data.empty()) throw ShapeError("mean_loss: empty dataset");
    double s = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) s += model.loss(params, data.sample(i));
    return s / static_cast<double>(data.size());
}

/// Gradient of the mean per-sample loss over a dataset.
inline Vec mean_gradient(const Model& model, std::span<const double> params, const LabeledDataset& data) {
    if (data.empty()) throw ShapeError("mean_gradient: empty dataset");
    Vec g(model.parameter_count(), 0.0);
    const double w = 1.0 / static_cast<double>(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) model.loss_gradient(params, data.sample(i), g, w);
    return g;
}

inline double accuracy(const Model& model, std::span<const double> params, const LabeledDataset& data) {
    if (data.empty()) return 0.0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < data.size(); ++i)
        if (model.predict(params, data.inputs[i].data) == data.labels[i]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(data.size());
}

} // namespace hydra
