#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "hydra/error.hpp"

namespace hydra {

using Vec = std::vector<double>;

inline double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ShapeError("dot: length mismatch");
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
    return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

/// y += alpha * x
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    if (x.size() != y.size()) throw ShapeError("axpy: length mismatch");
    for (std::size_t k = 0; k < x.size(); ++k) y[k] += alpha * x[k];
}

inline void scale(std::span<double> x, double alpha) {
    for (double& v : x) v *= alpha;
}

inline Vec difference(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ShapeError("difference: length mismatch");
    Vec out(a.size());
    for (std::size_t k = 0; k < a.size(); ++k) out[k] = a[k] - b[k];
    return out;
}

inline bool all_finite(std::span<const double> x) {
    for (double v : x)
        if (!std::isfinite(v)) return false;
    return true;
}

/// ||a - b|| / max(||b||, tiny); b is the reference.
inline double relative_error(std::span<const double> a, std::span<const double> b) {
    const double denom = norm2(b);
    const double num = norm2(difference(a, b));
    if (denom == 0.0) return num;
    return num / denom;
}

/// Row-major square matrix. Only used for small oracle-sized problems.
struct DenseMatrix {
    std::size_t n = 0;
    Vec data;

    DenseMatrix() = default;
    explicit DenseMatrix(std::size_t dim) : n(dim), data(dim * dim, 0.0) {}

    double& operator()(std::size_t r, std::size_t c) { return data[r * n + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * n + c]; }

    Vec multiply(std::span<const double> v) const {
        if (v.size() != n) throw ShapeError("DenseMatrix::multiply: length mismatch");
        Vec out(n, 0.0);
        for (std::size_t r = 0; r < n; ++r) {
            double s = 0.0;
            for (std::size_t c = 0; c < n; ++c) s += data[r * n + c] * v[c];
            out[r] = s;
        }
        return out;
    }

    double max_asymmetry() const {
        double m = 0.0;
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = r + 1; c < n; ++c)
                m = std::max(m, std::abs((*this)(r, c) - (*this)(c, r)));
        return m;
    }
};

} // namespace hydra
