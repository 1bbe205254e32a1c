#pragma once

// Dataset ingestion (IDX, CSV), Gaussian probe synthesis, feature scaling and
// label-noise injection.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "hydra/error.hpp"
#include "hydra/linalg.hpp"
#include "hydra/models.hpp"
#include "hydra/rng.hpp"

namespace hydra {

namespace detail {

inline std::vector<unsigned char> read_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::uint32_t read_be32(const std::vector<unsigned char>& b, std::size_t off, const std::string& path) {
    if (off + 4 > b.size()) throw TruncatedFileError(path + ": header is truncated");
    return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) | (std::uint32_t{b[off + 2]} << 8) |
           std::uint32_t{b[off + 3]};
}

} // namespace detail

/// Reads an IDX image file (magic 0x00000803) and label file (0x00000801).
/// Pixels are scaled from [0, 255] to [0, 1]; each input keeps its (rows, cols) shape.
inline LabeledDataset load_idx(const std::string& image_path, const std::string& label_path,
                               std::size_t class_count = 10) {
    const auto img = detail::read_bytes(image_path);
    const auto lab = detail::read_bytes(label_path);
    if (detail::read_be32(img, 0, image_path) != 0x00000803u) throw BadMagicError(image_path + ": bad magic number");
    if (detail::read_be32(lab, 0, label_path) != 0x00000801u) throw BadMagicError(label_path + ": bad magic number");
    const std::size_t count = detail::read_be32(img, 4, image_path);
    const std::size_t rows = detail::read_be32(img, 8, image_path);
    const std::size_t cols = detail::read_be32(img, 12, image_path);
    const std::size_t label_count = detail::read_be32(lab, 4, label_path);
    if (img.size() < 16 + count * rows * cols) throw TruncatedFileError(image_path + ": pixel data is truncated");
    if (lab.size() < 8 + label_count) throw TruncatedFileError(label_path + ": label data is truncated");
    if (count != label_count)
        throw CountMismatchError("IDX: " + std::to_string(count) + " images but " + std::to_string(label_count) +
                                 " labels");

    LabeledDataset d;
    d.class_count = class_count;
    d.inputs.reserve(count);
    d.labels.reserve(count);
    const std::size_t px = rows * cols;
    for (std::size_t i = 0; i < count; ++i) {
        Vec v(px);
        for (std::size_t k = 0; k < px; ++k) v[k] = static_cast<double>(img[16 + i * px + k]) / 255.0;
        d.inputs.emplace_back(std::vector<std::size_t>{rows, cols}, std::move(v));
        d.labels.push_back(lab[8 + i]);
    }
    d.validate();
    return d;
}

/// Reads "label,x1,x2,..." rows. A first line whose label field is not an
/// integer is treated as a header. class_count 0 means max label + 1.
inline LabeledDataset load_csv(const std::string& path, std::size_t class_count = 0) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path);
    LabeledDataset d;
    std::string line;
    std::size_t line_no = 0, max_label = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        for (std::string f; std::getline(ss, f, ',');) fields.push_back(f);
        std::size_t label = 0;
        try {
            std::size_t used = 0;
            const long long v = std::stoll(fields.at(0), &used);
            if (used != fields[0].size() || v < 0) throw std::invalid_argument("label");
            label = static_cast<std::size_t>(v);
        } catch (const std::exception&) {
            if (line_no == 1) continue;
            throw FormatError(path + ":" + std::to_string(line_no) + ": bad label");
        }
        Vec x;
        for (std::size_t k = 1; k < fields.size(); ++k) {
            try {
                x.push_back(std::stod(fields[k]));
            } catch (const std::exception&) {
                throw FormatError(path + ":" + std::to_string(line_no) + ": bad feature value");
            }
        }
        if (!d.inputs.empty() && x.size() != d.input_size())
            throw FormatError(path + ":" + std::to_string(line_no) + ": wrong number of features");
        max_label = std::max(max_label, label);
        const std::size_t width = x.size();
        d.inputs.emplace_back(std::vector<std::size_t>{width}, std::move(x));
        d.labels.push_back(label);
    }
    if (d.inputs.empty()) throw FormatError(path + ": no rows");
    d.class_count = class_count == 0 ? max_label + 1 : class_count;
    d.validate();
    return d;
}

/// Class means of a centered regular simplex with pairwise distance `separation`,
/// embedded in the first classes - 1 coordinates.
inline std::vector<Vec> simplex_means(std::size_t classes, std::size_t dim, double separation) {
    if (classes < 1) throw ConfigError("simplex_means: need at least one class");
    if (dim + 1 < classes) throw ConfigError("simplex_means: dim must be at least classes - 1");
    std::vector<Vec> means(classes, Vec(dim, 0.0));
    const double s = separation / std::sqrt(2.0);
    for (std::size_t k = 1; k < classes; ++k) {
        const double norm = std::sqrt(static_cast<double>(k * (k + 1)));
        for (std::size_t c = 0; c < classes; ++c) {
            double h = 0.0;
            if (c < k) h = 1.0 / norm;
            else if (c == k) h = -static_cast<double>(k) / norm;
            means[c][k - 1] = s * h;
        }
    }
    return means;
}

/// per_class points for each class from N(mean_c, I). Sample i has label i mod classes.
inline LabeledDataset synth_gaussian(std::size_t classes, std::size_t per_class, std::size_t dim, double separation,
                                     std::uint64_t seed, SplitTag split = SplitTag::train) {
    if (!(separation >= 0.0)) throw ConfigError("synth_gaussian: separation must be >= 0");
    const auto means = simplex_means(classes, dim, separation);
    Rng rng = make_rng(seed, {0x9a55u});
    LabeledDataset d;
    d.class_count = classes;
    d.split = split;
    for (std::size_t r = 0; r < per_class; ++r)
        for (std::size_t c = 0; c < classes; ++c) {
            Vec x(dim);
            for (std::size_t k = 0; k < dim; ++k) x[k] = means[c][k] + standard_normal(rng);
            d.inputs.emplace_back(std::vector<std::size_t>{dim}, std::move(x));
            d.labels.push_back(c);
        }
    return d;
}

inline void scale_features(LabeledDataset& d, double factor) {
    for (auto& t : d.inputs) scale(t.data, factor);
}

struct FeatureScaler {
    Vec mean;
    Vec std;

    void apply(LabeledDataset& d) const {
        for (auto& t : d.inputs)
            for (std::size_t k = 0; k < t.data.size(); ++k) t.data[k] = (t.data[k] - mean[k]) / std[k];
    }
};

/// Per-feature mean and population std of `d`; zero-variance features keep std 1.
inline FeatureScaler fit_standardizer(const LabeledDataset& d) {
    if (d.empty()) throw ShapeError("fit_standardizer: empty dataset");
    const std::size_t dim = d.input_size();
    FeatureScaler s{Vec(dim, 0.0), Vec(dim, 0.0)};
    const double n = static_cast<double>(d.size());
    for (const auto& t : d.inputs) axpy(1.0 / n, t.data, s.mean);
    for (const auto& t : d.inputs)
        for (std::size_t k = 0; k < dim; ++k) s.std[k] += (t.data[k] - s.mean[k]) * (t.data[k] - s.mean[k]) / n;
    for (double& v : s.std) v = v > 0.0 ? std::sqrt(v) : 1.0;
    return s;
}

struct NoiseRecord {
    std::vector<std::size_t> flipped;  // ascending
    std::vector<std::size_t> original_labels;
    std::vector<std::size_t> new_labels;
    std::uint64_t seed = 0;

    std::vector<bool> mask(std::size_t n) const {
        std::vector<bool> m(n, false);
        for (std::size_t i : flipped) m.at(i) = true;
        return m;
    }
};

/// Flips exactly floor(r N) labels, each to a class drawn uniformly from the others.
inline std::pair<LabeledDataset, NoiseRecord> inject_noise(const LabeledDataset& data, double fraction,
                                                           std::uint64_t seed) {
    if (!(fraction >= 0.0 && fraction <= 1.0)) throw ConfigError("inject_noise: fraction must lie in [0, 1]");
    if (data.class_count < 2) throw ConfigError("inject_noise: need at least two classes");
    const std::size_t n = data.size();
    const auto count = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n)));
    Rng rng = make_rng(seed, {0x401eu});
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle(order.begin(), order.end(), rng);
    order.resize(count);
    std::sort(order.begin(), order.end());

    LabeledDataset noisy = data;
    NoiseRecord rec;
    rec.seed = seed;
    rec.flipped = order;
    for (std::size_t i : order) {
        const std::size_t old = data.labels[i];
        const std::size_t shift = 1 + uniform_index(rng, data.class_count - 1);
        noisy.labels[i] = (old + shift) % data.class_count;
        rec.original_labels.push_back(old);
        rec.new_labels.push_back(noisy.labels[i]);
    }
    return {std::move(noisy), std::move(rec)};
}

} // namespace hydra
