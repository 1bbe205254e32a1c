#pragma once

// Experiment configuration (sectioned key/value text) and the end-to-end
// pipeline: data -> noise -> train -> track -> contributions -> analytics ->
// emit, with a manifest that pins every seed and output file.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "hydra/attribution.hpp"
#include "hydra/data.hpp"
#include "hydra/error.hpp"
#include "hydra/hypergrad.hpp"
#include "hydra/influence.hpp"
#include "hydra/io.hpp"
#include "hydra/models.hpp"
#include "hydra/oracle.hpp"
#include "hydra/trainer.hpp"

namespace hydra {

inline constexpr const char* version = "1.0.0";

using Json = nlohmann::json;

struct DatasetConfig {
    std::string source = "synthetic";  // synthetic | idx | csv
    std::size_t classes = 2;
    std::size_t per_class = 10;
    std::size_t test_per_class = 25;
    std::size_t dim = 2;
    double separation = 3.0;
    std::uint64_t seed = 0;
    double feature_scale = 1.0;
    bool standardize = false;
    std::string train_images, train_labels, test_images, test_labels;
    std::string train_csv, test_csv;
    bool operator==(const DatasetConfig&) const = default;
};

struct TrackingConfig {
    std::string selection = "all";  // all | random | list | per_class
    std::size_t count = 10;
    std::uint64_t seed = 0;
    std::vector<std::size_t> indices;
    double fraction = 0.1;
    bool per_pair = false;
    bool operator==(const TrackingConfig&) const = default;
};

struct MethodsConfig {
    std::vector<std::string> list = {"exact", "approx"};
    std::string reference = "exact";
    double damping = 0.01;
    bool include_regularizer = true;
    std::size_t neumann_depth = 500;
    std::size_t neumann_repeats = 4;
    std::uint64_t seed = 0;
    double oracle_delta = 1e-3;
    bool error_trace = false;
    std::size_t trace_index = 0;
    std::size_t trace_stride = 1;
    bool operator==(const MethodsConfig&) const = default;
};

struct NoiseConfig {
    double fraction = 0.0;
    std::uint64_t seed = 0;
    bool clean = false;
    std::string clean_method = "approx";
    bool operator==(const NoiseConfig&) const = default;
};

struct ExperimentConfig {
    DatasetConfig dataset;
    ModelSpec model{ModelKind::logistic_regression, {2, 2}, Activation::relu, LossKind::cross_entropy, true};
    TrainingConfig training;
    TrackingConfig tracking;
    MethodsConfig methods;
    NoiseConfig noise;
    std::string output = "hydra_out";

    bool operator==(const ExperimentConfig& o) const {
        return dataset == o.dataset && model.kind == o.model.kind && model.layer_widths == o.model.layer_widths &&
               model.activation == o.model.activation && model.loss == o.model.loss && model.bias == o.model.bias &&
               training_config_text(training) == training_config_text(o.training) && tracking == o.tracking &&
               methods == o.methods && noise == o.noise && output == o.output;
    }

    void validate() const;
};

inline const std::vector<std::string>& known_methods() {
    static const std::vector<std::string> m = {"exact",          "approx",          "influence_cg",
                                               "influence_neumann", "influence_dense", "oracle_fd",
                                               "oracle_loo"};
    return m;
}

inline void ExperimentConfig::validate() const {
    if (dataset.source != "synthetic" && dataset.source != "idx" && dataset.source != "csv")
        throw ConfigError("dataset.source must be synthetic, idx or csv");
    if (dataset.source == "synthetic") {
        if (dataset.classes < 2) throw ConfigError("dataset.classes must be >= 2");
        if (dataset.per_class == 0 || dataset.test_per_class == 0) throw ConfigError("dataset sizes must be positive");
        if (!(dataset.separation >= 0.0)) throw ConfigError("dataset.separation must be >= 0");
    }
    if (!(dataset.feature_scale > 0.0)) throw ConfigError("dataset.feature_scale must be > 0");
    model.validate();
    const std::set<std::string> sel = {"all", "random", "list", "per_class"};
    if (!sel.count(tracking.selection)) throw ConfigError("tracking.selection must be all, random, list or per_class");
    if (tracking.selection == "list" && tracking.indices.empty()) throw ConfigError("tracking.indices is empty");
    if (tracking.selection == "per_class" && !(tracking.fraction > 0.0 && tracking.fraction <= 1.0))
        throw ConfigError("tracking.fraction must lie in (0, 1]");
    for (const auto& m : methods.list)
        if (std::find(known_methods().begin(), known_methods().end(), m) == known_methods().end())
            throw ConfigError("unknown method: " + m);
    if (methods.list.empty()) throw ConfigError("methods.list is empty");
    if (std::find(methods.list.begin(), methods.list.end(), methods.reference) == methods.list.end())
        throw ConfigError("methods.reference must be one of methods.list");
    if (methods.error_trace && !(training.weight_decay > 0.0))
        throw ConfigError("methods.error_trace requires training.weight_decay > 0");
    if (methods.trace_stride == 0) throw ConfigError("methods.trace_stride must be positive");
    if (!(noise.fraction >= 0.0 && noise.fraction < 1.0)) throw ConfigError("noise.fraction must lie in [0, 1)");
    if (noise.clean) {
        if (!(noise.fraction > 0.0)) throw ConfigError("noise.clean requires noise.fraction > 0");
        if (noise.clean_method != "exact" && noise.clean_method != "approx")
            throw ConfigError("noise.clean_method must be exact or approx");
    }
}

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline bool parse_bool(const std::string& s) {
    if (s == "true") return true;
    if (s == "false") return false;
    throw ConfigError("expected true or false, got '" + s + "'");
}

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    for (std::string item; std::getline(ss, item, ',');) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

inline std::vector<std::size_t> parse_index_list(const std::string& s) {
    std::vector<std::size_t> out;
    for (const auto& item : split_list(s)) out.push_back(parse_uint(item));
    return out;
}

template <class T>
std::string join(const std::vector<T>& v) {
    std::ostringstream o;
    for (std::size_t k = 0; k < v.size(); ++k) o << (k ? "," : "") << v[k];
    return o.str();
}

inline const char* kind_name(ModelKind k) { return k == ModelKind::mlp ? "mlp" : "logistic_regression"; }
inline const char* activation_name(Activation a) { return a == Activation::identity ? "identity" : "relu"; }
inline const char* loss_name(LossKind l) { return l == LossKind::squared_error ? "squared_error" : "cross_entropy"; }

} // namespace detail

/// Applies one "section.key = value" assignment. Shared by the file parser and
/// command-line overrides.
inline void set_config_value(ExperimentConfig& c, const std::string& section, const std::string& key,
                             const std::string& value) {
    using detail::parse_bool;
    auto bad = [&]() { throw ConfigError("unknown key " + section + "." + key); };
    if (section == "dataset") {
        auto& d = c.dataset;
        if (key == "source") d.source = value;
        else if (key == "classes") d.classes = parse_uint(value);
        else if (key == "per_class") d.per_class = parse_uint(value);
        else if (key == "test_per_class") d.test_per_class = parse_uint(value);
        else if (key == "dim") d.dim = parse_uint(value);
        else if (key == "separation") d.separation = parse_double(value);
        else if (key == "seed") d.seed = parse_uint(value);
        else if (key == "feature_scale") d.feature_scale = parse_double(value);
        else if (key == "standardize") d.standardize = parse_bool(value);
        else if (key == "train_images") d.train_images = value;
        else if (key == "train_labels") d.train_labels = value;
        else if (key == "test_images") d.test_images = value;
        else if (key == "test_labels") d.test_labels = value;
        else if (key == "train_csv") d.train_csv = value;
        else if (key == "test_csv") d.test_csv = value;
        else bad();
    } else if (section == "model") {
        auto& m = c.model;
        if (key == "kind") {
            if (value == "logistic_regression") m.kind = ModelKind::logistic_regression;
            else if (value == "mlp") m.kind = ModelKind::mlp;
            else throw ConfigError("model.kind must be logistic_regression or mlp");
        } else if (key == "layers") m.layer_widths = detail::parse_index_list(value);
        else if (key == "activation") {
            if (value == "relu") m.activation = Activation::relu;
            else if (value == "identity") m.activation = Activation::identity;
            else throw ConfigError("model.activation must be relu or identity");
        } else if (key == "loss") {
            if (value == "cross_entropy") m.loss = LossKind::cross_entropy;
            else if (value == "squared_error") m.loss = LossKind::squared_error;
            else throw ConfigError("model.loss must be cross_entropy or squared_error");
        } else if (key == "bias") m.bias = parse_bool(value);
        else bad();
    } else if (section == "training") {
        auto& t = c.training;
        if (key == "epochs") t.epochs = parse_uint(value);
        else if (key == "batch_size") t.batch_size = parse_uint(value);
        else if (key == "initial_lr") t.initial_lr = parse_double(value);
        else if (key == "schedule") t.schedule.kind = parse_schedule_kind(value);
        else if (key == "schedule_factor") t.schedule.factor = parse_double(value);
        else if (key == "schedule_at_epoch") t.schedule.at_epoch = parse_uint(value);
        else if (key == "schedule_rate") t.schedule.rate = parse_double(value);
        else if (key == "schedule_patience") t.schedule.patience = parse_uint(value);
        else if (key == "schedule_rel_threshold") t.schedule.rel_threshold = parse_double(value);
        else if (key == "momentum") t.momentum = parse_double(value);
        else if (key == "weight_decay") t.weight_decay = parse_double(value);
        else if (key == "seed") t.seed = parse_uint(value);
        else if (key == "snapshot_stride") t.snapshot_stride = parse_uint(value);
        else bad();
    } else if (section == "tracking") {
        auto& t = c.tracking;
        if (key == "selection") t.selection = value;
        else if (key == "count") t.count = parse_uint(value);
        else if (key == "seed") t.seed = parse_uint(value);
        else if (key == "indices") t.indices = detail::parse_index_list(value);
        else if (key == "fraction") t.fraction = parse_double(value);
        else if (key == "per_pair") t.per_pair = parse_bool(value);
        else bad();
    } else if (section == "methods") {
        auto& m = c.methods;
        if (key == "list") m.list = detail::split_list(value);
        else if (key == "reference") m.reference = value;
        else if (key == "damping") m.damping = parse_double(value);
        else if (key == "include_regularizer") m.include_regularizer = parse_bool(value);
        else if (key == "neumann_depth") m.neumann_depth = parse_uint(value);
        else if (key == "neumann_repeats") m.neumann_repeats = parse_uint(value);
        else if (key == "seed") m.seed = parse_uint(value);
        else if (key == "oracle_delta") m.oracle_delta = parse_double(value);
        else if (key == "error_trace") m.error_trace = parse_bool(value);
        else if (key == "trace_index") m.trace_index = parse_uint(value);
        else if (key == "trace_stride") m.trace_stride = parse_uint(value);
        else bad();
    } else if (section == "noise") {
        auto& n = c.noise;
        if (key == "fraction") n.fraction = parse_double(value);
        else if (key == "seed") n.seed = parse_uint(value);
        else if (key == "clean") n.clean = parse_bool(value);
        else if (key == "clean_method") n.clean_method = value;
        else bad();
    } else if (section == "output") {
        if (key == "directory") c.output = value;
        else bad();
    } else {
        throw ConfigError("unknown section [" + section + "]");
    }
}

/// Parses "[section]" headers and "key = value" lines; '#' starts a comment line.
/// The result is validated.
inline ExperimentConfig parse_experiment_config(const std::string& text) {
    ExperimentConfig c;
    std::istringstream in(text);
    std::string section;
    std::size_t line_no = 0;
    for (std::string raw; std::getline(in, raw);) {
        ++line_no;
        const std::string line = detail::trim(raw);
        if (line.empty() || line[0] == '#') continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError("line " + std::to_string(line_no) + ": malformed section header");
            section = detail::trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
        if (section.empty()) throw ConfigError("line " + std::to_string(line_no) + ": key outside any section");
        try {
            set_config_value(c, section, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
        } catch (const FormatError& e) {
            throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    c.validate();
    return c;
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    return parse_experiment_config(read_text(path));
}

/// Canonical text form; parse_experiment_config(serialize(c)) == c.
inline std::string serialize(const ExperimentConfig& c) {
    std::ostringstream o;
    const auto& d = c.dataset;
    o << "[dataset]\n"
      << "source = " << d.source << "\n"
      << "classes = " << d.classes << "\n"
      << "per_class = " << d.per_class << "\n"
      << "test_per_class = " << d.test_per_class << "\n"
      << "dim = " << d.dim << "\n"
      << "separation = " << format_double(d.separation) << "\n"
      << "seed = " << d.seed << "\n"
      << "feature_scale = " << format_double(d.feature_scale) << "\n"
      << "standardize = " << (d.standardize ? "true" : "false") << "\n";
    for (const auto& [k, v] : {std::pair{"train_images", &d.train_images}, std::pair{"train_labels", &d.train_labels},
                               std::pair{"test_images", &d.test_images}, std::pair{"test_labels", &d.test_labels},
                               std::pair{"train_csv", &d.train_csv}, std::pair{"test_csv", &d.test_csv}})
        if (!v->empty()) o << k << " = " << *v << "\n";
    o << "\n[model]\n"
      << "kind = " << detail::kind_name(c.model.kind) << "\n"
      << "layers = " << detail::join(c.model.layer_widths) << "\n"
      << "activation = " << detail::activation_name(c.model.activation) << "\n"
      << "loss = " << detail::loss_name(c.model.loss) << "\n"
      << "bias = " << (c.model.bias ? "true" : "false") << "\n";
    o << "\n[training]\n" << training_config_text(c.training);
    const auto& t = c.tracking;
    o << "\n[tracking]\n"
      << "selection = " << t.selection << "\n"
      << "count = " << t.count << "\n"
      << "seed = " << t.seed << "\n";
    if (!t.indices.empty()) o << "indices = " << detail::join(t.indices) << "\n";
    o << "fraction = " << format_double(t.fraction) << "\n"
      << "per_pair = " << (t.per_pair ? "true" : "false") << "\n";
    const auto& m = c.methods;
    o << "\n[methods]\n"
      << "list = " << detail::join(m.list) << "\n"
      << "reference = " << m.reference << "\n"
      << "damping = " << format_double(m.damping) << "\n"
      << "include_regularizer = " << (m.include_regularizer ? "true" : "false") << "\n"
      << "neumann_depth = " << m.neumann_depth << "\n"
      << "neumann_repeats = " << m.neumann_repeats << "\n"
      << "seed = " << m.seed << "\n"
      << "oracle_delta = " << format_double(m.oracle_delta) << "\n"
      << "error_trace = " << (m.error_trace ? "true" : "false") << "\n"
      << "trace_index = " << m.trace_index << "\n"
      << "trace_stride = " << m.trace_stride << "\n";
    o << "\n[noise]\n"
      << "fraction = " << format_double(c.noise.fraction) << "\n"
      << "seed = " << c.noise.seed << "\n"
      << "clean = " << (c.noise.clean ? "true" : "false") << "\n"
      << "clean_method = " << c.noise.clean_method << "\n";
    o << "\n[output]\n"
      << "directory = " << c.output << "\n";
    return o.str();
}

inline std::uint64_t config_hash(const ExperimentConfig& c) {
    const std::string text = serialize(c);
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    return h;
}

// ---------------------------------------------------------------------------

struct ExperimentData {
    LabeledDataset train;
    LabeledDataset test;
    std::optional<NoiseRecord> noise;
    /// Labels before noise injection.
    std::vector<std::size_t> clean_labels;
};

/// Builds train and test splits per the dataset section, applies scaling, and
/// injects label noise into the training split.
inline ExperimentData prepare_data(const ExperimentConfig& c) {
    ExperimentData out;
    const auto& d = c.dataset;
    if (d.source == "synthetic") {
        out.train = synth_gaussian(d.classes, d.per_class, d.dim, d.separation, derive_seed(d.seed, {1}));
        out.test = synth_gaussian(d.classes, d.test_per_class, d.dim, d.separation, derive_seed(d.seed, {2}),
                                  SplitTag::test);
    } else if (d.source == "idx") {
        out.train = load_idx(d.train_images, d.train_labels);
        out.test = load_idx(d.test_images, d.test_labels);
        out.test.split = SplitTag::test;
    } else {
        out.train = load_csv(d.train_csv);
        out.test = load_csv(d.test_csv, out.train.class_count);
        out.test.split = SplitTag::test;
    }
    if (d.standardize) {
        const FeatureScaler s = fit_standardizer(out.train);
        s.apply(out.train);
        s.apply(out.test);
    }
    if (d.feature_scale != 1.0) {
        scale_features(out.train, d.feature_scale);
        scale_features(out.test, d.feature_scale);
    }
    out.clean_labels = out.train.labels;
    if (c.noise.fraction > 0.0) {
        auto [noisy, rec] = inject_noise(out.train, c.noise.fraction, c.noise.seed);
        out.train = std::move(noisy);
        out.noise = std::move(rec);
    }
    check_disjoint(out.train, out.test);
    return out;
}

/// Tracked training indices per the tracking section, ascending.
inline std::vector<std::size_t> select_tracked(const TrackingConfig& t, const LabeledDataset& train) {
    const std::size_t n = train.size();
    std::vector<std::size_t> out;
    if (t.selection == "all") {
        out.resize(n);
        std::iota(out.begin(), out.end(), std::size_t{0});
    } else if (t.selection == "list") {
        out = t.indices;
        check_tracked(out, n);
    } else if (t.selection == "random") {
        std::vector<std::size_t> all(n);
        std::iota(all.begin(), all.end(), std::size_t{0});
        Rng rng = make_rng(t.seed, {0x7acu});
        shuffle(all.begin(), all.end(), rng);
        all.resize(std::min(t.count, n));
        out = std::move(all);
    } else {
        std::map<std::size_t, std::vector<std::size_t>> by_class;
        for (std::size_t i = 0; i < n; ++i) by_class[train.labels[i]].push_back(i);
        for (auto& [label, members] : by_class) {
            Rng rng = make_rng(t.seed, {0x7acu, label});
            shuffle(members.begin(), members.end(), rng);
            const auto k = std::max<std::size_t>(
                1, static_cast<std::size_t>(t.fraction * static_cast<double>(members.size())));
            out.insert(out.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(k));
        }
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

inline Json stats_json(const DistributionStats& s) {
    return Json{{"mean", s.mean}, {"std", s.std}, {"top", s.top}, {"bottom", s.bottom}};
}

inline Json comparison_json(const MethodComparison& m) {
    return Json{{"reference", m.reference},
                {"candidate", m.candidate},
                {"sign_error_rate", m.sign_error_rate},
                {"spearman_rho", m.spearman_rho},
                {"n", m.n}};
}

inline Json cluster_json(const ClusterEvaluation& ev) {
    Json classes = Json::array();
    for (const auto& c : ev.classes)
        classes.push_back({{"label", c.label},
                           {"samples", c.samples},
                           {"jaccard_correct", c.jaccard_correct},
                           {"jaccard_flipped", c.jaccard_flipped}});
    return Json{{"classes", classes},
                {"mean_jaccard_correct", ev.mean_jaccard_correct},
                {"mean_jaccard_flipped", ev.mean_jaccard_flipped}};
}

inline std::string matrix_csv(const std::vector<std::vector<double>>& m) {
    std::ostringstream o;
    for (const auto& row : m) {
        for (std::size_t k = 0; k < row.size(); ++k) o << (k ? "," : "") << format_double(row[k]);
        o << "\n";
    }
    return o.str();
}

inline void write_json(const std::filesystem::path& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

inline std::string index_list_text(std::span<const std::size_t> v) {
    std::ostringstream o;
    for (std::size_t i : v) o << i << "\n";
    return o.str();
}

inline InverseHvpConfig inverse_hvp_config(const MethodsConfig& m, InverseHvpMethod method) {
    InverseHvpConfig cfg;
    cfg.method = method;
    cfg.damping = m.damping;
    cfg.include_regularizer_in_hessian = m.include_regularizer;
    cfg.neumann_depth = m.neumann_depth;
    cfg.neumann_repeats = m.neumann_repeats;
    cfg.seed = m.seed;
    return cfg;
}

/// Contribution report for one method, computed from the nominal trajectory.
/// `hypergrads` supplies precomputed exact/approx states when available.
inline ContributionReport method_report(const std::string& method, const Model& model, const ExperimentData& data,
                                        const TrajectoryRecord& record, std::span<const std::size_t> tracked,
                                        const ExperimentConfig& c,
                                        const std::map<std::string, std::vector<HypergradState>>& hypergrads) {
    const bool per_pair = c.tracking.per_pair;
    if (method == "exact" || method == "approx") return contribution(model, record, hypergrads.at(method), data.test, per_pair, method);
    if (method.rfind("influence_", 0) == 0) {
        const InverseHvpMethod m = method == "influence_cg"        ? InverseHvpMethod::conjugate_gradient
                                   : method == "influence_neumann" ? InverseHvpMethod::neumann
                                                                   : InverseHvpMethod::dense;
        return influence(model, record.final_params, data.train, tracked, data.test, record.config.weight_decay,
                         inverse_hvp_config(c.methods, m), per_pair)
            .as_contribution(record.trajectory_checksum());
    }
    OracleOptions opts;
    opts.delta = c.methods.oracle_delta;
    std::vector<OracleResult> results;
    for (std::size_t i : tracked)
        results.push_back(method == "oracle_fd" ? finite_difference_hypergradient(model, data.train, record, i, data.test, opts)
                                                : leave_one_out(model, data.train, record, i, data.test, opts));
    return oracle_report(results, record, method == "oracle_loo");
}

struct RunSummary {
    std::filesystem::path directory;
    std::vector<std::string> files;
    std::uint64_t config_hash = 0;
};

/// Executes the whole pipeline and writes every artifact under `dir`. Errors
/// from any stage are rethrown with the stage name prefixed.
inline RunSummary run(const ExperimentConfig& c, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    c.validate();
    fs::create_directories(dir);
    std::string stage;
    auto staged = [&](const std::string& name, auto&& fn) {
        stage = name;
        try {
            return fn();
        } catch (const Error& e) {
            throw Error("stage '" + stage + "': " + e.what());
        }
    };

    RunSummary summary;
    summary.directory = dir;
    summary.config_hash = config_hash(c);
    std::set<std::string> files;
    auto emit = [&](const std::string& name, const std::string& text) {
        write_text(dir / name, text);
        files.insert(name);
    };

    emit("experiment.ini", serialize(c));
    const ExperimentData data = staged("data", [&] { return prepare_data(c); });
    c.model.validate_for(data.train.input_size(), data.train.class_count);
    const Model model(c.model);

    if (data.noise) {
        Json nj{{"seed", data.noise->seed},
                {"flipped", data.noise->flipped},
                {"original_labels", data.noise->original_labels},
                {"new_labels", data.noise->new_labels}};
        emit("noise.json", nj.dump(2) + "\n");
    }

    const TrajectoryRecord record = staged("train", [&] { return train(model, data.train, c.training); });
    staged("train", [&] {
        save_trajectory(dir / "trajectory", record);
        return 0;
    });
    for (const auto& e : fs::recursive_directory_iterator(dir / "trajectory"))
        if (e.is_regular_file()) files.insert(fs::relative(e.path(), dir).generic_string());

    const std::vector<std::size_t> tracked = select_tracked(c.tracking, data.train);
    emit("tracked.txt", index_list_text(tracked));

    // Exact and approximate hypergradients share one replay.
    std::map<std::string, std::vector<HypergradState>> hypergrads;
    staged("track", [&] {
        std::vector<HypergradTracker> trackers;
        std::vector<std::string> names;
        for (const std::string m : {"exact", "approx"}) {
            const bool wanted = std::find(c.methods.list.begin(), c.methods.list.end(), m) != c.methods.list.end() ||
                                (c.noise.clean && c.noise.clean_method == m);
            if (wanted) {
                trackers.emplace_back(m == "exact" ? HypergradMode::exact : HypergradMode::approx, tracked,
                                      model.parameter_count());
                names.push_back(m);
            }
        }
        std::vector<HypergradTracker*> ptrs;
        for (auto& t : trackers) ptrs.push_back(&t);
        if (!ptrs.empty()) track_all(model, data.train, record, ptrs);
        for (std::size_t k = 0; k < trackers.size(); ++k) hypergrads[names[k]] = trackers[k].states();
        return 0;
    });
    for (const auto& [name, states] : hypergrads) {
        save_hypergrads(dir / "trajectory", states, "hypergrads_" + name);
        files.insert("trajectory/hypergrads_" + name + ".bin");
        files.insert("trajectory/hypergrads_" + name + ".idx");
    }

    std::map<std::string, ContributionReport> reports;
    for (const auto& m : c.methods.list) {
        reports[m] = staged(m, [&] { return method_report(m, model, data, record, tracked, c, hypergrads); });
        emit("contributions_" + m + ".csv", report_csv(reports[m]));
        emit("stats_" + m + ".json", stats_json(distribution_stats(reports[m])).dump(2) + "\n");
        if (c.tracking.per_pair && has_pairs(reports[m])) {
            const auto icm = staged("inter_class", [&] {
                return inter_class_matrix(reports[m], data.train.labels, data.test.labels, data.train.class_count);
            });
            emit("inter_class_raw_" + m + ".csv", matrix_csv(icm.raw));
            emit("inter_class_normalized_" + m + ".csv", matrix_csv(icm.normalized));
        }
    }

    Json comparisons = Json::array();
    for (const auto& m : c.methods.list) {
        if (m == c.methods.reference) continue;
        const auto& ref = reports.at(c.methods.reference);
        const auto& cand = reports.at(m);
        // Oracles emit C(i) only; such pairs are compared on C(i).
        comparisons.push_back(comparison_json(has_pairs(ref) == has_pairs(cand)
                                                  ? compare_methods(ref, cand)
                                                  : compare_methods(whole_subset(ref), whole_subset(cand))));
    }
    emit("comparison.json", comparisons.dump(2) + "\n");

    if (c.methods.error_trace) {
        const auto trace = staged("bound-trace", [&] {
            ErrorTraceOptions opts;
            opts.record_stride = c.methods.trace_stride;
            opts.seed = c.methods.seed;
            return error_trace(model, data.train, record, c.methods.trace_index, opts);
        });
        save_error_trace(dir / "trajectory", trace);
        files.insert("trajectory/error_trace.bin");
        files.insert("trajectory/error_trace.txt");
    }

    if (c.noise.clean) {
        staged("clean", [&] {
            const auto& states = hypergrads.at(c.noise.clean_method);
            const ContributionReport rep = contribution(model, record, states, data.test, false, c.noise.clean_method);
            if (rep.entries.size() != data.train.size())
                throw ConfigError("clean requires tracking.selection = all");
            const auto kept = clean_dataset(rep, c.noise.fraction);
            emit("retained.txt", index_list_text(kept));
            std::size_t recovered = 0;
            for (std::size_t i : data.noise->flipped)
                if (!std::binary_search(kept.begin(), kept.end(), i)) ++recovered;
            const LabeledDataset cleaned = data.train.subset(kept);
            const TrajectoryRecord cleaned_run = train(model, cleaned, c.training);
            const double acc_clean = accuracy(model, cleaned_run.final_params, data.test);
            const double acc_noisy = accuracy(model, record.final_params, data.test);
            const double recovery = data.noise->flipped.empty()
                                        ? 1.0
                                        : static_cast<double>(recovered) / static_cast<double>(data.noise->flipped.size());
            emit("clean.json", Json{{"method", c.noise.clean_method},
                                    {"discarded", data.train.size() - kept.size()},
                                    {"flipped", data.noise->flipped.size()},
                                    {"recovered_fraction", recovery},
                                    {"accuracy_no_filter", acc_noisy},
                                    {"accuracy_cleaned", acc_clean}}
                                   .dump(2) +
                                   "\n");
            return 0;
        });
    }

    summary.files.assign(files.begin(), files.end());
    Json manifest{{"version", version},
                  {"config_hash", std::to_string(summary.config_hash)},
                  {"config_file", "experiment.ini"},
                  {"seeds",
                   {{"dataset", c.dataset.seed},
                    {"training", c.training.seed},
                    {"tracking", c.tracking.seed},
                    {"methods", c.methods.seed},
                    {"noise", c.noise.seed}}},
                  {"trajectory_checksum", std::to_string(record.trajectory_checksum())},
                  {"files", summary.files}};
    write_text(dir / "manifest.json", manifest.dump(2) + "\n");
    summary.files.push_back("manifest.json");
    return summary;
}

/// Output directory: the configured one, placed under HYDRA_OUTPUT_ROOT when set
/// and the configured path is relative.
inline std::filesystem::path resolve_output(const std::string& configured) {
    std::filesystem::path p(configured);
    if (p.is_relative())
        if (const char* root = std::getenv("HYDRA_OUTPUT_ROOT"); root != nullptr && *root != '\0')
            return std::filesystem::path(root) / p;
    return p;
}

} // namespace hydra
