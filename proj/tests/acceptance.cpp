// Acceptance gate. Each criterion prints one PASS/FAIL line with its measured
// values; tolerances and runtime budgets are fixed below.
//
//   acceptance                 run every criterion
//   acceptance --criterion N   run criterion N only (exit code 1 on failure)

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hydra/hydra.hpp"
#include "probes.hpp"

using namespace hydra;
using probes::Probe;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Criterion {
    int id;
    const char* title;
    double budget_seconds;
    std::function<Outcome()> body;
};

std::string fmt(double v) {
    std::ostringstream o;
    o.precision(4);
    o << v;
    return o.str();
}

double rel_err(double a, double ref) { return std::abs(a - ref) / std::abs(ref); }

// 1 ----------------------------------------------------------------------------

Outcome gradient_correctness() {
    constexpr double tol = 1e-6;
    constexpr int draws = 100;
    struct Kind {
        const char* name;
        ModelSpec spec;
        std::size_t dim, classes;
    };
    const std::vector<Kind> kinds = {
        {"logreg", {ModelKind::logistic_regression, {4, 3}, Activation::identity, LossKind::cross_entropy, true}, 4, 3},
        {"mlp", {ModelKind::mlp, {4, 6, 5, 3}, Activation::relu, LossKind::cross_entropy, true}, 4, 3},
        {"mlp_sq", {ModelKind::mlp, {3, 5, 2}, Activation::relu, LossKind::squared_error, true}, 3, 2},
    };
    double worst = 0.0;
    std::size_t coords = 0;
    for (const auto& k : kinds) {
        const Model model(k.spec);
        for (int d = 0; d < draws; ++d) {
            Rng rng = make_rng(1234, {static_cast<std::uint64_t>(d), k.dim});
            Vec w(model.parameter_count());
            for (double& v : w) v = standard_normal(rng);
            Vec x(k.dim);
            for (double& v : x) v = standard_normal(rng);
            LabeledDataset one;
            one.class_count = k.classes;
            one.inputs.emplace_back(std::vector<std::size_t>{k.dim}, x);
            one.labels.push_back(uniform_index(rng, k.classes));
            const auto s = one.sample(0);
            const Vec g = per_sample_gradient(model, model.wrap(w), s).values;
            for (std::size_t c = 0; c < w.size(); ++c) {
                const double h = 1e-6 * std::max(1.0, std::abs(w[c]));
                Vec wp = w, wm = w;
                wp[c] += h;
                wm[c] -= h;
                const double fd = (model.loss(wp, s) - model.loss(wm, s)) / (2.0 * h);
                // Relative error with an absolute floor: central differences carry
                // roundoff of order eps * loss / h on vanishing coordinates.
                const double err = std::abs(fd - g[c]) / std::max({std::abs(fd), std::abs(g[c]), 1e-2});
                worst = std::max(worst, err);
                ++coords;
            }
        }
    }
    return {worst < tol, "max rel err " + fmt(worst) + " over " + std::to_string(coords) + " coords (tol 1e-6)"};
}

// 2 ----------------------------------------------------------------------------

Outcome hvp_correctness() {
    double worst_exact = 0.0, worst_fd = 0.0;
    std::size_t max_params = 0;
    const std::vector<ModelSpec> specs = {
        {ModelKind::logistic_regression, {4, 3}, Activation::identity, LossKind::cross_entropy, true},
        {ModelKind::mlp, {4, 8, 3}, Activation::relu, LossKind::cross_entropy, true},
        {ModelKind::mlp, {4, 10, 6, 3}, Activation::relu, LossKind::cross_entropy, true},
        {ModelKind::mlp, {3, 6, 2}, Activation::identity, LossKind::squared_error, true},
    };
    for (std::size_t k = 0; k < specs.size(); ++k) {
        const Model model(specs[k]);
        max_params = std::max(max_params, model.parameter_count());
        const std::size_t dim = specs[k].layer_widths.front(), classes = specs[k].layer_widths.back();
        const LabeledDataset data = synth_gaussian(classes, 10, dim, 2.0, 50 + k);
        const Vec weights(data.size(), 1.0 / static_cast<double>(data.size()));
        const ParameterVector w = model.init_params(70 + k);
        const DenseMatrix H = dense_hessian(model, w, data, weights);
        for (int draw = 0; draw < 5; ++draw) {
            Rng rng = make_rng(99, {k, static_cast<std::uint64_t>(draw)});
            Vec v(model.parameter_count());
            for (double& x : v) x = standard_normal(rng);
            const Vec ref = H.multiply(v);
            const Vec ex = hessian_vector_product(model, w, data, weights, v, HvpMode::exact).values;
            const Vec fd = hessian_vector_product(model, w, data, weights, v, HvpMode::finite_difference).values;
            worst_exact = std::max(worst_exact, relative_error(ex, ref));
            worst_fd = std::max(worst_fd, relative_error(fd, ref));
        }
    }
    return {worst_exact < 1e-8 && worst_fd < 1e-4 && max_params <= 200,
            "exact " + fmt(worst_exact) + " (tol 1e-8), finite-difference " + fmt(worst_fd) +
                " (tol 1e-4), |w| <= " + std::to_string(max_params)};
}

// 3 ----------------------------------------------------------------------------

Outcome exact_fidelity() {
    const Probe p = probes::convex_logistic();
    const Model model(p.spec);
    const TrajectoryRecord rec = train(model, p.train, p.config);
    const auto idx = probes::all_indices(p.train.size());
    const TrackResult exact = track_exact(model, p.train, rec, idx);
    double worst = 0.0;
    for (const auto& s : exact.states) {
        const double hyper = test_loss_derivative(model, rec.final_params, s, p.test);
        const OracleResult o = finite_difference_hypergradient(model, p.train, rec, s.sample_index, p.test);
        worst = std::max(worst, rel_err(hyper, o.central_difference));
    }
    return {worst < 1e-3, "max rel err vs retraining oracle " + fmt(worst) + " over " + std::to_string(idx.size()) +
                              " samples (tol 1e-3)"};
}

// 4 ----------------------------------------------------------------------------

Outcome theorem1_bound() {
    const Probe p = probes::convex_logistic();
    const Model model(p.spec);
    const TrajectoryRecord rec = train(model, p.train, p.config);
    std::size_t violations = 0, points = 0;
    double tightest = 0.0;
    for (std::size_t i : {0u, 17u, 33u, 49u}) {
        const ApproxErrorTrace tr = error_trace(model, p.train, rec, i);
        for (const auto& pt : tr.points) {
            ++points;
            if (pt.error_norm > pt.bound) ++violations;
            if (pt.bound > 0.0) tightest = std::max(tightest, pt.error_norm / pt.bound);
        }
    }
    return {violations == 0, std::to_string(violations) + " violations over " + std::to_string(points) +
                                 " points, max error/bound " + fmt(tightest)};
}

// 5 ----------------------------------------------------------------------------

Outcome theorem2_vanishing() {
    Probe p = probes::convex_logistic(7, 0.5, 2000);
    p.config.schedule.kind = Schedule::Kind::exponential;
    p.config.schedule.rate = 0.99;
    p.config.snapshot_stride = 500;
    const double margin = 1.0 - p.config.initial_lr * p.config.weight_decay;
    const Model model(p.spec);
    const TrajectoryRecord rec = train(model, p.train, p.config);
    double worst_ratio = 0.0;
    for (std::size_t i : {0u, 25u}) {
        ErrorTraceOptions opts;
        opts.record_stride = 10;
        const ApproxErrorTrace tr = error_trace(model, p.train, rec, i, opts);
        const double final_err = tr.points.back().error_norm;
        worst_ratio = std::max(worst_ratio, final_err / tr.peak_error());
    }
    return {0.99 < margin && worst_ratio < 0.01,
            "final/peak error " + fmt(worst_ratio) + " at T=2000 (tol 0.01), c=0.99 vs 1-eta1*lambda=" + fmt(margin)};
}

// 6 ----------------------------------------------------------------------------

Outcome approximation_quality() {
    std::string detail;
    bool ok = true;
    for (int which = 0; which < 2; ++which) {
        const Probe p = which == 0 ? probes::convex_logistic() : probes::small_mlp();
        const Model model(p.spec);
        const TrajectoryRecord rec = train(model, p.train, p.config);
        const auto idx = probes::all_indices(p.train.size());
        HypergradTracker ex(HypergradMode::exact, idx, model.parameter_count());
        HypergradTracker ap(HypergradMode::approx, idx, model.parameter_count());
        HypergradTracker* both[] = {&ex, &ap};
        track_all(model, p.train, rec, both);
        const auto cmp = compare_methods(contribution(model, rec, ex.states(), p.test),
                                         contribution(model, rec, ap.states(), p.test));
        ok = ok && cmp.sign_error_rate <= 0.05 && cmp.spearman_rho >= 0.95;
        detail += std::string(which == 0 ? "convex" : "mlp") + ": sign err " + fmt(cmp.sign_error_rate) +
                  ", spearman " + fmt(cmp.spearman_rho) + (which == 0 ? "; " : "");
    }
    return {ok, detail + " (tol <= 0.05, >= 0.95)"};
}

// 7 ----------------------------------------------------------------------------

Outcome influence_consistency() {
    std::string detail;
    bool ok = true;

    auto eigen_solve = [](const Model& model, const Vec& w, const LabeledDataset& data, double shift, const Vec& v) {
        const Vec weights(data.size(), 1.0 / static_cast<double>(data.size()));
        const DenseMatrix H = dense_hessian(model, model.wrap(w), data, weights);
        Eigen::MatrixXd M(H.n, H.n);
        for (std::size_t r = 0; r < H.n; ++r)
            for (std::size_t c = 0; c < H.n; ++c) M(r, c) = H(r, c) + (r == c ? shift : 0.0);
        const Eigen::VectorXd x = M.ldlt().solve(Eigen::Map<const Eigen::VectorXd>(v.data(), v.size()));
        return Vec(x.data(), x.data() + x.size());
    };

    {  // CG on a 3-class logistic model in 10-D (33 parameters); CG needs a positive-definite operator
        Probe p;
        p.train = synth_gaussian(3, 30, 10, 2.0, 701);
        p.test = synth_gaussian(3, 20, 10, 2.0, 702, SplitTag::test);
        p.spec = {ModelKind::logistic_regression, {10, 3}, Activation::identity, LossKind::cross_entropy, true};
        p.config.epochs = 200;
        p.config.batch_size = 16;
        p.config.initial_lr = 0.1;
        p.config.momentum = 0.9;
        p.config.weight_decay = 0.01;
        const Model model(p.spec);
        const TrajectoryRecord rec = train(model, p.train, p.config);
        const Vec g = mean_gradient(model, rec.final_params, p.test);
        InverseHvpConfig cfg;
        const auto cg = inverse_hvp(model, rec.final_params, p.train, g, p.config.weight_decay, cfg);
        const Vec ref = eigen_solve(model, rec.final_params, p.train, cfg.damping + p.config.weight_decay, g);
        const double e = relative_error(cg.solution, ref);
        ok = ok && e < 1e-6;
        detail += "CG " + fmt(e) + " (tol 1e-6); ";
    }
    {  // Neumann on the convex probe with features shrunk until per-sample Hessian noise is small next to the damping
        const Probe p = probes::convex_logistic(7, 2.0, 500, 0.02);
        const Model model(p.spec);
        const TrajectoryRecord rec = train(model, p.train, p.config);
        const Vec g = mean_gradient(model, rec.final_params, p.test);
        InverseHvpConfig cfg;
        cfg.method = InverseHvpMethod::neumann;
        cfg.neumann_depth = 500;
        cfg.neumann_repeats = 4;
        cfg.seed = 5;
        const auto ne = inverse_hvp(model, rec.final_params, p.train, g, p.config.weight_decay, cfg);
        const Vec ref = eigen_solve(model, rec.final_params, p.train, cfg.damping + p.config.weight_decay, g);
        const double e = relative_error(ne.solution, ref);
        ok = ok && e < 5e-2;
        detail += "Neumann " + fmt(e) + " (tol 5e-2); ";
    }
    {  // IF vs exact HyDRA signs on the converged 1-D ridge probe
        const Probe p = probes::ridge_1d();
        const Model model(p.spec);
        const TrajectoryRecord rec = train(model, p.train, p.config);
        const auto idx = probes::all_indices(p.train.size());
        const auto hy = contribution(model, rec, track_exact(model, p.train, rec, idx).states, p.test);
        const auto inf = influence(model, rec.final_params, p.train, idx, p.test, p.config.weight_decay, {})
                             .as_contribution();
        const auto cmp = compare_methods(hy, inf);
        const std::size_t disagree =
            static_cast<std::size_t>(std::lround(cmp.sign_error_rate * static_cast<double>(cmp.n)));
        ok = ok && disagree == 0;
        detail += "ridge sign disagreements " + std::to_string(disagree) + "/" + std::to_string(cmp.n);
    }
    return {ok, detail};
}

// 8 ----------------------------------------------------------------------------

Outcome method_separation() {
    // Small learning-rate budget (sum of eta about 0.95): training stops far from
    // the optimum, where the converged-model assumption behind IF breaks down.
    Probe p = probes::convex_logistic(21, 0.001, 3000, 0.5);
    p.config.schedule.kind = Schedule::Kind::exponential;
    p.config.schedule.rate = 0.999;
    p.config.snapshot_stride = 500;
    const Model model(p.spec);
    const TrajectoryRecord rec = train(model, p.train, p.config);
    const auto idx = probes::all_indices(p.train.size());
    HypergradTracker ex(HypergradMode::exact, idx, model.parameter_count());
    HypergradTracker ap(HypergradMode::approx, idx, model.parameter_count());
    HypergradTracker* both[] = {&ex, &ap};
    track_all(model, p.train, rec, both);
    const auto exact = contribution(model, rec, ex.states(), p.test);
    const auto approx = contribution(model, rec, ap.states(), p.test);
    const auto inf = influence(model, rec.final_params, p.train, idx, p.test, p.config.weight_decay, {})
                         .as_contribution();
    const double rho_approx = compare_methods(exact, approx).spearman_rho;
    const double rho_if = compare_methods(exact, inf).spearman_rho;
    return {rho_approx > rho_if, "spearman approx " + fmt(rho_approx) + " vs influence " + fmt(rho_if)};
}

// 9 ----------------------------------------------------------------------------

Outcome noisy_cleaning() {
    std::string detail;
    bool ok = true;
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        LabeledDataset clean = synth_gaussian(2, 50, 5, 3.0, derive_seed(seed, {1}));
        const LabeledDataset test = synth_gaussian(2, 200, 5, 3.0, derive_seed(seed, {2}), SplitTag::test);
        auto [noisy, noise] = inject_noise(clean, 0.3, seed);
        const Model model(ModelSpec{ModelKind::logistic_regression, {5, 2}, Activation::identity,
                                    LossKind::cross_entropy, true});
        TrainingConfig cfg;
        cfg.epochs = 300;
        cfg.batch_size = noisy.size();
        cfg.initial_lr = 0.5;
        cfg.weight_decay = 0.01;
        cfg.seed = seed;
        const TrajectoryRecord rec = train(model, noisy, cfg);
        const auto idx = probes::all_indices(noisy.size());
        const auto rep = contribution(model, rec, track_approx(model, noisy, rec, idx).states, test);
        const auto kept = clean_dataset(rep, 0.3);
        std::size_t recovered = 0;
        for (std::size_t i : noise.flipped)
            if (!std::binary_search(kept.begin(), kept.end(), i)) ++recovered;
        const double recovery = static_cast<double>(recovered) / static_cast<double>(noise.flipped.size());
        const TrajectoryRecord retrained = train(model, noisy.subset(kept), cfg);
        const double acc_noisy = accuracy(model, rec.final_params, test);
        const double acc_clean = accuracy(model, retrained.final_params, test);
        ok = ok && recovery >= 0.8 && acc_clean > acc_noisy;
        detail += "seed " + std::to_string(seed) + ": recovered " + fmt(recovery) + ", acc " + fmt(acc_noisy) +
                  " -> " + fmt(acc_clean) + (seed < 3 ? "; " : "");
    }
    return {ok, detail};
}

// 10 ---------------------------------------------------------------------------

Outcome clustering_plumbing() {
    // Six training samples against four probes: the first three agree in sign
    // with every probe, the last three disagree.
    ContributionReport pairs;
    pairs.method = "fixture";
    const std::vector<std::size_t> labels = {0, 0, 0, 0, 0, 0};
    const std::vector<bool> flipped = {false, false, false, true, true, true};
    const std::vector<std::size_t> probe_ids = {0, 1, 2, 3};
    for (std::size_t j : probe_ids)
        for (std::size_t i = 0; i < 6; ++i) pairs.entries.push_back({i, j, i < 3 ? 1.0 : -1.0});
    const auto ev = sign_cluster(pairs, probe_ids, labels, flipped);

    auto report = [](std::vector<double> v) {
        ContributionReport r;
        r.method = "list";
        for (std::size_t i = 0; i < v.size(); ++i) r.entries.push_back({i, std::nullopt, v[i]});
        return r;
    };
    const auto ref = report({1, 2, 3, 4, 5});
    const auto same = compare_methods(ref, ref);
    const auto swapped = compare_methods(ref, report({1, 3, 2, 4, 5}));
    const auto negated = compare_methods(ref, report({-1, -2, -3, -4, -5}));

    const bool ok = ev.mean_jaccard_correct == 1.0 && ev.mean_jaccard_flipped == 1.0 && same.sign_error_rate == 0.0 &&
                    same.spearman_rho == 1.0 && std::abs(swapped.spearman_rho - 0.9) < 1e-12 &&
                    swapped.sign_error_rate == 0.0 && negated.sign_error_rate == 1.0 &&
                    std::abs(negated.spearman_rho + 1.0) < 1e-12;
    return {ok, "jaccard " + fmt(ev.mean_jaccard_correct) + "/" + fmt(ev.mean_jaccard_flipped) + ", rho(swap) " +
                    fmt(swapped.spearman_rho) + ", negated (" + fmt(negated.sign_error_rate) + ", " +
                    fmt(negated.spearman_rho) + ")"};
}

// 11 ---------------------------------------------------------------------------

Outcome determinism() {
    namespace fs = std::filesystem;
    const fs::path root = fs::temp_directory_path() / "hydra_acceptance_determinism";
    fs::remove_all(root);
    ExperimentConfig c;
    c.dataset.classes = 2;
    c.dataset.per_class = 10;
    c.dataset.test_per_class = 20;
    c.dataset.dim = 3;
    c.dataset.separation = 2.0;
    c.dataset.seed = 5;
    c.model = {ModelKind::logistic_regression, {3, 2}, Activation::identity, LossKind::cross_entropy, true};
    c.training.epochs = 20;
    c.training.batch_size = 8;
    c.training.initial_lr = 0.1;
    c.training.momentum = 0.9;
    c.training.weight_decay = 0.01;
    c.training.seed = 9;
    c.tracking.per_pair = true;
    c.methods.list = {"exact", "approx", "influence_cg", "influence_neumann", "oracle_loo"};
    c.methods.error_trace = true;
    c.noise.fraction = 0.2;
    c.noise.seed = 4;
    c.noise.clean = true;
    const auto a = run(c, root / "a");
    const auto b = run(c, root / "b");
    std::size_t differing = 0;
    for (const auto& f : a.files)
        if (read_file_bytes(a.directory / f) != read_file_bytes(b.directory / f)) ++differing;
    const bool same_lists = a.files == b.files;
    fs::remove_all(root);
    return {same_lists && differing == 0,
            std::to_string(differing) + " of " + std::to_string(a.files.size()) + " output files differ"};
}

// 12 ---------------------------------------------------------------------------

Outcome distribution_sanity() {
    LabeledDataset train_set = synth_gaussian(2, 50, 5, 1.0, 1201);
    LabeledDataset test_set = synth_gaussian(2, 100, 5, 1.0, 1202, SplitTag::test);
    const FeatureScaler s = fit_standardizer(train_set);
    s.apply(train_set);
    s.apply(test_set);
    const Model model(ModelSpec{ModelKind::logistic_regression, {5, 2}, Activation::identity, LossKind::cross_entropy,
                                false});
    TrainingConfig cfg;
    cfg.epochs = 200;
    cfg.batch_size = train_set.size();
    cfg.initial_lr = 0.5;
    cfg.weight_decay = 0.01;
    const TrajectoryRecord rec = train(model, train_set, cfg);
    const auto rep =
        contribution(model, rec, track_exact(model, train_set, rec, probes::all_indices(train_set.size())).states,
                     test_set);
    const auto st = distribution_stats(rep);
    return {std::abs(st.mean) < 0.1 * st.std, "|mean| / std = " + fmt(std::abs(st.mean) / st.std) + " (tol 0.1)"};
}

} // namespace

int main(int argc, char** argv) {
    const std::vector<Criterion> criteria = {
        {1, "gradient correctness", 10, gradient_correctness},
        {2, "HVP correctness", 30, hvp_correctness},
        {3, "exact hypergradient vs retraining oracle", 120, exact_fidelity},
        {4, "approximation-error bound", 60, theorem1_bound},
        {5, "vanishing approximation error", 60, theorem2_vanishing},
        {6, "approx vs exact contributions", 300, approximation_quality},
        {7, "influence baseline consistency", 120, influence_consistency},
        {8, "method separation", 300, method_separation},
        {9, "noisy-label cleaning", 300, noisy_cleaning},
        {10, "clustering and comparison metrics", 5, clustering_plumbing},
        {11, "determinism", 300, determinism},
        {12, "distribution sanity", 60, distribution_sanity},
    };

    int only = 0;
    for (int a = 1; a < argc; ++a) {
        const std::string arg = argv[a];
        if (arg == "--criterion" && a + 1 < argc) only = std::atoi(argv[++a]);
        else {
            std::cerr << "usage: acceptance [--criterion N]\n";
            return 2;
        }
    }

    int failures = 0;
    for (const auto& c : criteria) {
        if (only != 0 && c.id != only) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome out;
        try {
            out = c.body();
        } catch (const std::exception& e) {
            out = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool in_budget = secs <= c.budget_seconds;
        const bool pass = out.pass && in_budget;
        if (!pass) ++failures;
        std::printf("[%s] criterion %2d  %-42s %s; %.2f s (budget %.0f s)\n", pass ? "PASS" : "FAIL", c.id, c.title,
                    out.detail.c_str(), secs, c.budget_seconds);
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
