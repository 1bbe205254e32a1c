// hydra: command-line front end for training-data attribution experiments.
//
// Every subcommand accepts --config <file>; individual config fields can be
// overridden with --<section>-<key> <value> (e.g. --training-epochs 50).
// Relative output directories are placed under $HYDRA_OUTPUT_ROOT when set.

#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"

#include "hydra/hydra.hpp"

namespace fs = std::filesystem;
using namespace hydra;

namespace {

const std::vector<std::pair<std::string, std::vector<std::string>>> config_keys = {
    {"dataset",
     {"source", "classes", "per_class", "test_per_class", "dim", "separation", "seed", "feature_scale", "standardize",
      "train_images", "train_labels", "test_images", "test_labels", "train_csv", "test_csv"}},
    {"model", {"kind", "layers", "activation", "loss", "bias"}},
    {"training",
     {"epochs", "batch_size", "initial_lr", "schedule", "schedule_factor", "schedule_at_epoch", "schedule_rate",
      "schedule_patience", "schedule_rel_threshold", "momentum", "weight_decay", "seed", "snapshot_stride"}},
    {"tracking", {"selection", "count", "seed", "indices", "fraction", "per_pair"}},
    {"methods",
     {"list", "reference", "damping", "include_regularizer", "neumann_depth", "neumann_repeats", "seed",
      "oracle_delta", "error_trace", "trace_index", "trace_stride"}},
    {"noise", {"fraction", "seed", "clean", "clean_method"}},
    {"output", {"directory"}},
};

struct ConfigOptions {
    std::string path;
    std::map<std::string, std::string> overrides;  // "section\nkey" -> value
};

void add_config_options(CLI::App* cmd, ConfigOptions& opts) {
    cmd->add_option("--config", opts.path, "Experiment configuration file");
    for (const auto& [section, keys] : config_keys)
        for (const auto& key : keys) {
            std::string flag = "--" + section + "-" + key;
            for (char& ch : flag)
                if (ch == '_') ch = '-';
            cmd->add_option_function<std::string>(
                   flag, [&opts, section = section, key = key](const std::string& v) { opts.overrides[section + "\n" + key] = v; },
                   "Override " + section + "." + key)
                ->group("Config overrides");
        }
}

ExperimentConfig resolve_config(const ConfigOptions& opts) {
    ExperimentConfig c = opts.path.empty() ? ExperimentConfig{} : load_experiment_config(opts.path);
    for (const auto& [joined, value] : opts.overrides) {
        const auto nl = joined.find('\n');
        set_config_value(c, joined.substr(0, nl), joined.substr(nl + 1), value);
    }
    c.validate();
    return c;
}

struct Loaded {
    ExperimentConfig config;
    ExperimentData data;
    Model model;
    fs::path out;
};

Loaded load_all(const ConfigOptions& opts) {
    ExperimentConfig c = resolve_config(opts);
    ExperimentData data = prepare_data(c);
    c.model.validate_for(data.train.input_size(), data.train.class_count);
    Model model(c.model);
    fs::path out = resolve_output(c.output);
    fs::create_directories(out);
    return {std::move(c), std::move(data), std::move(model), std::move(out)};
}

TrajectoryRecord load_record(const Loaded& l, const std::string& trajectory) {
    const fs::path dir = trajectory.empty() ? l.out / "trajectory" : fs::path(trajectory);
    return load_trajectory(dir);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Training-data attribution by hypergradient unrolling"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(hydra::version));

    ConfigOptions run_opts, train_opts, track_opts, infl_opts, oracle_opts, trace_opts;
    std::string trajectory;
    std::string track_mode = "approx";
    std::string infl_method = "cg";
    std::string oracle_kind = "fd";
    std::size_t trace_index = 0;
    bool trace_index_set = false;

    auto* run_cmd = app.add_subcommand("run", "Full pipeline: train, track, contributions, analytics, manifest");
    add_config_options(run_cmd, run_opts);

    auto* train_cmd = app.add_subcommand("train", "Train and write the trajectory directory");
    add_config_options(train_cmd, train_opts);

    auto* track_cmd = app.add_subcommand("track", "Hypergradients and contributions along a stored trajectory");
    add_config_options(track_cmd, track_opts);
    track_cmd->add_option("--mode", track_mode, "exact or approx")->check(CLI::IsMember({"exact", "approx"}));
    track_cmd->add_option("--trajectory", trajectory, "Trajectory directory (default <output>/trajectory)");

    auto* infl_cmd = app.add_subcommand("influence", "Influence-function contributions at the final parameters");
    add_config_options(infl_cmd, infl_opts);
    infl_cmd->add_option("--method", infl_method, "cg, neumann or dense")->check(CLI::IsMember({"cg", "neumann", "dense"}));
    infl_cmd->add_option("--trajectory", trajectory, "Trajectory directory (default <output>/trajectory)");

    auto* oracle_cmd = app.add_subcommand("oracle", "Retraining oracle for the tracked samples");
    add_config_options(oracle_cmd, oracle_opts);
    oracle_cmd->add_option("--kind", oracle_kind, "fd (central difference) or loo (leave one out)")
        ->check(CLI::IsMember({"fd", "loo"}));
    oracle_cmd->add_option("--trajectory", trajectory, "Trajectory directory (default <output>/trajectory)");

    auto* trace_cmd = app.add_subcommand("bound-trace", "Exact-vs-approx error next to the analytic bound");
    add_config_options(trace_cmd, trace_opts);
    trace_cmd->add_option_function<std::size_t>("--index", [&](std::size_t v) { trace_index = v; trace_index_set = true; },
                                                "Training sample to trace (default methods.trace_index)");
    trace_cmd->add_option("--trajectory", trajectory, "Trajectory directory (default <output>/trajectory)");

    std::string ref_csv, cand_csv, compare_out;
    auto* cmp_cmd = app.add_subcommand("compare", "Sign-error rate and Spearman between two contribution CSVs");
    cmp_cmd->add_option("--reference", ref_csv, "Reference (gold standard) CSV")->required()->check(CLI::ExistingFile);
    cmp_cmd->add_option("--candidate", cand_csv, "Candidate CSV")->required()->check(CLI::ExistingFile);
    cmp_cmd->add_option("--output", compare_out, "Write the comparison JSON here instead of stdout");

    std::string clean_csv, clean_out;
    double clean_fraction = 0.0;
    auto* clean_cmd = app.add_subcommand("clean", "Indices retained after discarding the lowest-contribution fraction");
    clean_cmd->add_option("--report", clean_csv, "Contribution CSV")->required()->check(CLI::ExistingFile);
    clean_cmd->add_option("--fraction", clean_fraction, "Fraction r in (0, 1) to discard")->required();
    clean_cmd->add_option("--output", clean_out, "Write the retained indices here instead of stdout");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run_cmd->parsed()) {
            const ExperimentConfig c = resolve_config(run_opts);
            const RunSummary s = run(c, resolve_output(c.output));
            std::cout << "wrote " << s.files.size() << " files to " << s.directory.string() << "\n";
        } else if (train_cmd->parsed()) {
            const Loaded l = load_all(train_opts);
            const TrajectoryRecord rec = train(l.model, l.data.train, l.config.training);
            save_trajectory(l.out / "trajectory", rec);
            std::cout << "steps " << rec.total_steps() << ", final train loss "
                      << format_double(mean_loss(l.model, rec.final_params, l.data.train)) << ", test accuracy "
                      << format_double(accuracy(l.model, rec.final_params, l.data.test)) << "\n";
        } else if (track_cmd->parsed()) {
            const Loaded l = load_all(track_opts);
            const TrajectoryRecord rec = load_record(l, trajectory);
            const auto tracked = select_tracked(l.config.tracking, l.data.train);
            const auto mode = track_mode == "exact" ? HypergradMode::exact : HypergradMode::approx;
            const TrackResult tr = track(l.model, l.data.train, rec, tracked, mode);
            save_hypergrads(l.out / "trajectory", tr.states, "hypergrads_" + track_mode);
            const auto rep = contribution(l.model, rec, tr.states, l.data.test, l.config.tracking.per_pair, track_mode);
            write_report_csv(l.out / ("contributions_" + track_mode + ".csv"), rep);
            std::cout << "tracked " << tracked.size() << " samples, " << tr.hvp_calls << " Hessian-vector products\n";
        } else if (infl_cmd->parsed()) {
            const Loaded l = load_all(infl_opts);
            const TrajectoryRecord rec = load_record(l, trajectory);
            const auto tracked = select_tracked(l.config.tracking, l.data.train);
            const auto m = infl_method == "cg"        ? InverseHvpMethod::conjugate_gradient
                           : infl_method == "neumann" ? InverseHvpMethod::neumann
                                                      : InverseHvpMethod::dense;
            const InfluenceReport r = influence(l.model, rec.final_params, l.data.train, tracked, l.data.test,
                                                rec.config.weight_decay, inverse_hvp_config(l.config.methods, m),
                                                l.config.tracking.per_pair);
            write_report_csv(l.out / ("contributions_" + r.method + ".csv"), r.as_contribution(rec.trajectory_checksum()));
            std::cout << r.method << ": " << r.entries.size() << " entries, residual " << format_double(r.residual)
                      << "\n";
        } else if (oracle_cmd->parsed()) {
            const Loaded l = load_all(oracle_opts);
            const TrajectoryRecord rec = load_record(l, trajectory);
            const auto tracked = select_tracked(l.config.tracking, l.data.train);
            const std::string method = "oracle_" + oracle_kind;
            std::map<std::string, std::vector<HypergradState>> none;
            const auto rep = method_report(method, l.model, l.data, rec, tracked, l.config, none);
            write_report_csv(l.out / ("contributions_" + method + ".csv"), rep);
            std::cout << method << ": " << rep.entries.size() << " samples\n";
        } else if (trace_cmd->parsed()) {
            const Loaded l = load_all(trace_opts);
            const TrajectoryRecord rec = load_record(l, trajectory);
            ErrorTraceOptions o;
            o.record_stride = l.config.methods.trace_stride;
            o.seed = l.config.methods.seed;
            const auto tr = error_trace(l.model, l.data.train, rec,
                                        trace_index_set ? trace_index : l.config.methods.trace_index, o);
            save_error_trace(l.out / "trajectory", tr);
            std::cout << "step,error_norm,bound\n";
            for (const auto& p : tr.points)
                std::cout << p.step << "," << format_double(p.error_norm) << "," << format_double(p.bound) << "\n";
            std::cerr << "bound " << (tr.bound_holds() ? "holds" : "violated") << "; L = " << format_double(tr.lipschitz)
                      << ", M_w = " << format_double(tr.max_norm) << "\n";
        } else if (cmp_cmd->parsed()) {
            const auto a = read_report_csv(ref_csv);
            const auto b = read_report_csv(cand_csv);
            const std::string text = comparison_json(compare_methods(a, b)).dump(2) + "\n";
            if (compare_out.empty()) std::cout << text;
            else write_text(compare_out, text);
        } else if (clean_cmd->parsed()) {
            const auto kept = clean_dataset(read_report_csv(clean_csv), clean_fraction);
            const std::string text = index_list_text(kept);
            if (clean_out.empty()) std::cout << text;
            else write_text(clean_out, text);
        }
    } catch (const hydra::Error& e) {
        std::cerr << "hydra: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
