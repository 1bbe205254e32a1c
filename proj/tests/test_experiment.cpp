#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>

#include "hydra/hydra.hpp"

using namespace hydra;
namespace fs = std::filesystem;

namespace {

ExperimentConfig small_config() {
    ExperimentConfig c;
    c.dataset.per_class = 8;
    c.dataset.test_per_class = 6;
    c.dataset.dim = 3;
    c.dataset.seed = 4;
    c.model = {ModelKind::logistic_regression, {3, 2}, Activation::identity, LossKind::cross_entropy, true};
    c.training.epochs = 10;
    c.training.batch_size = 4;
    c.training.initial_lr = 0.1;
    c.training.weight_decay = 0.01;
    c.training.seed = 2;
    return c;
}

} // namespace

TEST(Experiment, ConfigRoundTrip) {
    ExperimentConfig c = small_config();
    c.training.schedule.kind = Schedule::Kind::reduce_on_plateau;
    c.training.schedule.factor = 0.5;
    c.training.schedule.patience = 3;
    c.training.momentum = 0.9;
    c.tracking.selection = "list";
    c.tracking.indices = {1, 4, 9};
    c.tracking.per_pair = true;
    c.methods.list = {"exact", "approx", "influence_cg"};
    c.methods.damping = 0.125;
    c.noise.fraction = 0.25;
    c.noise.clean = true;
    c.output = "somewhere/else";
    const std::string text = serialize(c);
    const ExperimentConfig back = parse_experiment_config(text);
    EXPECT_TRUE(back == c);
    EXPECT_EQ(serialize(back), text);
    EXPECT_EQ(config_hash(back), config_hash(c));
    c.methods.damping = 0.25;
    EXPECT_NE(config_hash(back), config_hash(c));
}

TEST(Experiment, ParserErrors) {
    EXPECT_THROW(parse_experiment_config("[dataset]\nbogus = 1\n"), ConfigError);
    EXPECT_THROW(parse_experiment_config("[nowhere]\nx = 1\n"), ConfigError);
    EXPECT_THROW(parse_experiment_config("[dataset\n"), ConfigError);
    EXPECT_THROW(parse_experiment_config("[methods]\nlist = exact,magic\n"), ConfigError);
    EXPECT_THROW(parse_experiment_config("[methods]\nlist = approx\nreference = exact\n"), ConfigError);
    EXPECT_THROW(parse_experiment_config("[methods]\nerror_trace = true\n"), ConfigError);
    const auto c = parse_experiment_config("# comment\n\n[training]\nepochs = 7\n[model]\nlayers = 2, 5, 2\nkind = mlp\n");
    EXPECT_EQ(c.training.epochs, 7u);
    EXPECT_EQ(c.model.layer_widths, (std::vector<std::size_t>{2, 5, 2}));
}

TEST(Experiment, OverridesApply) {
    ExperimentConfig c = small_config();
    set_config_value(c, "training", "epochs", "42");
    set_config_value(c, "methods", "list", "approx,oracle_loo");
    set_config_value(c, "output", "directory", "x");
    EXPECT_EQ(c.training.epochs, 42u);
    EXPECT_EQ(c.methods.list, (std::vector<std::string>{"approx", "oracle_loo"}));
    EXPECT_EQ(c.output, "x");
    EXPECT_THROW(set_config_value(c, "training", "nope", "1"), ConfigError);
}

TEST(Experiment, TrackedSelection) {
    const auto train = synth_gaussian(2, 10, 2, 1.0, 1);
    TrackingConfig t;
    EXPECT_EQ(select_tracked(t, train).size(), 20u);
    t.selection = "random";
    t.count = 5;
    const auto r = select_tracked(t, train);
    EXPECT_EQ(r.size(), 5u);
    EXPECT_TRUE(std::is_sorted(r.begin(), r.end()));
    EXPECT_EQ(select_tracked(t, train), r);
    t.selection = "per_class";
    t.fraction = 0.3;
    const auto pc = select_tracked(t, train);
    EXPECT_EQ(pc.size(), 6u);
    t.selection = "list";
    t.indices = {3, 25};
    EXPECT_THROW(select_tracked(t, train), ShapeError);
}

TEST(Experiment, PrepareDataIsDeterministicAndDisjoint) {
    ExperimentConfig c = small_config();
    c.noise.fraction = 0.25;
    c.noise.seed = 3;
    const auto a = prepare_data(c);
    const auto b = prepare_data(c);
    EXPECT_EQ(a.train.labels, b.train.labels);
    ASSERT_TRUE(a.noise.has_value());
    EXPECT_EQ(a.noise->flipped.size(), 4u);
    EXPECT_NE(a.train.labels, a.clean_labels);
}

TEST(Experiment, RunWritesManifestAndIsReproducible) {
    ExperimentConfig c = small_config();
    c.methods.list = {"exact", "approx", "influence_dense", "oracle_fd"};
    c.tracking.per_pair = true;
    const fs::path root = fs::temp_directory_path() / "hydra_experiment_run";
    fs::remove_all(root);
    const auto s1 = run(c, root / "a");
    const auto s2 = run(c, root / "b");
    EXPECT_EQ(s1.files, s2.files);
    EXPECT_EQ(s1.config_hash, config_hash(c));
    for (const auto& f : s1.files) EXPECT_EQ(read_text(root / "a" / f), read_text(root / "b" / f)) << f;
    const Json manifest = Json::parse(read_text(root / "a" / "manifest.json"));
    EXPECT_EQ(manifest.at("version"), version);
    EXPECT_EQ(manifest.at("config_hash"), std::to_string(config_hash(c)));
    EXPECT_TRUE(fs::exists(root / "a" / "inter_class_normalized_exact.csv"));
    EXPECT_FALSE(fs::exists(root / "a" / "inter_class_normalized_oracle_fd.csv"));
    EXPECT_TRUE(parse_experiment_config(read_text(root / "a" / "experiment.ini")) == c);
    const Json cmp = Json::parse(read_text(root / "a" / "comparison.json"));
    EXPECT_EQ(cmp.size(), 3u);
    fs::remove_all(root);
}

TEST(Experiment, StageErrorsNamed) {
    ExperimentConfig c = small_config();
    c.methods.list = {"approx", "oracle_fd"};
    c.methods.reference = "approx";
    c.training.epochs = 1000;  // 16000 steps, past the oracle cost guard
    c.training.batch_size = 1;
    const fs::path root = fs::temp_directory_path() / "hydra_experiment_stage";
    try {
        run(c, root);
        FAIL() << "expected the oracle cost guard";
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("stage 'oracle_fd'"), std::string::npos) << e.what();
    }
    fs::remove_all(root);
}

TEST(Experiment, OutputRootFromEnvironment) {
    ::setenv("HYDRA_OUTPUT_ROOT", "/tmp/root_here", 1);
    EXPECT_EQ(resolve_output("out"), fs::path("/tmp/root_here/out"));
    EXPECT_EQ(resolve_output("/abs/out"), fs::path("/abs/out"));
    ::unsetenv("HYDRA_OUTPUT_ROOT");
    EXPECT_EQ(resolve_output("out"), fs::path("out"));
}
