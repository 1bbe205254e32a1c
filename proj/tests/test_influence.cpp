#include <gtest/gtest.h>

#include "hydra/hydra.hpp"
#include "probes.hpp"

using namespace hydra;

namespace {

struct Fitted {
    probes::Probe probe;
    Model model;
    TrajectoryRecord record;
};

Fitted fit(double feature_scale = 0.05) {
    auto p = probes::convex_logistic(7, 2.0, 500, feature_scale);
    Model m(p.spec);
    auto rec = train(m, p.train, p.config);
    return {std::move(p), std::move(m), std::move(rec)};
}

Vec rhs(std::size_t n, std::uint64_t seed) {
    Rng rng = make_rng(seed, {3});
    Vec v(n);
    for (double& x : v) x = standard_normal(rng);
    return v;
}

} // namespace

TEST(Influence, DenseSolveSatisfiesSystem) {
    const auto f = fit();
    InverseHvpConfig cfg;
    cfg.method = InverseHvpMethod::dense;
    const Vec v = rhs(f.model.parameter_count(), 1);
    const auto res = inverse_hvp(f.model, f.record.final_params, f.probe.train, v, 0.01, cfg);
    const DampedHessian H(f.model, f.record.final_params, f.probe.train, 0.01, cfg);
    Vec back(v.size());
    H.apply(res.solution, back);
    EXPECT_LT(relative_error(back, v), 1e-10);
}

TEST(Influence, CgMatchesDense) {
    const auto f = fit();
    const Vec v = rhs(f.model.parameter_count(), 2);
    InverseHvpConfig cfg;
    cfg.method = InverseHvpMethod::dense;
    const Vec dense = inverse_hvp(f.model, f.record.final_params, f.probe.train, v, 0.01, cfg).solution;
    cfg.method = InverseHvpMethod::conjugate_gradient;
    const auto cg = inverse_hvp(f.model, f.record.final_params, f.probe.train, v, 0.01, cfg);
    EXPECT_LT(relative_error(cg.solution, dense), 1e-6);
    EXPECT_LE(cg.iterations, f.model.parameter_count() + 5);
}

TEST(Influence, NeumannApproachesDense) {
    const auto f = fit(0.02);
    const Vec v = rhs(f.model.parameter_count(), 3);
    InverseHvpConfig cfg;
    cfg.method = InverseHvpMethod::dense;
    const Vec dense = inverse_hvp(f.model, f.record.final_params, f.probe.train, v, 0.01, cfg).solution;
    cfg.method = InverseHvpMethod::neumann;
    cfg.neumann_depth = 2000;
    cfg.neumann_repeats = 8;
    const auto neu = inverse_hvp(f.model, f.record.final_params, f.probe.train, v, 0.01, cfg);
    EXPECT_LT(relative_error(neu.solution, dense), 5e-2);
    EXPECT_GT(neu.scale, 0.0);
}

TEST(Influence, NeumannScaleTooSmallRejected) {
    const auto f = fit(1.0);
    InverseHvpConfig cfg;
    cfg.method = InverseHvpMethod::neumann;
    cfg.neumann_scale = 1e-3;
    const Vec v = rhs(f.model.parameter_count(), 4);
    EXPECT_THROW(inverse_hvp(f.model, f.record.final_params, f.probe.train, v, 0.01, cfg), ScalingError);
}

TEST(Influence, ManySampleRouteMatchesLiteralFormula) {
    const auto f = fit();
    InverseHvpConfig cfg;
    cfg.method = InverseHvpMethod::dense;
    const std::vector<std::size_t> idx{0, 3, 11, 40};
    const auto rep = influence(f.model, f.record.final_params, f.probe.train, idx, f.probe.test, 0.01, cfg);
    ASSERT_EQ(rep.entries.size(), idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) {
        const auto one = influence_of(f.model, f.record.final_params, f.probe.train, idx[k], f.probe.test, 0.01, cfg);
        EXPECT_NEAR(rep.entries[k].influence, one.influence, 1e-10 * std::max(1.0, std::abs(one.influence)));
        const double n = static_cast<double>(f.probe.train.size());
        EXPECT_DOUBLE_EQ(rep.entries[k].per_sample, rep.entries[k].influence / n);
        EXPECT_DOUBLE_EQ(rep.entries[k].contribution, -rep.entries[k].influence / n);
    }
}

TEST(Influence, ContributionScaleTracksRetraining) {
    // On a strongly convex problem trained to convergence, -IF/N follows the exact hypergradient contribution.
    const auto f = fit();
    InverseHvpConfig cfg;
    cfg.method = InverseHvpMethod::dense;
    cfg.damping = 0.0;
    const auto idx = probes::all_indices(f.probe.train.size());
    const auto infl = influence(f.model, f.record.final_params, f.probe.train, idx, f.probe.test, 0.01, cfg);
    const auto exact = contribution(f.model, f.record, track_exact(f.model, f.probe.train, f.record, idx).states,
                                    f.probe.test);
    const auto cmp = compare_methods(exact, infl.as_contribution());
    EXPECT_GT(cmp.spearman_rho, 0.95);
    EXPECT_LT(cmp.sign_error_rate, 0.1);
}

TEST(Influence, PerPairEntries) {
    const auto f = fit();
    InverseHvpConfig cfg;
    cfg.method = InverseHvpMethod::conjugate_gradient;
    const std::vector<std::size_t> idx{1, 2};
    const auto rep = influence(f.model, f.record.final_params, f.probe.train, idx, f.probe.test, 0.01, cfg, true);
    EXPECT_EQ(rep.entries.size(), idx.size() * (1 + f.probe.test.size()));
    EXPECT_EQ(rep.method, "influence_cg");
}

TEST(Influence, LuSolveSmallSystem) {
    DenseMatrix a(2);
    a(0, 0) = 4.0;
    a(0, 1) = 1.0;
    a(1, 0) = 1.0;
    a(1, 1) = 3.0;
    const Vec x = detail::lu_solve(a, Vec{1.0, 2.0});
    EXPECT_NEAR(x[0], 1.0 / 11.0, 1e-15);
    EXPECT_NEAR(x[1], 7.0 / 11.0, 1e-15);
}
