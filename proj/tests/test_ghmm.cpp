#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "nmc/error.hpp"
#include "nmc/ghmm.hpp"

using namespace nmc;

namespace {

GhmmModel make_model(std::vector<double> means, std::vector<double> sds, double self_loop) {
    GhmmModel m;
    const std::size_t K = means.size();
    m.means = std::move(means);
    for (double s : sds) m.variances.push_back(s * s);
    const auto KK = static_cast<Eigen::Index>(K);
    m.transition = Eigen::MatrixXd::Constant(KK, KK, K > 1 ? (1.0 - self_loop) / static_cast<double>(K - 1) : 1.0);
    if (K > 1) m.transition.diagonal().setConstant(self_loop);
    m.initial.assign(K, 1.0 / static_cast<double>(K));
    return m;
}

GhmmModel three_state() { return make_model({-0.02, 0.0, 0.02}, {0.005, 0.005, 0.005}, 0.9); }

double normal_pdf(double x, double m, double v) {
    return std::exp(-0.5 * (x - m) * (x - m) / v) / std::sqrt(2.0 * std::numbers::pi * v);
}

// State order that sorts the fitted means ascending.
std::vector<std::size_t> by_mean(const GhmmModel& m) {
    std::vector<std::size_t> idx(m.n_states());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return m.means[a] < m.means[b]; });
    return idx;
}

}  // namespace

TEST(GhmmModel, ValidateAndJson) {
    const auto m = three_state();
    EXPECT_NO_THROW(m.validate());
    const auto back = GhmmModel::from_json(nlohmann::json::parse(m.to_json().dump()));
    EXPECT_EQ(back.means, m.means);
    EXPECT_EQ(back.variances, m.variances);
    EXPECT_TRUE(back.transition == m.transition);
    auto bad = m;
    bad.variances[1] = 0.0;
    EXPECT_THROW(bad.validate(), InvalidInput);
    bad = m;
    bad.transition(0, 0) = 0.95;
    EXPECT_THROW(bad.validate(), InvalidInput);
    EXPECT_THROW(GhmmModel::from_json(nlohmann::json::parse(R"({"initial":[1]})")), InvalidInput);
}

TEST(ForwardBackward, SingleState) {
    const auto m = make_model({0.5}, {2.0}, 1.0);
    const std::vector<double> obs{0.1, 1.7, -2.0, 0.5};
    const auto fb = forward_backward(m, obs);
    double ll = 0.0;
    for (double o : obs) ll += std::log(normal_pdf(o, 0.5, 4.0));
    EXPECT_NEAR(fb.log_likelihood, ll, 1e-12);
    for (Eigen::Index t = 0; t < 4; ++t) EXPECT_DOUBLE_EQ(fb.gamma(t, 0), 1.0);
}

TEST(ForwardBackward, SeparatedStatesOneStepBayes) {
    const auto m = make_model({-10.0, 10.0}, {1.0, 1.0}, 0.5);
    const auto fb = forward_backward(m, {9.7});
    const double a = 0.5 * normal_pdf(9.7, 10.0, 1.0), b = 0.5 * normal_pdf(9.7, -10.0, 1.0);
    EXPECT_NEAR(fb.gamma(0, 1), a / (a + b), 1e-12);
    EXPECT_GT(fb.gamma(0, 1), 0.999);
}

TEST(ForwardBackward, IdenticalStatesGiveMixtureWeights) {
    auto m = make_model({0.0, 0.0, 0.0}, {1.0, 1.0, 1.0}, 0.6);
    m.initial = {0.2, 0.5, 0.3};
    // Stationary law of the symmetric transition is uniform; start there too.
    m.initial = {1.0 / 3, 1.0 / 3, 1.0 / 3};
    const auto fb = forward_backward(m, {0.3, -1.0, 2.0, 0.1});
    for (Eigen::Index t = 0; t < 4; ++t)
        for (Eigen::Index i = 0; i < 3; ++i) EXPECT_NEAR(fb.gamma(t, i), 1.0 / 3, 1e-12);
}

TEST(ForwardBackward, PosteriorsNormalizedAndFloorFlagged) {
    Rng rng(4);
    const auto sample = sample_ghmm(three_state(), 500, rng);
    const auto fb = forward_backward(three_state(), sample.observations);
    for (Eigen::Index t = 0; t < fb.gamma.rows(); ++t) EXPECT_NEAR(fb.gamma.row(t).sum(), 1.0, 1e-10);
    EXPECT_NEAR(fb.xi_sum.sum(), 499.0, 1e-8);
    EXPECT_FALSE(fb.emission_floor_hit);

    const auto far = forward_backward(three_state(), {0.0, 1e6, 0.0});
    EXPECT_TRUE(far.emission_floor_hit);
    EXPECT_TRUE(std::isfinite(far.log_likelihood));
    for (Eigen::Index t = 0; t < 3; ++t) EXPECT_NEAR(far.gamma.row(t).sum(), 1.0, 1e-10);
}

TEST(BaumWelch, SingleStateIsGaussianMle) {
    Rng rng(12);
    const auto sample = sample_ghmm(make_model({0.3}, {1.5}, 1.0), 4000, rng);
    GhmmFitConfig cfg;
    cfg.n_states = 1;
    const auto fit = fit_baum_welch(sample.observations, cfg);
    const auto& x = sample.observations;
    const double n = static_cast<double>(x.size());
    const double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean) / n;
    EXPECT_NEAR(fit.model.means[0], mean, 1e-12);
    EXPECT_NEAR(fit.model.variances[0], var, 1e-12);
    EXPECT_NEAR(fit.model.means[0], 0.3, 3.0 * 1.5 / std::sqrt(n));
    EXPECT_NEAR(fit.model.variances[0], 2.25, 3.0 * 2.25 * std::sqrt(2.0 / n));
}

TEST(BaumWelch, ZeroEpochsReturnsInit) {
    Rng rng(2);
    const auto obs = sample_ghmm(three_state(), 200, rng).observations;
    GhmmFitConfig cfg;
    cfg.epochs = 0;
    const auto fit = fit_baum_welch(obs, cfg);
    const auto init = quantile_init(obs, 3);
    EXPECT_EQ(fit.model.means, init.means);
    EXPECT_TRUE(fit.model.transition == init.transition);
    EXPECT_EQ(fit.trace.size(), 1u);
}

TEST(BaumWelch, RecoversThreeStateTransitions) {
    Rng rng(2024);
    const auto truth = three_state();
    const auto obs = sample_ghmm(truth, 2000, rng).observations;
    const auto fit = fit_baum_welch(obs, {});
    ASSERT_EQ(fit.trace.size(), 16u);
    for (std::size_t i = 1; i < fit.trace.size(); ++i) EXPECT_GE(fit.trace[i], fit.trace[i - 1] - 1e-8);
    const auto order = by_mean(fit.model);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j)
            EXPECT_NEAR(fit.model.transition(static_cast<Eigen::Index>(order[i]), static_cast<Eigen::Index>(order[j])),
                        truth.transition(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)), 0.1);
}

TEST(BaumWelch, MonotoneOverRandomFits) {
    for (int s = 0; s < 50; ++s) {
        Rng rng(derive_seed(5, s));
        const auto obs = sample_ghmm(three_state(), 80, rng).observations;
        GhmmFitConfig cfg;
        cfg.init = GhmmInit::Random;
        cfg.seed = derive_seed(6, s);
        const auto fit = fit_baum_welch(obs, cfg);
        for (std::size_t i = 1; i < fit.trace.size(); ++i)
            EXPECT_GE(fit.trace[i], fit.trace[i - 1] - 1e-8) << "seed " << s << " epoch " << i;
        EXPECT_NO_THROW(fit.model.transition_matrix());
    }
}

TEST(BaumWelch, PermutationEquivariant) {
    Rng rng(8);
    const auto obs = sample_ghmm(three_state(), 300, rng).observations;
    auto init = quantile_init(obs, 3);
    init.transition.row(0) << 0.7, 0.2, 0.1;
    const std::vector<std::size_t> perm{2, 0, 1};  // new state k is old state perm[k]
    GhmmModel permuted = init;
    for (std::size_t a = 0; a < 3; ++a) {
        permuted.means[a] = init.means[perm[a]];
        permuted.variances[a] = init.variances[perm[a]];
        for (std::size_t b = 0; b < 3; ++b)
            permuted.transition(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) =
                init.transition(static_cast<Eigen::Index>(perm[a]), static_cast<Eigen::Index>(perm[b]));
    }
    GhmmFitConfig c1, c2;
    c1.init = c2.init = GhmmInit::Explicit;
    c1.initial_model = init;
    c2.initial_model = permuted;
    const auto f1 = fit_baum_welch(obs, c1), f2 = fit_baum_welch(obs, c2);
    EXPECT_NEAR(f1.trace.back(), f2.trace.back(), 1e-8);
    for (std::size_t a = 0; a < 3; ++a) {
        EXPECT_NEAR(f2.model.means[a], f1.model.means[perm[a]], 1e-10);
        for (std::size_t b = 0; b < 3; ++b)
            EXPECT_NEAR(f2.model.transition(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)),
                        f1.model.transition(static_cast<Eigen::Index>(perm[a]), static_cast<Eigen::Index>(perm[b])),
                        1e-10);
    }
}

TEST(BaumWelch, StarvationIsFlagged) {
    std::vector<double> obs(60);
    Rng rng(3);
    for (auto& v : obs) v = rng.normal(0.0, 1.0);
    GhmmModel init = make_model({0.0, 1e4}, {1.0, 1e-3}, 0.5);
    GhmmFitConfig cfg;
    cfg.init = GhmmInit::Explicit;
    cfg.initial_model = init;
    const auto fit = fit_baum_welch(obs, cfg);
    EXPECT_GT(fit.starvation_events, 0u);
    EXPECT_NEAR(fit.model.transition(1, 0), 0.5, 1e-15);
    EXPECT_NO_THROW(fit.model.validate());
}

TEST(BaumWelch, InputChecks) {
    EXPECT_THROW(fit_baum_welch(std::vector<double>(29, 0.1), {}), InvalidInput);
    std::vector<double> obs(40, 0.1);
    obs[3] = NAN;
    EXPECT_THROW(fit_baum_welch(obs, {}), InvalidInput);
    // Near-constant windows stay valid thanks to the variance floor.
    const auto flat = fit_baum_welch(std::vector<double>(40, 0.1), {});
    for (double v : flat.model.variances) EXPECT_GE(v, GhmmModel::kVarianceFloor);
}

TEST(SampleGhmm, Cases) {
    auto absorbing = make_model({1.0, 2.0}, {1.0, 1.0}, 1.0);
    absorbing.initial = {0.0, 1.0};
    Rng rng(1);
    for (auto s : sample_ghmm(absorbing, 100, rng).states) EXPECT_EQ(s, 1u);

    auto sharp = make_model({-3.0, 3.0}, {1e-5, 1e-5}, 0.5);
    sharp.variances = {1e-10, 1e-10};
    const auto smp = sample_ghmm(sharp, 200, rng);
    for (std::size_t t = 0; t < 200; ++t) EXPECT_NEAR(smp.observations[t], sharp.means[smp.states[t]], 1e-4);

    Rng a(5), b(5);
    EXPECT_EQ(sample_ghmm(three_state(), 50, a).observations, sample_ghmm(three_state(), 50, b).observations);
}

TEST(SampleGhmm, TransitionFrequencies) {
    auto m = three_state();
    m.transition.row(1) << 0.3, 0.5, 0.2;
    Rng rng(77);
    const auto s = sample_ghmm(m, 100000, rng).states;
    Eigen::Matrix3d counts = Eigen::Matrix3d::Zero();
    for (std::size_t t = 1; t < s.size(); ++t) counts(static_cast<Eigen::Index>(s[t - 1]), static_cast<Eigen::Index>(s[t])) += 1;
    for (Eigen::Index i = 0; i < 3; ++i)
        for (Eigen::Index j = 0; j < 3; ++j) EXPECT_NEAR(counts(i, j) / counts.row(i).sum(), m.transition(i, j), 0.01);
}

TEST(Viterbi, Cases) {
    EXPECT_EQ(viterbi(make_model({0.0}, {1.0}, 1.0), {0.1, 5.0, -2.0}), (std::vector<std::size_t>{0, 0, 0}));

    const auto sep = make_model({-5.0, 0.0, 5.0}, {1.0, 1.0, 1.0}, 1.0 / 3.0);
    Rng rng(6);
    std::vector<double> obs;
    std::vector<std::size_t> nearest;
    for (int t = 0; t < 200; ++t) {
        const double o = rng.uniform() * 16.0 - 8.0;
        obs.push_back(o);
        std::size_t best = 0;
        for (std::size_t k = 1; k < 3; ++k)
            if (std::abs(o - sep.means[k]) < std::abs(o - sep.means[best])) best = k;
        nearest.push_back(best);
    }
    EXPECT_EQ(viterbi(sep, obs), nearest);

    auto cyc = make_model({0.0, 1.0, 2.0}, {0.1, 0.1, 0.1}, 0.0);
    cyc.transition << 0, 1, 0, 0, 0, 1, 1, 0, 0;
    cyc.initial = {1.0, 0.0, 0.0};
    EXPECT_EQ(viterbi(cyc, {0.1, 0.9, 2.2, -0.1, 1.1, 1.8}), (std::vector<std::size_t>{0, 1, 2, 0, 1, 2}));

    // Exact ties resolve toward the lower index.
    const auto tie = make_model({0.0, 0.0}, {1.0, 1.0}, 0.5);
    EXPECT_EQ(viterbi(tie, {0.3, 0.3}), (std::vector<std::size_t>{0, 0}));
}
