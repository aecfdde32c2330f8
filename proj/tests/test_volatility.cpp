#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "nmc/coupling.hpp"
#include "nmc/error.hpp"
#include "nmc/garch.hpp"
#include "nmc/rng.hpp"
#include "nmc/volatility.hpp"

using namespace nmc;

namespace {

std::vector<double> simulate_garch(const GarchModel& m, std::size_t T, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> r(T);
    double s2 = m.omega / (1.0 - m.alpha1 - m.beta1), e = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
        if (t > 0) s2 = m.omega + m.alpha1 * e * e + m.beta1 * s2;
        e = std::sqrt(s2) * rng.normal();
        r[t] = m.mu + e;
    }
    return r;
}

double sample_var(const std::vector<double>& r) {
    const double n = static_cast<double>(r.size());
    const double mean = std::accumulate(r.begin(), r.end(), 0.0) / n;
    double v = 0.0;
    for (double x : r) v += (x - mean) * (x - mean);
    return v / n;
}

ReturnSeries iid_returns(std::size_t n, double sd, std::uint64_t seed) {
    Rng rng(seed);
    ReturnSeries r;
    Date d = parse_date("2020-01-01");
    for (std::size_t i = 0; i < n; ++i) {
        r.dates.push_back(d += std::chrono::days{1});
        r.values.push_back(rng.normal(0.0, sd));
    }
    return r;
}

}  // namespace

TEST(Garch, RecoversPersistence) {
    const GarchModel truth{0.0, 0.05e-4, 0.1, 0.85};
    const auto r = simulate_garch(truth, 3000, 11);
    const auto fit = fit_garch11(r);
    EXPECT_NEAR(fit.model.alpha1 + fit.model.beta1, 0.95, 0.08);
    EXPECT_GT(fit.model.omega, 0.0);
    EXPECT_GE(fit.model.alpha1, 0.0);
    EXPECT_GE(fit.model.beta1, 0.0);
    EXPECT_LT(fit.model.alpha1 + fit.model.beta1, 1.0);
    EXPECT_TRUE(fit.se_available);
    // In-sample average conditional variance tracks the sample variance.
    const auto sig = garch_conditional_vol(fit.model, r);
    double avg = 0.0;
    for (double s : sig) avg += s * s / static_cast<double>(sig.size());
    EXPECT_NEAR(avg / sample_var(r), 1.0, 0.2);
}

TEST(Garch, WhiteNoiseGivesFlatVariance) {
    Rng rng(3);
    std::vector<double> r(3000);
    for (auto& v : r) v = rng.normal(0.0, 0.01);
    const auto fit = fit_garch11(r);
    const double var = sample_var(r);
    for (double s : garch_conditional_vol(fit.model, r)) EXPECT_NEAR(s * s / var, 1.0, 0.1);
}

TEST(Garch, TableLayout) {
    const auto fit = fit_garch11(simulate_garch({0.0005, 1e-5, 0.08, 0.9}, 800, 2));
    const auto t = garch_table(fit);
    EXPECT_EQ(t.header, (std::vector<std::string>{"param", "coef", "std_err", "t", "p_value"}));
    ASSERT_EQ(t.rows.size(), 4u);
    EXPECT_EQ(t.rows[0][0], "mu");
    EXPECT_EQ(t.rows[1][0], "omega");
    EXPECT_EQ(t.rows[2][0], "alpha[1]");
    EXPECT_EQ(t.rows[3][0], "beta[1]");
    EXPECT_THROW(fit_garch11(std::vector<double>(49, 0.01)), InvalidInput);
}

TEST(GarchVol, RecursionOracles) {
    const std::vector<double> noise{0.01, -0.02, 0.005, 0.0, 0.03};
    const auto flat = garch_conditional_vol({0.0, 4e-4, 0.0, 0.0}, noise);
    for (std::size_t t = 1; t < flat.size(); ++t) EXPECT_NEAR(flat[t], 0.02, 1e-15);

    const GarchModel m{0.0, 1e-6, 0.1, 0.8};
    std::vector<double> r(60, 0.0);
    r[10] = 0.5;
    const auto sig = garch_conditional_vol(m, r);
    EXPECT_NEAR(sig[11] * sig[11], m.omega + m.alpha1 * 0.25 + m.beta1 * sig[10] * sig[10], 1e-15);
    const double fixed = m.omega / (1.0 - m.beta1);
    // Above the zero-return fixed point the excess decays geometrically at rate beta1
    // once the shock has passed, and alpha1 + beta1 governs the first step.
    for (std::size_t t = 13; t < 40; ++t)
        EXPECT_NEAR((sig[t] * sig[t] - fixed) / (sig[t - 1] * sig[t - 1] - fixed), m.beta1, 1e-9);

    std::vector<double> zeros(400, 0.0);
    const auto z = garch_conditional_vol(m, zeros);
    EXPECT_NEAR(z.back() * z.back(), fixed, 1e-12);
}

TEST(TvIndicator, IdenticalRowsGiveZero) {
    Eigen::MatrixXd same(3, 3);
    same << 0.2, 0.5, 0.3, 0.2, 0.5, 0.3, 0.2, 0.5, 0.3;
    VolatilityConfig c;
    EXPECT_EQ(tv_indicator(StochasticMatrix(same), c), 0.0);
    const StochasticMatrix I(Eigen::MatrixXd::Identity(3, 3));
    EXPECT_NEAR(tv_indicator(I, c), 2.0 * (1.0 - 1.0 / 3.0), 1e-6);
}

TEST(TvIndicator, NearlyIdenticalRowsGiveNearZero) {
    Eigen::MatrixXd P(3, 3);
    P << 0.34, 0.33, 0.33, 0.33, 0.34, 0.33, 0.33, 0.33, 0.34;
    VolatilityConfig c;
    EXPECT_LT(tv_indicator(StochasticMatrix(P), c), 0.05);
}

TEST(VolatilityConfig, Validation) {
    VolatilityConfig c;
    EXPECT_NO_THROW(c.validate(100));
    EXPECT_THROW(c.validate(79), InvalidInput);
    c.reps = 0;
    EXPECT_THROW(c.validate(100), InvalidInput);
    c = {};
    c.lengths = {19};
    EXPECT_THROW(c.validate(100), InvalidInput);
    EXPECT_EQ(window_lengths(60, 80), (std::vector<std::size_t>{60, 65, 70, 75, 80}));
    const auto j = VolatilityConfig{}.to_json();
    EXPECT_EQ(j.at("lengths").get<std::vector<std::size_t>>(), (std::vector<std::size_t>{60, 65, 70, 75, 80}));
}

TEST(TvVolatility, InvariantsAndDeterminism) {
    const auto r = iid_returns(160, 0.01, 4);
    VolatilityConfig c;
    c.reps = 2;
    c.lengths = {40, 50};
    c.seed = 9;
    const auto a = tv_volatility(r, c);
    ASSERT_EQ(a.dates.size(), 160u - 50u + 1u);
    EXPECT_EQ(a.first_index, 49u);
    for (std::size_t k = 0; k < a.dates.size(); ++k) {
        EXPECT_GE(a.tv_mean[k], 0.0);
        EXPECT_LE(a.tv_mean[k], 2.0);
        EXPECT_GE(a.tv_std[k], 0.0);
        EXPECT_TRUE(std::isfinite(a.tv_mean[k]) && std::isfinite(a.tv_std[k]));
        EXPECT_LE(a.tv_ci_lo[k], a.tv_mean[k]);
        EXPECT_GE(a.tv_ci_hi[k], a.tv_mean[k]);
    }
    c.threads = 3;
    const auto b = tv_volatility(r, c);
    EXPECT_EQ(a.tv_mean, b.tv_mean);
    EXPECT_EQ(a.tv_std, b.tv_std);
}

TEST(ComparisonTable, JoinAndNormalize) {
    const auto r = iid_returns(120, 0.01, 5);
    VolatilityConfig c;
    c.reps = 1;
    c.lengths = {40};
    const auto tv = tv_volatility(r, c);
    const auto sig = garch_conditional_vol({0.0, 1e-5, 0.1, 0.8}, r.values);
    const auto t = comparison_table(r, tv, sig);
    EXPECT_EQ(t.rows.size(), tv.dates.size());
    for (const char* col : {"sq_return_norm", "garch_sigma_norm", "tv_mean_norm", "tv_std_norm"}) {
        double lo = 1.0, hi = 0.0;
        for (const auto& row : t.rows) {
            const double v = std::stod(row[t.column(col)]);
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        EXPECT_GE(lo, 0.0) << col;
        EXPECT_LE(hi, 1.0) << col;
    }
    ReturnSeries shifted = r;
    for (auto& d : shifted.dates) d += std::chrono::days{1000};
    EXPECT_THROW(comparison_table(shifted, tv, sig), InvalidInput);
    EXPECT_THROW(comparison_table(r, tv, std::vector<double>(3, 0.0)), DimensionMismatch);
}

TEST(Fixture, TwoRegimePrices) {
    const auto p = two_regime_prices(3);
    ASSERT_EQ(p.close.size(), 801u);
    EXPECT_NO_THROW(p.validate());
    const auto r = log_returns(p).values;
    const std::vector<double> lo(r.begin(), r.begin() + 400), hi(r.begin() + 400, r.end());
    EXPECT_NEAR(std::sqrt(sample_var(lo)), 0.005, 0.001);
    EXPECT_NEAR(std::sqrt(sample_var(hi)), 0.03, 0.004);
    for (const auto& d : p.dates) {
        const std::chrono::weekday wd{d};
        EXPECT_NE(wd, std::chrono::Saturday);
        EXPECT_NE(wd, std::chrono::Sunday);
    }
}

TEST(RegimeCheck, SplitsAtBreak) {
    VolatilitySeries s;
    s.first_index = 2;
    s.tv_mean = {0.1, 0.1, 0.1, 0.5, 0.6, 0.7, 0.8};
    s.dates.resize(7);
    const auto rc = regime_check(s, 5, 9);
    EXPECT_NEAR(rc.low_mean, 0.1, 1e-15);
    EXPECT_NEAR(rc.high_mean, 0.65, 1e-15);
    EXPECT_NEAR(rc.high_late_mean, 0.75, 1e-15);
    EXPECT_TRUE(rc.elevated);
    EXPECT_TRUE(rc.persistent);
}
