#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <numeric>

#include "nmc/error.hpp"
#include "nmc/rng.hpp"
#include "nmc/signal.hpp"

using namespace nmc;
namespace fs = std::filesystem;

namespace {

std::vector<double> normal_series(std::size_t n, std::uint64_t seed, double sd = 1.0) {
    Rng rng(seed);
    std::vector<double> x(n);
    for (auto& v : x) v = rng.normal(0.0, sd);
    return x;
}

std::vector<double> ar1(std::size_t n, double phi, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> x(n);
    double prev = 0.0;
    for (auto& v : x) prev = v = phi * prev + rng.normal();
    return x;
}

double sum_sq(const std::vector<double>& x) {
    return std::inner_product(x.begin(), x.end(), x.begin(), 0.0);
}

PriceSeries series_from(const std::vector<double>& close) {
    PriceSeries s;
    Date d = parse_date("2021-03-01");
    for (double c : close) {
        s.dates.push_back(d);
        s.close.push_back(c);
        d += std::chrono::days{1};
    }
    return s;
}

}  // namespace

TEST(Dates, ParseAndFormat) {
    EXPECT_EQ(format_date(parse_date("2020-02-29")), "2020-02-29");
    EXPECT_THROW(parse_date("2021-02-29"), InvalidInput);
    EXPECT_THROW(parse_date("2021/01/01"), InvalidInput);
    EXPECT_THROW(parse_date("2021-01-01x"), InvalidInput);
}

TEST(LoadPrices, Contract) {
    const auto s = parse_prices("date,adj_close\n2020-01-02,10\n2020-01-03,11\n");
    EXPECT_EQ(s.close.size(), 2u);
    try {
        parse_prices("date,adj_close\n2020-01-02,10\n2020-01-03,0\n");
        FAIL();
    } catch (const InvalidInput& e) {
        EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
    }
    const auto u = parse_prices("date,adj_close,volume\n2020-01-05,3,1\n2020-01-02,1,1\n2020-01-03,2,1\n");
    EXPECT_EQ(u.close, (std::vector<double>{1, 2, 3}));
    EXPECT_THROW(parse_prices("date,adj_close\n2020-01-02,10\n2020-01-02,11\n"), InvalidInput);
    EXPECT_THROW(parse_prices("date,close\n2020-01-02,10\n2020-01-03,11\n"), InvalidInput);
    EXPECT_THROW(parse_prices("date,adj_close\n2020-01-02,abc\n2020-01-03,11\n"), InvalidInput);
    EXPECT_NO_THROW(parse_prices("date,close\n2020-01-02,10\n2020-01-03,11\n", PriceColumns{"date", "close"}));

    const fs::path p = fs::temp_directory_path() / "nmc_prices_test.csv";
    std::ofstream(p) << "date,adj_close\r\n2020-01-02,10\r\n2020-01-03,11\r\n";
    EXPECT_EQ(load_prices(p.string()).close.size(), 2u);
}

TEST(Db8, FilterIdentities) {
    const auto& h = db8_filter();
    ASSERT_EQ(h.size(), 16u);
    EXPECT_NEAR(std::accumulate(h.begin(), h.end(), 0.0), std::sqrt(2.0), 1e-12);
    for (std::size_t k = 0; k < 8; ++k) {
        double s = 0.0;
        for (std::size_t n = 0; n + 2 * k < 16; ++n) s += h[n] * h[n + 2 * k];
        EXPECT_NEAR(s, k == 0 ? 1.0 : 0.0, 1e-10) << "shift " << k;
    }
    EXPECT_EQ(&wavelet_filter("16"), &db8_filter());
    EXPECT_THROW(wavelet_filter("haar"), InvalidInput);
}

TEST(Dwt, ConstantHasNoDetail) {
    const std::vector<double> x(300, 4.2);
    const auto pyr = dwt(x);
    for (const auto& band : pyr.details)
        for (double d : band) EXPECT_LT(std::abs(d), 1e-10);
    EXPECT_NEAR(pyr.energy(), sum_sq(x), 1e-8 * sum_sq(x));
}

TEST(Dwt, RoundTripAndEnergy) {
    Rng pick(99);
    for (std::size_t n : {64u, 257u, 754u}) {
        for (int i = 0; i < 34; ++i) {
            const auto x = normal_series(n, derive_seed(n, i), 1.0 + 10.0 * pick.uniform());
            const auto pyr = dwt(x);
            const auto y = idwt(pyr);
            double err = 0.0;
            for (std::size_t k = 0; k < n; ++k) err += (x[k] - y[k]) * (x[k] - y[k]);
            EXPECT_LT(std::sqrt(err / sum_sq(x)), 1e-8);
            EXPECT_LT(std::abs(pyr.energy() - sum_sq(x)) / sum_sq(x), 1e-8);
        }
    }
}

TEST(Dwt, LevelsAreReducedForShortSignals) {
    EXPECT_EQ(default_levels(754), 4u);
    EXPECT_EQ(default_levels(60), 2u);
    WaveletSpec spec;
    spec.levels = 6;
    const auto pyr = dwt(normal_series(40, 1), spec);
    EXPECT_LT(pyr.details.size(), 6u);
    EXPECT_FALSE(pyr.warnings.empty());
    const auto y = idwt(pyr, spec);
    EXPECT_EQ(y.size(), 40u);
}

TEST(Denoise, ConstantAndNoThreshold) {
    const auto s = series_from(std::vector<double>(200, 50.0));
    const auto d = denoise(s);
    for (std::size_t i = 0; i < 200; ++i) {
        EXPECT_NEAR(d.prices.close[i], 50.0, 1e-9);
        EXPECT_NEAR(d.noise[i], 0.0, 1e-9);
    }
    std::vector<double> walk(300);
    Rng rng(5);
    double lp = std::log(20.0);
    for (auto& v : walk) v = std::exp(lp += rng.normal(0.0, 0.02));
    WaveletSpec none;
    none.threshold = Threshold::None;
    const auto id = denoise(series_from(walk), none);
    for (std::size_t i = 0; i < walk.size(); ++i) EXPECT_NEAR(id.prices.close[i], walk[i], 1e-8);
}

TEST(Denoise, ImprovesNoisySine) {
    for (int trial = 0; trial < 20; ++trial) {
        Rng rng(derive_seed(7, trial));
        const std::size_t n = 512;
        std::vector<double> clean(n), noisy(n);
        for (std::size_t i = 0; i < n; ++i) {
            clean[i] = 10.0 + std::sin(2.0 * std::numbers::pi * static_cast<double>(i) / 128.0);
            noisy[i] = clean[i] + rng.normal(0.0, 0.2);
        }
        const auto once = denoise_values(noisy, {});
        const auto twice = denoise_values(once, {});
        double mse_in = 0.0, mse_out = 0.0, first = 0.0, second = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            mse_in += std::pow(noisy[i] - clean[i], 2);
            mse_out += std::pow(once[i] - clean[i], 2);
            first += std::pow(once[i] - noisy[i], 2);
            second += std::pow(twice[i] - once[i], 2);
        }
        EXPECT_LT(mse_out, mse_in);
        EXPECT_LT(second, first);
    }
}

TEST(LogReturns, Definition) {
    const auto r = log_returns(series_from({100.0, 110.0}));
    ASSERT_EQ(r.values.size(), 1u);
    EXPECT_NEAR(r.values[0], 0.09531017980432486, 1e-15);
    const auto t = log_returns(series_from({5.0, 10.0, 5.0}));
    EXPECT_NEAR(t.values[0], std::log(2.0), 1e-15);
    EXPECT_NEAR(t.values[0] + t.values[1], 0.0, 1e-15);
    for (double v : log_returns(series_from({3.0, 3.0, 3.0})).values) EXPECT_EQ(v, 0.0);
}

TEST(DescriptiveStats, Cases) {
    const auto s = descriptive_stats({1.0, -1.0, 1.0, -1.0, 1.0, -1.0});
    EXPECT_NEAR(s.skewness, 0.0, 1e-15);
    const auto c = descriptive_stats(std::vector<double>(10, 0.3));
    EXPECT_TRUE(c.degenerate);
    EXPECT_EQ(c.std, 0.0);
    EXPECT_TRUE(std::isnan(c.kurtosis));
    const auto big = descriptive_stats(normal_series(100000, 3));
    EXPECT_NEAR(big.kurtosis, 0.0, 0.1);
}

TEST(DescriptiveStats, MatchesDirectSummation) {
    const std::vector<double> x{0.3, -1.2, 2.5, 0.0, 0.7, -0.4, 1.9, -2.2, 0.15};
    const double n = static_cast<double>(x.size());
    double mean = 0.0;
    for (double v : x) mean += v / n;
    double m2 = 0.0, m3 = 0.0, m4 = 0.0;
    for (double v : x) {
        m2 += std::pow(v - mean, 2) / n;
        m3 += std::pow(v - mean, 3) / n;
        m4 += std::pow(v - mean, 4) / n;
    }
    const auto s = descriptive_stats(x);
    EXPECT_NEAR(s.mean, mean, 1e-10);
    EXPECT_NEAR(s.std, std::sqrt(m2 * n / (n - 1)), 1e-10);
    EXPECT_NEAR(s.skewness, m3 / std::pow(m2, 1.5), 1e-10);
    EXPECT_NEAR(s.kurtosis, m4 / (m2 * m2) - 3.0, 1e-10);
}

TEST(Stars, Thresholds) {
    EXPECT_EQ(significance_stars(0.001), "***");
    EXPECT_EQ(significance_stars(0.007), "**");
    EXPECT_EQ(significance_stars(0.03), "*");
    EXPECT_EQ(significance_stars(0.2), "");
}

TEST(KolmogorovQ, KnownValues) {
    EXPECT_NEAR(kolmogorov_q(1.36), 0.0494, 5e-4);
    EXPECT_NEAR(kolmogorov_q(1.63), 0.0098, 5e-4);
    EXPECT_DOUBLE_EQ(kolmogorov_q(0.0), 1.0);
}

TEST(KsTest, NullAndHeavyTails) {
    int rejections = 0;
    for (int s = 0; s < 100; ++s) {
        const auto r = ks_test(normal_series(754, derive_seed(1, s)));
        EXPECT_GE(r.statistic, 0.0);
        EXPECT_LE(r.statistic, 1.0);
        rejections += r.p_value < 0.05;
    }
    EXPECT_LE(rejections, 10);
    auto cubed = normal_series(754, 77);
    for (auto& v : cubed) v = v * v * v;
    EXPECT_EQ(ks_test(cubed).stars, "***");
}

TEST(LjungBox, NullAndAr1) {
    int accepted = 0;
    double mean_q = 0.0;
    for (int s = 0; s < 100; ++s) {
        const auto r = ljung_box(normal_series(754, derive_seed(2, s)), 12);
        accepted += r.p_value > 0.05;
        mean_q += r.statistic / 100.0;
    }
    EXPECT_GE(accepted, 90);
    EXPECT_NEAR(mean_q, 12.0, 1.5);
    EXPECT_EQ(ljung_box(ar1(754, 0.5, 4), 12).stars, "***");
    EXPECT_THROW(ljung_box(std::vector<double>(50, 1.0), 12), InvalidInput);
}

TEST(LjungBox, DitheredZerosNearNullMean) {
    double mean_q = 0.0;
    for (int s = 0; s < 200; ++s) mean_q += ljung_box(normal_series(754, derive_seed(3, s), 1e-12), 12).statistic / 200.0;
    EXPECT_NEAR(mean_q, 12.0, 1.0);
}
