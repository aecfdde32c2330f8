#pragma once

#include <chrono>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace nmc {

using Date = std::chrono::sys_days;

/// "YYYY-MM-DD". Throws InvalidInput on anything else.
Date parse_date(const std::string& s);
std::string format_date(Date d);

/// Strictly increasing dates, positive prices, length >= 2.
struct PriceSeries {
    std::vector<Date> dates;
    std::vector<double> close;

    void validate() const;
};

struct ReturnSeries {
    std::vector<Date> dates;
    std::vector<double> values;
};

struct PriceColumns {
    std::string date = "date";
    std::string price = "adj_close";
};

/// Reads a header CSV, sorts rows by date (stable), rejects duplicate dates,
/// unparseable dates and nonpositive prices.
PriceSeries load_prices(const std::string& path, const PriceColumns& columns = {});
PriceSeries parse_prices(const std::string& csv_text, const PriceColumns& columns = {});

enum class Threshold { Soft, None };

struct WaveletSpec {
    std::string family = "db8";
    std::optional<std::size_t> levels;  // default min(4, floor(log2(N/15)))
    Threshold threshold = Threshold::Soft;
};

/// Daubechies-8 scaling filter (8 vanishing moments, 16 taps).
const std::vector<double>& db8_filter();
/// Resolves a family name ("db8", "db8-16", "16") to its scaling filter.
const std::vector<double>& wavelet_filter(const std::string& family);

std::size_t default_levels(std::size_t n);

/// Multi-level decomposition. The input is extended symmetrically to
/// [x, reverse(x)] / sqrt(2) and analysed with the periodized orthogonal
/// filter bank; periodizing the mirrored signal is exactly half-sample
/// symmetric extension at both ends, and the 1/sqrt(2) scaling keeps the
/// transform an isometry. An approximation band of odd length parks its
/// last sample in `carry` before the next split.
struct WaveletPyramid {
    std::size_t length = 0;                    // original signal length
    std::vector<std::vector<double>> details;  // details[0] is the finest level
    std::vector<double> approximation;
    std::vector<std::optional<double>> carry;  // per level
    std::vector<std::string> warnings;

    /// Sum of squares over every coefficient.
    double energy() const;
};

WaveletPyramid dwt(const std::vector<double>& x, const WaveletSpec& spec = {});
std::vector<double> idwt(const WaveletPyramid& pyramid, const WaveletSpec& spec = {});

struct Denoised {
    PriceSeries prices;
    std::vector<double> noise;  // input - output
    double threshold = 0.0;
    double sigma = 0.0;
    std::vector<std::string> warnings;
};

/// dwt -> soft threshold of all detail bands at sigma sqrt(2 ln N) with
/// sigma = median(|finest detail|) / 0.6745 -> idwt.
Denoised denoise(const PriceSeries& prices, const WaveletSpec& spec = {});
std::vector<double> denoise_values(const std::vector<double>& x, const WaveletSpec& spec,
                                   double* threshold_out = nullptr, double* sigma_out = nullptr);

ReturnSeries log_returns(const PriceSeries& prices);

struct DescriptiveStats {
    double mean = 0.0;
    double std = 0.0;
    double skewness = 0.0;
    double kurtosis = 0.0;  // excess
    bool degenerate = false;  // zero variance: skewness/kurtosis undefined (NaN)
};

DescriptiveStats descriptive_stats(const std::vector<double>& x);

/// "***" p < 0.005, "**" p < 0.01, "*" p < 0.05, else "".
std::string significance_stars(double p_value);

struct TestResult {
    double statistic = 0.0;
    double p_value = 1.0;
    std::string stars;
};

/// One-sample K-S against Normal(sample mean, sample sd) with the asymptotic
/// Kolmogorov p-value. Estimated parameters make it anti-conservative.
TestResult ks_test(const std::vector<double>& x);

/// Kolmogorov survival function Q(lambda) = 2 sum (-1)^{k-1} exp(-2 k^2 lambda^2).
double kolmogorov_q(double lambda);

/// Q = n(n+2) sum_{k<=max_lag} rho_k^2/(n-k) against chi-square(max_lag).
TestResult ljung_box(const std::vector<double>& x, std::size_t max_lag = 12);

}  // namespace nmc
