#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nmc/csv.hpp"
#include "nmc/chain.hpp"
#include "nmc/garch.hpp"
#include "nmc/signal.hpp"

namespace nmc {

struct VolatilityConfig {
    std::vector<std::size_t> lengths{60, 65, 70, 75, 80};
    std::size_t reps = 10;
    std::size_t n_states = 3;
    std::size_t epochs = 15;
    std::optional<double> eps;  // replaces the Gelfand residual when set
    double exponent = 1.0;      // n in 2(1 - 1/K)(r + eps)^n
    bool raw_returns = false;   // fit the GHMM on raw instead of denoised returns
    std::uint64_t seed = 42;
    unsigned threads = 0;       // 0: hardware concurrency

    /// Throws InvalidInput unless every length is in [20, series_length] and reps >= 1.
    void validate(std::size_t series_length) const;
    std::size_t max_length() const;
    nlohmann::ordered_json to_json() const;
};

/// Lengths lo, lo + step, ..., up to hi.
std::vector<std::size_t> window_lengths(std::size_t lo, std::size_t hi, std::size_t step = 5);

struct VolatilitySeries {
    std::vector<Date> dates;
    std::vector<double> tv_mean;
    std::vector<double> tv_std;
    std::vector<double> tv_ci_lo;  // mean -/+ 1.96 std / sqrt(reps)
    std::vector<double> tv_ci_hi;
    std::vector<std::size_t> starved;  // fits with a starvation reset
    std::vector<std::size_t> floored;  // fits that hit the emission floor
    std::vector<std::size_t> failed;   // fits that threw and were left out
    std::size_t first_index = 0;       // index into the input returns of dates[0]
};

/// Indicator value for one fitted hidden transition matrix.
double tv_indicator(const StochasticMatrix& P, const VolatilityConfig& config);

/// Sliding-window GHMM fits for every date with a full window of the
/// longest length. Each (date, length, rep) fit has its own derived seed and
/// result slot, so the output does not depend on the thread count.
VolatilitySeries tv_volatility(const ReturnSeries& returns, const VolatilityConfig& config);

/// Inner join on dates. Adds min-max normalized copies of sq_return,
/// garch_sigma, tv_mean and tv_std over the joined range.
CsvTable comparison_table(const ReturnSeries& returns, const VolatilitySeries& tv,
                          const std::vector<double>& garch_sigma);

struct VolatilityRun {
    Denoised denoised;
    ReturnSeries raw;
    ReturnSeries fitted;  // the series the GHMM saw
    VolatilitySeries tv;
    GarchFit garch;
    std::vector<double> garch_sigma;  // aligned to raw
    CsvTable table;
};

/// denoise -> log returns -> sliding GHMM indicator, plus the GARCH baseline
/// fitted on raw returns.
VolatilityRun volatility_pipeline(const PriceSeries& prices, const VolatilityConfig& config,
                                  const WaveletSpec& wavelet = {});

/// Synthetic prices whose daily log returns are N(0, sigma_low^2) for the
/// first n_low days and N(0, sigma_high^2) afterwards. Weekday dates from 2020-01-01.
PriceSeries two_regime_prices(std::uint64_t seed, std::size_t n_low = 400, std::size_t n_high = 400,
                              double sigma_low = 0.005, double sigma_high = 0.03);

struct RegimeCheck {
    double low_mean = 0.0;
    double high_mean = 0.0;
    double high_late_mean = 0.0;  // second half of the high regime
    bool elevated = false;        // high_mean > low_mean
    bool persistent = false;      // high_late_mean > low_mean
};

/// Compares tv_mean before and after return index `break_index`.
RegimeCheck regime_check(const VolatilitySeries& tv, std::size_t break_index, std::size_t n_returns);

}  // namespace nmc
