#include "nmc/volatility.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <numeric>
#include <thread>

#include "nmc/coupling.hpp"
#include "nmc/error.hpp"
#include "nmc/ghmm.hpp"
#include "nmc/rng.hpp"

namespace nmc {

void VolatilityConfig::validate(std::size_t series_length) const {
    if (lengths.empty()) throw InvalidInput("volatility: no window lengths");
    for (std::size_t L : lengths)
        if (L < 20 || L > series_length)
            throw InvalidInput("volatility: window length " + std::to_string(L) + " outside [20, " +
                               std::to_string(series_length) + "]");
    if (reps < 1) throw InvalidInput("volatility: reps must be >= 1");
    if (n_states < 2) throw InvalidInput("volatility: n_states must be >= 2");
    for (std::size_t L : lengths)
        if (L < 10 * n_states)
            throw InvalidInput("volatility: window length " + std::to_string(L) + " too short for " +
                               std::to_string(n_states) + " states");
    if (eps && (!std::isfinite(*eps) || *eps < 0.0)) throw InvalidInput("volatility: eps must be >= 0");
    if (!std::isfinite(exponent) || exponent <= 0.0) throw InvalidInput("volatility: exponent must be > 0");
}

std::size_t VolatilityConfig::max_length() const {
    return lengths.empty() ? 0 : *std::max_element(lengths.begin(), lengths.end());
}

nlohmann::ordered_json VolatilityConfig::to_json() const {
    nlohmann::ordered_json j;
    j["lengths"] = lengths;
    j["reps"] = reps;
    j["n_states"] = n_states;
    j["epochs"] = epochs;
    j["eps"] = eps ? nlohmann::ordered_json(*eps) : nlohmann::ordered_json("gelfand-residual");
    j["exponent"] = exponent;
    j["returns"] = raw_returns ? "raw" : "denoised";
    j["seed"] = seed;
    return j;
}

std::vector<std::size_t> window_lengths(std::size_t lo, std::size_t hi, std::size_t step) {
    if (lo > hi || step == 0) throw InvalidInput("volatility: empty window range");
    std::vector<std::size_t> out;
    for (std::size_t L = lo; L <= hi; L += step) out.push_back(L);
    if (out.back() != hi) out.push_back(hi);
    return out;
}

double tv_indicator(const StochasticMatrix& P, const VolatilityConfig& config) {
    const SpectralEstimate est = spectral_radius(build_coupling_matrix(P));
    const double eps = config.eps.value_or(est.residual);
    const double K = static_cast<double>(P.size());
    const double v = 2.0 * (1.0 - 1.0 / K) * std::pow(est.r + eps, config.exponent);
    return std::clamp(v, 0.0, 2.0);
}

namespace {

struct Slot {
    double value = 0.0;
    bool ok = false;
    bool starved = false;
    bool floored = false;
};

}  // namespace

VolatilitySeries tv_volatility(const ReturnSeries& returns, const VolatilityConfig& config) {
    const std::size_t T = returns.values.size();
    if (returns.dates.size() != T) throw DimensionMismatch(returns.dates.size(), T);
    config.validate(T);
    const std::size_t Lmax = config.max_length();
    const std::size_t n_dates = T - Lmax + 1;
    const std::size_t per_date = config.lengths.size() * config.reps;
    std::vector<Slot> slots(n_dates * per_date);

    auto work = [&](std::size_t d) {
        const std::size_t t = Lmax - 1 + d;
        for (std::size_t li = 0; li < config.lengths.size(); ++li) {
            const std::size_t L = config.lengths[li];
            const std::vector<double> window(returns.values.begin() + static_cast<std::ptrdiff_t>(t + 1 - L),
                                             returns.values.begin() + static_cast<std::ptrdiff_t>(t + 1));
            for (std::size_t rep = 0; rep < config.reps; ++rep) {
                Slot& s = slots[d * per_date + li * config.reps + rep];
                GhmmFitConfig fc;
                fc.n_states = config.n_states;
                fc.epochs = config.epochs;
                fc.init = GhmmInit::Random;
                fc.seed = derive_seed(config.seed, t, L, rep);
                try {
                    const GhmmFit fit = fit_baum_welch(window, fc);
                    s.value = tv_indicator(fit.model.transition_matrix(), config);
                    s.ok = std::isfinite(s.value);
                    s.starved = fit.starvation_events > 0;
                    s.floored = fit.emission_floor_hit;
                } catch (const Error&) {
                    s.ok = false;
                }
            }
        }
    };

    unsigned threads = config.threads ? config.threads : std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, n_dates));
    if (threads <= 1) {
        for (std::size_t d = 0; d < n_dates; ++d) work(d);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (unsigned i = 0; i < threads; ++i)
            pool.emplace_back([&] {
                for (std::size_t d; (d = next.fetch_add(1)) < n_dates;) work(d);
            });
        for (auto& th : pool) th.join();
    }

    VolatilitySeries out;
    out.first_index = Lmax - 1;
    const double z = 1.96 / std::sqrt(static_cast<double>(config.reps));
    for (std::size_t d = 0; d < n_dates; ++d) {
        std::vector<double> vals;
        std::size_t starved = 0, floored = 0, failed = 0;
        for (std::size_t k = 0; k < per_date; ++k) {
            const Slot& s = slots[d * per_date + k];
            if (!s.ok) {
                ++failed;
                continue;
            }
            vals.push_back(s.value);
            starved += s.starved;
            floored += s.floored;
        }
        const std::size_t t = Lmax - 1 + d;
        if (vals.empty())
            throw NumericError("volatility: every fit failed for " + format_date(returns.dates[t]));
        const double n = static_cast<double>(vals.size());
        const double mean = std::accumulate(vals.begin(), vals.end(), 0.0) / n;
        double var = 0.0;
        for (double v : vals) var += (v - mean) * (v - mean);
        const double sd = vals.size() > 1 ? std::sqrt(var / (n - 1.0)) : 0.0;
        out.dates.push_back(returns.dates[t]);
        out.tv_mean.push_back(std::clamp(mean, 0.0, 2.0));
        out.tv_std.push_back(sd);
        out.tv_ci_lo.push_back(std::clamp(mean - z * sd, 0.0, 2.0));
        out.tv_ci_hi.push_back(std::clamp(mean + z * sd, 0.0, 2.0));
        out.starved.push_back(starved);
        out.floored.push_back(floored);
        out.failed.push_back(failed);
    }
    return out;
}

namespace {

std::vector<double> min_max(const std::vector<double>& v) {
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    std::vector<double> out(v.size(), 0.0);
    if (*hi > *lo)
        for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - *lo) / (*hi - *lo);
    return out;
}

}  // namespace

CsvTable comparison_table(const ReturnSeries& returns, const VolatilitySeries& tv,
                          const std::vector<double>& garch_sigma) {
    if (garch_sigma.size() != returns.values.size())
        throw DimensionMismatch(returns.values.size(), garch_sigma.size());
    std::map<Date, std::size_t> where;
    for (std::size_t i = 0; i < returns.dates.size(); ++i) where[returns.dates[i]] = i;

    std::vector<std::size_t> ri, ti;
    for (std::size_t k = 0; k < tv.dates.size(); ++k) {
        auto it = where.find(tv.dates[k]);
        if (it == where.end()) continue;
        ri.push_back(it->second);
        ti.push_back(k);
    }
    if (ri.empty()) throw InvalidInput("comparison_table: returns and indicator share no dates");

    std::vector<double> sq, gs, tm, ts;
    for (std::size_t k = 0; k < ri.size(); ++k) {
        const double r = returns.values[ri[k]];
        sq.push_back(r * r);
        gs.push_back(garch_sigma[ri[k]]);
        tm.push_back(tv.tv_mean[ti[k]]);
        ts.push_back(tv.tv_std[ti[k]]);
    }
    const auto sqn = min_max(sq), gsn = min_max(gs), tmn = min_max(tm), tsn = min_max(ts);

    CsvTable t;
    t.header = {"date",          "sq_return",        "garch_sigma",  "tv_mean",     "tv_std",
                "tv_ci_lo",      "tv_ci_hi",         "sq_return_norm", "garch_sigma_norm",
                "tv_mean_norm",  "tv_std_norm",      "starved_fits", "floored_fits", "failed_fits"};
    for (std::size_t k = 0; k < ri.size(); ++k) {
        const std::size_t j = ti[k];
        t.add_row({format_date(tv.dates[j]), format_number(sq[k]), format_number(gs[k]),
                   format_number(tm[k]), format_number(ts[k]), format_number(tv.tv_ci_lo[j]),
                   format_number(tv.tv_ci_hi[j]), format_number(sqn[k]), format_number(gsn[k]),
                   format_number(tmn[k]), format_number(tsn[k]), std::to_string(tv.starved[j]),
                   std::to_string(tv.floored[j]), std::to_string(tv.failed[j])});
    }
    return t;
}

VolatilityRun volatility_pipeline(const PriceSeries& prices, const VolatilityConfig& config,
                                  const WaveletSpec& wavelet) {
    VolatilityRun run;
    run.denoised = denoise(prices, wavelet);
    run.raw = log_returns(prices);
    run.fitted = config.raw_returns ? run.raw : log_returns(run.denoised.prices);
    run.tv = tv_volatility(run.fitted, config);
    run.garch = fit_garch11(run.raw.values);
    run.garch_sigma = garch_conditional_vol(run.garch.model, run.raw.values);
    run.table = comparison_table(run.raw, run.tv, run.garch_sigma);
    return run;
}

PriceSeries two_regime_prices(std::uint64_t seed, std::size_t n_low, std::size_t n_high,
                              double sigma_low, double sigma_high) {
    using namespace std::chrono;
    Rng rng(seed);
    PriceSeries s;
    Date d = sys_days{year{2020} / January / 1};
    auto next_weekday = [](Date x) {
        do {
            x += days{1};
        } while (weekday{x} == Saturday || weekday{x} == Sunday);
        return x;
    };
    double logp = std::log(100.0);
    s.dates.push_back(d);
    s.close.push_back(100.0);
    for (std::size_t t = 0; t < n_low + n_high; ++t) {
        logp += rng.normal(0.0, t < n_low ? sigma_low : sigma_high);
        d = next_weekday(d);
        s.dates.push_back(d);
        s.close.push_back(std::exp(logp));
    }
    return s;
}

RegimeCheck regime_check(const VolatilitySeries& tv, std::size_t break_index, std::size_t n_returns) {
    RegimeCheck c;
    double lo = 0.0, hi = 0.0, late = 0.0;
    std::size_t nlo = 0, nhi = 0, nlate = 0;
    const std::size_t late_start = break_index + (n_returns - break_index) / 2;
    for (std::size_t k = 0; k < tv.tv_mean.size(); ++k) {
        const std::size_t t = tv.first_index + k;
        if (t < break_index) {
            lo += tv.tv_mean[k];
            ++nlo;
        } else {
            hi += tv.tv_mean[k];
            ++nhi;
            if (t >= late_start) {
                late += tv.tv_mean[k];
                ++nlate;
            }
        }
    }
    if (nlo == 0 || nhi == 0 || nlate == 0) throw InvalidInput("regime_check: a regime has no indicator dates");
    c.low_mean = lo / static_cast<double>(nlo);
    c.high_mean = hi / static_cast<double>(nhi);
    c.high_late_mean = late / static_cast<double>(nlate);
    c.elevated = c.high_mean > c.low_mean;
    c.persistent = c.high_late_mean > c.low_mean;
    return c;
}

}  // namespace nmc
