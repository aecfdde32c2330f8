#include "nmc/signal.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include <gsl/gsl_cdf.h>

#include "nmc/csv.hpp"
#include "nmc/error.hpp"

namespace nmc {

Date parse_date(const std::string& s) {
    int y = 0;
    unsigned m = 0, d = 0;
    char tail = 0;
    if (s.size() != 10 || std::sscanf(s.c_str(), "%4d-%2u-%2u%c", &y, &m, &d, &tail) != 3)
        throw InvalidInput("unparseable date '" + s + "' (expected YYYY-MM-DD)");
    std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
    if (!ymd.ok()) throw InvalidInput("invalid calendar date '" + s + "'");
    return Date(ymd);
}

std::string format_date(Date d) {
    std::chrono::year_month_day ymd(d);
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
    return buf;
}

void PriceSeries::validate() const {
    if (dates.size() != close.size()) throw InvalidInput("price series: dates and prices differ in length");
    if (close.size() < 2) throw InvalidInput("price series needs at least 2 rows");
    for (std::size_t i = 0; i < close.size(); ++i) {
        if (!std::isfinite(close[i]) || close[i] <= 0.0)
            throw InvalidInput("price series: nonpositive price on " + format_date(dates[i]));
        if (i > 0 && !(dates[i - 1] < dates[i]))
            throw InvalidInput("price series: dates not strictly increasing at " + format_date(dates[i]));
    }
}

namespace {

PriceSeries prices_from_table(const CsvTable& t, const PriceColumns& columns) {
    if (t.header.empty()) throw InvalidInput("prices: empty file");
    const std::size_t dc = t.column(columns.date);
    const std::size_t pc = t.column(columns.price);
    struct Row {
        Date date;
        double price;
    };
    std::vector<Row> rows;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        const auto& r = t.rows[i];
        const std::string where = "prices line " + std::to_string(i + 2) + ": ";
        Date d;
        try {
            d = parse_date(r[dc]);
        } catch (const InvalidInput& e) {
            throw InvalidInput(where + e.what());
        }
        double v = 0.0;
        std::size_t used = 0;
        try {
            v = std::stod(r[pc], &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != r[pc].size())
            throw InvalidInput(where + "unparseable price '" + r[pc] + "'");
        if (!std::isfinite(v) || v <= 0.0) throw InvalidInput(where + "nonpositive price " + r[pc]);
        rows.push_back({d, v});
    }
    std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.date < b.date; });
    PriceSeries s;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (i > 0 && rows[i].date == rows[i - 1].date)
            throw InvalidInput("prices: duplicate date " + format_date(rows[i].date));
        s.dates.push_back(rows[i].date);
        s.close.push_back(rows[i].price);
    }
    s.validate();
    return s;
}

}  // namespace

PriceSeries parse_prices(const std::string& csv_text, const PriceColumns& columns) {
    return prices_from_table(parse_csv(csv_text), columns);
}

PriceSeries load_prices(const std::string& path, const PriceColumns& columns) {
    return prices_from_table(read_csv(path), columns);
}

const std::vector<double>& db8_filter() {
    static const std::vector<double> h{
        0.05441584224310401,    0.31287159091429995,    0.6756307362972898,
        0.5853546836542067,     -0.015829105256349306,  -0.2840155429615469,
        0.0004724845739132828,  0.12874742662047847,    -0.017369301001807547,
        -0.044088253930794755,  0.013981027917398282,   0.008746094047405777,
        -0.004870352993451574,  -0.00039174037337694705, 0.0006754494064505693,
        -0.00011747678412476953};
    return h;
}

const std::vector<double>& wavelet_filter(const std::string& family) {
    if (family == "db8" || family == "db8-16" || family == "16" || family == "daubechies8")
        return db8_filter();
    throw InvalidInput("unknown wavelet family '" + family + "'");
}

std::size_t default_levels(std::size_t n) {
    if (n < 30) return 1;
    const auto lv = static_cast<std::size_t>(std::floor(std::log2(static_cast<double>(n) / 15.0)));
    return std::clamp<std::size_t>(lv, 1, 4);
}

double WaveletPyramid::energy() const {
    double e = 0.0;
    for (const auto& d : details)
        for (double v : d) e += v * v;
    for (double v : approximation) e += v * v;
    for (const auto& c : carry)
        if (c) e += *c * *c;
    return e;
}

namespace {

std::vector<double> highpass(const std::vector<double>& h) {
    const std::size_t L = h.size();
    std::vector<double> g(L);
    for (std::size_t n = 0; n < L; ++n) g[n] = ((n % 2) ? -1.0 : 1.0) * h[L - 1 - n];
    return g;
}

void analyze(const std::vector<double>& y, const std::vector<double>& h, const std::vector<double>& g,
             std::vector<double>& a, std::vector<double>& d) {
    const std::size_t m = y.size(), half = m / 2, L = h.size();
    a.assign(half, 0.0);
    d.assign(half, 0.0);
    for (std::size_t k = 0; k < half; ++k) {
        double sa = 0.0, sd = 0.0;
        for (std::size_t n = 0; n < L; ++n) {
            const double v = y[(2 * k + n) % m];
            sa += h[n] * v;
            sd += g[n] * v;
        }
        a[k] = sa;
        d[k] = sd;
    }
}

std::vector<double> synthesize(const std::vector<double>& a, const std::vector<double>& d,
                               const std::vector<double>& h, const std::vector<double>& g) {
    const std::size_t half = a.size(), m = 2 * half, L = h.size();
    std::vector<double> y(m, 0.0);
    for (std::size_t k = 0; k < half; ++k)
        for (std::size_t n = 0; n < L; ++n) y[(2 * k + n) % m] += h[n] * a[k] + g[n] * d[k];
    return y;
}

double soft(double v, double t) {
    if (v > t) return v - t;
    if (v < -t) return v + t;
    return 0.0;
}

}  // namespace

WaveletPyramid dwt(const std::vector<double>& x, const WaveletSpec& spec) {
    const auto& h = wavelet_filter(spec.family);
    const auto g = highpass(h);
    const std::size_t N = x.size();
    if (N < 2) throw InvalidInput("dwt: need at least 2 samples");
    WaveletPyramid pyr;
    pyr.length = N;
    std::size_t levels = spec.levels.value_or(default_levels(N));
    if (levels == 0) throw InvalidInput("dwt: levels must be >= 1");

    std::vector<double> y(2 * N);
    const double s = 1.0 / std::sqrt(2.0);
    for (std::size_t i = 0; i < N; ++i) y[i] = y[2 * N - 1 - i] = x[i] * s;

    for (std::size_t j = 0; j < levels; ++j) {
        std::optional<double> carry;
        std::vector<double> band = y;
        if (band.size() % 2) {
            carry = band.back();
            band.pop_back();
        }
        if (band.size() < h.size()) {
            pyr.warnings.push_back("dwt: signal too short for level " + std::to_string(j + 1) +
                                   "; using " + std::to_string(j) + " levels");
            break;
        }
        std::vector<double> a, d;
        analyze(band, h, g, a, d);
        pyr.details.push_back(std::move(d));
        pyr.carry.push_back(carry);
        y = std::move(a);
    }
    if (pyr.details.empty()) throw InvalidInput("dwt: signal shorter than the filter");
    pyr.approximation = std::move(y);
    return pyr;
}

std::vector<double> idwt(const WaveletPyramid& pyr, const WaveletSpec& spec) {
    const auto& h = wavelet_filter(spec.family);
    const auto g = highpass(h);
    std::vector<double> y = pyr.approximation;
    for (std::size_t j = pyr.details.size(); j-- > 0;) {
        if (pyr.details[j].size() != y.size()) throw InvalidInput("idwt: inconsistent band sizes");
        y = synthesize(y, pyr.details[j], h, g);
        if (pyr.carry[j]) y.push_back(*pyr.carry[j]);
    }
    const std::size_t N = pyr.length;
    if (y.size() != 2 * N) throw InvalidInput("idwt: pyramid does not match its recorded length");
    // Adjoint of the mirror-and-scale step (the least-squares inverse).
    std::vector<double> x(N);
    const double s = 1.0 / std::sqrt(2.0);
    for (std::size_t i = 0; i < N; ++i) x[i] = (y[i] + y[2 * N - 1 - i]) * s;
    return x;
}

namespace {

double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    double m = v[mid];
    if (v.size() % 2 == 0) {
        m = 0.5 * (m + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)));
    }
    return m;
}

}  // namespace

std::vector<double> denoise_values(const std::vector<double>& x, const WaveletSpec& spec,
                                   double* threshold_out, double* sigma_out) {
    WaveletPyramid pyr = dwt(x, spec);
    double sigma = 0.0, thr = 0.0;
    if (spec.threshold == Threshold::Soft) {
        std::vector<double> mags;
        for (double v : pyr.details.front()) mags.push_back(std::abs(v));
        sigma = median(std::move(mags)) / 0.6745;
        thr = sigma * std::sqrt(2.0 * std::log(static_cast<double>(x.size())));
        for (auto& band : pyr.details)
            for (double& v : band) v = soft(v, thr);
    }
    if (threshold_out) *threshold_out = thr;
    if (sigma_out) *sigma_out = sigma;
    return idwt(pyr, spec);
}

Denoised denoise(const PriceSeries& prices, const WaveletSpec& spec) {
    prices.validate();
    Denoised out;
    std::vector<double> clean = denoise_values(prices.close, spec, &out.threshold, &out.sigma);
    out.noise.resize(clean.size());
    for (std::size_t i = 0; i < clean.size(); ++i) out.noise[i] = prices.close[i] - clean[i];
    out.prices.dates = prices.dates;
    out.prices.close = std::move(clean);
    if (auto lv = spec.levels; lv && *lv > dwt(prices.close, spec).details.size())
        out.warnings.push_back("denoise: decomposition depth reduced");
    for (std::size_t i = 0; i < out.prices.close.size(); ++i)
        if (!(out.prices.close[i] > 0.0))
            throw InvalidInput("denoise: reconstructed price is nonpositive on " +
                               format_date(out.prices.dates[i]));
    return out;
}

ReturnSeries log_returns(const PriceSeries& prices) {
    prices.validate();
    ReturnSeries r;
    for (std::size_t t = 1; t < prices.close.size(); ++t) {
        r.dates.push_back(prices.dates[t]);
        r.values.push_back(std::log(prices.close[t]) - std::log(prices.close[t - 1]));
    }
    return r;
}

DescriptiveStats descriptive_stats(const std::vector<double>& x) {
    const std::size_t n = x.size();
    if (n < 4) throw InvalidInput("descriptive_stats: need at least 4 values");
    const double nn = static_cast<double>(n);
    DescriptiveStats s;
    s.mean = std::accumulate(x.begin(), x.end(), 0.0) / nn;
    double m2 = 0.0, m3 = 0.0, m4 = 0.0, scale = 0.0;
    for (double v : x) {
        const double d = v - s.mean;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
        scale = std::max(scale, std::abs(v));
    }
    s.std = std::sqrt(m2 / (nn - 1.0));
    m2 /= nn;
    m3 /= nn;
    m4 /= nn;
    // Round-off level spread (e.g. a denoised constant series) counts as zero.
    if (std::sqrt(m2) <= 1e-12 * std::max(1.0, scale)) {
        s.degenerate = true;
        s.std = 0.0;
        s.skewness = std::nan("");
        s.kurtosis = std::nan("");
        return s;
    }
    s.skewness = m3 / std::pow(m2, 1.5);
    s.kurtosis = m4 / (m2 * m2) - 3.0;
    return s;
}

std::string significance_stars(double p) {
    if (p < 0.005) return "***";
    if (p < 0.01) return "**";
    if (p < 0.05) return "*";
    return "";
}

double kolmogorov_q(double lambda) {
    if (lambda <= 0.0) return 1.0;
    if (lambda < 0.2) return 1.0;  // the alternating series is 1 to double precision here
    double sum = 0.0, sign = 1.0;
    for (int k = 1; k <= 100; ++k) {
        const double term = std::exp(-2.0 * k * k * lambda * lambda);
        sum += sign * term;
        if (term < 1e-17) break;
        sign = -sign;
    }
    return std::clamp(2.0 * sum, 0.0, 1.0);
}

TestResult ks_test(const std::vector<double>& x) {
    if (x.size() < 8) throw InvalidInput("ks_test: need at least 8 values");
    const DescriptiveStats st = descriptive_stats(x);
    if (st.degenerate) throw InvalidInput("ks_test: zero variance");
    std::vector<double> v = x;
    std::sort(v.begin(), v.end());
    const double n = static_cast<double>(v.size());
    double D = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double F = 0.5 * std::erfc(-(v[i] - st.mean) / (st.std * std::sqrt(2.0)));
        D = std::max({D, (static_cast<double>(i) + 1.0) / n - F, F - static_cast<double>(i) / n});
    }
    TestResult r;
    r.statistic = std::clamp(D, 0.0, 1.0);
    const double sn = std::sqrt(n);
    r.p_value = kolmogorov_q((sn + 0.12 + 0.11 / sn) * D);
    r.stars = significance_stars(r.p_value);
    return r;
}

TestResult ljung_box(const std::vector<double>& x, std::size_t max_lag) {
    const std::size_t n = x.size();
    if (max_lag < 1) throw InvalidInput("ljung_box: max_lag must be >= 1");
    if (n <= max_lag + 1) throw InvalidInput("ljung_box: series too short for the lag count");
    const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
    double denom = 0.0;
    for (double v : x) denom += (v - mean) * (v - mean);
    if (!(denom > 0.0)) throw InvalidInput("ljung_box: zero variance");
    const double nn = static_cast<double>(n);
    double q = 0.0;
    for (std::size_t k = 1; k <= max_lag; ++k) {
        double num = 0.0;
        for (std::size_t t = k; t < n; ++t) num += (x[t] - mean) * (x[t - k] - mean);
        const double rho = num / denom;
        q += rho * rho / (nn - static_cast<double>(k));
    }
    TestResult r;
    r.statistic = nn * (nn + 2.0) * q;
    r.p_value = gsl_cdf_chisq_Q(r.statistic, static_cast<double>(max_lag));
    r.stars = significance_stars(r.p_value);
    return r;
}

}  // namespace nmc
