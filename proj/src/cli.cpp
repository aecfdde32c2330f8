#include "nmc/cli.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "nmc/bounds.hpp"
#include "nmc/chain.hpp"
#include "nmc/coupling.hpp"
#include "nmc/csv.hpp"
#include "nmc/error.hpp"
#include "nmc/experiments.hpp"
#include "nmc/garch.hpp"
#include "nmc/signal.hpp"
#include "nmc/volatility.hpp"

namespace nmc {

namespace {

using ojson = nlohmann::ordered_json;

constexpr std::uint64_t kDefaultSeed = 42;

struct ModelArgs {
    std::string model_path;
    int example = 0;
    double kappa = 0.1;
    std::string variant = "row";

    void add(CLI::App* cmd) {
        auto* m = cmd->add_option("--model", model_path, "Kernel JSON file");
        auto* e = cmd->add_option("--example", example, "Built-in example (1 or 2)")->check(CLI::IsMember({1, 2}));
        m->excludes(e);
        cmd->add_option("--kappa", kappa, "Nonlinearity strength for --example, in [0, 0.25]")
            ->capture_default_str();
        cmd->add_option("--variant", variant, "Example 2 reading: row or printed")
            ->check(CLI::IsMember({"row", "printed"}))
            ->capture_default_str();
    }

    PolynomialKernel load() const {
        if (model_path.empty() && example == 0) throw InvalidInput("give --model PATH or --example {1,2}");
        PolynomialKernel K = model_path.empty()
                                 ? builtin_example(example, kappa,
                                                   variant == "printed" ? Example2Variant::Printed
                                                                        : Example2Variant::RowConsistent)
                                 : load_kernel_json(model_path);
        const KernelValidation v = validate_kernel(K);
        if (!v.pass) {
            std::ostringstream os;
            os << "kernel is not stochastic on the simplex: worst entry " << v.worst_negative
               << ", worst row-sum deviation " << v.worst_row_deviation << " at mu = [";
            for (std::size_t i = 0; i < v.worst_mu.size(); ++i) os << (i ? ", " : "") << v.worst_mu[i];
            os << "]";
            throw KernelInvalid(os.str());
        }
        return K;
    }

    void describe(ojson& j) const {
        if (!model_path.empty()) {
            j["model"] = model_path;
        } else {
            j["example"] = example;
            j["kappa"] = kappa;
            if (example == 2) j["variant"] = variant;
        }
    }
};

std::vector<double> parse_vector(const std::string& s) {
    std::vector<double> v;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t used = 0;
        double x = 0.0;
        try {
            x = std::stod(item, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0) throw InvalidInput("cannot parse '" + item + "' as a number");
        v.push_back(x);
    }
    return v;
}

/// "uniform", "vertex:i" (0-based) or a comma-separated probability vector.
Distribution parse_distribution(const std::string& s, std::size_t p) {
    if (s == "uniform") return Distribution::uniform(p);
    if (s.rfind("vertex:", 0) == 0) {
        const auto i = static_cast<std::size_t>(std::stoul(s.substr(7)));
        if (i >= p) throw InvalidInput("vertex index out of range: " + s);
        return Distribution::vertex(p, i);
    }
    std::vector<double> v = parse_vector(s);
    if (v.size() != p) throw DimensionMismatch(p, v.size());
    return Distribution(std::move(v));
}

std::string fixed(double v, int digits = 4) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(digits) << v;
    return os.str();
}

void echo_config(std::ostream& err, const ojson& j) { err << j.dump() << "\n"; }

int cmd_bounds(const ModelArgs& model, std::size_t steps, std::uint64_t seed, std::size_t samples,
               std::optional<double> eps, bool delta_zero, const std::string& csv_path,
               const std::string& json_path, std::ostream& out, std::ostream& err) {
    ojson cfg{{"command", "bounds"}};
    model.describe(cfg);
    cfg["steps"] = steps;
    cfg["seed"] = seed;
    cfg["samples"] = samples;
    if (eps) cfg["eps"] = *eps;
    cfg["delta_zero"] = delta_zero;
    cfg["out_csv"] = csv_path;
    cfg["out_json"] = json_path;
    echo_config(err, cfg);

    const PolynomialKernel K = model.load();
    ReportConfig rc;
    rc.sampling = {samples, seed};
    rc.eps_override = eps;
    rc.force_delta_zero = delta_zero;
    const BoundReport report = full_report(K, steps, rc);
    write_file_atomic(csv_path, report.to_csv());
    write_file_atomic(json_path, report.to_json());

    const std::size_t shown = std::min<std::size_t>(4, steps);
    out << std::left << std::setw(16) << "curve";
    for (std::size_t n = 1; n <= shown; ++n) out << std::setw(10) << ("n=" + std::to_string(n));
    out << "\n";
    for (const auto& [name, c] : report.curves) {
        out << std::setw(16) << name;
        for (std::size_t n = 1; n <= shown; ++n) out << std::setw(10) << fixed(c.at(n));
        out << "\n";
    }
    out << "r(M) = " << fixed(report.r, 9) << "  eps = " << report.eps << "  ||M||_1 = " << fixed(report.one_norm)
        << "  gamma = " << fixed(report.gamma, 6) << "  delta = " << report.delta << "\n";
    return kExitOk;
}

int cmd_simulate(const ModelArgs& model, std::size_t trials, std::size_t steps, std::uint64_t seed,
                 const std::string& path, std::ostream& out, std::ostream& err) {
    ojson cfg{{"command", "simulate"}};
    model.describe(cfg);
    cfg["trials"] = trials;
    cfg["steps"] = steps;
    cfg["seed"] = seed;
    cfg["out"] = path;
    echo_config(err, cfg);
    if (trials < 1) throw InvalidInput("--trials must be >= 1");
    if (steps < 1) throw InvalidInput("--steps must be >= 1");

    const PolynomialKernel K = model.load();
    CompareConfig cc;
    cc.trials = trials;
    cc.report.sampling.seed = seed;
    const CsvTable table = compare_bounds(K, steps, cc, seed);
    export_report(table, path);
    out << "wrote " << table.rows.size() << " rows to " << path << "\n";
    return kExitOk;
}

int cmd_coupling(const ModelArgs& model, std::size_t samples, std::size_t steps, std::uint64_t seed,
                 const std::string& mu0_spec, const std::string& nu0_spec, const std::string& path,
                 std::ostream& out, std::ostream& err) {
    ojson cfg{{"command", "coupling-check"}};
    model.describe(cfg);
    cfg["samples"] = samples;
    cfg["steps"] = steps;
    cfg["seed"] = seed;
    cfg["mu0"] = mu0_spec;
    cfg["nu0"] = nu0_spec;
    cfg["out"] = path;
    echo_config(err, cfg);

    const PolynomialKernel K = model.load();
    const StochasticMatrix P = K.linear_part();
    const Distribution mu0 = parse_distribution(mu0_spec, P.size());
    const Distribution nu0 = parse_distribution(nu0_spec, P.size());
    const LemmaReport rep = lemma_check(P, mu0, nu0, steps, samples, seed);
    write_file_atomic(path, lemma_report_csv(rep));

    out << "t  tv1     tv2     q_exact  q_empirical  meet_exact\n";
    for (const auto& r : rep.rows)
        out << r.t << "  " << fixed(r.tv1) << "  " << fixed(r.tv2) << "  " << fixed(r.q_exact) << "   "
            << fixed(r.q_empirical) << "       " << fixed(r.meet_exact) << "\n";
    if (rep.underpowered) {
        err << "warning: underpowered (" << samples << " samples < 1000); no verdict\n";
        out << "verdict: underpowered\n";
        return kExitOk;
    }
    out << "marginals: " << (rep.marginals_pass ? "pass" : "FAIL") << "\n";
    out << "meeting frequency <= overlap: " << (rep.inequality_pass ? "pass" : "FAIL") << "\n";
    out << "meeting frequency matches the coupled chain: " << (rep.markov_pass ? "pass" : "FAIL") << "\n";
    if (!rep.equality_pass)
        err << "warning: empirical meeting frequency falls short of the overlap by up to "
            << fixed(rep.max_equality_gap) << "\n";
    return rep.marginals_pass && rep.inequality_pass ? kExitOk : kExitStatistical;
}

void add_stats_row(CsvTable& t, const std::string& label, const std::vector<double>& x) {
    const DescriptiveStats st = descriptive_stats(x);
    std::vector<std::string> row{label, std::to_string(x.size()), format_number(st.mean), format_number(st.std),
                                 format_number(st.skewness), format_number(st.kurtosis)};
    if (st.degenerate) {
        for (int i = 0; i < 6; ++i) row.push_back(i % 3 == 2 ? "" : "nan");
    } else {
        const TestResult ks = ks_test(x);
        const TestResult lb = ljung_box(x, 12);
        for (const TestResult* r : {&ks, &lb}) {
            row.push_back(format_number(r->statistic));
            row.push_back(format_number(r->p_value));
            row.push_back(r->stars);
        }
    }
    row.push_back(st.degenerate ? "1" : "0");
    t.add_row(std::move(row));
}

int cmd_stats(const std::string& prices_path, const PriceColumns& cols, std::string label,
              std::optional<std::size_t> levels, const std::string& path, std::ostream& out, std::ostream& err) {
    if (label.empty()) label = std::filesystem::path(prices_path).stem().string();
    ojson cfg{{"command", "stats"}, {"prices", prices_path}, {"date_column", cols.date},
              {"price_column", cols.price}, {"label", label}};
    if (levels) cfg["levels"] = *levels;
    cfg["out"] = path;
    cfg["ks_parameters"] = "estimated";
    cfg["returns"] = "log-difference";
    echo_config(err, cfg);

    const PriceSeries prices = load_prices(prices_path, cols);
    WaveletSpec spec;
    spec.levels = levels;
    const Denoised dn = denoise(prices, spec);
    for (const auto& w : dn.warnings) err << "warning: " << w << "\n";

    CsvTable t;
    t.header = {"series", "n", "mean", "std", "skewness", "kurtosis", "ks_stat", "ks_p", "ks_sig",
                "lb_stat", "lb_p", "lb_sig", "degenerate"};
    add_stats_row(t, label, log_returns(prices).values);
    add_stats_row(t, label + "*", log_returns(dn.prices).values);
    add_stats_row(t, "noise", dn.noise);
    write_file_atomic(path, t.to_string());
    out << t.to_string();
    return kExitOk;
}

struct VolArgs {
    std::string prices_path;
    PriceColumns cols;
    bool fixture = false;
    std::size_t window_min = 60, window_max = 80, window_step = 5;
    VolatilityConfig config;
    std::optional<double> eps;
    std::optional<std::size_t> levels;
    bool self_check = false;
    std::string out = "volatility.csv";
    std::string garch_out = "garch.csv";
    std::string meta_out;
};

int cmd_volatility(VolArgs a, std::uint64_t seed, std::ostream& out, std::ostream& err) {
    a.config.lengths = window_lengths(a.window_min, a.window_max, a.window_step);
    a.config.seed = seed;
    a.config.eps = a.eps;
    if (a.self_check) a.fixture = true;
    if (a.meta_out.empty()) a.meta_out = a.out + ".meta.json";

    ojson cfg{{"command", "volatility"}};
    if (a.fixture)
        cfg["prices"] = "two-regime fixture";
    else
        cfg["prices"] = a.prices_path;
    const ojson vc = a.config.to_json();
    for (const auto& [k, v] : vc.items()) cfg[k] = v;
    if (a.levels) cfg["wavelet_levels"] = *a.levels;
    cfg["self_check"] = a.self_check;
    cfg["out"] = a.out;
    cfg["garch_out"] = a.garch_out;
    cfg["meta_out"] = a.meta_out;
    echo_config(err, cfg);

    if (!a.fixture && a.prices_path.empty()) throw InvalidInput("give --prices PATH, --fixture or --self-check");
    const PriceSeries prices = a.fixture ? two_regime_prices(seed) : load_prices(a.prices_path, a.cols);
    WaveletSpec spec;
    spec.levels = a.levels;
    const VolatilityRun run = volatility_pipeline(prices, a.config, spec);
    for (const auto& w : run.denoised.warnings) err << "warning: " << w << "\n";

    ojson meta;
    meta["config"] = cfg;
    meta["indicator"] = "2(1 - 1/K) (r(M) + eps)^exponent, clamped to [0, 2]";
    meta["tv_std"] = "sample standard deviation over window lengths x reps";
    meta["tv_ci"] = "tv_mean -/+ 1.96 tv_std / sqrt(reps)";
    meta["normalization"] = "*_norm columns: (x - min) / (max - min) over the rows in this file; 0 when constant";
    meta["garch"] = {{"fitted_on", "raw log returns"},
                     {"boundary", run.garch.boundary},
                     {"std_errors", run.garch.se_available ? "outer product of gradients" : "unavailable"}};
    std::size_t starved = 0, failed = 0;
    for (std::size_t k = 0; k < run.tv.dates.size(); ++k) {
        starved += run.tv.starved[k] > 0;
        failed += run.tv.failed[k] > 0;
    }
    meta["dates_with_starved_fits"] = starved;
    meta["dates_with_failed_fits"] = failed;

    int code = kExitOk;
    if (a.self_check) {
        const std::size_t n_low = 400;
        const RegimeCheck rc = regime_check(run.tv, n_low, run.fitted.values.size());
        meta["self_check"] = {{"low_mean", rc.low_mean},
                              {"high_mean", rc.high_mean},
                              {"high_late_mean", rc.high_late_mean},
                              {"elevated", rc.elevated},
                              {"persistent", rc.persistent}};
        out << "self-check: low-regime mean " << fixed(rc.low_mean) << ", high-regime mean " << fixed(rc.high_mean)
            << ", late high-regime mean " << fixed(rc.high_late_mean) << " -> "
            << (rc.elevated && rc.persistent ? "pass" : "FAIL") << "\n";
        if (!(rc.elevated && rc.persistent)) code = kExitStatistical;
    }

    write_file_atomic(a.out, run.table.to_string());
    const CsvTable gt = garch_table(run.garch);
    write_file_atomic(a.garch_out, gt.to_string());
    write_file_atomic(a.meta_out, meta.dump(2) + "\n");

    out << "GARCH(1,1) on raw log returns (log-likelihood " << fixed(run.garch.log_likelihood, 2) << ")\n";
    out << std::left << std::setw(10) << "" << std::setw(14) << "coef" << std::setw(14) << "std err" << std::setw(10)
        << "t" << "\n";
    for (const auto& row : gt.rows) {
        auto num = [](const std::string& s) { return std::stod(s); };
        char buf[96];
        std::snprintf(buf, sizeof buf, "%-10s%-14.6g%-14.6g%-10.3f\n", row[0].c_str(), num(row[1]), num(row[2]),
                      num(row[3]));
        out << buf;
    }
    if (run.garch.boundary) err << "warning: GARCH persistence alpha1 + beta1 reached the boundary\n";
    out << "wrote " << run.table.rows.size() << " dates to " << a.out << "\n";
    return code;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Convergence bounds for finite-state nonlinear Markov chains and the TV-Volatility indicator"};
    app.require_subcommand(1);
    std::uint64_t seed = kDefaultSeed;

    ModelArgs bmodel;
    std::size_t b_steps = 10, b_samples = 10'000;
    std::optional<double> b_eps;
    bool b_delta_zero = false;
    std::string b_csv = "bounds.csv", b_json = "coefficients.json";
    auto* bounds = app.add_subcommand("bounds", "Coefficients and bound curves for a kernel");
    bmodel.add(bounds);
    bounds->add_option("--steps", b_steps, "Largest n in the curves")->capture_default_str();
    bounds->add_option("--samples", b_samples, "Monte-Carlo draws for the sampled coefficients")->capture_default_str();
    bounds->add_option("--eps", b_eps, "Replace the Gelfand residual");
    bounds->add_flag("--delta-zero", b_delta_zero, "Take delta = 0");
    bounds->add_option("--seed", seed, "Random seed")->capture_default_str();
    bounds->add_option("--out", b_csv, "Bound curves CSV")->capture_default_str();
    bounds->add_option("--coefficients", b_json, "Coefficients JSON")->capture_default_str();

    ModelArgs smodel;
    std::size_t s_trials = 1000, s_steps = 30;
    std::string s_out = "simulate.csv";
    auto* simulate = app.add_subcommand("simulate", "Monte-Carlo TV envelope against the bounds");
    smodel.add(simulate);
    simulate->add_option("--trials", s_trials, "Random initial distributions")->capture_default_str();
    simulate->add_option("--steps", s_steps, "Largest n")->capture_default_str();
    simulate->add_option("--seed", seed, "Random seed")->capture_default_str();
    simulate->add_option("--out", s_out, "Comparison CSV")->capture_default_str();

    ModelArgs cmodel;
    std::size_t c_samples = 100'000, c_steps = 5;
    std::string c_mu0 = "vertex:0", c_nu0 = "uniform", c_out = "coupling.csv";
    auto* coupling = app.add_subcommand("coupling-check", "Statistical check of the coupled chain (linear part)");
    cmodel.add(coupling);
    coupling->add_option("--samples", c_samples, "Coupled paths")->capture_default_str();
    coupling->add_option("--steps", c_steps, "Path length")->capture_default_str();
    coupling->add_option("--mu0", c_mu0, "uniform, vertex:i or comma-separated probabilities")->capture_default_str();
    coupling->add_option("--nu0", c_nu0, "Same forms as --mu0")->capture_default_str();
    coupling->add_option("--seed", seed, "Random seed")->capture_default_str();
    coupling->add_option("--out", c_out, "Report CSV")->capture_default_str();

    std::string st_prices, st_label, st_out = "stats.csv";
    PriceColumns st_cols;
    std::optional<std::size_t> st_levels;
    auto* stats = app.add_subcommand("stats", "Descriptive statistics of raw, denoised and noise series");
    stats->add_option("--prices", st_prices, "Prices CSV")->required();
    stats->add_option("--date-column", st_cols.date, "Date column")->capture_default_str();
    stats->add_option("--price-column", st_cols.price, "Price column")->capture_default_str();
    stats->add_option("--label", st_label, "Row label (default: file stem)");
    stats->add_option("--levels", st_levels, "Wavelet levels");
    stats->add_option("--out", st_out, "Statistics CSV")->capture_default_str();

    VolArgs va;
    auto* vol = app.add_subcommand("volatility", "TV-Volatility indicator with a GARCH(1,1) baseline");
    vol->add_option("--prices", va.prices_path, "Prices CSV");
    vol->add_option("--date-column", va.cols.date, "Date column")->capture_default_str();
    vol->add_option("--price-column", va.cols.price, "Price column")->capture_default_str();
    vol->add_flag("--fixture", va.fixture, "Use the seeded two-regime synthetic series");
    vol->add_option("--window-min", va.window_min, "Shortest window")->capture_default_str();
    vol->add_option("--window-max", va.window_max, "Longest window")->capture_default_str();
    vol->add_option("--window-step", va.window_step, "Window length step")->capture_default_str();
    vol->add_option("--reps", va.config.reps, "Random GHMM starts per window")->capture_default_str();
    vol->add_option("--states", va.config.n_states, "Hidden states")->capture_default_str();
    vol->add_option("--epochs", va.config.epochs, "Baum-Welch iterations")->capture_default_str();
    vol->add_option("--eps", va.eps, "Replace the Gelfand residual");
    vol->add_option("--exponent", va.config.exponent, "n in (r + eps)^n")->capture_default_str();
    vol->add_flag("--raw-returns", va.config.raw_returns, "Fit the GHMM on raw returns");
    vol->add_option("--levels", va.levels, "Wavelet levels");
    vol->add_option("--threads", va.config.threads, "Worker threads (0: all cores)")->capture_default_str();
    vol->add_flag("--self-check", va.self_check, "Run on the fixture and check regime ordering");
    vol->add_option("--seed", seed, "Random seed")->capture_default_str();
    vol->add_option("--out", va.out, "Comparison CSV")->capture_default_str();
    vol->add_option("--garch-out", va.garch_out, "GARCH coefficient CSV")->capture_default_str();
    vol->add_option("--meta-out", va.meta_out, "Metadata JSON (default: <out>.meta.json)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitInput;
    }

    try {
        if (*bounds) return cmd_bounds(bmodel, b_steps, seed, b_samples, b_eps, b_delta_zero, b_csv, b_json, out, err);
        if (*simulate) return cmd_simulate(smodel, s_trials, s_steps, seed, s_out, out, err);
        if (*coupling) return cmd_coupling(cmodel, c_samples, c_steps, seed, c_mu0, c_nu0, c_out, out, err);
        if (*stats) return cmd_stats(st_prices, st_cols, st_label, st_levels, st_out, out, err);
        if (*vol) return cmd_volatility(va, seed, out, err);
    } catch (const Nonconvergence& e) {
        err << "error: " << e.what() << " (residual " << e.residual << ")\n";
        return kExitNonconvergence;
    } catch (const NumericError& e) {
        err << "error: " << e.what() << "\n";
        return kExitNonconvergence;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kExitInput;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitInput;
    }
    return kExitInput;
}

}  // namespace nmc
