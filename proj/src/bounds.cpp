#include "nmc/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <nlohmann/json.hpp>

#include "nmc/csv.hpp"

namespace nmc {

namespace {

double row_overlap(const Eigen::MatrixXd& A, Eigen::Index x, const Eigen::MatrixXd& B, Eigen::Index y) {
    return A.row(x).cwiseMin(B.row(y)).sum();
}

// P_mu^(k) = P_{mu_0} P_{mu_1} ... P_{mu_{k-1}} along the flow from mu.
Eigen::MatrixXd kstep_product(const PolynomialKernel& K, const Distribution& mu, std::size_t k) {
    auto flow = propagate(K, mu, k - 1);
    Eigen::MatrixXd prod = evaluate_kernel(K, flow[0]).matrix();
    for (std::size_t i = 1; i < k; ++i) prod = prod * evaluate_kernel(K, flow[i]).matrix();
    return prod;
}

std::vector<Distribution> anchor_points(std::size_t p) {
    std::vector<Distribution> pts;
    for (std::size_t i = 0; i < p; ++i) pts.push_back(Distribution::vertex(p, i));
    pts.push_back(Distribution::uniform(p));
    return pts;
}

double clamp2(double v) { return std::isnan(v) ? 2.0 : std::clamp(v, 0.0, 2.0); }

}  // namespace

double md_alpha(const StochasticMatrix& P, std::size_t k) {
    if (k == 0) throw InvalidInput("md_alpha: k must be >= 1");
    Eigen::MatrixXd Pk = P.matrix();
    for (std::size_t i = 1; i < k; ++i) Pk = Pk * P.matrix();
    double alpha = 1.0;
    for (Eigen::Index x = 0; x < Pk.rows(); ++x)
        for (Eigen::Index y = x + 1; y < Pk.rows(); ++y) alpha = std::min(alpha, row_overlap(Pk, x, Pk, y));
    return std::clamp(alpha, 0.0, 1.0);
}

Estimate md_alpha(const PolynomialKernel& K, std::size_t k, const SamplingConfig& sampling) {
    if (k == 0) throw InvalidInput("md_alpha: k must be >= 1");
    const std::size_t p = K.size();
    std::vector<Eigen::MatrixXd> products;
    for (const auto& mu : anchor_points(p)) products.push_back(kstep_product(K, mu, k));
    Rng rng(sampling.seed);
    for (std::size_t i = 0; i < sampling.samples; ++i)
        products.push_back(kstep_product(K, random_distribution(p, rng), k));

    double alpha = 1.0;
    auto scan = [&](const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
        for (Eigen::Index x = 0; x < A.rows(); ++x)
            for (Eigen::Index y = 0; y < B.rows(); ++y) {
                if (&A == &B && x == y) continue;
                alpha = std::min(alpha, row_overlap(A, x, B, y));
            }
    };
    // All anchor pairs, then consecutive sampled pairs.
    const std::size_t anchors = p + 1;
    for (std::size_t a = 0; a < anchors; ++a)
        for (std::size_t b = a; b < anchors; ++b) scan(products[a], products[b]);
    for (std::size_t i = anchors; i + 1 < products.size(); i += 2) {
        scan(products[i], products[i]);
        scan(products[i], products[i + 1]);
    }
    return {std::clamp(alpha, 0.0, 1.0), sampling.samples + anchors, "upper estimate of inf"};
}

Estimate lipschitz_lambda(const PolynomialKernel& K, std::size_t k, const SamplingConfig& sampling) {
    if (k == 0) throw InvalidInput("lipschitz_lambda: k must be >= 1");
    if (K.degree() == 1) return {0.0, 0, "exact (no distribution dependence)"};
    const std::size_t p = K.size();
    double best = 0.0;
    auto consider = [&](const Distribution& mu, const Distribution& nu) {
        const double d = tv_distance(mu, nu);
        if (d <= 1e-12) return;
        Eigen::MatrixXd A = kstep_product(K, mu, k);
        Eigen::MatrixXd B = kstep_product(K, nu, k);
        for (Eigen::Index x = 0; x < A.rows(); ++x)
            best = std::max(best, (A.row(x) - B.row(x)).cwiseAbs().sum() / d);
    };
    auto anchors = anchor_points(p);
    for (std::size_t a = 0; a < anchors.size(); ++a)
        for (std::size_t b = a + 1; b < anchors.size(); ++b) consider(anchors[a], anchors[b]);
    Rng rng(sampling.seed);
    for (std::size_t i = 0; i < sampling.samples; ++i) {
        Distribution mu = random_distribution(p, rng);
        Distribution nu = random_distribution(p, rng);
        consider(mu, nu);
    }
    return {best, sampling.samples + anchors.size() * (anchors.size() - 1) / 2, "lower estimate of sup"};
}

Curve md_bound_curve(double alpha, double lambda, std::size_t n_max) {
    if (alpha < 0.0 || alpha > 1.0 || lambda < 0.0 || lambda > 1.0)
        throw InvalidInput("md_bound_curve: alpha and lambda must lie in [0,1]");
    Curve c;
    c.values.resize(n_max);
    const bool equal = std::abs(alpha - lambda) <= 1e-15;
    if (equal && lambda == 0.0) {
        c.degenerate = true;
        std::fill(c.values.begin(), c.values.end(), 2.0);
        return c;
    }
    for (std::size_t n = 1; n <= n_max; ++n) {
        const double nn = static_cast<double>(n);
        c.values[n - 1] = clamp2(equal ? 2.0 / (lambda * nn) : 2.0 * std::pow(1.0 - alpha + lambda, nn));
    }
    return c;
}

Curve kstep_bound_curve(double alpha_k, double lambda_k, double lambda_1, double d0, std::size_t k,
                        std::size_t n_max) {
    if (k == 0) throw InvalidInput("kstep_bound_curve: k must be >= 1");
    if (d0 < 0.0 || d0 > 2.0) throw InvalidInput("kstep_bound_curve: d0 must lie in [0,2]");
    Curve c;
    c.values.resize(n_max);
    const bool special = std::abs(alpha_k - lambda_k) <= 1e-15 && lambda_k > 0.0;
    for (std::size_t n = 1; n <= n_max; ++n) {
        const double tail = std::pow(1.0 + lambda_1, static_cast<double>(n % k));
        double v = special
                       ? d0 / (2.0 + lambda_k * static_cast<double>(n) * d0) * tail
                       : d0 * std::pow(1.0 - alpha_k + lambda_k, static_cast<double>(n / k)) * tail;
        c.values[n - 1] = clamp2(v);
    }
    return c;
}

GammaEstimate gamma_estimate(const PolynomialKernel& K, const SamplingConfig& sampling) {
    const std::size_t p = K.size();
    const auto& C1 = K.coeff()[0];
    GammaEstimate best;
    best.gamma = 0.0;
    const std::size_t grid = std::max<std::size_t>(sampling.samples, 1);
    best.samples = grid + 2;
    double worst = -1.0;
    for (std::size_t x = 0; x < p; ++x) {
        for (std::size_t y = 0; y < p; ++y) {
            for (std::size_t i = 0; i <= grid + 1; ++i) {
                // i == 0 -> s = 0, i == grid + 1 -> s = 1, otherwise interior grid.
                const double s = i == 0 ? 0.0 : (i == grid + 1 ? 1.0 : static_cast<double>(i) / (grid + 1));
                const double pv = K.entry_at(x, y, s);
                const double ratio_minus_one = [&] {
                    if (pv <= 0.0) {
                        if (C1(x, y) > 0.0)
                            throw InvalidInput("gamma_estimate: P_mu(" + std::to_string(x + 1) + "," +
                                               std::to_string(y + 1) + ") = 0 while C1 > 0; the "
                                               "linear chain does not dominate (gamma infinite)");
                        return -1.0;
                    }
                    return C1(x, y) / pv - 1.0;
                }();
                if (ratio_minus_one > worst) {
                    worst = ratio_minus_one;
                    best.x = x;
                    best.y = y;
                    best.s = s;
                }
            }
        }
    }
    best.gamma = std::max(0.0, worst);
    // A distribution realizing the extremal coordinate value.
    const std::size_t c = static_cast<std::size_t>(K.coordinate()(best.x, best.y));
    std::vector<double> mu(p, 0.0);
    mu[c] = best.s;
    mu[(c + 1) % p] += 1.0 - best.s;
    best.mu = mu;
    return best;
}

double theorem2_bound(std::size_t p) {
    if (p < 2) throw InvalidInput("theorem2_bound: p must be >= 2");
    return 2.0 * (1.0 - 1.0 / static_cast<double>(p));
}

BruteForceMax theorem2_bruteforce(std::size_t p, std::size_t trials, Rng& rng) {
    if (p < 2) throw InvalidInput("theorem2_bruteforce: p must be >= 2");
    const Distribution u = Distribution::uniform(p);
    BruteForceMax out;
    auto consider = [&](const Distribution& pi) {
        double d = tv_distance(u, pi);
        if (d > out.max_tv) {
            out.max_tv = d;
            out.argmax = pi.vec();
        }
    };
    for (std::size_t i = 0; i < p; ++i) consider(Distribution::vertex(p, i));
    for (std::size_t i = 0; i < trials; ++i) consider(random_distribution(p, rng));
    return out;
}

double theorem3_bound(double gamma, double n) {
    if (gamma < 0.0 || n < 0.0) throw InvalidInput("theorem3_bound: gamma and n must be >= 0");
    const double x = n * gamma;
    return clamp2(2.0 * (std::exp(-(1.0 + x)) + x) / (1.0 + x));
}

RhoReport rho_moment_check(const PolynomialKernel& K, std::size_t n, unsigned k, std::size_t samples,
                           std::uint64_t seed, const Distribution* mu0) {
    if (k < 1) throw InvalidInput("rho_moment_check: k must be >= 1");
    if (samples < 2) throw InvalidInput("rho_moment_check: need at least 2 samples");
    const Distribution start = mu0 ? *mu0 : Distribution::uniform(K.size());
    const auto flow = propagate(K, start, n);
    const auto& C1 = K.coeff()[0];

    RhoReport rep;
    rep.gamma = gamma_estimate(K).gamma;
    double sum = 0.0, sum_sq = 0.0;
    for (std::size_t i = 0; i < samples; ++i) {
        Rng rng(derive_seed(seed, i));
        auto path = sample_trajectory(K, flow, n, rng);
        double log_rho = 0.0;
        for (std::size_t t = 0; t < n; ++t) {
            const std::size_t x = path[t], y = path[t + 1];
            const double pv = K.entry_at(x, y, flow[t][K.coordinate()(x, y)]);
            // A realized transition has positive probability under the kernel.
            if (!(pv > 0.0)) throw NumericError("rho_moment_check: zero-probability transition sampled");
            log_rho += std::log(C1(x, y)) - std::log(pv);
        }
        const double v = std::exp(static_cast<double>(k) * log_rho);
        sum += v;
        sum_sq += v * v;
    }
    const double ns = static_cast<double>(samples);
    rep.mean = sum / ns;
    const double var = std::max(0.0, (sum_sq - ns * rep.mean * rep.mean) / (ns - 1.0));
    rep.std_error = std::sqrt(var / ns);
    rep.bound = std::pow(1.0 + rep.gamma, static_cast<double>(n) * (static_cast<double>(k) - 1.0));
    rep.pass = rep.mean <= rep.bound + 3.0 * rep.std_error;
    return rep;
}

double delta_estimate(const PolynomialKernel& K, double tol, bool force_zero) {
    if (force_zero) return 0.0;
    if (K.degree() == 1) return 0.0;
    auto pi = stationary(K, tol);
    auto pi_star = stationary(PolynomialKernel::linear(K.linear_part()), tol);
    return tv_distance(pi.dist, pi_star.dist);
}

double theorem4_bound(double r, double eps, double delta, std::size_t p, double n, Regime regime) {
    const double spectral = 2.0 * std::pow(r + eps, n) * (1.0 - 1.0 / static_cast<double>(p));
    const double v = regime == Regime::SmallN ? 2.0 * std::exp(-1.0) + delta + spectral
                                              : 2.0 * delta + spectral;
    return clamp2(v);
}

const Curve& BoundReport::curve(const std::string& name) const {
    for (const auto& [n, c] : curves)
        if (n == name) return c;
    throw InvalidInput("bound report has no curve '" + name + "'");
}

std::string BoundReport::to_csv() const {
    CsvTable t;
    t.header.push_back("n");
    for (const auto& [name, c] : curves) t.header.push_back(name);
    for (std::size_t n = 1; n <= n_max; ++n) {
        std::vector<std::string> row{std::to_string(n)};
        for (const auto& [name, c] : curves) row.push_back(format_number(c.at(n)));
        t.add_row(std::move(row));
    }
    return t.to_string();
}

std::string BoundReport::to_json() const {
    nlohmann::ordered_json j;
    j["p"] = p;
    j["alpha"] = alpha;
    j["alpha_nonlinear"] = {{"values", alpha_nonlinear}, {"direction", "upper estimate of inf"}};
    j["lambda"] = {{"values", lambda}, {"direction", "lower estimate of sup"}};
    if (std::isinf(gamma))
        j["gamma"] = "inf";
    else
        j["gamma"] = gamma;
    j["delta"] = delta;
    j["r"] = r;
    j["eps"] = eps;
    j["eps_residual"] = eps_residual;
    j["one_norm"] = one_norm;
    j["n_max"] = n_max;
    j["samples"] = samples;
    j["seed"] = seed;
    nlohmann::ordered_json flags;
    for (const auto& [name, c] : curves)
        if (c.degenerate) flags[name] = "degenerate";
    if (!flags.empty()) j["warnings"] = flags;
    return j.dump(2) + "\n";
}

BoundReport full_report(const PolynomialKernel& K, std::size_t n_max, const ReportConfig& config) {
    BoundReport rep;
    rep.p = K.size();
    rep.n_max = n_max;
    rep.samples = config.sampling.samples;
    rep.seed = config.sampling.seed;
    const StochasticMatrix P = K.linear_part();
    const std::size_t kmax = std::max<std::size_t>(config.k_max_steps, 1);
    for (std::size_t k = 1; k <= kmax; ++k) {
        rep.alpha.push_back(md_alpha(P, k));
        SamplingConfig s = config.sampling;
        s.seed = derive_seed(config.sampling.seed, k);
        rep.alpha_nonlinear.push_back(
            K.degree() == 1 ? rep.alpha.back() : md_alpha(K, k, s).value);
        rep.lambda.push_back(lipschitz_lambda(K, k, s).value);
    }
    try {
        rep.gamma = gamma_estimate(K, config.sampling).gamma;
    } catch (const InvalidInput&) {
        // Some entry vanishes where C1 does not; the perturbation bound is vacuous.
        rep.gamma = std::numeric_limits<double>::infinity();
    }
    rep.delta = delta_estimate(K, config.stationary_tol, config.force_delta_zero);

    const CouplingMatrix M = build_coupling_matrix(P);
    const SpectralEstimate sr = spectral_radius(M, config.gelfand_cap);
    rep.r = sr.r;
    rep.eps_residual = sr.residual;
    rep.eps = config.eps_override.value_or(sr.residual);
    rep.one_norm = matrix_one_norm(M);

    rep.curves.emplace_back("md", md_bound_curve(rep.alpha[0], 0.0, n_max));
    rep.curves.emplace_back("md_lipschitz",
                            md_bound_curve(rep.alpha_nonlinear[0], std::min(1.0, rep.lambda[0]), n_max));
    for (std::size_t k = 1; k <= kmax; ++k)
        rep.curves.emplace_back("kstep_" + std::to_string(k),
                                kstep_bound_curve(rep.alpha[k - 1], std::min(1.0, rep.lambda[k - 1]),
                                                  rep.lambda[0], 2.0, k, n_max));
    Curve spectral, t3, small, large;
    for (std::size_t n = 1; n <= n_max; ++n) {
        const double nn = static_cast<double>(n);
        spectral.values.push_back(
            clamp2(theorem2_bound(rep.p) * std::pow(rep.r + rep.eps, nn)));
        t3.values.push_back(std::isinf(rep.gamma) ? 2.0 : theorem3_bound(rep.gamma, nn));
        small.values.push_back(theorem4_bound(rep.r, rep.eps, rep.delta, rep.p, nn, Regime::SmallN));
        large.values.push_back(theorem4_bound(rep.r, rep.eps, rep.delta, rep.p, nn, Regime::LargeN));
    }
    rep.curves.emplace_back("spectral", std::move(spectral));
    rep.curves.emplace_back("theorem3", std::move(t3));
    rep.curves.emplace_back("theorem4_small", std::move(small));
    rep.curves.emplace_back("theorem4_large", std::move(large));
    return rep;
}

}  // namespace nmc
