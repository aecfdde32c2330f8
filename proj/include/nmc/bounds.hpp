#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "nmc/chain.hpp"
#include "nmc/coupling.hpp"

namespace nmc {

struct SamplingConfig {
    std::size_t samples = 10'000;
    std::uint64_t seed = 0;
};

/// A Monte-Carlo extremum. `direction` says which side of the true value
/// the estimate sits on, e.g. "upper estimate of inf".
struct Estimate {
    double value = 0.0;
    std::size_t samples = 0;
    std::string direction;
};

/// Exact Markov-Dobrushin coefficient of P^k: min over state pairs of the
/// row overlap.
double md_alpha(const StochasticMatrix& P, std::size_t k);

/// Nonlinear version: additionally minimizes over sampled pairs of initial
/// distributions, using k-step products along each propagated flow.
Estimate md_alpha(const PolynomialKernel& K, std::size_t k, const SamplingConfig& sampling);

/// sup over sampled (x, mu, nu) of ||P^(k)_mu(x,.) - P^(k)_nu(x,.)|| / ||mu - nu||.
/// Exactly 0 for degree-1 kernels.
Estimate lipschitz_lambda(const PolynomialKernel& K, std::size_t k, const SamplingConfig& sampling);

/// Per-step bound values for n = 1..n_max (values[n-1]).
struct Curve {
    std::vector<double> values;
    bool degenerate = false;

    double at(std::size_t n) const { return values.at(n - 1); }
};

/// 2(1 - alpha + lambda)^n, or 2/(lambda n) when lambda == alpha > 0.
Curve md_bound_curve(double alpha, double lambda, std::size_t n_max);

/// d0 (1 - alpha_k + lambda_k)^floor(n/k) (1 + lambda_1)^(n mod k), with the
/// alpha_k == lambda_k special case.
Curve kstep_bound_curve(double alpha_k, double lambda_k, double lambda_1, double d0, std::size_t k,
                        std::size_t n_max);

struct GammaEstimate {
    double gamma = 0.0;
    std::size_t x = 0, y = 0;
    double s = 0.0;  // value of the coordinate mu(c(x,y)) at the extremum
    std::vector<double> mu;
    std::size_t samples = 0;
};

/// sup of C1(x,y)/P_mu(x,y) - 1. Entries depend on mu only through one
/// coordinate s in [0,1], so this scans s over {0, 1} plus a uniform grid,
/// exact for kernels that are linear in s. Throws InvalidInput when some
/// P_mu(x,y) = 0 while C1(x,y) > 0.
GammaEstimate gamma_estimate(const PolynomialKernel& K, const SamplingConfig& sampling = {});

double theorem2_bound(std::size_t p);

struct BruteForceMax {
    double max_tv = 0.0;
    std::vector<double> argmax;
};

/// max tv(uniform, pi) over all vertices plus `trials` random simplex points.
BruteForceMax theorem2_bruteforce(std::size_t p, std::size_t trials, Rng& rng);

/// 2 (e^{-(1 + n gamma)} + n gamma) / (1 + n gamma), clamped to 2.
double theorem3_bound(double gamma, double n);

struct RhoReport {
    double mean = 0.0;
    double std_error = 0.0;
    double bound = 0.0;
    double gamma = 0.0;
    bool pass = false;
};

/// Monte-Carlo check of E(rho_n^k) <= (1 + gamma)^{n(k-1)} along nonlinear
/// trajectories started from mu0 (barycenter when omitted).
RhoReport rho_moment_check(const PolynomialKernel& K, std::size_t n, unsigned k, std::size_t samples,
                           std::uint64_t seed, const Distribution* mu0 = nullptr);

/// tv(pi of K, pi of C1), or 0 when forced.
double delta_estimate(const PolynomialKernel& K, double tol = 1e-10, bool force_zero = false);

enum class Regime { SmallN, LargeN };

double theorem4_bound(double r, double eps, double delta, std::size_t p, double n, Regime regime);

struct ReportConfig {
    std::size_t k_max_steps = 4;  // alpha_k, lambda_k for k = 1..this
    SamplingConfig sampling;
    std::optional<double> eps_override;
    bool force_delta_zero = false;
    double stationary_tol = 1e-10;
    std::size_t gelfand_cap = std::size_t{1} << 20;
};

struct BoundReport {
    std::size_t p = 0;
    std::vector<double> alpha;            // exact, from the linear part C1
    std::vector<double> alpha_nonlinear;  // upper estimates of the nonlinear inf
    std::vector<double> lambda;           // lower estimates of the sup
    double gamma = 0.0;
    double delta = 0.0;
    double r = 0.0;
    double eps = 0.0;
    double eps_residual = 0.0;
    double one_norm = 0.0;
    std::size_t n_max = 0;
    std::size_t samples = 0;
    std::uint64_t seed = 0;
    std::vector<std::pair<std::string, Curve>> curves;

    const Curve& curve(const std::string& name) const;
    std::string to_csv() const;
    std::string to_json() const;
};

BoundReport full_report(const PolynomialKernel& K, std::size_t n_max, const ReportConfig& config = {});

}  // namespace nmc
