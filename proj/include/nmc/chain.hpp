#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nmc/error.hpp"
#include "nmc/rng.hpp"

namespace nmc {

/// Probability vector on p >= 2 states. Entries are nonnegative and sum to
/// one within 1e-12; the constructor enforces this.
class Distribution {
public:
    static constexpr double kSumTolerance = 1e-12;

    explicit Distribution(std::vector<double> probs);

    /// Divides a nonnegative vector by its sum. Use for computed laws whose
    /// rounding drift would otherwise trip the sum check.
    static Distribution normalized(std::vector<double> weights);
    static Distribution uniform(std::size_t p);
    static Distribution vertex(std::size_t p, std::size_t state);

    std::size_t size() const { return probs_.size(); }
    double operator[](std::size_t i) const { return probs_[i]; }
    std::span<const double> probs() const { return probs_; }
    const std::vector<double>& vec() const { return probs_; }

    bool operator==(const Distribution&) const = default;

private:
    std::vector<double> probs_;
};

/// Total variation as the sum of absolute differences (range [0, 2]).
double tv_distance(const Distribution& a, const Distribution& b);

/// Flat-simplex sample: normalized unit-rate exponentials.
Distribution random_distribution(std::size_t p, Rng& rng);

/// Row-stochastic p x p matrix; entries in [0,1], rows sum to 1 within 1e-12.
class StochasticMatrix {
public:
    static constexpr double kRowTolerance = 1e-12;

    explicit StochasticMatrix(Eigen::MatrixXd entries);
    /// Rescales each row by its sum first (rows must be nonnegative, nonzero).
    static StochasticMatrix normalized_rows(Eigen::MatrixXd entries);

    std::size_t size() const { return static_cast<std::size_t>(m_.rows()); }
    double operator()(std::size_t x, std::size_t y) const { return m_(x, y); }
    const Eigen::MatrixXd& matrix() const { return m_; }
    std::vector<double> row(std::size_t x) const;

private:
    Eigen::MatrixXd m_;
};

/// P_mu(x,y) = sum_j C_{j+1}(x,y) * mu(c(x,y))^j where c(x,y) is the
/// coordinate the entry depends on (the row x unless overridden).
class PolynomialKernel {
public:
    explicit PolynomialKernel(std::vector<Eigen::MatrixXd> coeff);
    PolynomialKernel(std::vector<Eigen::MatrixXd> coeff, Eigen::MatrixXi coordinate);

    /// Wraps a stochastic matrix as a degree-1 (linear) kernel.
    static PolynomialKernel linear(const StochasticMatrix& P);

    std::size_t size() const { return p_; }
    std::size_t degree() const { return coeff_.size(); }
    const std::vector<Eigen::MatrixXd>& coeff() const { return coeff_; }
    const Eigen::MatrixXi& coordinate() const { return coord_; }

    /// C_1, the distribution-free part.
    StochasticMatrix linear_part() const;

    /// Entry (x,y) as a polynomial in s = mu(c(x,y)).
    double entry_at(std::size_t x, std::size_t y, double s) const;

    /// Unchecked evaluation. evaluate_kernel adds the stochasticity check.
    Eigen::MatrixXd evaluate_raw(const Distribution& mu) const;

private:
    std::size_t p_;
    std::vector<Eigen::MatrixXd> coeff_;
    Eigen::MatrixXi coord_;
};

StochasticMatrix evaluate_kernel(const PolynomialKernel& K, const Distribution& mu);

struct KernelValidation {
    bool pass = true;
    double worst_negative = 0.0;       // most negative entry seen (0 if none)
    double worst_row_deviation = 0.0;  // max |row sum - 1|
    std::vector<double> worst_mu;      // where the worst violation occurred
    std::size_t points_checked = 0;
};

/// Checks P_mu at all vertices, the barycenter, and `grid` random simplex points.
KernelValidation validate_kernel(const PolynomialKernel& K, std::size_t grid = 1000,
                                 std::uint64_t seed = 0);

/// mu_0 .. mu_n of the nonlinear flow mu_{t+1} = mu_t^T P_{mu_t}.
std::vector<Distribution> propagate(const PolynomialKernel& K, const Distribution& mu0,
                                    std::size_t n);

/// One step of the flow.
Distribution flow_step(const PolynomialKernel& K, const Distribution& mu);

struct StationaryResult {
    Distribution dist;
    std::size_t iterations;
    double residual;
};

/// Fixed-point iteration from the barycenter until tv(mu, step(mu)) <= tol.
/// Throws Nonconvergence after max_iter steps.
StationaryResult stationary(const PolynomialKernel& K, double tol = 1e-10,
                            std::size_t max_iter = 1'000'000);

/// X_0 ~ mu0 and X_{t+1} ~ P_{mu_t}(X_t, .) along the exact flow.
std::vector<std::size_t> sample_trajectory(const PolynomialKernel& K, const Distribution& mu0,
                                           std::size_t n, Rng& rng);

/// Same, reusing a precomputed flow (flow.size() must be > n).
std::vector<std::size_t> sample_trajectory(const PolynomialKernel& K,
                                           std::span<const Distribution> flow, std::size_t n,
                                           Rng& rng);

/// Model JSON: {"p": int, "degree": int, "coeff": [d matrices]}.
/// Each matrix is either a flat row-major array of p*p numbers or p rows.
PolynomialKernel parse_kernel_json(const std::string& text);
PolynomialKernel load_kernel_json(const std::string& path);

}  // namespace nmc
