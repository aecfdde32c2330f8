#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "nmc/chain.hpp"
#include "nmc/rng.hpp"

namespace nmc {

/// Sum_x min(mu(x), nu(x)); equals 1 - tv/2.
double overlap_q(const Distribution& mu, const Distribution& nu);

/// The eta1 / eta2 / xi laws of the maximal coupling of mu and nu.
struct SplitLaws {
    Distribution eta1;
    Distribution eta2;
    Distribution xi;
    double q;
};

/// q in (0,1): normalized (mu - min), (nu - min), min. q == 1 gives
/// (mu, mu, mu); q == 0 gives (mu, nu, mu).
SplitLaws split_densities(const Distribution& mu, const Distribution& nu);

/// Overlap of rows x1 and x2: sum_y min(P(x1,y), P(x2,y)).
double kappa(const StochasticMatrix& P, std::size_t x1, std::size_t x2);

/// (eta1, eta2, xi, zeta). zeta == 1 means the pair has not met yet.
struct CouplingState {
    std::size_t eta1;
    std::size_t eta2;
    std::size_t xi;
    int zeta;

    std::size_t first() const { return zeta ? eta1 : xi; }
    std::size_t second() const { return zeta ? eta2 : xi; }
};

/// One-step laws of each coordinate. `zeta` is indexed by the next value of
/// zeta: zeta[0] is the probability of meeting (or staying met).
struct MarginalLaws {
    Distribution eta1;
    Distribution eta2;
    Distribution xi;
    Distribution zeta;
};

MarginalLaws marginal_kernels(const StochasticMatrix& P, const CouplingState& s);

/// Maximal-coupling draw: zeta ~ Bernoulli(1 - q), then (xi, xi) or an
/// independent (eta1, eta2) draw.
CouplingState sample_coupled_pair(const Distribution& mu, const Distribution& nu, Rng& rng);

struct CoupledPath {
    std::vector<std::size_t> first;
    std::vector<std::size_t> second;
    std::vector<int> zeta;
    std::optional<std::size_t> meet_step;  // first t with zeta == 0
};

CoupledPath simulate_coupled_chain(const StochasticMatrix& P, const Distribution& mu0,
                                   const Distribution& nu0, std::size_t n, Rng& rng);

/// Sub-stochastic matrix over ordered pairs (x1 != x2) giving the
/// not-yet-met pair dynamics.
class CouplingMatrix {
public:
    explicit CouplingMatrix(std::size_t p);

    std::size_t states() const { return p_; }
    std::size_t dim() const { return p_ * (p_ - 1); }
    /// Row-major over ordered pairs, skipping the diagonal.
    std::size_t index(std::size_t x1, std::size_t x2) const;
    std::pair<std::size_t, std::size_t> pair_at(std::size_t i) const;

    const Eigen::MatrixXd& entries() const { return m_; }
    Eigen::MatrixXd& entries() { return m_; }

private:
    std::size_t p_;
    Eigen::MatrixXd m_;
};

CouplingMatrix build_coupling_matrix(const StochasticMatrix& P);

/// Max row sum of a nonnegative matrix.
double matrix_one_norm(const Eigen::MatrixXd& M);
inline double matrix_one_norm(const CouplingMatrix& M) { return matrix_one_norm(M.entries()); }

struct SpectralEstimate {
    double r;         // ||M^(2^K)||^(1/2^K)
    double residual;  // last decrement between successive estimates
    std::vector<double> history;
};

/// Gelfand estimate by repeated squaring with renormalization.
/// k_max is the power-of-two cap on the matrix power (default 2^20).
SpectralEstimate spectral_radius(const Eigen::MatrixXd& M, std::size_t k_max = std::size_t{1} << 20);
inline SpectralEstimate spectral_radius(const CouplingMatrix& M,
                                        std::size_t k_max = std::size_t{1} << 20) {
    return spectral_radius(M.entries(), k_max);
}

struct LemmaRow {
    std::size_t t;
    double tv1;          // empirical law of first coordinate vs exact mu_t
    double tv2;          // same for the second coordinate vs nu_t
    double q_exact;      // overlap of the exact laws
    double q_empirical;  // fraction of samples with equal coordinates
    double meet_exact;   // P(met by t) for this Markovian coupling, from M
};

struct LemmaThresholds {
    double tv = 0.02;
    double q = 0.01;
};

struct LemmaReport {
    std::vector<LemmaRow> rows;
    std::size_t samples = 0;
    bool underpowered = false;  // samples < 1000: no pass/fail verdict
    bool marginals_pass = true;
    bool equality_pass = true;      // |q_empirical - q_exact| < q threshold
    bool inequality_pass = true;    // q_empirical <= q_exact + 3 SE
    bool markov_pass = true;        // |q_empirical - meet_exact| <= 4 SE
    double max_equality_gap = 0.0;  // max (q_exact - q_empirical)
};

/// Statistical check of the coupled-chain marginals and meeting frequency.
LemmaReport lemma_check(const StochasticMatrix& P, const Distribution& mu0, const Distribution& nu0,
                        std::size_t n, std::size_t samples, std::uint64_t seed,
                        LemmaThresholds thresholds = {});

/// Columns: t, tv1, tv2, q_exact, q_empirical.
std::string lemma_report_csv(const LemmaReport& report);

}  // namespace nmc
