#include "nmc/coupling.hpp"

#include <algorithm>
#include <cmath>

#include "nmc/csv.hpp"

namespace nmc {

namespace {

// Masses below this are treated as exactly zero when picking the q == 0
// and q == 1 branches.
constexpr double kMassEps = 1e-15;

std::vector<double> pointwise_min(std::span<const double> a, std::span<const double> b) {
    std::vector<double> m(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) m[i] = std::min(a[i], b[i]);
    return m;
}

std::vector<double> excess(std::span<const double> a, std::span<const double> m) {
    std::vector<double> e(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) e[i] = std::max(0.0, a[i] - m[i]);
    return e;
}

double total(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
}

}  // namespace

double overlap_q(const Distribution& mu, const Distribution& nu) {
    if (mu.size() != nu.size()) throw DimensionMismatch(mu.size(), nu.size());
    double q = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i) q += std::min(mu[i], nu[i]);
    return std::clamp(q, 0.0, 1.0);
}

SplitLaws split_densities(const Distribution& mu, const Distribution& nu) {
    if (mu.size() != nu.size()) throw DimensionMismatch(mu.size(), nu.size());
    auto common = pointwise_min(mu.probs(), nu.probs());
    auto e1 = excess(mu.probs(), common);
    auto e2 = excess(nu.probs(), common);
    const double q = overlap_q(mu, nu);
    if (total(e1) <= kMassEps || total(e2) <= kMassEps) return {mu, mu, mu, 1.0};
    if (total(common) <= kMassEps) return {mu, nu, mu, 0.0};
    return {Distribution::normalized(std::move(e1)), Distribution::normalized(std::move(e2)),
            Distribution::normalized(std::move(common)), q};
}

double kappa(const StochasticMatrix& P, std::size_t x1, std::size_t x2) {
    double k = 0.0;
    for (std::size_t y = 0; y < P.size(); ++y) k += std::min(P(x1, y), P(x2, y));
    return std::clamp(k, 0.0, 1.0);
}

MarginalLaws marginal_kernels(const StochasticMatrix& P, const CouplingState& s) {
    const std::size_t p = P.size();
    if (s.eta1 >= p || s.eta2 >= p || s.xi >= p || (s.zeta != 0 && s.zeta != 1))
        throw InvalidInput("coupling state out of range");
    const auto r1 = P.row(s.eta1);
    const auto r2 = P.row(s.eta2);
    const auto r3 = P.row(s.xi);
    const double k = kappa(P, s.eta1, s.eta2);
    auto common = pointwise_min(r1, r2);
    auto e1 = excess(r1, common);
    auto e2 = excess(r2, common);

    const bool full_overlap = total(e1) <= kMassEps || total(e2) <= kMassEps;
    const bool no_overlap = total(common) <= kMassEps;

    Distribution eta1 = full_overlap ? Distribution::normalized(r1) : Distribution::normalized(e1);
    Distribution eta2 = full_overlap ? Distribution::normalized(r1) : Distribution::normalized(e2);
    Distribution xi = (s.zeta == 1 && !no_overlap) ? Distribution::normalized(common)
                                                   : Distribution::normalized(r3);
    Distribution zeta = s.zeta == 1 ? Distribution({k, 1.0 - k}) : Distribution({1.0, 0.0});
    return {std::move(eta1), std::move(eta2), std::move(xi), std::move(zeta)};
}

CouplingState sample_coupled_pair(const Distribution& mu, const Distribution& nu, Rng& rng) {
    SplitLaws laws = split_densities(mu, nu);
    const bool apart = rng.bernoulli(1.0 - laws.q);
    if (!apart) {
        std::size_t x = rng.categorical(laws.xi.probs());
        return {x, x, x, 0};
    }
    std::size_t a = rng.categorical(laws.eta1.probs());
    std::size_t b = rng.categorical(laws.eta2.probs());
    return {a, b, a, 1};
}

CoupledPath simulate_coupled_chain(const StochasticMatrix& P, const Distribution& mu0,
                                   const Distribution& nu0, std::size_t n, Rng& rng) {
    if (mu0.size() != P.size()) throw DimensionMismatch(mu0.size(), P.size());
    CoupledPath path;
    CouplingState s = sample_coupled_pair(mu0, nu0, rng);
    auto record = [&](std::size_t t) {
        path.first.push_back(s.first());
        path.second.push_back(s.second());
        path.zeta.push_back(s.zeta);
        if (s.zeta == 0 && !path.meet_step) path.meet_step = t;
    };
    record(0);
    for (std::size_t t = 1; t <= n; ++t) {
        if (s.zeta == 0) {
            // Met: the four coordinates reduce to a single chain on xi.
            std::size_t x = rng.categorical(P.row(s.xi));
            s = {x, x, x, 0};
        } else {
            MarginalLaws laws = marginal_kernels(P, s);
            CouplingState next;
            next.eta1 = rng.categorical(laws.eta1.probs());
            next.eta2 = rng.categorical(laws.eta2.probs());
            next.xi = rng.categorical(laws.xi.probs());
            next.zeta = rng.categorical(laws.zeta.probs()) == 0 ? 0 : 1;
            s = next;
        }
        record(t);
    }
    return path;
}

CouplingMatrix::CouplingMatrix(std::size_t p) : p_(p) {
    if (p < 2) throw InvalidInput("coupling matrix needs p >= 2");
    m_ = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dim()), static_cast<Eigen::Index>(dim()));
}

std::size_t CouplingMatrix::index(std::size_t x1, std::size_t x2) const {
    if (x1 == x2 || x1 >= p_ || x2 >= p_) throw InvalidInput("coupling pair must be off-diagonal");
    return x1 * (p_ - 1) + (x2 < x1 ? x2 : x2 - 1);
}

std::pair<std::size_t, std::size_t> CouplingMatrix::pair_at(std::size_t i) const {
    if (i >= dim()) throw InvalidInput("coupling index out of range");
    std::size_t x1 = i / (p_ - 1);
    std::size_t j = i % (p_ - 1);
    return {x1, j < x1 ? j : j + 1};
}

CouplingMatrix build_coupling_matrix(const StochasticMatrix& P) {
    const std::size_t p = P.size();
    CouplingMatrix M(p);
    auto& m = M.entries();
    for (std::size_t i = 0; i < M.dim(); ++i) {
        auto [x1, x2] = M.pair_at(i);
        const double k = kappa(P, x1, x2);
        if (k >= 1.0) continue;
        for (std::size_t j = 0; j < M.dim(); ++j) {
            auto [y1, y2] = M.pair_at(j);
            const double a = P(x1, y1) - std::min(P(x1, y1), P(x2, y1));
            const double b = P(x2, y2) - std::min(P(x1, y2), P(x2, y2));
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = a * b / (1.0 - k);
        }
    }
    return M;
}

double matrix_one_norm(const Eigen::MatrixXd& M) {
    if (M.size() == 0) return 0.0;
    return M.cwiseAbs().rowwise().sum().maxCoeff();
}

SpectralEstimate spectral_radius(const Eigen::MatrixXd& M, std::size_t k_max) {
    if (M.rows() < 1 || M.rows() != M.cols()) throw InvalidInput("spectral_radius: need a square matrix");
    if (k_max < 1) throw InvalidInput("spectral_radius: k_max must be >= 1");
    SpectralEstimate est{0.0, 0.0, {}};
    Eigen::MatrixXd B = M.cwiseAbs();
    double norm = matrix_one_norm(B);
    if (!std::isfinite(norm)) throw NumericError("spectral_radius: non-finite matrix norm");
    est.r = norm;
    est.history.push_back(norm);
    if (norm == 0.0) return est;

    // Invariant: M^(2^k) = B * exp(log_scale).
    B /= norm;
    double log_scale = std::log(norm);
    double power = 1.0;
    for (std::size_t k = 2; k <= k_max; k *= 2) {
        B = B * B;
        log_scale *= 2.0;
        power *= 2.0;
        norm = matrix_one_norm(B);
        if (!std::isfinite(norm)) throw NumericError("spectral_radius: non-finite intermediate");
        double r = 0.0;
        if (norm > 0.0) {
            r = std::exp((std::log(norm) + log_scale) / power);
            B /= norm;
            log_scale += std::log(norm);
        }
        est.residual = std::max(0.0, est.r - r);
        est.r = r;
        est.history.push_back(r);
        if (norm == 0.0) {
            est.residual = 0.0;
            break;
        }
    }
    return est;
}

namespace {

// P(not met at t) for the Markovian coupling: (1 - q0) * w0 M^t 1, where w0
// is the product law of the initial (eta1, eta2) draw.
std::vector<double> exact_meeting_curve(const StochasticMatrix& P, const Distribution& mu0,
                                        const Distribution& nu0, std::size_t n) {
    SplitLaws laws = split_densities(mu0, nu0);
    CouplingMatrix M = build_coupling_matrix(P);
    Eigen::RowVectorXd w = Eigen::RowVectorXd::Zero(static_cast<Eigen::Index>(M.dim()));
    if (laws.q < 1.0) {
        for (std::size_t i = 0; i < M.dim(); ++i) {
            auto [a, b] = M.pair_at(i);
            w(static_cast<Eigen::Index>(i)) = (1.0 - laws.q) * laws.eta1[a] * laws.eta2[b];
        }
    }
    std::vector<double> met(n + 1);
    for (std::size_t t = 0; t <= n; ++t) {
        met[t] = std::clamp(1.0 - w.sum(), 0.0, 1.0);
        w = w * M.entries();
    }
    return met;
}

}  // namespace

LemmaReport lemma_check(const StochasticMatrix& P, const Distribution& mu0, const Distribution& nu0,
                        std::size_t n, std::size_t samples, std::uint64_t seed,
                        LemmaThresholds thresholds) {
    if (samples == 0) throw InvalidInput("lemma_check: samples must be >= 1");
    const std::size_t p = P.size();
    auto linear = PolynomialKernel::linear(P);
    auto flow1 = propagate(linear, mu0, n);
    auto flow2 = propagate(linear, nu0, n);
    auto meet = exact_meeting_curve(P, mu0, nu0, n);

    std::vector<std::vector<double>> c1(n + 1, std::vector<double>(p, 0.0));
    std::vector<std::vector<double>> c2(n + 1, std::vector<double>(p, 0.0));
    std::vector<double> equal(n + 1, 0.0);
    for (std::size_t i = 0; i < samples; ++i) {
        Rng rng(derive_seed(seed, i));
        CoupledPath path = simulate_coupled_chain(P, mu0, nu0, n, rng);
        for (std::size_t t = 0; t <= n; ++t) {
            c1[t][path.first[t]] += 1.0;
            c2[t][path.second[t]] += 1.0;
            if (path.first[t] == path.second[t]) equal[t] += 1.0;
        }
    }

    LemmaReport report;
    report.samples = samples;
    report.underpowered = samples < 1000;
    const double ns = static_cast<double>(samples);
    for (std::size_t t = 0; t <= n; ++t) {
        LemmaRow row{t, 0.0, 0.0, overlap_q(flow1[t], flow2[t]), equal[t] / ns, meet[t]};
        for (std::size_t x = 0; x < p; ++x) {
            row.tv1 += std::abs(c1[t][x] / ns - flow1[t][x]);
            row.tv2 += std::abs(c2[t][x] / ns - flow2[t][x]);
        }
        const double se_q = std::sqrt(std::max(row.q_exact * (1.0 - row.q_exact), 1.0 / ns) / ns);
        const double se_m = std::sqrt(std::max(row.meet_exact * (1.0 - row.meet_exact), 1.0 / ns) / ns);
        report.max_equality_gap = std::max(report.max_equality_gap, row.q_exact - row.q_empirical);
        if (!report.underpowered) {
            if (row.tv1 >= thresholds.tv || row.tv2 >= thresholds.tv) report.marginals_pass = false;
            if (std::abs(row.q_empirical - row.q_exact) >= thresholds.q) report.equality_pass = false;
            if (row.q_empirical > row.q_exact + 3.0 * se_q) report.inequality_pass = false;
            if (std::abs(row.q_empirical - row.meet_exact) > 4.0 * se_m) report.markov_pass = false;
        }
        report.rows.push_back(row);
    }
    return report;
}

std::string lemma_report_csv(const LemmaReport& report) {
    CsvTable t;
    t.header = {"t", "tv1", "tv2", "q_exact", "q_empirical"};
    for (const auto& r : report.rows)
        t.add_row({std::to_string(r.t), format_number(r.tv1), format_number(r.tv2),
                   format_number(r.q_exact), format_number(r.q_empirical)});
    return t.to_string();
}

}  // namespace nmc
