#include "nmc/chain.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace nmc {

namespace {

void check_finite(double v, const char* what) {
    if (!std::isfinite(v)) throw InvalidInput(std::string(what) + ": non-finite value");
}

}  // namespace

Distribution::Distribution(std::vector<double> probs) : probs_(std::move(probs)) {
    if (probs_.size() < 2) throw InvalidInput("distribution needs at least 2 states");
    double sum = 0.0;
    for (double v : probs_) {
        check_finite(v, "distribution");
        if (v < 0.0) throw InvalidInput("distribution has a negative entry");
        sum += v;
    }
    if (std::abs(sum - 1.0) > kSumTolerance) {
        std::ostringstream os;
        os << "distribution sums to " << sum << ", not 1";
        throw InvalidInput(os.str());
    }
}

Distribution Distribution::normalized(std::vector<double> weights) {
    double sum = 0.0;
    for (double& v : weights) {
        check_finite(v, "distribution");
        if (v < 0.0) {
            if (v < -1e-12) throw InvalidInput("distribution has a negative entry");
            v = 0.0;
        }
        sum += v;
    }
    if (!(sum > 0.0)) throw InvalidInput("cannot normalize a zero vector");
    for (double& v : weights) v /= sum;
    return Distribution(std::move(weights));
}

Distribution Distribution::uniform(std::size_t p) {
    return Distribution(std::vector<double>(p, 1.0 / static_cast<double>(p)));
}

Distribution Distribution::vertex(std::size_t p, std::size_t state) {
    if (state >= p) throw InvalidInput("vertex index out of range");
    std::vector<double> v(p, 0.0);
    v[state] = 1.0;
    return Distribution(std::move(v));
}

double tv_distance(const Distribution& a, const Distribution& b) {
    if (a.size() != b.size()) throw DimensionMismatch(a.size(), b.size());
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
    return s;
}

Distribution random_distribution(std::size_t p, Rng& rng) {
    if (p < 2) throw InvalidInput("random_distribution needs p >= 2");
    std::vector<double> w(p);
    for (double& v : w) v = rng.exponential();
    return Distribution::normalized(std::move(w));
}

StochasticMatrix::StochasticMatrix(Eigen::MatrixXd entries) : m_(std::move(entries)) {
    if (m_.rows() != m_.cols()) throw InvalidInput("stochastic matrix must be square");
    if (m_.rows() < 1) throw InvalidInput("stochastic matrix is empty");
    for (Eigen::Index x = 0; x < m_.rows(); ++x) {
        double sum = 0.0;
        for (Eigen::Index y = 0; y < m_.cols(); ++y) {
            double v = m_(x, y);
            check_finite(v, "stochastic matrix");
            if (v < 0.0 || v > 1.0) {
                std::ostringstream os;
                os << "stochastic matrix entry (" << x + 1 << "," << y + 1 << ") = " << v
                   << " outside [0,1]";
                throw InvalidInput(os.str());
            }
            sum += v;
        }
        if (std::abs(sum - 1.0) > kRowTolerance) {
            std::ostringstream os;
            os << "stochastic matrix row " << x + 1 << " sums to " << sum;
            throw InvalidInput(os.str());
        }
    }
}

StochasticMatrix StochasticMatrix::normalized_rows(Eigen::MatrixXd entries) {
    for (Eigen::Index x = 0; x < entries.rows(); ++x) {
        for (Eigen::Index y = 0; y < entries.cols(); ++y)
            if (entries(x, y) < 0.0 && entries(x, y) > -1e-12) entries(x, y) = 0.0;
        double s = entries.row(x).sum();
        if (!(s > 0.0)) throw InvalidInput("cannot normalize a zero row");
        entries.row(x) /= s;
    }
    return StochasticMatrix(std::move(entries));
}

std::vector<double> StochasticMatrix::row(std::size_t x) const {
    std::vector<double> r(size());
    for (std::size_t y = 0; y < size(); ++y) r[y] = m_(x, y);
    return r;
}

namespace {

Eigen::MatrixXi row_coordinates(std::size_t p) {
    Eigen::MatrixXi c(p, p);
    for (std::size_t x = 0; x < p; ++x) c.row(x).setConstant(static_cast<int>(x));
    return c;
}

}  // namespace

PolynomialKernel::PolynomialKernel(std::vector<Eigen::MatrixXd> coeff)
    : PolynomialKernel(coeff, coeff.empty() ? Eigen::MatrixXi() : row_coordinates(coeff[0].rows())) {}

PolynomialKernel::PolynomialKernel(std::vector<Eigen::MatrixXd> coeff, Eigen::MatrixXi coordinate)
    : p_(0), coeff_(std::move(coeff)), coord_(std::move(coordinate)) {
    if (coeff_.empty()) throw InvalidInput("kernel needs degree >= 1");
    p_ = static_cast<std::size_t>(coeff_[0].rows());
    if (p_ < 2) throw InvalidInput("kernel needs p >= 2");
    for (const auto& c : coeff_) {
        if (static_cast<std::size_t>(c.rows()) != p_ || static_cast<std::size_t>(c.cols()) != p_)
            throw InvalidInput("kernel coefficient matrices must all be p x p");
        for (Eigen::Index i = 0; i < c.size(); ++i) check_finite(c.data()[i], "kernel coefficient");
    }
    if (static_cast<std::size_t>(coord_.rows()) != p_ || static_cast<std::size_t>(coord_.cols()) != p_)
        throw InvalidInput("coordinate table must be p x p");
    if (coord_.minCoeff() < 0 || static_cast<std::size_t>(coord_.maxCoeff()) >= p_)
        throw InvalidInput("coordinate table entry out of range");
    // Throws if C_1 is not stochastic.
    (void)linear_part();
}

PolynomialKernel PolynomialKernel::linear(const StochasticMatrix& P) {
    return PolynomialKernel({P.matrix()});
}

StochasticMatrix PolynomialKernel::linear_part() const { return StochasticMatrix(coeff_[0]); }

double PolynomialKernel::entry_at(std::size_t x, std::size_t y, double s) const {
    // Horner in s.
    double v = 0.0;
    for (std::size_t j = coeff_.size(); j-- > 0;) v = v * s + coeff_[j](x, y);
    return v;
}

Eigen::MatrixXd PolynomialKernel::evaluate_raw(const Distribution& mu) const {
    if (mu.size() != p_) throw DimensionMismatch(mu.size(), p_);
    if (coeff_.size() == 1) return coeff_[0];
    Eigen::MatrixXd out(p_, p_);
    for (std::size_t x = 0; x < p_; ++x)
        for (std::size_t y = 0; y < p_; ++y) out(x, y) = entry_at(x, y, mu[coord_(x, y)]);
    return out;
}

namespace {

constexpr double kKernelTolerance = 1e-9;

struct MatrixDefects {
    double min_entry;
    double max_row_dev;
};

MatrixDefects defects(const Eigen::MatrixXd& m) {
    MatrixDefects d{m.minCoeff(), 0.0};
    for (Eigen::Index x = 0; x < m.rows(); ++x)
        d.max_row_dev = std::max(d.max_row_dev, std::abs(m.row(x).sum() - 1.0));
    return d;
}

std::string mu_string(const Distribution& mu) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < mu.size(); ++i) os << (i ? "," : "") << mu[i];
    os << ")";
    return os.str();
}

}  // namespace

StochasticMatrix evaluate_kernel(const PolynomialKernel& K, const Distribution& mu) {
    Eigen::MatrixXd m = K.evaluate_raw(mu);
    MatrixDefects d = defects(m);
    if (d.min_entry < -kKernelTolerance || d.max_row_dev > kKernelTolerance)
        throw KernelInvalid("kernel is not stochastic at mu=" + mu_string(mu) +
                            " (min entry " + std::to_string(d.min_entry) + ", row-sum deviation " +
                            std::to_string(d.max_row_dev) + ")");
    // Snap rounding noise so the result satisfies the strict invariants.
    m = m.cwiseMax(0.0).cwiseMin(1.0);
    return StochasticMatrix::normalized_rows(std::move(m));
}

KernelValidation validate_kernel(const PolynomialKernel& K, std::size_t grid, std::uint64_t seed) {
    const std::size_t p = K.size();
    KernelValidation report;
    double worst_score = -1.0;
    auto check = [&](const Distribution& mu) {
        MatrixDefects d = defects(K.evaluate_raw(mu));
        double neg = std::min(0.0, d.min_entry);
        report.worst_negative = std::min(report.worst_negative, neg);
        report.worst_row_deviation = std::max(report.worst_row_deviation, d.max_row_dev);
        double score = std::max(-neg, d.max_row_dev);
        if (score > worst_score) {
            worst_score = score;
            report.worst_mu = mu.vec();
        }
        ++report.points_checked;
    };
    for (std::size_t i = 0; i < p; ++i) check(Distribution::vertex(p, i));
    check(Distribution::uniform(p));
    Rng rng(seed);
    for (std::size_t i = 0; i < grid; ++i) check(random_distribution(p, rng));
    report.pass = report.worst_negative >= -kKernelTolerance &&
                  report.worst_row_deviation <= kKernelTolerance;
    return report;
}

Distribution flow_step(const PolynomialKernel& K, const Distribution& mu) {
    StochasticMatrix P = evaluate_kernel(K, mu);
    Eigen::Map<const Eigen::RowVectorXd> m(mu.probs().data(), static_cast<Eigen::Index>(mu.size()));
    Eigen::RowVectorXd next = m * P.matrix();
    return Distribution::normalized(std::vector<double>(next.data(), next.data() + next.size()));
}

std::vector<Distribution> propagate(const PolynomialKernel& K, const Distribution& mu0,
                                    std::size_t n) {
    if (mu0.size() != K.size()) throw DimensionMismatch(mu0.size(), K.size());
    std::vector<Distribution> flow;
    flow.reserve(n + 1);
    flow.push_back(mu0);
    for (std::size_t t = 0; t < n; ++t) flow.push_back(flow_step(K, flow.back()));
    return flow;
}

StationaryResult stationary(const PolynomialKernel& K, double tol, std::size_t max_iter) {
    if (!(tol > 0.0)) throw InvalidInput("stationary: tol must be positive");
    Distribution mu = Distribution::uniform(K.size());
    double residual = 0.0;
    for (std::size_t it = 0; it <= max_iter; ++it) {
        Distribution next = flow_step(K, mu);
        residual = tv_distance(mu, next);
        if (residual <= tol) return {mu, it, residual};
        mu = std::move(next);
    }
    throw Nonconvergence("stationary: no convergence within " + std::to_string(max_iter) +
                             " iterations (residual " + std::to_string(residual) + ")",
                         mu.vec(), residual);
}

std::vector<std::size_t> sample_trajectory(const PolynomialKernel& K,
                                           std::span<const Distribution> flow, std::size_t n,
                                           Rng& rng) {
    if (flow.size() <= n) throw InvalidInput("sample_trajectory: flow shorter than n+1");
    std::vector<std::size_t> path;
    path.reserve(n + 1);
    path.push_back(rng.categorical(flow[0].probs()));
    for (std::size_t t = 0; t < n; ++t) {
        const std::size_t x = path.back();
        const Distribution& mu = flow[t];
        std::vector<double> row(K.size());
        for (std::size_t y = 0; y < K.size(); ++y)
            row[y] = std::max(0.0, K.entry_at(x, y, mu[K.coordinate()(x, y)]));
        path.push_back(rng.categorical(row));
    }
    return path;
}

std::vector<std::size_t> sample_trajectory(const PolynomialKernel& K, const Distribution& mu0,
                                           std::size_t n, Rng& rng) {
    auto flow = propagate(K, mu0, n);
    return sample_trajectory(K, flow, n, rng);
}

namespace {

Eigen::MatrixXd parse_matrix(const nlohmann::json& j, std::size_t p) {
    Eigen::MatrixXd m(p, p);
    auto number = [](const nlohmann::json& v) {
        if (!v.is_number()) throw InvalidInput("model: matrix entries must be numbers");
        double d = v.get<double>();
        if (!std::isfinite(d)) throw InvalidInput("model: non-finite matrix entry");
        return d;
    };
    if (!j.is_array()) throw InvalidInput("model: each coefficient must be an array");
    if (j.size() == p * p && !j.empty() && !j[0].is_array()) {
        for (std::size_t i = 0; i < p * p; ++i) m(i / p, i % p) = number(j[i]);
    } else if (j.size() == p) {
        for (std::size_t x = 0; x < p; ++x) {
            if (!j[x].is_array() || j[x].size() != p)
                throw InvalidInput("model: coefficient row has wrong length");
            for (std::size_t y = 0; y < p; ++y) m(x, y) = number(j[x][y]);
        }
    } else {
        throw InvalidInput("model: coefficient matrix must have p*p entries");
    }
    return m;
}

}  // namespace

PolynomialKernel parse_kernel_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw InvalidInput(std::string("model: invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw InvalidInput("model: top level must be an object");
    static const std::set<std::string> allowed{"p", "degree", "coeff"};
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.contains(it.key())) throw InvalidInput("model: unknown key '" + it.key() + "'");
    for (const char* key : {"p", "degree", "coeff"})
        if (!j.contains(key)) throw InvalidInput(std::string("model: missing key '") + key + "'");
    if (!j["p"].is_number_integer() || j["p"].get<long long>() < 2)
        throw InvalidInput("model: p must be an integer >= 2");
    if (!j["degree"].is_number_integer() || j["degree"].get<long long>() < 1)
        throw InvalidInput("model: degree must be an integer >= 1");
    const auto p = static_cast<std::size_t>(j["p"].get<long long>());
    const auto d = static_cast<std::size_t>(j["degree"].get<long long>());
    const auto& coeff = j["coeff"];
    if (!coeff.is_array() || coeff.size() != d)
        throw InvalidInput("model: coeff must hold exactly `degree` matrices");
    std::vector<Eigen::MatrixXd> mats;
    for (const auto& c : coeff) mats.push_back(parse_matrix(c, p));
    return PolynomialKernel(std::move(mats));
}

PolynomialKernel load_kernel_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidInput("model: cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_kernel_json(ss.str());
}

}  // namespace nmc
