#include "nmc/ghmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "nmc/error.hpp"

namespace nmc {

namespace {

constexpr double kEmissionFloor = 1e-300;
constexpr double kStarvationMass = 1e-8;
const double kLogTwoPi = std::log(2.0 * std::numbers::pi);

double log_normal_pdf(double x, double mean, double var) {
    const double d = x - mean;
    return -0.5 * (kLogTwoPi + std::log(var) + d * d / var);
}

double global_variance(const std::vector<double>& obs) {
    const double n = static_cast<double>(obs.size());
    const double mean = std::accumulate(obs.begin(), obs.end(), 0.0) / n;
    double v = 0.0;
    for (double o : obs) v += (o - mean) * (o - mean);
    return std::max(v / n, GhmmModel::kVarianceFloor);
}

}  // namespace

void GhmmModel::validate() const {
    const std::size_t K = means.size();
    if (K == 0) throw InvalidInput("ghmm: no states");
    if (variances.size() != K || initial.size() != K)
        throw DimensionMismatch(K, variances.size() != K ? variances.size() : initial.size());
    if (static_cast<std::size_t>(transition.rows()) != K || static_cast<std::size_t>(transition.cols()) != K)
        throw DimensionMismatch(K, static_cast<std::size_t>(transition.rows()));
    double s = 0.0;
    for (double v : initial) {
        if (!std::isfinite(v) || v < 0.0) throw InvalidInput("ghmm: bad initial distribution");
        s += v;
    }
    if (std::abs(s - 1.0) > kRowTolerance) throw InvalidInput("ghmm: initial distribution does not sum to 1");
    for (std::size_t i = 0; i < K; ++i) {
        double r = 0.0;
        for (std::size_t j = 0; j < K; ++j) {
            const double a = transition(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
            if (!std::isfinite(a) || a < 0.0) throw InvalidInput("ghmm: bad transition entry");
            r += a;
        }
        if (std::abs(r - 1.0) > kRowTolerance) throw InvalidInput("ghmm: transition row does not sum to 1");
        if (!std::isfinite(means[i])) throw InvalidInput("ghmm: non-finite mean");
        if (!std::isfinite(variances[i]) || variances[i] < kVarianceFloor)
            throw InvalidInput("ghmm: variance below floor");
    }
}

StochasticMatrix GhmmModel::transition_matrix() const {
    return StochasticMatrix::normalized_rows(transition);
}

nlohmann::ordered_json GhmmModel::to_json() const {
    nlohmann::ordered_json j;
    j["states"] = n_states();
    j["initial"] = initial;
    auto rows = nlohmann::ordered_json::array();
    for (Eigen::Index i = 0; i < transition.rows(); ++i) {
        std::vector<double> r(static_cast<std::size_t>(transition.cols()));
        for (Eigen::Index k = 0; k < transition.cols(); ++k) r[static_cast<std::size_t>(k)] = transition(i, k);
        rows.push_back(r);
    }
    j["transition"] = rows;
    j["means"] = means;
    j["variances"] = variances;
    return j;
}

GhmmModel GhmmModel::from_json(const nlohmann::json& j) {
    GhmmModel m;
    try {
        m.initial = j.at("initial").get<std::vector<double>>();
        m.means = j.at("means").get<std::vector<double>>();
        m.variances = j.at("variances").get<std::vector<double>>();
        auto rows = j.at("transition").get<std::vector<std::vector<double>>>();
        const auto K = static_cast<Eigen::Index>(rows.size());
        m.transition.resize(K, K);
        for (Eigen::Index i = 0; i < K; ++i) {
            if (static_cast<Eigen::Index>(rows[static_cast<std::size_t>(i)].size()) != K)
                throw InvalidInput("ghmm json: transition is not square");
            for (Eigen::Index k = 0; k < K; ++k) m.transition(i, k) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
        }
        if (j.contains("states") && j.at("states").get<std::size_t>() != m.means.size())
            throw InvalidInput("ghmm json: 'states' disagrees with the arrays");
    } catch (const nlohmann::json::exception& e) {
        throw InvalidInput(std::string("ghmm json: ") + e.what());
    }
    m.validate();
    return m;
}

namespace {

// Flat buffers reused across the E-steps of one fit.
struct Workspace {
    std::vector<double> A, b, alpha, beta, c, gamma, xi;
    std::vector<double> log_norm, inv_var;
};

// Fills ws.gamma (T x K) and ws.xi (K x K, summed over t); returns the log-likelihood.
double fb_core(const GhmmModel& model, const std::vector<double>& obs, Workspace& ws, bool& floor_hit) {
    const std::size_t T = obs.size(), K = model.n_states();
    ws.A.resize(K * K);
    for (std::size_t i = 0; i < K; ++i)
        for (std::size_t j = 0; j < K; ++j)
            ws.A[i * K + j] = model.transition(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    ws.log_norm.resize(K);
    ws.inv_var.resize(K);
    for (std::size_t i = 0; i < K; ++i) {
        ws.log_norm[i] = -0.5 * (kLogTwoPi + std::log(model.variances[i]));
        ws.inv_var[i] = 1.0 / model.variances[i];
    }
    ws.b.resize(T * K);
    ws.alpha.resize(T * K);
    ws.beta.resize(T * K);
    ws.gamma.resize(T * K);
    ws.c.resize(T);
    ws.xi.assign(K * K, 0.0);
    const double* A = ws.A.data();
    double* b = ws.b.data();
    double* alpha = ws.alpha.data();
    double* beta = ws.beta.data();
    double* c = ws.c.data();

    // Emissions shifted by the per-step maximum in the log domain, then floored.
    const double log_floor = std::log(kEmissionFloor);
    double log_lik = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
        double* bt = b + t * K;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < K; ++i) {
            const double d = obs[t] - model.means[i];
            bt[i] = ws.log_norm[i] - 0.5 * d * d * ws.inv_var[i];
            mx = std::max(mx, bt[i]);
        }
        if (mx < log_floor) floor_hit = true;
        log_lik += mx;
        for (std::size_t i = 0; i < K; ++i) bt[i] = std::max(std::exp(bt[i] - mx), kEmissionFloor);
    }

    double s = 0.0;
    for (std::size_t i = 0; i < K; ++i) s += alpha[i] = model.initial[i] * b[i];
    if (!(s > 0.0)) throw NumericError("forward_backward: zero scale factor");
    c[0] = s;
    for (std::size_t i = 0; i < K; ++i) alpha[i] /= s;
    for (std::size_t t = 1; t < T; ++t) {
        const double* prev = alpha + (t - 1) * K;
        double* cur = alpha + t * K;
        s = 0.0;
        for (std::size_t j = 0; j < K; ++j) {
            double v = 0.0;
            for (std::size_t i = 0; i < K; ++i) v += prev[i] * A[i * K + j];
            cur[j] = v * b[t * K + j];
            s += cur[j];
        }
        if (!(s > 0.0)) throw NumericError("forward_backward: zero scale factor");
        c[t] = s;
        for (std::size_t j = 0; j < K; ++j) cur[j] /= s;
    }
    for (std::size_t t = 0; t < T; ++t) log_lik += std::log(c[t]);

    for (std::size_t i = 0; i < K; ++i) beta[(T - 1) * K + i] = 1.0;
    std::vector<double>& w = ws.log_norm;  // reused as b * beta of the next step
    for (std::size_t t = T - 1; t-- > 0;) {
        for (std::size_t j = 0; j < K; ++j) w[j] = b[(t + 1) * K + j] * beta[(t + 1) * K + j] / c[t + 1];
        for (std::size_t i = 0; i < K; ++i) {
            double v = 0.0;
            for (std::size_t j = 0; j < K; ++j) {
                const double x = alpha[t * K + i] * A[i * K + j] * w[j];
                ws.xi[i * K + j] += x;
                v += A[i * K + j] * w[j];
            }
            beta[t * K + i] = v;
        }
    }
    for (std::size_t t = 0; t < T; ++t) {
        double z = 0.0;
        for (std::size_t i = 0; i < K; ++i) z += ws.gamma[t * K + i] = alpha[t * K + i] * beta[t * K + i];
        for (std::size_t i = 0; i < K; ++i) ws.gamma[t * K + i] /= z;
    }
    return log_lik;
}

}  // namespace

Posteriors forward_backward(const GhmmModel& model, const std::vector<double>& obs) {
    const std::size_t T = obs.size(), K = model.n_states();
    if (T == 0) throw InvalidInput("forward_backward: empty observation sequence");
    Workspace ws;
    Posteriors out;
    out.log_likelihood = fb_core(model, obs, ws, out.emission_floor_hit);
    out.gamma.resize(static_cast<Eigen::Index>(T), static_cast<Eigen::Index>(K));
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t i = 0; i < K; ++i)
            out.gamma(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(i)) = ws.gamma[t * K + i];
    out.xi_sum.resize(static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(K));
    for (std::size_t i = 0; i < K; ++i)
        for (std::size_t j = 0; j < K; ++j)
            out.xi_sum(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = ws.xi[i * K + j];
    return out;
}

GhmmModel quantile_init(const std::vector<double>& obs, std::size_t K) {
    if (K == 0) throw InvalidInput("ghmm: n_states must be >= 1");
    if (obs.size() < K) throw InvalidInput("ghmm: fewer observations than states");
    std::vector<double> sorted = obs;
    std::sort(sorted.begin(), sorted.end());
    GhmmModel m;
    m.means.resize(K);
    m.variances.resize(K);
    const std::size_t n = sorted.size();
    for (std::size_t k = 0; k < K; ++k) {
        const std::size_t lo = k * n / K, hi = (k + 1) * n / K;
        const double cnt = static_cast<double>(hi - lo);
        double mean = 0.0;
        for (std::size_t i = lo; i < hi; ++i) mean += sorted[i];
        mean /= cnt;
        double var = 0.0;
        for (std::size_t i = lo; i < hi; ++i) var += (sorted[i] - mean) * (sorted[i] - mean);
        m.means[k] = mean;
        m.variances[k] = std::max(var / cnt, GhmmModel::kVarianceFloor);
    }
    const auto KK = static_cast<Eigen::Index>(K);
    if (K == 1) {
        m.transition = Eigen::MatrixXd::Ones(1, 1);
    } else {
        m.transition = Eigen::MatrixXd::Constant(KK, KK, 0.2 / static_cast<double>(K - 1));
        m.transition.diagonal().setConstant(0.8);
    }
    m.initial.assign(K, 1.0 / static_cast<double>(K));
    return m;
}

GhmmModel random_init(const std::vector<double>& obs, std::size_t K, Rng& rng) {
    if (K == 0) throw InvalidInput("ghmm: n_states must be >= 1");
    if (obs.size() < K) throw InvalidInput("ghmm: fewer observations than states");
    GhmmModel m;
    // Partial Fisher-Yates over indices; prefer distinct values when available.
    std::vector<std::size_t> idx(obs.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t k = 0; k < idx.size() && m.means.size() < K; ++k) {
        const std::size_t j = k + static_cast<std::size_t>(rng.uniform() * static_cast<double>(idx.size() - k));
        std::swap(idx[k], idx[std::min(j, idx.size() - 1)]);
        const double v = obs[idx[k]];
        if (std::find(m.means.begin(), m.means.end(), v) == m.means.end()) m.means.push_back(v);
    }
    const double gv = global_variance(obs);
    for (std::size_t k = m.means.size(), r = 0; k < K; ++k, ++r)
        m.means.push_back(m.means[r % m.means.size()] + 1e-6 * std::sqrt(gv) * static_cast<double>(r + 1));
    m.variances.assign(K, gv);
    const auto KK = static_cast<Eigen::Index>(K);
    m.transition.resize(KK, KK);
    for (Eigen::Index i = 0; i < KK; ++i) {
        double s = 0.0;
        for (Eigen::Index j = 0; j < KK; ++j) s += m.transition(i, j) = rng.exponential();
        m.transition.row(i) /= s;
    }
    m.initial.assign(K, 1.0 / static_cast<double>(K));
    return m;
}

GhmmFit fit_baum_welch(const std::vector<double>& obs, const GhmmFitConfig& config) {
    const std::size_t K = config.init == GhmmInit::Explicit && config.initial_model
                              ? config.initial_model->n_states()
                              : config.n_states;
    if (K == 0) throw InvalidInput("ghmm: n_states must be >= 1");
    if (obs.size() < 10 * K)
        throw InvalidInput("ghmm: need at least 10 observations per state (" + std::to_string(10 * K) + ")");
    for (double o : obs)
        if (!std::isfinite(o)) throw InvalidInput("ghmm: non-finite observation");

    GhmmFit fit;
    switch (config.init) {
        case GhmmInit::Quantile:
            fit.model = quantile_init(obs, K);
            break;
        case GhmmInit::Random: {
            Rng rng(config.seed);
            fit.model = random_init(obs, K, rng);
            break;
        }
        case GhmmInit::Explicit:
            if (!config.initial_model) throw InvalidInput("ghmm: explicit init without a model");
            fit.model = *config.initial_model;
            fit.model.validate();
            break;
    }

    const double gv = global_variance(obs);
    const std::size_t T = obs.size();
    Workspace ws;
    fit.trace.push_back(fb_core(fit.model, obs, ws, fit.emission_floor_hit));

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        GhmmModel& m = fit.model;
        for (std::size_t i = 0; i < K; ++i) m.initial[i] = ws.gamma[i];
        for (std::size_t i = 0; i < K; ++i) {
            const auto ii = static_cast<Eigen::Index>(i);
            double mass = 0.0, sx = 0.0;
            for (std::size_t t = 0; t < T; ++t) {
                const double g = ws.gamma[t * K + i];
                mass += g;
                sx += g * obs[t];
            }
            double row_mass = 0.0;
            for (std::size_t j = 0; j < K; ++j) row_mass += ws.xi[i * K + j];
            if (mass < kStarvationMass) {
                ++fit.starvation_events;
                m.variances[i] = gv;
                m.transition.row(ii).setConstant(1.0 / static_cast<double>(K));
                continue;
            }
            const double mean = sx / mass;
            double sv = 0.0;
            for (std::size_t t = 0; t < T; ++t) {
                const double d = obs[t] - mean;
                sv += ws.gamma[t * K + i] * d * d;
            }
            m.means[i] = mean;
            m.variances[i] = std::max(sv / mass, GhmmModel::kVarianceFloor);
            for (std::size_t j = 0; j < K; ++j)
                m.transition(ii, static_cast<Eigen::Index>(j)) =
                    row_mass > 0.0 ? ws.xi[i * K + j] / row_mass : 1.0 / static_cast<double>(K);
        }
        fit.trace.push_back(fb_core(m, obs, ws, fit.emission_floor_hit));
    }
    return fit;
}

GhmmSample sample_ghmm(const GhmmModel& model, std::size_t n, Rng& rng) {
    if (n == 0) throw InvalidInput("sample_ghmm: n must be >= 1");
    model.validate();
    const std::size_t K = model.n_states();
    std::vector<std::vector<double>> rows(K);
    for (std::size_t i = 0; i < K; ++i) {
        rows[i].resize(K);
        for (std::size_t j = 0; j < K; ++j)
            rows[i][j] = model.transition(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
    GhmmSample s;
    s.states.reserve(n);
    s.observations.reserve(n);
    std::size_t state = rng.categorical(model.initial);
    for (std::size_t t = 0; t < n; ++t) {
        if (t > 0) state = rng.categorical(rows[state]);
        s.states.push_back(state);
        s.observations.push_back(rng.normal(model.means[state], std::sqrt(model.variances[state])));
    }
    return s;
}

std::vector<std::size_t> viterbi(const GhmmModel& model, const std::vector<double>& obs) {
    const std::size_t T = obs.size(), K = model.n_states();
    if (T == 0) throw InvalidInput("viterbi: empty observation sequence");
    auto safe_log = [](double v) { return v > 0.0 ? std::log(v) : -std::numeric_limits<double>::infinity(); };
    std::vector<double> delta(K), next(K);
    std::vector<std::size_t> back(T * K, 0);
    for (std::size_t i = 0; i < K; ++i)
        delta[i] = safe_log(model.initial[i]) + log_normal_pdf(obs[0], model.means[i], model.variances[i]);
    for (std::size_t t = 1; t < T; ++t) {
        for (std::size_t j = 0; j < K; ++j) {
            double best = -std::numeric_limits<double>::infinity();
            std::size_t arg = 0;
            for (std::size_t i = 0; i < K; ++i) {
                const double v = delta[i] + safe_log(model.transition(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
                if (v > best) {
                    best = v;
                    arg = i;
                }
            }
            back[t * K + j] = arg;
            next[j] = best + log_normal_pdf(obs[t], model.means[j], model.variances[j]);
        }
        std::swap(delta, next);
    }
    std::vector<std::size_t> path(T);
    std::size_t arg = 0;
    for (std::size_t i = 1; i < K; ++i)
        if (delta[i] > delta[arg]) arg = i;
    path[T - 1] = arg;
    for (std::size_t t = T - 1; t > 0; --t) path[t - 1] = back[t * K + path[t]];
    return path;
}

}  // namespace nmc
