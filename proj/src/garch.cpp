#include "nmc/garch.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include <Eigen/Dense>
#include <gsl/gsl_multimin.h>

#include "nmc/error.hpp"

namespace nmc {

namespace {

double sample_variance(const std::vector<double>& r) {
    const double n = static_cast<double>(r.size());
    const double mean = std::accumulate(r.begin(), r.end(), 0.0) / n;
    double v = 0.0;
    for (double x : r) v += (x - mean) * (x - mean);
    return v / n;
}

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }
double logit(double p) { return std::log(p / (1.0 - p)); }

/// Per-observation log-likelihood terms.
std::vector<double> loglik_terms(const GarchModel& m, const std::vector<double>& r, double s2_0) {
    std::vector<double> out(r.size());
    double s2 = s2_0;
    const double c = std::log(2.0 * std::numbers::pi);
    for (std::size_t t = 0; t < r.size(); ++t) {
        if (t > 0) {
            const double e = r[t - 1] - m.mu;
            s2 = m.omega + m.alpha1 * e * e + m.beta1 * s2;
        }
        const double e = r[t] - m.mu;
        out[t] = -0.5 * (c + std::log(s2) + e * e / s2);
    }
    return out;
}

struct Objective {
    const std::vector<double>* r;
    double s2_0;
};

GarchModel decode(const gsl_vector* v) {
    GarchModel m;
    m.mu = gsl_vector_get(v, 0);
    m.omega = std::exp(gsl_vector_get(v, 1));
    const double s = logistic(gsl_vector_get(v, 2));
    m.alpha1 = s * logistic(gsl_vector_get(v, 3));
    m.beta1 = s - m.alpha1;
    return m;
}

double neg_loglik(const gsl_vector* v, void* params) {
    const auto* o = static_cast<const Objective*>(params);
    const GarchModel m = decode(v);
    double s2 = o->s2_0, nll = 0.0;
    const auto& r = *o->r;
    for (std::size_t t = 0; t < r.size(); ++t) {
        if (t > 0) {
            const double e = r[t - 1] - m.mu;
            s2 = m.omega + m.alpha1 * e * e + m.beta1 * s2;
        }
        if (!(s2 > 0.0) || !std::isfinite(s2)) return std::numeric_limits<double>::max();
        const double e = r[t] - m.mu;
        nll += 0.5 * (std::log(s2) + e * e / s2);
    }
    return std::isfinite(nll) ? nll : std::numeric_limits<double>::max();
}

struct Run {
    GarchModel model;
    double nll;
    std::size_t iterations;
};

Run minimize(const Objective& obj, const std::array<double, 4>& start, double sd) {
    const gsl_multimin_fminimizer_type* type = gsl_multimin_fminimizer_nmsimplex2;
    gsl_multimin_fminimizer* s = gsl_multimin_fminimizer_alloc(type, 4);
    gsl_vector* x = gsl_vector_alloc(4);
    gsl_vector* step = gsl_vector_alloc(4);
    for (std::size_t i = 0; i < 4; ++i) gsl_vector_set(x, i, start[i]);
    gsl_vector_set(step, 0, 0.1 * sd);
    gsl_vector_set(step, 1, 0.5);
    gsl_vector_set(step, 2, 0.5);
    gsl_vector_set(step, 3, 0.5);
    gsl_multimin_function f{&neg_loglik, 4, const_cast<Objective*>(&obj)};
    gsl_multimin_fminimizer_set(s, &f, x, step);
    std::size_t iter = 0;
    for (; iter < 5000; ++iter) {
        if (gsl_multimin_fminimizer_iterate(s)) break;
        if (gsl_multimin_test_size(gsl_multimin_fminimizer_size(s), 1e-9) == GSL_SUCCESS) break;
    }
    Run run{decode(s->x), s->fval, iter};
    gsl_vector_free(step);
    gsl_vector_free(x);
    gsl_multimin_fminimizer_free(s);
    return run;
}

}  // namespace

double garch_log_likelihood(const GarchModel& m, const std::vector<double>& returns) {
    const auto terms = loglik_terms(m, returns, sample_variance(returns));
    return std::accumulate(terms.begin(), terms.end(), 0.0);
}

GarchFit fit_garch11(const std::vector<double>& r) {
    if (r.size() < 50) throw InvalidInput("garch: need at least 50 returns");
    for (double x : r)
        if (!std::isfinite(x)) throw InvalidInput("garch: non-finite return");
    const double var = sample_variance(r);
    if (!(var > 0.0)) throw InvalidInput("garch: zero-variance returns");
    const double sd = std::sqrt(var);
    const double mean = std::accumulate(r.begin(), r.end(), 0.0) / static_cast<double>(r.size());

    Objective obj{&r, var};
    Run best{{}, std::numeric_limits<double>::infinity(), 0};
    for (double pers : {0.5, 0.9, 0.97}) {
        for (double share : {0.1, 0.4}) {
            const std::array<double, 4> start{mean, std::log(var * (1.0 - pers)), logit(pers), logit(share)};
            Run run = minimize(obj, start, sd);
            // One restart from the optimum shakes the simplex loose from flat spots.
            const std::array<double, 4> again{run.model.mu, std::log(run.model.omega),
                                              logit(std::clamp(run.model.alpha1 + run.model.beta1, 1e-9, 1 - 1e-9)),
                                              logit(std::clamp(run.model.alpha1 / std::max(run.model.alpha1 + run.model.beta1, 1e-300), 1e-9, 1 - 1e-9))};
            Run polished = minimize(obj, again, sd);
            polished.iterations += run.iterations;
            if (polished.nll > run.nll) polished = run;
            if (polished.nll < best.nll) best = polished;
        }
    }
    if (!std::isfinite(best.nll)) throw Nonconvergence("garch: no finite likelihood found", {}, 0.0);

    GarchFit fit;
    fit.model = best.model;
    fit.iterations = best.iterations;
    fit.log_likelihood = garch_log_likelihood(fit.model, r);
    fit.boundary = fit.model.alpha1 + fit.model.beta1 > 1.0 - 1e-3;

    // Outer product of per-observation score vectors by central differences.
    const std::array<double, 4> theta{fit.model.mu, fit.model.omega, fit.model.alpha1, fit.model.beta1};
    const std::array<double, 4> h{1e-3 * sd, 1e-3 * fit.model.omega, 1e-5, 1e-5};
    const std::size_t T = r.size();
    Eigen::MatrixXd scores(static_cast<Eigen::Index>(T), 4);
    for (std::size_t k = 0; k < 4; ++k) {
        auto plus = theta, minus = theta;
        plus[k] += h[k];
        minus[k] -= h[k];
        const auto lp = loglik_terms({plus[0], plus[1], plus[2], plus[3]}, r, var);
        const auto lm = loglik_terms({minus[0], minus[1], minus[2], minus[3]}, r, var);
        for (std::size_t t = 0; t < T; ++t)
            scores(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(k)) = (lp[t] - lm[t]) / (2.0 * h[k]);
    }
    const Eigen::Matrix4d opg = scores.transpose() * scores;
    Eigen::FullPivLU<Eigen::Matrix4d> lu(opg);
    if (lu.isInvertible() && scores.allFinite()) {
        const Eigen::Matrix4d cov = lu.inverse();
        for (std::size_t k = 0; k < 4; ++k) {
            const double v = cov(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
            fit.std_err[k] = v > 0.0 ? std::sqrt(v) : std::nan("");
            fit.t_stat[k] = theta[k] / fit.std_err[k];
        }
    } else {
        fit.se_available = false;
        fit.std_err.fill(std::nan(""));
        fit.t_stat.fill(std::nan(""));
    }
    return fit;
}

std::vector<double> garch_conditional_vol(const GarchModel& m, const std::vector<double>& r) {
    if (r.empty()) return {};
    if (!(m.omega > 0.0) || m.alpha1 < 0.0 || m.beta1 < 0.0)
        throw InvalidInput("garch: invalid model parameters");
    std::vector<double> out(r.size());
    double s2 = r.size() > 1 ? sample_variance(r) : 0.0;
    for (std::size_t t = 0; t < r.size(); ++t) {
        if (t > 0) {
            const double e = r[t - 1] - m.mu;
            s2 = m.omega + m.alpha1 * e * e + m.beta1 * s2;
        }
        out[t] = std::sqrt(s2);
    }
    return out;
}

CsvTable garch_table(const GarchFit& fit) {
    CsvTable t;
    t.header = {"param", "coef", "std_err", "t", "p_value"};
    const std::array<double, 4> coef{fit.model.mu, fit.model.omega, fit.model.alpha1, fit.model.beta1};
    const std::array<const char*, 4> names{"mu", "omega", "alpha[1]", "beta[1]"};
    for (std::size_t k = 0; k < 4; ++k) {
        const double p = std::erfc(std::abs(fit.t_stat[k]) / std::sqrt(2.0));
        t.add_row({names[k], format_number(coef[k]), format_number(fit.std_err[k]),
                   format_number(fit.t_stat[k]), format_number(p)});
    }
    return t;
}

}  // namespace nmc
