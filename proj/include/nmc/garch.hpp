#pragma once

#include <array>
#include <string>
#include <vector>

#include "nmc/csv.hpp"

namespace nmc {

/// sigma2_t = omega + alpha1 (r_{t-1} - mu)^2 + beta1 sigma2_{t-1}.
struct GarchModel {
    double mu = 0.0;
    double omega = 0.0;
    double alpha1 = 0.0;
    double beta1 = 0.0;
};

struct GarchFit {
    GarchModel model;
    std::array<double, 4> std_err{};  // mu, omega, alpha1, beta1 (outer product of gradients)
    std::array<double, 4> t_stat{};
    double log_likelihood = 0.0;
    std::size_t iterations = 0;
    bool boundary = false;  // alpha1 + beta1 ended within 1e-3 of 1
    bool se_available = true;
};

/// Gaussian quasi-likelihood, log(2 pi) term included.
double garch_log_likelihood(const GarchModel& m, const std::vector<double>& returns);

/// Quasi-MLE by Nelder-Mead over omega = exp(a), alpha1 + beta1 = logistic(b),
/// alpha1 = (alpha1 + beta1) logistic(c). Best of several starts.
GarchFit fit_garch11(const std::vector<double>& returns);

/// Conditional sigma_t for every return, with sigma2_0 the sample variance.
std::vector<double> garch_conditional_vol(const GarchModel& m, const std::vector<double>& returns);

/// Rows mu, omega, alpha[1], beta[1]; columns coef, std_err, t, p_value.
CsvTable garch_table(const GarchFit& fit);

}  // namespace nmc
