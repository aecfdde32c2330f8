#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "nmc/chain.hpp"
#include "nmc/rng.hpp"

namespace nmc {

/// Gaussian HMM with one univariate normal emission per hidden state.
struct GhmmModel {
    static constexpr double kVarianceFloor = 1e-10;
    static constexpr double kRowTolerance = 1e-10;

    std::vector<double> initial;
    Eigen::MatrixXd transition;
    std::vector<double> means;
    std::vector<double> variances;

    std::size_t n_states() const { return means.size(); }
    /// Throws InvalidInput on shape mismatch, bad rows or variances below the floor.
    void validate() const;
    /// The hidden chain as a StochasticMatrix (rows renormalized to absorb drift).
    StochasticMatrix transition_matrix() const;

    nlohmann::ordered_json to_json() const;
    static GhmmModel from_json(const nlohmann::json& j);
};

struct Posteriors {
    double log_likelihood = 0.0;
    Eigen::MatrixXd gamma;     // T x K, row t is P(state_t = . | obs)
    Eigen::MatrixXd xi_sum;    // K x K, sum over t of P(state_t = i, state_{t+1} = j | obs)
    bool emission_floor_hit = false;
};

/// Scaled forward-backward. Emissions are shifted per step in the log domain
/// and floored at 1e-300, so distant observations cannot zero a step.
Posteriors forward_backward(const GhmmModel& model, const std::vector<double>& obs);

enum class GhmmInit { Quantile, Random, Explicit };

struct GhmmFitConfig {
    std::size_t n_states = 3;
    std::size_t epochs = 15;
    GhmmInit init = GhmmInit::Quantile;
    std::optional<GhmmModel> initial_model;  // required for Explicit
    std::uint64_t seed = 0;                  // used by Random
};

struct GhmmFit {
    GhmmModel model;
    std::vector<double> trace;  // log-likelihood before EM and after each epoch
    std::size_t starvation_events = 0;
    bool emission_floor_hit = false;
};

/// Sorted observations split into n_states equal groups; 0.8 self-loops.
GhmmModel quantile_init(const std::vector<double>& obs, std::size_t n_states);
/// Distinct random observations as means, global variance, Dirichlet(1) rows.
GhmmModel random_init(const std::vector<double>& obs, std::size_t n_states, Rng& rng);

/// Exactly `epochs` Baum-Welch iterations with no early stop.
GhmmFit fit_baum_welch(const std::vector<double>& obs, const GhmmFitConfig& config = {});

struct GhmmSample {
    std::vector<std::size_t> states;
    std::vector<double> observations;
};

GhmmSample sample_ghmm(const GhmmModel& model, std::size_t n, Rng& rng);

/// Most probable state path; ties go to the lower state index.
std::vector<std::size_t> viterbi(const GhmmModel& model, const std::vector<double>& obs);

}  // namespace nmc
