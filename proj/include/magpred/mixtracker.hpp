// SPDX-License-Identifier: Apache-2.0
//
// Mixture particle filter: the posterior is a pi-weighted sum of particle
// components. The prior update propagates every particle through an action
// sampler (the trained generator acts as an implicit proposal distribution);
// the measurement update reweights particles and component weights by the
// Gaussian likelihood.
#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include "magpred/evalsuite.hpp"
#include "magpred/lvsys.hpp"

namespace magpred {

struct Particle {
    State state{};
    double weight = 0.0;
    std::vector<State> history;  // sliding window, back() == state
};

struct Component {
    double pi = 1.0;
    std::vector<Particle> particles;
};

struct MixtureBelief {
    std::vector<Component> components;

    State posterior_mean() const;
    // pooled unweighted particle statistics
    State cloud_mean() const;
    State cloud_std() const;
    // throws std::logic_error when sum(pi) or any per-component weight sum
    // strays from one by more than tol
    void check_normalization(double tol = 1e-12) const;
};

// Identity observation of the state with Gaussian noise covariance R.
// Likelihoods are evaluated up to a constant factor, which cancels in the
// weight normalization.
struct MeasurementModel {
    explicit MeasurementModel(Tensor R_in);
    static MeasurementModel isotropic(int dim, double sigma);

    double log_likelihood(const State& x, const State& z) const;

    Tensor R;

private:
    std::vector<double> chol_;  // lower-triangular factor of R
};

MixtureBelief init_belief(const std::vector<State>& history, int n_components, int particles,
                          double init_noise, std::mt19937_64& rng);

struct PriorOutcome {
    int rejected = 0;  // non-finite propagations replaced from survivors
};
// Advances every particle by one sampled action and slides its history;
// weights and pi are untouched.
PriorOutcome prior_update(MixtureBelief& belief, ActionSampler& sampler, std::mt19937_64& rng);

struct MeasurementOutcome {
    bool underflow_reset = false;  // all likelihoods vanished; weights reset uniform
};
MeasurementOutcome measurement_update(MixtureBelief& belief, const State& z,
                                      const MeasurementModel& model);
// Same update from precomputed log-likelihoods lls[n][i] = log f_n(z | x_i).
MeasurementOutcome measurement_update_loglik(MixtureBelief& belief,
                                             const std::vector<std::vector<double>>& lls);

// Systematic resampling inside any component whose effective-sample-size
// ratio falls below the threshold; particle counts and pi are preserved and
// weights reset to uniform.
void resample(MixtureBelief& belief, double threshold, std::mt19937_64& rng);

struct TrackerConfig {
    int n_components = 1;
    int particles = 100;
    double ess_threshold = 0.5;
    double init_history_noise = 0.01;
    std::uint64_t seed = 0;
};

struct TrackStep {
    int k = 0;
    State truth{}, measurement{}, posterior_mean{};
    State cloud_mean{}, cloud_std{};
    std::vector<double> component_pi;
    bool underflow_reset = false;
};

struct TrackResult {
    std::vector<TrackStep> steps;
    double rmse = 0.0;
};

// Alternates prior update, measurement update and conditional resampling
// over the measurement sequence. truth and measurements hold s_1..s_K.
TrackResult track(ActionSampler& sampler, const std::vector<State>& truth,
                  const std::vector<State>& measurements, const std::vector<State>& init_history,
                  const MeasurementModel& model, const TrackerConfig& cfg);

}  // namespace magpred
