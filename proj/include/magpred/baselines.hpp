// SPDX-License-Identifier: Apache-2.0
//
// Comparison models sharing the rollout interface: constant-acceleration
// extrapolation, Gaussian mixture regression over the flattened history, and
// noise-perturbed MLP / LSTM regressors trained on mean squared error.
#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <vector>

#include "magpred/evalsuite.hpp"
#include "magpred/gameopt.hpp"
#include "magpred/lvsys.hpp"
#include "magpred/nets.hpp"

namespace magpred {

// --- constant-acceleration model ---------------------------------------------

// Least-squares quadratic fit per state component over the window, advanced
// one step. Exact on polynomial trajectories of degree <= 2.
class CamSampler final : public ActionSampler {
public:
    Tensor propose(const std::vector<Tensor>& window_seq, std::mt19937_64& rng) override;
};

// Multi-step extrapolation, refit on the sliding window each step. Returns
// horizon+1 states starting at history.back(). Requires >= 3 history states.
std::vector<State> cam_predict(const std::vector<State>& history, int horizon);

// --- Gaussian mixture regression ----------------------------------------------

struct GmrConfig {
    int components = 8;  // K
    double ridge = 1e-6;
    int max_iterations = 200;
    double tol = 1e-7;  // relative log-likelihood improvement stop
    std::uint64_t seed = 0;
};

struct GmrSingularCovariance : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct GaussianMixture {
    std::vector<double> weights;      // K, sums to one
    std::vector<Tensor> means;        // K entries of shape (1, D)
    std::vector<Tensor> covariances;  // K entries of shape (D, D)
    std::vector<double> loglik_history;  // total data log-likelihood per EM iteration
};

// EM fit on row vectors. Regularized with a diagonal ridge; a covariance
// whose condition number exceeds 1e12 despite the ridge aborts the fit,
// since sparse data in high dimensions can make it singular.
GaussianMixture fit_gmm(const std::vector<std::vector<double>>& rows, const GmrConfig& cfg);

// Conditional distribution of the trailing dy coordinates given the leading
// ones, with per-component responsibilities evaluated at x.
struct MixtureConditional {
    std::vector<double> responsibilities;
    std::vector<Tensor> means;        // (1, dy) each
    std::vector<Tensor> covariances;  // (dy, dy) each
    Tensor mean() const;              // responsibility-weighted mean
};
MixtureConditional condition(const GaussianMixture& mix, const std::vector<double>& x, int dy);
Tensor sample_conditional(const MixtureConditional& c, std::mt19937_64& rng);

// Joint mixture over [flattened normalized history || normalized action],
// sampled through the conditional distribution given the history.
class GmrModel final : public ActionSampler {
public:
    static GmrModel fit(const Dataset& data, const Normalizer& norm, const GmrConfig& cfg);

    Tensor propose(const std::vector<Tensor>& window_seq, std::mt19937_64& rng) override;
    // responsibility-weighted conditional mean in raw action units
    Tensor conditional_mean(const std::vector<Tensor>& window_seq) const;

    const GaussianMixture& mixture() const { return mix_; }
    int history_len() const { return history_len_; }

    Checkpoint to_checkpoint() const;
    static GmrModel from_checkpoint(const Checkpoint& ck);

private:
    GaussianMixture mix_;
    Normalizer norm_;
    int history_len_ = 0;  // window length - 1
    int action_dim_ = 2;
};

// --- perturbed regression nets -------------------------------------------------

struct PnetConfig {
    bool lstm_first = false;  // replace the first hidden layer with an LSTM
    int layers = 5;
    int width = 128;
    double sigma_in = 0.1;  // Gaussian input perturbation, normalized units

    static PnetConfig scaled(bool lstm) {
        PnetConfig c;
        c.lstm_first = lstm;
        c.layers = 2;
        c.width = 32;
        return c;
    }
};

class PerturbedNet final : public ActionSampler {
public:
    static PerturbedNet init(const PnetConfig& cfg, int history_len, const Normalizer& norm,
                             std::mt19937_64& rng);

    Tensor propose(const std::vector<Tensor>& window_seq, std::mt19937_64& rng) override;
    std::vector<Tensor*> params();
    const PnetConfig& config() const { return cfg_; }
    const Normalizer& normalizer() const { return norm_; }

    Checkpoint to_checkpoint() const;
    static PerturbedNet from_checkpoint(const Checkpoint& ck);

    // tape-level forward on normalized, already-perturbed inputs; parameter
    // leaves are reported in params() order when requested
    Var forward(Tape& tape, const std::vector<Var>& inputs,
                std::vector<Var>* leaves = nullptr) const;

private:
    PnetConfig cfg_;
    int history_len_ = 0;
    int state_dim_ = 2, action_dim_ = 2;
    Normalizer norm_;
    LstmLayer lstm_;  // used only when cfg_.lstm_first
    std::vector<DenseLayer> fc_;
    DenseLayer out_;

    friend struct PnetAccess;
};

struct PnetTrainRecord {
    long iteration = 0;
    double mse = 0.0;
};
struct PnetLog {
    std::vector<PnetTrainRecord> records;
    bool diverged = false;
    long diverged_at = -1;
};

using BatchSource = std::function<Batch(int batch_size, std::mt19937_64&)>;
BatchSource dataset_batches(const Dataset& data);

// RMSProp on the mean squared action error, inputs perturbed per draw.
PnetLog pnet_train(PerturbedNet& net, const BatchSource& source, const OptimizerConfig& cfg,
                   std::uint64_t seed);

}  // namespace magpred
