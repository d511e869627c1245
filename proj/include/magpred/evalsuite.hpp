// SPDX-License-Identifier: Apache-2.0
//
// Testing-phase machinery: autoregressive rollout with a sliding history
// window, the MAE metric, and the distribution evaluation that compares
// pooled model rollouts against ground-truth trajectories.
#pragma once

#include <cstdint>
#include <fstream>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "magpred/lvsys.hpp"
#include "magpred/nets.hpp"

namespace magpred {

// Batched one-step action proposal shared by the adversarial model and every
// baseline: given B sliding windows (length T_h+1 of raw states each), return
// one raw action per window.
class ActionSampler {
public:
    virtual ~ActionSampler() = default;
    virtual Tensor propose(const std::vector<Tensor>& window_seq, std::mt19937_64& rng) = 0;
};

// Trained generator as sampler: normalizes the window, draws one noise
// sequence and denormalizes the produced action.
class GanSampler final : public ActionSampler {
public:
    GanSampler(const GeneratorNet& gen, const Normalizer& norm,
               NoiseKind kind = NoiseKind::Gaussian)
        : gen_(&gen), norm_(norm), kind_(kind) {}
    Tensor propose(const std::vector<Tensor>& window_seq, std::mt19937_64& rng) override;

private:
    const GeneratorNet* gen_;
    Normalizer norm_;
    NoiseKind kind_;
};

// Oracle sampler that advances the true dynamics by one step; parameters are
// installed per evaluation case. Used for harness self-checks.
class TrueDynamicsSampler final : public ActionSampler {
public:
    explicit TrueDynamicsSampler(double dt) : dt_(dt) {}
    void set_case(const LvParams& p) { params_ = p; }
    Tensor propose(const std::vector<Tensor>& window_seq, std::mt19937_64& rng) override;

private:
    double dt_;
    LvParams params_;
};

struct RolloutError : std::runtime_error {
    RolloutError(const std::string& msg, int step_index)
        : std::runtime_error(msg), step(step_index) {}
    int step;
};

struct RolloutResult {
    std::vector<State> states;   // predicted trajectory, length T+1; front() = s_0
    std::vector<State> actions;  // length T
    int case_id = 0;
    std::uint64_t noise_seed = 0;
};

// Autoregressive rollout: each proposed action advances the state and the
// window slides one step. Deterministic given the noise seed. A non-finite
// state aborts with the offending step index.
RolloutResult rollout(ActionSampler& sampler, const std::vector<State>& history, int T,
                      std::uint64_t noise_seed, int case_id = 0);

// n rollouts sharing one starting history, propagated as one batch.
std::vector<RolloutResult> rollout_batch(ActionSampler& sampler,
                                         const std::vector<State>& history, int n, int T,
                                         std::uint64_t noise_seed, int case_id = 0);

// Mean absolute difference across all components. Rejects empty or
// mismatched inputs.
double mae(const std::vector<State>& pred, const std::vector<State>& truth);

// Exact 1-D earth-mover distance between empirical samples (quantile
// coupling on the union grid; sizes may differ).
double wasserstein1(std::vector<double> a, std::vector<double> b);

struct DistributionSummary {
    std::vector<double> values;
    double mean = 0.0;
    double stddev = 0.0;
    std::vector<double> bin_edges;  // bins + 1 edges
    std::vector<long> counts;       // sums to values.size()
    double w1_to_reference = 0.0;
};

struct EvalConfig {
    int m = 20;  // parameter sets
    int n = 50;  // rollouts per set
    int T = 40;  // prediction steps
    int history = 10;
    double dt = 0.05;
    SampleRanges ranges;
    int bins = 30;
    bool pool_all_steps = false;  // default pools terminal states only
};

struct DistributionReport {
    DistributionSummary pred_x, pred_y;  // w1_to_reference set against truth pools
    DistributionSummary true_x, true_y;
};

// For each of m random parameter sets: integrate the true model forward,
// build the history by backward propagation, run n rollouts, and pool the
// predicted against the true statistic. on_case (optional) observes each
// drawn case before its rollouts run; on_rollout sees every finished rollout.
DistributionReport evaluate_distribution(
    ActionSampler& sampler, const EvalConfig& cfg, std::uint64_t seed,
    const std::function<void(int, const LvParams&, const State&)>& on_case = {},
    const std::function<void(const RolloutResult&)>& on_rollout = {});

// CSV with header variable,source,value; one row per pooled sample.
void export_violin_data(const DistributionReport& report, const std::string& path);

// Streams rollouts into a CSV with header case_id,rollout,t,x,y.
class RolloutCsvWriter {
public:
    explicit RolloutCsvWriter(const std::string& path);
    void write(const RolloutResult& r);

private:
    std::ofstream out_;
    int last_case_ = -1;
    int rollout_in_case_ = 0;
};

}  // namespace magpred
