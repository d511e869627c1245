// SPDX-License-Identifier: Apache-2.0
//
// Two-player game optimization: adversarial losses, the stacked gradient
// field v(x), simultaneous gradient ascent, and the consensus update
// x' = x + alpha (v - gamma * grad 1/2||v||^2) with optional RMSProp
// preconditioning of the full direction.
#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "magpred/lvsys.hpp"
#include "magpred/nets.hpp"
#include "magpred/tape.hpp"

namespace magpred {

struct OptimizerConfig {
    double alpha = 0.01;   // learning rate
    double gamma = 0.0;    // consensus regularization coefficient
    double rho = 0.9;      // RMSProp decay
    double epsilon = 1e-8;
    bool precondition = true;  // false: raw steps, used by the analytic game tests
    long iterations = 30000;
    int batch_size = 64;
    int log_interval = 100;
    double divergence_norm = 1e6;
    NoiseKind noise = NoiseKind::Gaussian;
};

// Both players' losses built on one tape; theta/phi are the parameter leaves.
struct GameLosses {
    Var disc_loss;
    Var gen_loss;
    std::vector<Var> theta;
    std::vector<Var> phi;
};
using GameBuilder = std::function<GameLosses(Tape&)>;

// -( mean log D_real + mean log(1 - D_fake) ), the minimization form of the
// discriminator's ascent objective.
Var disc_loss(Var d_real, Var d_fake);
// -mean log D_fake, the non-saturating generator loss.
Var gen_loss(Var d_fake);

struct NonFiniteStep : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct StepStats {
    double disc_loss = 0.0;
    double gen_loss = 0.0;
    double v_norm = 0.0;  // Euclidean norm of the stacked field
};

// Value-level gradient field v = (-grad_theta disc_loss, -grad_phi gen_loss).
struct FieldValue {
    std::vector<Tensor> v_theta, v_phi;
    double norm = 0.0;
    double disc_loss = 0.0, gen_loss = 0.0;
};
FieldValue gradient_field(const GameBuilder& build);

// Owns the per-parameter RMSProp state; the master tensors stay with the nets.
class GameOptimizer {
public:
    GameOptimizer(std::vector<Tensor*> theta, std::vector<Tensor*> phi, OptimizerConfig cfg);

    // x' = x + alpha * precond(v - gamma * grad 1/2||v||^2)
    StepStats consensus_step(const GameBuilder& build);
    // consensus update with gamma treated as zero
    StepStats sga_step(const GameBuilder& build);

    const OptimizerConfig& config() const { return cfg_; }

private:
    StepStats step_impl(const GameBuilder& build, double gamma);

    std::vector<Tensor*> theta_, phi_;
    OptimizerConfig cfg_;
    std::vector<Tensor> sq_;  // running mean of squared updates, theta then phi
};

// Builds both adversarial losses for one batch: real and generated actions
// scored against the shared condition sequence (all inputs normalized).
GameBuilder make_gan_builder(GeneratorNet& gen, DiscriminatorNet& disc, const Normalizer& norm,
                             const Batch& batch, const std::vector<Tensor>& noise_seq);

struct TrainRecord {
    long iteration = 0;
    double disc_loss = 0.0;
    double gen_loss = 0.0;
    double v_norm = 0.0;
    double val_mae = 0.0;
};

struct TrainLog {
    std::vector<TrainRecord> records;
    bool diverged = false;
    long diverged_at = -1;
};

struct TrainHooks {
    std::function<void(long iteration)> on_checkpoint;
    long checkpoint_interval = 0;  // 0: never
    std::function<void(const TrainRecord&)> on_record;  // streamed as rows are produced
};

// Full adversarial training loop over a Lotka-Volterra dataset. Validation
// MAE is a one-step action error on a fixed held-out batch with one frozen
// noise draw per pair, reported in raw action units. Stops early with a
// diagnostic record if ||v|| exceeds cfg.divergence_norm.
TrainLog train_gan(GeneratorNet& gen, DiscriminatorNet& disc, const Dataset& data,
                   const Normalizer& norm, const OptimizerConfig& cfg, std::uint64_t seed,
                   const TrainHooks& hooks = {});

struct SweepResult {
    double gamma = 0.0;
    TrainLog log;
    GeneratorNet gen;
    DiscriminatorNet disc;
};

// Trains one run per gamma from an identical seed-pinned initialization;
// runs execute in parallel and results come back in gamma order.
std::vector<SweepResult> gamma_sweep(const NetConfig& net_cfg, const Dataset& data,
                                     const std::vector<double>& gammas,
                                     const OptimizerConfig& base, std::uint64_t seed);

}  // namespace magpred
