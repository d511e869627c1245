// SPDX-License-Identifier: Apache-2.0
//
// Lotka-Volterra ground-truth system: dynamics, RK4 integration in both time
// directions, and construction of the (history window, action) training set.
#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "magpred/nets.hpp"
#include "magpred/tensor.hpp"

namespace magpred {

using State = std::array<double, 2>;

struct LvParams {
    double a = 1.0, b = 1.0, c = 1.0, d = 1.0;
};

// dx/dt = a x - b x y,  dy/dt = c x y - d y
State lv_derivative(const State& s, const LvParams& p);

// First integral c x - d ln x + b y - a ln y, conserved along exact orbits.
double lv_invariant(const State& s, const LvParams& p);

enum class Direction { Forward, Backward };

struct IntegrationBlowup : std::runtime_error {
    IntegrationBlowup(const std::string& msg, int step_index)
        : std::runtime_error(msg), step(step_index) {}
    int step;
};

// Classical RK4 sampled at fixed spacing dt (negated field when integrating
// backward). Each output step is advanced with internal substeps no larger
// than max_substep: the U[3,5] parameter range drives oscillations fast
// enough that single 0.05 steps lose the first integral at the 1e-3 level.
// Returns steps+1 states including the initial one. States leaving
// [0, 1e6]^2 or turning non-finite raise IntegrationBlowup naming the step.
std::vector<State> integrate(const State& s0, const LvParams& p, double dt, int steps,
                             Direction dir, double max_substep = 0.0025);

// History window ending at s0: (s_{-T_h}, ..., s_{-1}, s_0) obtained by
// propagating the true model backward from s_0.
std::vector<State> backward_history(const State& s0, const LvParams& p, double dt, int t_h);

struct SampleRanges {
    double param_lo = 3.0, param_hi = 5.0;
    double state_lo = 1.0, state_hi = 3.0;
};

struct CaseData {
    LvParams params;
    State s0{};
    std::vector<State> traj;  // forward states, length history + horizon + 1
};

struct PairRef {
    int case_idx;
    int t;  // window is traj[t - history .. t], action = traj[t+1] - traj[t]
};

// Batch view consumed by training: raw condition sequences plus actions.
struct Batch {
    std::vector<Tensor> cond_seq;  // length history+1, each (B, 2)
    Tensor actions;                // (B, 2)
};

struct Dataset {
    static constexpr int kVersion = 1;

    std::uint64_t seed = 0;
    SampleRanges ranges;
    double dt = 0.05;
    int history = 10;  // T_h
    int horizon = 40;  // T
    int redraws = 0;   // number of blown-up draws that were replaced
    std::vector<CaseData> cases;

    State action(const PairRef& p) const;
    std::vector<PairRef> pairs(int first_case, int last_case) const;  // [first, last)
    std::vector<PairRef> all_pairs() const;
    Batch make_batch(const std::vector<PairRef>& refs) const;

    void save(const std::string& path) const;
    static Dataset load(const std::string& path);
};

struct DatasetError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Draws `count` cases with parameters from U[param_lo, param_hi] and initial
// states from U[state_lo, state_hi]; blown-up trajectories are redrawn and
// counted in Dataset::redraws.
Dataset sample_dataset(int count, std::uint64_t seed, const SampleRanges& ranges,
                       double dt = 0.05, int history = 10, int horizon = 40);

// Dataset statistics for the network-input affine scaling.
Normalizer fit_normalizer(const Dataset& ds);

}  // namespace magpred
