// SPDX-License-Identifier: Apache-2.0
//
// Sequence-conditioned generator and discriminator: one LSTM layer feeding a
// ReLU fully-connected stack. Parameter initialization, noise sampling and
// versioned checkpoint persistence live here too.
#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "magpred/tape.hpp"
#include "magpred/tensor.hpp"

namespace magpred {

struct NetConfig {
    int cond_dim = 2;
    int action_dim = 2;
    int noise_dim = 16;
    int lstm_hidden = 128;
    int fc_layers = 4;
    int fc_width = 64;

    // hyperparameters of the numerical study
    static NetConfig full_profile() { return NetConfig{}; }
    // small profile for CI and quick experiments
    static NetConfig scaled_profile() {
        NetConfig c;
        c.noise_dim = 8;
        c.lstm_hidden = 32;
        c.fc_layers = 2;
        c.fc_width = 32;
        return c;
    }
    bool operator==(const NetConfig&) const = default;
};

enum class NoiseKind { Gaussian, Uniform01 };

struct DenseLayer {
    Tensor W;  // (in, out)
    Tensor b;  // (1, out)
    static DenseLayer init(int in, int out, std::mt19937_64& rng);
};

struct LstmLayer {
    // gate blocks in column order: input, forget, cell candidate, output
    Tensor Wx;  // (in, 4H)
    Tensor Wh;  // (H, 4H)
    Tensor b;   // (1, 4H), forget block initialized to 1
    int hidden() const { return Wh.rows(); }
    static LstmLayer init(int in, int hidden, std::mt19937_64& rng);
};

struct DenseVars {
    Var W, b;
};
struct LstmVars {
    Var Wx, Wh, b;
};

// One cell update. Returns (hidden', cell').
std::pair<Var, Var> lstm_step(Var x, Var h, Var c, const LstmVars& p);

struct GeneratorNet {
    NetConfig cfg;
    LstmLayer lstm;  // input: cond_dim + noise_dim
    std::vector<DenseLayer> fc;
    DenseLayer out;  // -> action_dim, linear

    static GeneratorNet init(const NetConfig& cfg, std::mt19937_64& rng);
    std::vector<Tensor*> params();
    std::vector<std::pair<std::string, Tensor*>> named_params();
};

struct DiscriminatorNet {
    NetConfig cfg;
    LstmLayer lstm;  // input: cond_dim
    std::vector<DenseLayer> fc;  // first layer takes [h_T || action]
    DenseLayer out;  // -> 1 logit

    static DiscriminatorNet init(const NetConfig& cfg, std::mt19937_64& rng);
    std::vector<Tensor*> params();
    std::vector<std::pair<std::string, Tensor*>> named_params();
};

struct GeneratorVars {
    LstmVars lstm;
    std::vector<DenseVars> fc;
    DenseVars out;
};
struct DiscriminatorVars {
    LstmVars lstm;
    std::vector<DenseVars> fc;
    DenseVars out;
};

GeneratorVars upload(Tape& tape, const GeneratorNet& net);
DiscriminatorVars upload(Tape& tape, const DiscriminatorNet& net);

// Action sample for each batch row given condition and noise sequences
// (both length T_h+1 with matching batch size). Deterministic in its inputs.
Var generate(const GeneratorVars& gv, const std::vector<Var>& cond_seq,
             const std::vector<Var>& noise_seq);

// Probability in (0,1) per batch row that `action` is a real sample for the
// given condition sequence.
Var discriminate(const DiscriminatorVars& dv, const std::vector<Var>& cond_seq, Var action);

// Value-level wrappers that run on a scratch tape.
Tensor generate_values(const GeneratorNet& net, const std::vector<Tensor>& cond_seq,
                       const std::vector<Tensor>& noise_seq);
Tensor discriminate_values(const DiscriminatorNet& net, const std::vector<Tensor>& cond_seq,
                           const Tensor& action);

// i.i.d. per-timestep noise; one (batch, dim) tensor per sequence position.
std::vector<Tensor> sample_noise_seq(int seq_len, int batch, int dim, NoiseKind kind,
                                     std::mt19937_64& rng);

// Affine feature scaling fitted on dataset statistics and stored alongside
// the parameters; raw populations would otherwise saturate the gates.
struct Normalizer {
    std::vector<double> state_mean, state_scale;
    std::vector<double> action_mean, action_scale;

    static Normalizer identity(int state_dim, int action_dim);
    Tensor normalize_states(const Tensor& batch) const;
    Tensor normalize_actions(const Tensor& batch) const;
    Tensor denormalize_actions(const Tensor& batch) const;
};

// --- checkpoint container ---------------------------------------------------

struct CheckpointCorrupt : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct CheckpointVersionMismatch : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct CheckpointShapeMismatch : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TrainMeta {
    long iteration = 0;
    double gamma = 0.0;
    double alpha = 0.0;
    std::uint64_t seed = 0;
};

// Versioned, self-describing container of named arrays plus training
// metadata; shared by the adversarial model and the learned baselines.
// Encoded as JSON with round-trip-exact doubles.
struct Checkpoint {
    static constexpr int kVersion = 1;

    std::string kind;  // "gan", "pmlp", "plstm", "gmr"
    TrainMeta meta;
    NetConfig net;
    Normalizer norm;
    std::map<std::string, double> extra;
    std::vector<std::pair<std::string, Tensor>> tensors;

    void add(const std::string& name, const Tensor& t) { tensors.emplace_back(name, t); }
    const Tensor& tensor(const std::string& name) const;

    void save(const std::string& path) const;
    static Checkpoint load(const std::string& path);
};

void save_gan_checkpoint(const std::string& path, const GeneratorNet& gen,
                         const DiscriminatorNet& disc, const Normalizer& norm,
                         const TrainMeta& meta);

struct GanCheckpoint {
    GeneratorNet gen;
    DiscriminatorNet disc;
    Normalizer norm;
    TrainMeta meta;
};
GanCheckpoint load_gan_checkpoint(const std::string& path);

}  // namespace magpred
