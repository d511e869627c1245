// SPDX-License-Identifier: Apache-2.0
//
// End-to-end acceptance runner. Each criterion prints one PASS/FAIL line;
// the exit code is nonzero when any selected criterion fails. Criteria 4-6
// share one gamma-sweep training run.
//
//   acceptance            run everything
//   acceptance 3 8 9      run a subset
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "magpred/baselines.hpp"
#include "magpred/evalsuite.hpp"
#include "magpred/gameopt.hpp"
#include "magpred/lvsys.hpp"
#include "magpred/mixtracker.hpp"
#include "magpred/nets.hpp"
#include "magpred/tape.hpp"

using namespace magpred;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
}

// ---------------------------------------------------------------- criterion 1

NetConfig tiny_net_config() {
    NetConfig c;
    c.cond_dim = 2;
    c.action_dim = 2;
    c.noise_dim = 2;
    c.lstm_hidden = 3;
    c.fc_layers = 1;
    c.fc_width = 4;
    return c;
}

struct TinyGame {
    GeneratorNet gen;
    DiscriminatorNet disc;
    Batch batch;
    std::vector<Tensor> noise;
    Normalizer norm = Normalizer::identity(2, 2);

    explicit TinyGame(std::uint64_t seed) {
        NetConfig cfg = tiny_net_config();
        std::mt19937_64 rng(seed);
        gen = GeneratorNet::init(cfg, rng);
        disc = DiscriminatorNet::init(cfg, rng);
        const int B = 2, T = 3;
        for (int t = 0; t < T; ++t) batch.cond_seq.push_back(Tensor::uniform(B, 2, -1, 1, rng));
        batch.actions = Tensor::uniform(B, 2, -0.5, 0.5, rng);
        noise = sample_noise_seq(T, B, cfg.noise_dim, NoiseKind::Gaussian, rng);
    }
    GameBuilder builder() { return make_gan_builder(gen, disc, norm, batch, noise); }
};

Outcome criterion1() {
    std::mt19937_64 rng(20260808);

    // primitives against central finite differences
    using Build = std::function<Var(Tape&, const std::vector<Var>&)>;
    struct Prim {
        const char* name;
        int arity;
        double lo, hi;
        Build build;
    };
    auto weighted_sum = [](Tape& t, Var x, std::uint64_t key) {
        std::mt19937_64 r(key);
        return sum(mul(x, t.constant(Tensor::uniform(x.rows(), x.cols(), 0.5, 1.5, r))));
    };
    std::uint64_t key = 0;
    const std::vector<Prim> prims = {
        {"add", 2, -2, 2, [&](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, add(v[0], v[1]), key); }},
        {"sub", 2, -2, 2, [&](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, sub(v[0], v[1]), key); }},
        {"mul", 2, -2, 2, [&](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, mul(v[0], v[1]), key); }},
        {"div", 2, 0.5, 2.5, [&](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, div(v[0], v[1]), key); }},
        {"matmul", 2, -2, 2, [&](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, matmul(v[0], transpose(v[1])), key); }},
        {"scale", 1, -2, 2, [&](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, scale(v[0], -1.3), key); }},
        {"neg", 1, -2, 2, [&](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, neg(v[0]), key); }},
        {"tanh", 1, -2, 2, [&](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, tanh(v[0]), key); }},
        {"sigmoid", 1, -2, 2, [&](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, sigmoid(v[0]), key); }},
        {"relu", 1, -2, 2, [&](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, relu(v[0]), key); }},
        {"log", 1, 0.1, 2.1, [&](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, log(v[0]), key); }},
        {"exp", 1, -2, 2, [&](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, exp(v[0]), key); }},
        {"square", 1, -2, 2, [&](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, square(v[0]), key); }},
        {"sum", 1, -2, 2, [&](Tape&, const std::vector<Var>& v) { return sum(v[0]); }},
        {"mean", 1, -2, 2, [&](Tape&, const std::vector<Var>& v) { return mean(v[0]); }},
        {"concat_slice", 2, -2, 2, [&](Tape& t, const std::vector<Var>& v) {
             return weighted_sum(t, slice_cols(concat_cols(v[0], v[1]), 1, v[0].cols() + v[1].cols()), key);
         }},
        {"sum_rows_bcast", 1, -2, 2, [&](Tape& t, const std::vector<Var>& v) {
             return weighted_sum(t, broadcast_rows(sum_rows(v[0]), v[0].rows()), key);
         }},
    };

    double worst_prim = 0.0;
    for (const Prim& p : prims) {
        for (int rep = 0; rep < 100; ++rep) {
            key = rng();
            std::uniform_int_distribution<int> d(1, 4);
            const int r = d(rng), c = d(rng);
            std::vector<Tensor> inputs;
            for (int k = 0; k < p.arity; ++k)
                inputs.push_back(Tensor::uniform(r, c, p.lo, p.hi, rng));

            Tape tape;
            std::vector<Var> leaves;
            for (const Tensor& t : inputs) leaves.push_back(tape.leaf(t));
            Var loss = p.build(tape, leaves);
            auto grads = backward(loss, leaves);

            auto value = [&](const std::vector<Tensor>& in) {
                Tape t2;
                std::vector<Var> l2;
                for (const Tensor& t : in) l2.push_back(t2.leaf(t));
                return p.build(t2, l2).value()[0];
            };
            const double eps = 1e-5;
            for (std::size_t li = 0; li < inputs.size(); ++li)
                for (std::size_t i = 0; i < inputs[li].size(); ++i) {
                    std::vector<Tensor> in = inputs;
                    in[li][i] += eps;
                    const double up = value(in);
                    in[li][i] -= 2 * eps;
                    const double dn = value(in);
                    worst_prim = std::max(
                        worst_prim, rel_err(grads[li].value()[i], (up - dn) / (2 * eps)));
                }
        }
        if (worst_prim >= 1e-4) {
            return {false, std::string("primitive '") + p.name + "' gradient off by " +
                               std::to_string(worst_prim)};
        }
    }

    // full generator/discriminator stacks, end to end. Central differences
    // are only valid where the loss is smooth, so probes whose rectifier
    // activation pattern flips between the two evaluations are discarded.
    auto relu_pattern = [](const Tape& t) {
        std::string pattern;
        for (std::size_t id = 0; id < t.size(); ++id) {
            const Node& n = t.node(static_cast<int>(id));
            if (n.op != Op::Relu) continue;
            const Tensor& in = t.node(n.a).value;
            for (std::size_t i = 0; i < in.size(); ++i) pattern.push_back(in[i] >= 0 ? '1' : '0');
        }
        return pattern;
    };
    double worst_stack = 0.0;
    int skipped = 0;
    for (int rep = 0; rep < 100; ++rep) {
        TinyGame g(rng());
        Tape tape;
        GameLosses gl = g.builder()(tape);
        auto g_theta = backward(gl.disc_loss, gl.theta);
        auto g_phi = backward(gl.gen_loss, gl.phi);

        auto losses = [&](std::string* pattern) {
            Tape t2;
            GameLosses l = g.builder()(t2);
            if (pattern) *pattern = relu_pattern(t2);
            return std::pair<double, double>(l.disc_loss.value()[0], l.gen_loss.value()[0]);
        };
        const double eps = 1e-5;
        auto disc_params = g.disc.params();
        auto gen_params = g.gen.params();
        for (int probe = 0; probe < 4; ++probe) {
            const bool disc_side = probe % 2 == 0;
            auto& params = disc_side ? disc_params : gen_params;
            auto& grads = disc_side ? g_theta : g_phi;
            std::uniform_int_distribution<std::size_t> pt(0, params.size() - 1);
            const std::size_t pi = pt(rng);
            std::uniform_int_distribution<std::size_t> px(0, params[pi]->size() - 1);
            const std::size_t i = px(rng);
            const double saved = (*params[pi])[i];
            std::string up_pat, dn_pat;
            (*params[pi])[i] = saved + eps;
            const auto up = losses(&up_pat);
            (*params[pi])[i] = saved - eps;
            const auto dn = losses(&dn_pat);
            (*params[pi])[i] = saved;
            if (up_pat != dn_pat) {
                ++skipped;  // straddles a rectifier kink
                continue;
            }
            const double fd = ((disc_side ? up.first : up.second) -
                               (disc_side ? dn.first : dn.second)) /
                              (2 * eps);
            worst_stack = std::max(worst_stack, rel_err(grads[pi].value()[i], fd));
        }
    }
    if (worst_stack >= 1e-3)
        return {false, "end-to-end stack gradient off by " + std::to_string(worst_stack)};
    return {true, "worst primitive rel err " + std::to_string(worst_prim) +
                      ", worst end-to-end rel err " + std::to_string(worst_stack) + " (" +
                      std::to_string(skipped) + " kink-straddling probes skipped)"};
}

// ---------------------------------------------------------------- criterion 2

Outcome criterion2() {
    // bilinear game: the field-norm gradient is the identity map
    std::mt19937_64 rng(22);
    std::uniform_real_distribution<double> dist(-3.0, 3.0);
    double worst_exact = 0.0;
    for (int rep = 0; rep < 100; ++rep) {
        const double tv = dist(rng), pv = dist(rng);
        Tape t;
        Var th = t.leaf(Tensor::scalar(tv));
        Var ph = t.leaf(Tensor::scalar(pv));
        Var f = mul(th, ph);
        Var v_th = neg(backward(neg(f), {th})[0]);
        Var v_ph = neg(backward(f, {ph})[0]);
        auto g = grad_norm_grad({v_th, v_ph}, {th, ph});
        worst_exact = std::max({worst_exact, std::abs(g[0].value()[0] - tv),
                                std::abs(g[1].value()[0] - pv)});
    }
    if (worst_exact > 1e-12)
        return {false, "bilinear identity off by " + std::to_string(worst_exact)};

    // random small network: H^T v against finite differences of r = 1/2 ||v||^2
    TinyGame game(99);
    Tape tape;
    GameLosses gl = game.builder()(tape);
    std::vector<Var> v;
    for (const Var& g : backward(gl.disc_loss, gl.theta)) v.push_back(neg(g));
    for (const Var& g : backward(gl.gen_loss, gl.phi)) v.push_back(neg(g));
    std::vector<Var> params = gl.theta;
    params.insert(params.end(), gl.phi.begin(), gl.phi.end());
    auto gng = grad_norm_grad(v, params);

    auto r_value = [&]() {
        FieldValue f = gradient_field(game.builder());
        return 0.5 * f.norm * f.norm;
    };
    std::vector<Tensor*> masters = game.disc.params();
    for (Tensor* p : game.gen.params()) masters.push_back(p);

    std::mt19937_64 pick_rng(5);
    double worst_fd = 0.0;
    const double eps = 1e-4;
    for (int probe = 0; probe < 5; ++probe) {
        std::uniform_int_distribution<std::size_t> pt(0, masters.size() - 1);
        const std::size_t pi = pt(pick_rng);
        std::uniform_int_distribution<std::size_t> px(0, masters[pi]->size() - 1);
        const std::size_t i = px(pick_rng);
        const double saved = (*masters[pi])[i];
        (*masters[pi])[i] = saved + eps;
        const double up = r_value();
        (*masters[pi])[i] = saved - eps;
        const double dn = r_value();
        (*masters[pi])[i] = saved;
        worst_fd = std::max(worst_fd, rel_err(gng[pi].value()[i], (up - dn) / (2 * eps)));
    }
    if (worst_fd >= 1e-3)
        return {false, "second-order gradient off by " + std::to_string(worst_fd)};
    return {true, "bilinear exact to " + std::to_string(worst_exact) +
                      ", network H^T v rel err " + std::to_string(worst_fd)};
}

// ---------------------------------------------------------------- criterion 3

Outcome criterion3() {
    const double alpha = 0.1;
    auto bilinear = [](Tensor* theta, Tensor* phi) {
        return [theta, phi](Tape& t) {
            GameLosses gl;
            Var th = t.leaf(*theta);
            Var ph = t.leaf(*phi);
            Var f = sum(mul(th, ph));
            gl.disc_loss = neg(f);
            gl.gen_loss = f;
            gl.theta = {th};
            gl.phi = {ph};
            return gl;
        };
    };
    OptimizerConfig raw;
    raw.alpha = alpha;
    raw.precondition = false;

    // plain simultaneous ascent expands squared norms by exactly 1 + alpha^2
    {
        Tensor theta = Tensor::scalar(1.0), phi = Tensor::scalar(0.0);
        GameOptimizer opt({&theta}, {&phi}, raw);
        auto build = bilinear(&theta, &phi);
        for (int k = 0; k < 100; ++k) {
            const double before = theta[0] * theta[0] + phi[0] * phi[0];
            opt.sga_step(build);
            const double after = theta[0] * theta[0] + phi[0] * phi[0];
            if (std::abs(after / before - (1 + alpha * alpha)) > 1e-10 * (1 + alpha * alpha))
                return {false, "ascent growth factor " + std::to_string(after / before)};
        }
    }
    // consensus contracts by (1 - alpha g)^2 + alpha^2 = 0.82 and converges fast
    {
        OptimizerConfig cfg = raw;
        cfg.gamma = 1.0;
        Tensor theta = Tensor::scalar(1.0), phi = Tensor::scalar(0.0);
        GameOptimizer opt({&theta}, {&phi}, cfg);
        auto build = bilinear(&theta, &phi);
        int reached = -1;
        for (int k = 1; k <= 500; ++k) {
            const double before = theta[0] * theta[0] + phi[0] * phi[0];
            opt.consensus_step(build);
            const double after = theta[0] * theta[0] + phi[0] * phi[0];
            if (before > 0 && std::abs(after / before - 0.82) > 1e-10 * 0.82)
                return {false, "consensus contraction factor " + std::to_string(after / before)};
            if (reached < 0 && std::sqrt(after) < 1e-3) reached = k;
        }
        if (reached < 0) return {false, "consensus did not reach 1e-3 within 500 steps"};
        return {true, "growth 1+a^2 and contraction 0.82 exact; converged in " +
                          std::to_string(reached) + " steps"};
    }
}

// ------------------------------------------------------- shared trained model

constexpr std::uint64_t kSweepSeed = 3;
constexpr std::uint64_t kDataSeed = 7;
constexpr int kDataCases = 200;
constexpr long kSweepIterations = 5000;

struct SweepFixture {
    Dataset data;
    Normalizer norm;
    std::vector<SweepResult> results;  // gamma 0.00, 0.33, 1.00
    double train_seconds = 0.0;
};

const SweepFixture& sweep_fixture() {
    static SweepFixture f = [] {
        SweepFixture fx;
        fx.data = sample_dataset(kDataCases, kDataSeed, SampleRanges{});
        fx.norm = fit_normalizer(fx.data);
        OptimizerConfig cfg;
        cfg.iterations = kSweepIterations;
        cfg.batch_size = 64;
        cfg.log_interval = 250;
        std::fprintf(stderr, "  [sweep fixture: training gamma in {0.00, 0.33, 1.00}, %ld "
                             "iterations each]\n",
                     kSweepIterations);
        const auto t0 = std::chrono::steady_clock::now();
        fx.results =
            gamma_sweep(NetConfig::scaled_profile(), fx.data, {0.0, 0.33, 1.0}, cfg, kSweepSeed);
        fx.train_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        return fx;
    }();
    return f;
}

// ---------------------------------------------------------------- criterion 4

Outcome criterion4() {
    const SweepFixture& fx = sweep_fixture();
    if (fx.train_seconds > 900.0)
        return {false, "sweep training took " + std::to_string(fx.train_seconds) +
                           "s, over the 15-minute budget"};
    std::ostringstream detail;
    detail << "trained in " << static_cast<int>(fx.train_seconds) << "s; ";
    for (const SweepResult& r : fx.results) {
        if (r.log.diverged) return {false, "training diverged at gamma " + std::to_string(r.gamma)};
        const double init = r.log.records.front().val_mae;
        const double fin = r.log.records.back().val_mae;
        detail << "gamma " << r.gamma << ": " << init << " -> " << fin << "  ";
        if (!(fin < 0.5 * init))
            return {false, "gamma " + std::to_string(r.gamma) + " final MAE " +
                               std::to_string(fin) + " not below half of " +
                               std::to_string(init)};
    }
    const double f033 = fx.results[1].log.records.back().val_mae;
    const double f000 = fx.results[0].log.records.back().val_mae;
    if (f033 <= f000) return {true, detail.str() + "(0.33 <= 0.00 at the pinned seed)"};

    // fall back to the median over five seeds
    std::fprintf(stderr, "  [pinned seed inconclusive; evaluating the 5-seed median]\n");
    std::vector<double> m033 = {f033}, m000 = {f000};
    OptimizerConfig cfg;
    cfg.iterations = kSweepIterations;
    cfg.batch_size = 64;
    cfg.log_interval = 250;
    for (std::uint64_t seed = kSweepSeed + 1; seed < kSweepSeed + 5; ++seed) {
        auto res = gamma_sweep(NetConfig::scaled_profile(), fx.data, {0.0, 0.33}, cfg, seed);
        m000.push_back(res[0].log.records.back().val_mae);
        m033.push_back(res[1].log.records.back().val_mae);
    }
    auto median = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        return v[v.size() / 2];
    };
    const double med033 = median(m033), med000 = median(m000);
    if (med033 <= med000)
        return {true, detail.str() + "(median over 5 seeds: " + std::to_string(med033) +
                          " <= " + std::to_string(med000) + ")"};
    return {false, "median final MAE at gamma 0.33 (" + std::to_string(med033) +
                       ") above gamma 0.00 (" + std::to_string(med000) + ")"};
}

// ---------------------------------------------------------------- criterion 5

Outcome criterion5() {
    const SweepFixture& fx = sweep_fixture();
    const SweepResult& best = fx.results[1];  // gamma 0.33

    EvalConfig cfg;
    cfg.m = 20;
    cfg.n = 50;
    cfg.T = 40;
    cfg.history = fx.data.history;
    cfg.dt = fx.data.dt;
    const std::uint64_t seed = 4242;

    GanSampler gan(best.gen, fx.norm);
    DistributionReport rep = evaluate_distribution(gan, cfg, seed);
    CamSampler cam;
    DistributionReport cam_rep = evaluate_distribution(cam, cfg, seed);

    std::ostringstream detail;
    detail << "x mean " << rep.pred_x.mean << " vs " << rep.true_x.mean << ", y mean "
           << rep.pred_y.mean << " vs " << rep.true_y.mean << "; W1 " << rep.pred_x.w1_to_reference
           << "/" << rep.pred_y.w1_to_reference << " against cam "
           << cam_rep.pred_x.w1_to_reference << "/" << cam_rep.pred_y.w1_to_reference;

    if (std::abs(rep.pred_x.mean - rep.true_x.mean) >= 0.5)
        return {false, "x mean error too large: " + detail.str()};
    if (std::abs(rep.pred_y.mean - rep.true_y.mean) >= 0.5)
        return {false, "y mean error too large: " + detail.str()};
    if (!(rep.pred_x.w1_to_reference < cam_rep.pred_x.w1_to_reference))
        return {false, "x earth-mover distance does not beat the kinematic baseline: " +
                           detail.str()};
    if (!(rep.pred_y.w1_to_reference < cam_rep.pred_y.w1_to_reference))
        return {false, "y earth-mover distance does not beat the kinematic baseline: " +
                           detail.str()};
    return {true, detail.str()};
}

// ---------------------------------------------------------------- criterion 6

Outcome criterion6() {
    const SweepFixture& fx = sweep_fixture();
    const SweepResult& best = fx.results[1];
    GanSampler gan(best.gen, fx.norm);

    // held-out case
    std::mt19937_64 case_rng(909);
    std::uniform_real_distribution<double> pd(3.0, 5.0), sd(1.0, 3.0);
    LvParams params{pd(case_rng), pd(case_rng), pd(case_rng), pd(case_rng)};
    State s0{sd(case_rng), sd(case_rng)};
    const int T = 40;
    auto fwd = integrate(s0, params, fx.data.dt, T, Direction::Forward);
    const std::vector<State> truth(fwd.begin() + 1, fwd.end());
    auto hist = backward_history(s0, params, fx.data.dt, fx.data.history);

    const double sigma = 0.05;
    int wins = 0;
    std::ostringstream detail;
    for (std::uint64_t seed = 100; seed < 105; ++seed) {
        std::mt19937_64 noise_rng(seed);
        std::normal_distribution<double> nd(0.0, sigma);
        std::vector<State> meas;
        for (const State& s : truth) meas.push_back({s[0] + nd(noise_rng), s[1] + nd(noise_rng)});

        TrackerConfig cfg;
        cfg.particles = 100;
        cfg.seed = seed;
        TrackResult tr = track(gan, truth, meas, hist, MeasurementModel::isotropic(2, sigma), cfg);

        // posterior mean must stay inside the pooled cloud's 3-sigma band
        for (const TrackStep& s : tr.steps)
            for (int j = 0; j < 2; ++j) {
                const double dev = std::abs(s.posterior_mean[static_cast<std::size_t>(j)] -
                                            s.cloud_mean[static_cast<std::size_t>(j)]);
                if (dev > 3.0 * s.cloud_std[static_cast<std::size_t>(j)] + 1e-12)
                    return {false, "posterior mean left the 3-sigma particle band at step " +
                                       std::to_string(s.k)};
            }

        auto rollouts = rollout_batch(gan, hist, cfg.particles, T, seed ^ 0xabcdULL);
        double open_sq = 0.0;
        for (int t = 0; t < T; ++t) {
            State mean{0.0, 0.0};
            for (const RolloutResult& r : rollouts) {
                mean[0] += r.states[static_cast<std::size_t>(t) + 1][0];
                mean[1] += r.states[static_cast<std::size_t>(t) + 1][1];
            }
            mean[0] /= cfg.particles;
            mean[1] /= cfg.particles;
            open_sq += (mean[0] - truth[static_cast<std::size_t>(t)][0]) *
                           (mean[0] - truth[static_cast<std::size_t>(t)][0]) +
                       (mean[1] - truth[static_cast<std::size_t>(t)][1]) *
                           (mean[1] - truth[static_cast<std::size_t>(t)][1]);
        }
        const double open_rmse = std::sqrt(open_sq / (2.0 * T));
        detail << "seed " << seed << ": " << tr.rmse << " vs " << open_rmse << "  ";
        if (tr.rmse < open_rmse) ++wins;
    }
    if (wins >= 4) return {true, std::to_string(wins) + "/5 tracking wins; " + detail.str()};
    return {false, "tracking beat the open loop only " + std::to_string(wins) + "/5 times; " +
                       detail.str()};
}

// ---------------------------------------------------------------- criterion 7

struct NoisySampler final : ActionSampler {
    Tensor propose(const std::vector<Tensor>& w, std::mt19937_64& rng) override {
        return Tensor::gaussian(w.front().rows(), 2, 0.0, 0.05, rng);
    }
};

Outcome criterion7() {
    // reference single-target filter, same update equations
    const std::vector<State> history(5, State{1.4, 2.2});
    MeasurementModel model = MeasurementModel::isotropic(2, 0.05);
    NoisySampler sampler;
    std::vector<State> zs;
    for (int k = 0; k < 20; ++k) zs.push_back({1.4 + 0.015 * k, 2.2 - 0.01 * k});

    std::mt19937_64 rng_mix(77), rng_ref(77);
    MixtureBelief belief = init_belief(history, 1, 64, 0.01, rng_mix);

    struct RefParticle {
        State state;
        double weight;
        std::vector<State> history;
    };
    std::vector<RefParticle> ref;
    {
        std::normal_distribution<double> nd(0.0, 0.01);
        for (int i = 0; i < 64; ++i) {
            RefParticle p;
            p.weight = 1.0 / 64;
            for (const State& s : history)
                p.history.push_back({s[0] + nd(rng_ref), s[1] + nd(rng_ref)});
            p.state = p.history.back();
            ref.push_back(std::move(p));
        }
    }

    for (const State& z : zs) {
        prior_update(belief, sampler, rng_mix);
        measurement_update(belief, z, model);
        try {
            belief.check_normalization(1e-12);
        } catch (const std::logic_error& e) {
            return {false, e.what()};
        }
        resample(belief, 0.5, rng_mix);

        {  // plain filter, mirrored operations
            const int P = static_cast<int>(ref.size());
            std::vector<Tensor> window(ref.front().history.size(), Tensor(P, 2));
            for (int i = 0; i < P; ++i)
                for (std::size_t k = 0; k < ref.front().history.size(); ++k) {
                    window[k](i, 0) = ref[static_cast<std::size_t>(i)].history[k][0];
                    window[k](i, 1) = ref[static_cast<std::size_t>(i)].history[k][1];
                }
            Tensor actions = sampler.propose(window, rng_ref);
            for (int i = 0; i < P; ++i) {
                RefParticle& p = ref[static_cast<std::size_t>(i)];
                const State next{p.state[0] + actions(i, 0), p.state[1] + actions(i, 1)};
                p.history.erase(p.history.begin());
                p.history.push_back(next);
                p.state = next;
            }
            double max_ll = -std::numeric_limits<double>::infinity();
            std::vector<double> lls;
            for (const RefParticle& p : ref) {
                lls.push_back(model.log_likelihood(p.state, z));
                max_ll = std::max(max_ll, lls.back());
            }
            double mass = 0.0;
            for (std::size_t i = 0; i < ref.size(); ++i)
                mass += ref[i].weight * std::exp(lls[i] - max_ll);
            for (std::size_t i = 0; i < ref.size(); ++i)
                ref[i].weight = ref[i].weight * std::exp(lls[i] - max_ll) / mass;
            double sq = 0.0;
            for (const RefParticle& p : ref) sq += p.weight * p.weight;
            if ((1.0 / sq) / P < 0.5) {
                std::uniform_real_distribution<double> ud(0.0, 1.0 / P);
                const double u0 = ud(rng_ref);
                std::vector<RefParticle> next;
                double cum = ref[0].weight;
                std::size_t idx = 0;
                for (int k = 0; k < P; ++k) {
                    const double u = u0 + static_cast<double>(k) / P;
                    while (u > cum && idx + 1 < ref.size()) cum += ref[++idx].weight;
                    next.push_back(ref[idx]);
                    next.back().weight = 1.0 / P;
                }
                ref = std::move(next);
            }
        }

        for (std::size_t i = 0; i < ref.size(); ++i) {
            const Particle& a = belief.components[0].particles[i];
            if (a.state != ref[i].state || a.weight != ref[i].weight)
                return {false, "mixture filter deviates from the plain filter at particle " +
                                   std::to_string(i)};
        }
    }
    return {true, "N=1 bit-identical over 20 steps; normalization within 1e-12 throughout"};
}

// ---------------------------------------------------------------- criterion 8

Outcome criterion8() {
    std::mt19937_64 rng(808);
    std::uniform_real_distribution<double> pd(3.0, 5.0), sd(1.0, 3.0);
    double worst_drift = 0.0, worst_inv = 0.0;
    for (int rep = 0; rep < 100; ++rep) {
        LvParams p{pd(rng), pd(rng), pd(rng), pd(rng)};
        State s0{sd(rng), sd(rng)};
        auto traj = integrate(s0, p, 0.05, 100, Direction::Forward);
        const double v0 = lv_invariant(s0, p);
        for (const State& s : traj)
            worst_drift = std::max(worst_drift, std::abs(lv_invariant(s, p) - v0) / std::abs(v0));

        auto fwd = integrate(s0, p, 0.05, 20, Direction::Forward);
        auto back = integrate(fwd.back(), p, 0.05, 20, Direction::Backward);
        worst_inv = std::max({worst_inv, std::abs(back.back()[0] - s0[0]),
                              std::abs(back.back()[1] - s0[1])});
    }
    if (worst_drift >= 1e-4)
        return {false, "first-integral drift " + std::to_string(worst_drift)};
    if (worst_inv >= 1e-6)
        return {false, "forward-backward inversion error " + std::to_string(worst_inv)};
    std::ostringstream d;
    d << "drift " << worst_drift << ", inversion " << worst_inv << " over 100 configs";
    return {true, d.str()};
}

// ---------------------------------------------------------------- criterion 9

Outcome criterion9() {
    // constant-acceleration model is exact on quadratics
    {
        std::vector<State> full;
        for (int t = 0; t < 30; ++t)
            full.push_back({1.0 + 0.25 * t - 0.01 * t * t, 2.0 - 0.2 * t + 0.02 * t * t});
        std::vector<State> hist(full.begin(), full.begin() + 8);
        auto pred = cam_predict(hist, 22);
        for (int t = 0; t <= 22; ++t)
            for (int j = 0; j < 2; ++j)
                if (std::abs(pred[static_cast<std::size_t>(t)][static_cast<std::size_t>(j)] -
                             full[static_cast<std::size_t>(t + 7)][static_cast<std::size_t>(j)]) >
                    1e-10)
                    return {false, "kinematic extrapolation not exact on a quadratic"};
    }
    // EM log-likelihood is monotone
    {
        std::mt19937_64 rng(91);
        std::normal_distribution<double> nd(0.0, 0.3);
        std::vector<std::vector<double>> rows;
        for (int i = 0; i < 400; ++i)
            rows.push_back({nd(rng), nd(rng) + (i % 3 == 0 ? 3.0 : 0.0)});
        GmrConfig cfg;
        cfg.components = 3;
        cfg.seed = 7;
        cfg.max_iterations = 60;
        cfg.tol = 0.0;
        GaussianMixture mix = fit_gmm(rows, cfg);
        for (std::size_t i = 1; i < mix.loglik_history.size(); ++i)
            if (mix.loglik_history[i] <
                mix.loglik_history[i - 1] - 1e-9 * std::abs(mix.loglik_history[i - 1]))
                return {false, "EM log-likelihood decreased at iteration " + std::to_string(i)};
    }
    // zero-noise linear joint conditions to the exact regression line
    {
        std::mt19937_64 rng(92);
        std::normal_distribution<double> nd(0.0, 2.0);
        std::vector<std::vector<double>> rows;
        for (int i = 0; i < 500; ++i) {
            const double x = nd(rng);
            rows.push_back({x, 2.0 * x});
        }
        GmrConfig cfg;
        cfg.components = 1;
        cfg.seed = 1;
        GaussianMixture mix = fit_gmm(rows, cfg);
        const double mean = condition(mix, {1.0}, 1).mean()(0, 0);
        if (std::abs(mean - 2.0) >= 1e-6)
            return {false, "conditional mean of the y=2x joint is " + std::to_string(mean)};
    }
    // perturbed MLP reaches a linear target
    {
        const int history = 3;
        PnetConfig pc = PnetConfig::scaled(false);
        pc.sigma_in = 0.0;
        std::mt19937_64 rng(93);
        PerturbedNet net = PerturbedNet::init(pc, history, Normalizer::identity(2, 2), rng);
        OptimizerConfig cfg;
        cfg.alpha = 0.001;
        cfg.iterations = 2000;
        cfg.batch_size = 64;
        cfg.log_interval = 2000;
        BatchSource src = [history](int B, std::mt19937_64& r) {
            Batch batch;
            batch.cond_seq.assign(static_cast<std::size_t>(history) + 1, Tensor(B, 2));
            batch.actions = Tensor(B, 2);
            std::uniform_real_distribution<double> ud(-1.0, 1.0);
            for (int row = 0; row < B; ++row) {
                const double x = ud(r), y = ud(r);
                for (int k = 0; k <= history; ++k) {
                    batch.cond_seq[static_cast<std::size_t>(k)](row, 0) = x;
                    batch.cond_seq[static_cast<std::size_t>(k)](row, 1) = y;
                }
                batch.actions(row, 0) = 0.7 * x - 0.2 * y;
                batch.actions(row, 1) = 0.4 * y + 0.1 * x;
            }
            return batch;
        };
        PnetLog log = pnet_train(net, src, cfg, 5);
        if (log.diverged || log.records.empty() || log.records.back().mse >= 1e-4)
            return {false, "perturbed MLP did not reach 1e-4, final " +
                               std::to_string(log.records.empty() ? -1.0
                                                                  : log.records.back().mse)};
    }
    return {true, "kinematic exactness, EM monotonicity, linear conditioning and MLP "
                  "convergence all hold"};
}

// ---------------------------------------------------------------- criterion 10

Outcome criterion10() {
#ifndef MAGPRED_CLI_PATH
    return {false, "CLI path not configured"};
#else
    const std::string dir = "/tmp/magpred_acceptance_" + std::to_string(::getpid());
    if (std::system(("mkdir -p " + dir).c_str()) != 0) return {false, "cannot create work dir"};

    Dataset ds;
    ds.seed = 0;
    ds.dt = 0.1;
    ds.history = 4;
    ds.horizon = 25;
    for (int c = 0; c < 6; ++c) {
        CaseData cd;
        cd.params = LvParams{3, 3, 3, 3};
        const double ax = 0.01 * (c + 1), vx = 0.1 + 0.02 * c;
        for (int t = 0; t <= ds.history + ds.horizon; ++t)
            cd.traj.push_back({1.0 + vx * t + ax * t * t, 2.0 - 0.05 * t + 0.004 * (c + 1) * t * t});
        cd.s0 = cd.traj.front();
        ds.cases.push_back(std::move(cd));
    }
    const std::string data = dir + "/quad.json";
    ds.save(data);

    auto run = [&](const std::string& args) {
        const std::string cmd = std::string(MAGPRED_CLI_PATH) + " " + args + " >" + dir +
                                "/out.txt 2>" + dir + "/err.txt";
        const int status = std::system(cmd.c_str());
        return status == -1 ? -1 : WEXITSTATUS(status);
    };
    if (run("train --data " + data + " --out " + dir + "/m.ckpt --log " + dir +
            "/t.csv --iterations 5 --batch 4 --log-interval 5 --seed 3") != 0)
        return {false, "training command failed"};
    if (run("baseline --data " + data + " --checkpoint " + dir + "/m.ckpt --out " + dir +
            "/table.csv --horizons 5 --steps-per-second 5 --eval-cases 2 --rollouts 1 "
            "--pnet-iterations 5 --gmr-k 1 --seed 4") != 0)
        return {false, "baseline command failed"};

    std::ifstream in(dir + "/table.csv");
    std::string header;
    std::getline(in, header);
    if (header != "horizon_s,gan,gmr,pmlp,plstm,cam")
        return {false, "unexpected table header '" + header + "'"};
    int rows = 0;
    std::string line;
    double worst_cam = 0.0;
    while (std::getline(in, line)) {
        ++rows;
        std::stringstream ss(line);
        std::string field;
        std::getline(ss, field, ',');
        int cols = 0;
        double last = 0.0;
        while (std::getline(ss, field, ',')) {
            ++cols;
            last = std::stod(field);
            if (last < 0.0) return {false, "negative error entry in the table"};
        }
        if (cols != 5) return {false, "expected 5 model columns, got " + std::to_string(cols)};
        worst_cam = std::max(worst_cam, last);
    }
    if (rows != 5) return {false, "expected 5 horizon rows, got " + std::to_string(rows)};
    if (worst_cam > 1e-10)
        return {false, "kinematic column not exact on quadratic data: " +
                           std::to_string(worst_cam)};
    std::ostringstream d;
    d << "5x5 table emitted; kinematic column exact to " << worst_cam;
    return {true, d.str()};
#endif
}

}  // namespace

int main(int argc, char** argv) {
    struct Criterion {
        int id;
        const char* name;
        Outcome (*run)();
        double budget_s;
    };
    const std::vector<Criterion> criteria = {
        {1, "reverse-mode gradients match finite differences", criterion1, 60},
        {2, "second-order field-norm gradients are exact and match finite differences",
         criterion2, 60},
        {3, "consensus update contracts the bilinear game at the closed-form rate", criterion3,
         1},
        {4, "regularization sweep halves the validation MAE and favors gamma 0.33", criterion4,
         900},
        {5, "learned terminal distributions beat the kinematic baseline", criterion5, 300},
        {6, "particle tracking beats open-loop rollouts", criterion6, 120},
        {7, "single-component mixture reduces to the plain particle filter", criterion7, 60},
        {8, "integrator conserves the first integral and inverts in time", criterion8, 60},
        {9, "baseline models pass their analytic sanity checks", criterion9, 120},
        {10, "comparison harness emits the full model-by-horizon table", criterion10, 120},
    };

    std::vector<int> selected;
    for (int i = 1; i < argc; ++i) selected.push_back(std::atoi(argv[i]));
    if (selected.empty())
        for (const Criterion& c : criteria) selected.push_back(c.id);

    // criteria 4-6 share one training run; build it outside their budgets
    for (int id : selected)
        if (id >= 4 && id <= 6) {
            sweep_fixture();
            break;
        }

    bool all_pass = true;
    for (int id : selected) {
        const Criterion* c = nullptr;
        for (const Criterion& k : criteria)
            if (k.id == id) c = &k;
        if (!c) {
            std::printf("[FAIL] criterion %d: unknown criterion\n", id);
            all_pass = false;
            continue;
        }
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c->run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (o.pass && secs > c->budget_s) {
            o.pass = false;
            o.detail += " (exceeded the " + std::to_string(c->budget_s) + "s budget: " +
                        std::to_string(secs) + "s)";
        }
        std::printf("[%s] criterion %d: %s — %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", c->id,
                    c->name, o.detail.c_str(), secs);
        std::fflush(stdout);
        if (!o.pass) all_pass = false;
    }
    return all_pass ? 0 : 1;
}
