// SPDX-License-Identifier: Apache-2.0
#include "magpred/gameopt.hpp"

#include <cmath>
#include <future>
#include <utility>

namespace magpred {

Var disc_loss(Var d_real, Var d_fake) {
    Tape& t = *d_real.tape();
    Var ones = t.constant(Tensor::full(d_fake.rows(), d_fake.cols(), 1.0));
    return neg(add(mean(log(d_real)), mean(log(sub(ones, d_fake)))));
}

Var gen_loss(Var d_fake) { return neg(mean(log(d_fake))); }

namespace {

struct FieldVars {
    std::vector<Var> v;       // theta part then phi part
    std::vector<Var> params;  // same order
    double disc_loss, gen_loss;
};

FieldVars build_field(Tape& tape, const GameBuilder& build) {
    GameLosses gl = build(tape);
    FieldVars f;
    f.disc_loss = gl.disc_loss.value()[0];
    f.gen_loss = gl.gen_loss.value()[0];
    auto g_theta = backward(gl.disc_loss, gl.theta);
    auto g_phi = backward(gl.gen_loss, gl.phi);
    for (const Var& g : g_theta) f.v.push_back(neg(g));
    for (const Var& g : g_phi) f.v.push_back(neg(g));
    f.params = gl.theta;
    f.params.insert(f.params.end(), gl.phi.begin(), gl.phi.end());
    return f;
}

double stacked_norm(const std::vector<Var>& v) {
    double sq = 0.0;
    for (const Var& p : v)
        for (std::size_t i = 0; i < p.value().size(); ++i) sq += p.value()[i] * p.value()[i];
    return std::sqrt(sq);
}

}  // namespace

FieldValue gradient_field(const GameBuilder& build) {
    Tape tape;
    GameLosses gl = build(tape);
    FieldValue f;
    f.disc_loss = gl.disc_loss.value()[0];
    f.gen_loss = gl.gen_loss.value()[0];
    double sq = 0.0;
    for (const Var& g : backward(gl.disc_loss, gl.theta)) {
        Tensor t = g.value();
        for (std::size_t i = 0; i < t.size(); ++i) {
            t[i] = -t[i];
            sq += t[i] * t[i];
        }
        f.v_theta.push_back(std::move(t));
    }
    for (const Var& g : backward(gl.gen_loss, gl.phi)) {
        Tensor t = g.value();
        for (std::size_t i = 0; i < t.size(); ++i) {
            t[i] = -t[i];
            sq += t[i] * t[i];
        }
        f.v_phi.push_back(std::move(t));
    }
    f.norm = std::sqrt(sq);
    return f;
}

GameOptimizer::GameOptimizer(std::vector<Tensor*> theta, std::vector<Tensor*> phi,
                             OptimizerConfig cfg)
    : theta_(std::move(theta)), phi_(std::move(phi)), cfg_(cfg) {
    for (const Tensor* t : theta_) sq_.emplace_back(t->rows(), t->cols());
    for (const Tensor* t : phi_) sq_.emplace_back(t->rows(), t->cols());
}

StepStats GameOptimizer::consensus_step(const GameBuilder& build) {
    return step_impl(build, cfg_.gamma);
}

StepStats GameOptimizer::sga_step(const GameBuilder& build) { return step_impl(build, 0.0); }

StepStats GameOptimizer::step_impl(const GameBuilder& build, double gamma) {
    Tape tape;
    FieldVars f = build_field(tape, build);

    StepStats stats;
    stats.disc_loss = f.disc_loss;
    stats.gen_loss = f.gen_loss;
    stats.v_norm = stacked_norm(f.v);

    // update direction u = v - gamma * (H^T v)
    std::vector<Tensor> dir;
    dir.reserve(f.v.size());
    if (gamma != 0.0) {
        auto corr = grad_norm_grad(f.v, f.params);
        for (std::size_t k = 0; k < f.v.size(); ++k) {
            Tensor u = f.v[k].value();
            const Tensor& c = corr[k].value();
            for (std::size_t i = 0; i < u.size(); ++i) u[i] -= gamma * c[i];
            dir.push_back(std::move(u));
        }
    } else {
        for (const Var& p : f.v) dir.push_back(p.value());
    }

    for (const Tensor& u : dir)
        if (!u.all_finite())
            throw NonFiniteStep("consensus step produced a non-finite update direction (||v|| = " +
                                std::to_string(stats.v_norm) + ")");

    std::vector<Tensor*> params = theta_;
    params.insert(params.end(), phi_.begin(), phi_.end());
    for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor& x = *params[k];
        const Tensor& u = dir[k];
        if (cfg_.precondition) {
            Tensor& s = sq_[k];
            for (std::size_t i = 0; i < x.size(); ++i) {
                s[i] = cfg_.rho * s[i] + (1.0 - cfg_.rho) * u[i] * u[i];
                x[i] += cfg_.alpha * u[i] / (std::sqrt(s[i]) + cfg_.epsilon);
            }
        } else {
            for (std::size_t i = 0; i < x.size(); ++i) x[i] += cfg_.alpha * u[i];
        }
    }
    return stats;
}

GameBuilder make_gan_builder(GeneratorNet& gen, DiscriminatorNet& disc, const Normalizer& norm,
                             const Batch& batch, const std::vector<Tensor>& noise_seq) {
    std::vector<Tensor> cond;
    cond.reserve(batch.cond_seq.size());
    for (const Tensor& c : batch.cond_seq) cond.push_back(norm.normalize_states(c));
    Tensor actions = norm.normalize_actions(batch.actions);
    return [&gen, &disc, cond = std::move(cond), actions = std::move(actions),
            &noise_seq](Tape& tape) {
        GeneratorVars gv = upload(tape, gen);
        DiscriminatorVars dv = upload(tape, disc);
        std::vector<Var> cs, ns;
        for (const Tensor& c : cond) cs.push_back(tape.constant(c));
        for (const Tensor& z : noise_seq) ns.push_back(tape.constant(z));
        Var fake = generate(gv, cs, ns);
        Var d_real = discriminate(dv, cs, tape.constant(actions));
        Var d_fake = discriminate(dv, cs, fake);

        GameLosses gl;
        gl.disc_loss = disc_loss(d_real, d_fake);
        gl.gen_loss = gen_loss(d_fake);
        gl.theta = {dv.lstm.Wx, dv.lstm.Wh, dv.lstm.b};
        for (const DenseVars& l : dv.fc) {
            gl.theta.push_back(l.W);
            gl.theta.push_back(l.b);
        }
        gl.theta.push_back(dv.out.W);
        gl.theta.push_back(dv.out.b);
        gl.phi = {gv.lstm.Wx, gv.lstm.Wh, gv.lstm.b};
        for (const DenseVars& l : gv.fc) {
            gl.phi.push_back(l.W);
            gl.phi.push_back(l.b);
        }
        gl.phi.push_back(gv.out.W);
        gl.phi.push_back(gv.out.b);
        return gl;
    };
}

namespace {

// One-step action MAE in raw units over a fixed validation batch.
double validation_mae(GeneratorNet& gen, const Normalizer& norm, const Batch& val,
                      const std::vector<Tensor>& val_noise) {
    std::vector<Tensor> cond;
    for (const Tensor& c : val.cond_seq) cond.push_back(norm.normalize_states(c));
    Tensor pred = norm.denormalize_actions(generate_values(gen, cond, val_noise));
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) acc += std::abs(pred[i] - val.actions[i]);
    return acc / static_cast<double>(pred.size());
}

}  // namespace

TrainLog train_gan(GeneratorNet& gen, DiscriminatorNet& disc, const Dataset& data,
                   const Normalizer& norm, const OptimizerConfig& cfg, std::uint64_t seed,
                   const TrainHooks& hooks) {
    const int n_cases = static_cast<int>(data.cases.size());
    const int val_cases = std::max(1, n_cases / 10);
    const int train_cases = std::max(1, n_cases - val_cases);
    const std::vector<PairRef> train_pairs = data.pairs(0, train_cases);
    const std::vector<PairRef> val_pairs = data.pairs(train_cases, n_cases);

    std::mt19937_64 rng(seed);

    // frozen validation batch: up to 256 held-out pairs, one noise draw each
    std::mt19937_64 val_rng(seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<PairRef> val_sel;
    {
        std::vector<PairRef> pool = val_pairs.empty() ? train_pairs : val_pairs;
        std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
        const std::size_t want = std::min<std::size_t>(256, pool.size());
        for (std::size_t i = 0; i < want; ++i) val_sel.push_back(pool[pick(val_rng)]);
    }
    const Batch val_batch = data.make_batch(val_sel);
    const std::vector<Tensor> val_noise =
        sample_noise_seq(data.history + 1, static_cast<int>(val_sel.size()),
                         gen.cfg.noise_dim, cfg.noise, val_rng);

    GameOptimizer opt(disc.params(), gen.params(), cfg);

    TrainLog log;
    auto log_row = [&](long iter, const StepStats& s) {
        log.records.push_back(TrainRecord{iter, s.disc_loss, s.gen_loss, s.v_norm,
                                          validation_mae(gen, norm, val_batch, val_noise)});
        if (hooks.on_record) hooks.on_record(log.records.back());
    };

    // baseline row before the first update
    {
        std::mt19937_64 probe(seed ^ 0xda3e39cb94b95bdbULL);
        std::vector<PairRef> refs;
        std::uniform_int_distribution<std::size_t> pick(0, train_pairs.size() - 1);
        for (int b = 0; b < cfg.batch_size; ++b) refs.push_back(train_pairs[pick(probe)]);
        Batch batch = data.make_batch(refs);
        auto noise = sample_noise_seq(data.history + 1, cfg.batch_size, gen.cfg.noise_dim,
                                      cfg.noise, probe);
        FieldValue f = gradient_field(make_gan_builder(gen, disc, norm, batch, noise));
        log_row(0, StepStats{f.disc_loss, f.gen_loss, f.norm});
    }

    std::uniform_int_distribution<std::size_t> pick(0, train_pairs.size() - 1);
    for (long iter = 1; iter <= cfg.iterations; ++iter) {
        std::vector<PairRef> refs;
        refs.reserve(static_cast<std::size_t>(cfg.batch_size));
        for (int b = 0; b < cfg.batch_size; ++b) refs.push_back(train_pairs[pick(rng)]);
        Batch batch = data.make_batch(refs);
        auto noise =
            sample_noise_seq(data.history + 1, cfg.batch_size, gen.cfg.noise_dim, cfg.noise, rng);

        StepStats s = opt.consensus_step(make_gan_builder(gen, disc, norm, batch, noise));

        if (s.v_norm > cfg.divergence_norm || !std::isfinite(s.v_norm)) {
            log.diverged = true;
            log.diverged_at = iter;
            log_row(iter, s);
            break;
        }
        if (cfg.log_interval > 0 && iter % cfg.log_interval == 0) log_row(iter, s);
        if (hooks.checkpoint_interval > 0 && hooks.on_checkpoint &&
            iter % hooks.checkpoint_interval == 0)
            hooks.on_checkpoint(iter);
    }
    return log;
}

std::vector<SweepResult> gamma_sweep(const NetConfig& net_cfg, const Dataset& data,
                                     const std::vector<double>& gammas,
                                     const OptimizerConfig& base, std::uint64_t seed) {
    const Normalizer norm = fit_normalizer(data);
    std::vector<std::future<SweepResult>> futures;
    for (double gamma : gammas) {
        futures.push_back(std::async(std::launch::async, [&, gamma]() {
            std::mt19937_64 init_rng(seed);
            SweepResult r;
            r.gamma = gamma;
            r.gen = GeneratorNet::init(net_cfg, init_rng);
            r.disc = DiscriminatorNet::init(net_cfg, init_rng);
            OptimizerConfig cfg = base;
            cfg.gamma = gamma;
            r.log = train_gan(r.gen, r.disc, data, norm, cfg, seed);
            return r;
        }));
    }
    std::vector<SweepResult> out;
    for (auto& f : futures) out.push_back(f.get());
    return out;
}

}  // namespace magpred
