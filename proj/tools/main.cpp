// SPDX-License-Identifier: Apache-2.0
//
// magpred: train a sequence-conditioned adversarial action model on a
// predator-prey benchmark, evaluate its learned distribution, reuse it as a
// particle-filter proposal, and compare against kinematic and regression
// baselines.
#include <cmath>
#include <fstream>
#include <memory>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "magpred/baselines.hpp"
#include "magpred/csv.hpp"
#include "magpred/dataio.hpp"
#include "magpred/evalsuite.hpp"
#include "magpred/gameopt.hpp"
#include "magpred/lvsys.hpp"
#include "magpred/mixtracker.hpp"
#include "magpred/nets.hpp"

using namespace magpred;
using nlohmann::json;

namespace {

NetConfig profile_config(const std::string& profile) {
    if (profile == "full") return NetConfig::full_profile();
    if (profile == "scaled") return NetConfig::scaled_profile();
    throw std::invalid_argument("unknown profile '" + profile + "' (expected full or scaled)");
}

NoiseKind noise_kind(const std::string& name) {
    if (name == "gaussian") return NoiseKind::Gaussian;
    if (name == "uniform") return NoiseKind::Uniform01;
    throw std::invalid_argument("unknown noise kind '" + name + "'");
}

void write_train_csv(const std::string& path, const TrainLog& log) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out << "iteration,disc_loss,gen_loss,v_norm,val_mae\n";
    for (const TrainRecord& r : log.records)
        out << r.iteration << ',' << format_double(r.disc_loss) << ','
            << format_double(r.gen_loss) << ',' << format_double(r.v_norm) << ','
            << format_double(r.val_mae) << '\n';
}

std::string gamma_tag(double gamma) {
    std::ostringstream ss;
    ss.setf(std::ios::fixed);
    ss.precision(2);
    ss << gamma;
    return ss.str();
}

struct GenDataArgs {
    std::string out = "dataset.json";
    int cases = 200;
    std::uint64_t seed = 1;
    double dt = 0.05;
    int history = 10;
    int horizon = 40;
    SampleRanges ranges;
};

void run_gen_data(const GenDataArgs& a) {
    if (a.ranges.param_lo > a.ranges.param_hi)
        throw std::invalid_argument("parameter range is empty (lo > hi)");
    if (a.ranges.state_lo > a.ranges.state_hi)
        throw std::invalid_argument("initial-state range is empty (lo > hi)");
    Dataset ds = sample_dataset(a.cases, a.seed, a.ranges, a.dt, a.history, a.horizon);
    ds.save(a.out);
    json manifest = {{"seed", a.seed},
                     {"cases", a.cases},
                     {"dt", a.dt},
                     {"history", a.history},
                     {"horizon", a.horizon},
                     {"redraws", ds.redraws},
                     {"ranges",
                      {{"param_lo", a.ranges.param_lo},
                       {"param_hi", a.ranges.param_hi},
                       {"state_lo", a.ranges.state_lo},
                       {"state_hi", a.ranges.state_hi}}}};
    std::ofstream mf(a.out + ".manifest.json", std::ios::trunc);
    mf << manifest.dump(2) << '\n';
    std::cout << "wrote " << ds.cases.size() << " cases to " << a.out << " (" << ds.redraws
              << " redraws)\n";
}

struct TrainArgs {
    std::string data;
    std::string out = "model.ckpt";
    std::string log = "train.csv";
    std::string profile = "scaled";
    std::string noise = "gaussian";
    double alpha = 0.01;
    double gamma = 0.33;
    long iterations = 5000;
    int batch = 64;
    int log_interval = 100;
    long checkpoint_interval = 1000;
    std::uint64_t seed = 1;
    bool sweep = false;
};

std::string stem_insert(const std::string& path, const std::string& tag) {
    const auto dot = path.find_last_of('.');
    if (dot == std::string::npos) return path + tag;
    return path.substr(0, dot) + tag + path.substr(dot);
}

void run_train(const TrainArgs& a) {
    const Dataset data = Dataset::load(a.data);
    const Normalizer norm = fit_normalizer(data);
    const NetConfig net_cfg = profile_config(a.profile);

    OptimizerConfig cfg;
    cfg.alpha = a.alpha;
    cfg.gamma = a.gamma;
    cfg.iterations = a.iterations;
    cfg.batch_size = a.batch;
    cfg.log_interval = a.log_interval;
    cfg.noise = noise_kind(a.noise);

    if (a.sweep) {
        const std::vector<double> gammas = {0.00, 0.33, 1.00};
        auto results = gamma_sweep(net_cfg, data, gammas, cfg, a.seed);
        for (SweepResult& r : results) {
            const std::string tag = "_gamma" + gamma_tag(r.gamma);
            write_train_csv(stem_insert(a.log, tag), r.log);
            TrainMeta meta{r.log.records.back().iteration, r.gamma, a.alpha, a.seed};
            save_gan_checkpoint(stem_insert(a.out, tag), r.gen, r.disc, norm, meta);
            std::cout << "gamma " << gamma_tag(r.gamma) << ": final val MAE "
                      << format_double(r.log.records.back().val_mae)
                      << (r.log.diverged ? " (diverged)" : "") << '\n';
            if (r.log.diverged) throw std::runtime_error("training diverged in sweep");
        }
        return;
    }

    std::mt19937_64 init_rng(a.seed);
    GeneratorNet gen = GeneratorNet::init(net_cfg, init_rng);
    DiscriminatorNet disc = DiscriminatorNet::init(net_cfg, init_rng);

    // rows are appended as training progresses so an interrupted run keeps
    // its curve alongside the last periodic checkpoint
    std::ofstream log_out(a.log, std::ios::trunc);
    if (!log_out) throw std::runtime_error("cannot open '" + a.log + "' for writing");
    log_out << "iteration,disc_loss,gen_loss,v_norm,val_mae\n" << std::flush;

    TrainHooks hooks;
    hooks.checkpoint_interval = a.checkpoint_interval;
    hooks.on_checkpoint = [&](long iter) {
        save_gan_checkpoint(a.out, gen, disc, norm, TrainMeta{iter, a.gamma, a.alpha, a.seed});
    };
    hooks.on_record = [&](const TrainRecord& r) {
        log_out << r.iteration << ',' << format_double(r.disc_loss) << ','
                << format_double(r.gen_loss) << ',' << format_double(r.v_norm) << ','
                << format_double(r.val_mae) << '\n'
                << std::flush;
    };
    const TrainLog log = train_gan(gen, disc, data, norm, cfg, a.seed, hooks);
    save_gan_checkpoint(a.out, gen, disc, norm,
                        TrainMeta{log.records.back().iteration, a.gamma, a.alpha, a.seed});
    std::cout << "final val MAE " << format_double(log.records.back().val_mae) << '\n';
    if (log.diverged)
        throw std::runtime_error("training diverged at iteration " +
                                 std::to_string(log.diverged_at));
}

struct EvalArgs {
    std::string checkpoint = "model.ckpt";
    std::string report = "eval_report.json";
    std::string violin = "violin.csv";
    std::string rollout_dump;  // optional
    int m = 20, n = 50, T = 40;
    int history = 10;
    double dt = 0.05;
    std::uint64_t seed = 1;
    bool oracle = false;
    bool pool_all = false;
};

json summary_json(const DistributionSummary& pred, const DistributionSummary& truth) {
    return json{{"pred_mean", pred.mean},         {"pred_std", pred.stddev},
                {"true_mean", truth.mean},        {"true_std", truth.stddev},
                {"wasserstein1", pred.w1_to_reference}};
}

void run_eval(const EvalArgs& a) {
    EvalConfig cfg;
    cfg.m = a.m;
    cfg.n = a.n;
    cfg.T = a.T;
    cfg.history = a.history;
    cfg.dt = a.dt;
    cfg.pool_all_steps = a.pool_all;

    std::unique_ptr<RolloutCsvWriter> dump;
    std::function<void(const RolloutResult&)> on_rollout;
    if (!a.rollout_dump.empty()) {
        dump = std::make_unique<RolloutCsvWriter>(a.rollout_dump);
        on_rollout = [&](const RolloutResult& r) { dump->write(r); };
    }

    DistributionReport rep;
    if (a.oracle) {
        TrueDynamicsSampler oracle(cfg.dt);
        rep = evaluate_distribution(
            oracle, cfg, a.seed,
            [&](int, const LvParams& p, const State&) { oracle.set_case(p); }, on_rollout);
    } else {
        const GanCheckpoint ck = load_gan_checkpoint(a.checkpoint);
        GanSampler sampler(ck.gen, ck.norm);
        rep = evaluate_distribution(sampler, cfg, a.seed, {}, on_rollout);
    }
    export_violin_data(rep, a.violin);

    json report = {{"m", a.m},
                   {"n", a.n},
                   {"T", a.T},
                   {"seed", a.seed},
                   {"variables",
                    {{"x", summary_json(rep.pred_x, rep.true_x)},
                     {"y", summary_json(rep.pred_y, rep.true_y)}}}};
    std::ofstream out(a.report, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + a.report + "' for writing");
    out << report.dump(2) << '\n';
    std::cout << "x: pred mean " << format_double(rep.pred_x.mean) << " vs true "
              << format_double(rep.true_x.mean) << ", W1 "
              << format_double(rep.pred_x.w1_to_reference) << '\n'
              << "y: pred mean " << format_double(rep.pred_y.mean) << " vs true "
              << format_double(rep.true_y.mean) << ", W1 "
              << format_double(rep.pred_y.w1_to_reference) << '\n';
}

struct TrackArgs {
    std::string checkpoint = "model.ckpt";
    std::string out = "track.csv";
    std::string summary = "track_summary.json";
    int particles = 100;
    int steps = 40;
    int history = 10;
    double dt = 0.05;
    double sigma = 0.05;
    double ess = 0.5;
    std::uint64_t seed = 1;
};

void run_track(const TrackArgs& a) {
    const GanCheckpoint ck = load_gan_checkpoint(a.checkpoint);
    GanSampler sampler(ck.gen, ck.norm);

    // held-out case drawn from the benchmark ranges
    std::mt19937_64 rng(a.seed ^ 0xfeedfaceULL);
    std::uniform_real_distribution<double> pd(3.0, 5.0), sd(1.0, 3.0);
    LvParams params;
    State s0;
    std::vector<State> fwd, hist;
    for (;;) {
        params = LvParams{pd(rng), pd(rng), pd(rng), pd(rng)};
        s0 = State{sd(rng), sd(rng)};
        try {
            fwd = integrate(s0, params, a.dt, a.steps, Direction::Forward);
            hist = backward_history(s0, params, a.dt, a.history);
            break;
        } catch (const IntegrationBlowup&) {
            continue;
        }
    }
    const std::vector<State> truth(fwd.begin() + 1, fwd.end());
    std::vector<State> measurements;
    std::normal_distribution<double> nd(0.0, a.sigma);
    for (const State& s : truth) measurements.push_back({s[0] + nd(rng), s[1] + nd(rng)});

    TrackerConfig cfg;
    cfg.particles = a.particles;
    cfg.ess_threshold = a.ess;
    cfg.seed = a.seed;
    const TrackResult result = track(sampler, truth, measurements, hist,
                                     MeasurementModel::isotropic(2, a.sigma), cfg);

    // open-loop comparison: mean of as many rollouts as particles
    auto rollouts = rollout_batch(sampler, hist, a.particles, a.steps, a.seed ^ 0xabcdULL);
    double open_sq = 0.0;
    for (int t = 0; t < a.steps; ++t) {
        State mean{0.0, 0.0};
        for (const RolloutResult& r : rollouts) {
            mean[0] += r.states[static_cast<std::size_t>(t) + 1][0];
            mean[1] += r.states[static_cast<std::size_t>(t) + 1][1];
        }
        mean[0] /= a.particles;
        mean[1] /= a.particles;
        open_sq += (mean[0] - truth[static_cast<std::size_t>(t)][0]) *
                       (mean[0] - truth[static_cast<std::size_t>(t)][0]) +
                   (mean[1] - truth[static_cast<std::size_t>(t)][1]) *
                       (mean[1] - truth[static_cast<std::size_t>(t)][1]);
    }
    const double open_rmse = std::sqrt(open_sq / (2.0 * a.steps));

    std::ofstream out(a.out, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + a.out + "' for writing");
    out << "step,true_x,true_y,meas_x,meas_y,post_x,post_y,cloud_std_x,cloud_std_y,pi_0\n";
    for (const TrackStep& s : result.steps)
        out << s.k << ',' << format_double(s.truth[0]) << ',' << format_double(s.truth[1]) << ','
            << format_double(s.measurement[0]) << ',' << format_double(s.measurement[1]) << ','
            << format_double(s.posterior_mean[0]) << ',' << format_double(s.posterior_mean[1])
            << ',' << format_double(s.cloud_std[0]) << ',' << format_double(s.cloud_std[1]) << ','
            << format_double(s.component_pi[0]) << '\n';

    json summary = {{"tracking_rmse", result.rmse},
                    {"open_loop_rmse", open_rmse},
                    {"particles", a.particles},
                    {"steps", a.steps},
                    {"sigma", a.sigma},
                    {"seed", a.seed}};
    std::ofstream sf(a.summary, std::ios::trunc);
    sf << summary.dump(2) << '\n';
    std::cout << "tracking RMSE " << format_double(result.rmse) << ", open-loop RMSE "
              << format_double(open_rmse) << '\n';
}

struct BaselineArgs {
    std::string data;
    std::string checkpoint = "model.ckpt";
    std::string out = "baseline_table.csv";
    int horizons = 5;
    int steps_per_second = 10;
    int eval_cases = 10;
    int rollouts = 5;
    long pnet_iterations = 100000;
    double pnet_alpha = 0.0001;
    int pnet_batch = 64;
    int gmr_components = 8;
    std::uint64_t seed = 1;
};

void run_baseline(const BaselineArgs& a) {
    const Dataset data = Dataset::load(a.data);
    const int max_step = a.horizons * a.steps_per_second;
    if (max_step > data.horizon)
        throw std::invalid_argument(
            "dataset horizon " + std::to_string(data.horizon) + " is shorter than " +
            std::to_string(a.horizons) + " x " + std::to_string(a.steps_per_second) +
            " evaluation steps; regenerate with a longer --horizon");
    if (a.eval_cases >= static_cast<int>(data.cases.size()))
        throw std::invalid_argument("eval-cases must leave at least one training case");

    const Normalizer norm = fit_normalizer(data);
    const int first_eval = static_cast<int>(data.cases.size()) - a.eval_cases;

    // fitting set excludes the held-out evaluation cases
    Dataset fit_data = data;
    fit_data.cases.resize(static_cast<std::size_t>(first_eval));

    const GanCheckpoint ck = load_gan_checkpoint(a.checkpoint);
    GanSampler gan(ck.gen, ck.norm);

    GmrConfig gc;
    gc.components = a.gmr_components;
    gc.seed = a.seed;
    GmrModel gmr = GmrModel::fit(fit_data, norm, gc);

    OptimizerConfig pcfg;
    pcfg.alpha = a.pnet_alpha;
    pcfg.iterations = a.pnet_iterations;
    pcfg.batch_size = a.pnet_batch;
    pcfg.log_interval = 0;
    std::mt19937_64 rng(a.seed);
    const bool scaled_pnets = ck.gen.cfg.lstm_hidden <= 32;
    PnetConfig mlp_cfg = scaled_pnets ? PnetConfig::scaled(false) : PnetConfig{};
    PnetConfig lstm_cfg = scaled_pnets ? PnetConfig::scaled(true) : PnetConfig{};
    lstm_cfg.lstm_first = true;
    PerturbedNet pmlp = PerturbedNet::init(mlp_cfg, data.history, norm, rng);
    PerturbedNet plstm = PerturbedNet::init(lstm_cfg, data.history, norm, rng);
    pnet_train(pmlp, dataset_batches(fit_data), pcfg, a.seed + 1);
    pnet_train(plstm, dataset_batches(fit_data), pcfg, a.seed + 2);

    CamSampler cam;
    std::vector<std::pair<std::string, ActionSampler*>> models = {
        {"gan", &gan}, {"gmr", &gmr}, {"pmlp", &pmlp}, {"plstm", &plstm}, {"cam", &cam}};

    // accumulated |error| per model and horizon
    std::vector<std::vector<double>> acc(models.size(),
                                         std::vector<double>(static_cast<std::size_t>(a.horizons), 0.0));
    std::vector<std::vector<long>> cnt(models.size(),
                                       std::vector<long>(static_cast<std::size_t>(a.horizons), 0));
    for (int ci = first_eval; ci < static_cast<int>(data.cases.size()); ++ci) {
        const auto& traj = data.cases[static_cast<std::size_t>(ci)].traj;
        const std::vector<State> hist(traj.begin(), traj.begin() + data.history + 1);
        for (std::size_t mi = 0; mi < models.size(); ++mi) {
            auto rollouts = rollout_batch(*models[mi].second, hist, a.rollouts, max_step,
                                          a.seed ^ (0x99ULL * ci), ci);
            for (const RolloutResult& r : rollouts)
                for (int h = 1; h <= a.horizons; ++h) {
                    const std::size_t t = static_cast<std::size_t>(h * a.steps_per_second);
                    const State& pred = r.states[t];
                    const State& truth = traj[static_cast<std::size_t>(data.history) + t];
                    acc[mi][static_cast<std::size_t>(h - 1)] +=
                        0.5 * (std::abs(pred[0] - truth[0]) + std::abs(pred[1] - truth[1]));
                    ++cnt[mi][static_cast<std::size_t>(h - 1)];
                }
        }
    }

    std::ofstream out(a.out, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + a.out + "' for writing");
    out << "horizon_s";
    for (const auto& [name, model] : models) out << ',' << name;
    out << '\n';
    for (int h = 1; h <= a.horizons; ++h) {
        out << h;
        for (std::size_t mi = 0; mi < models.size(); ++mi)
            out << ','
                << format_double(acc[mi][static_cast<std::size_t>(h - 1)] /
                                 static_cast<double>(cnt[mi][static_cast<std::size_t>(h - 1)]));
        out << '\n';
    }
    std::cout << "wrote " << a.horizons << " x " << models.size() << " error table to " << a.out
              << '\n';
}

struct SmoothArgs {
    std::string in;
    std::string out = "smoothed.csv";
    double process_noise = 1.0;
    double meas_var = 0.25;
};

void run_smooth(const SmoothArgs& a) {
    const auto tracks = ingest_csv(a.in);
    EkfConfig cfg;
    cfg.process_noise = a.process_noise;
    cfg.meas_var = a.meas_var;
    std::ofstream out(a.out, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + a.out + "' for writing");
    out << "agent_id,t,x,y,vx,vy,ax,ay\n";
    for (const AgentTrack& tr : tracks)
        for (const SmoothedState& s : ekf_smooth(tr, cfg))
            out << tr.agent_id << ',' << format_double(s.t) << ',' << format_double(s.pos[0])
                << ',' << format_double(s.pos[1]) << ',' << format_double(s.vel[0]) << ','
                << format_double(s.vel[1]) << ',' << format_double(s.acc[0]) << ','
                << format_double(s.acc[1]) << '\n';
    std::cout << "smoothed " << tracks.size() << " agents into " << a.out << '\n';
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Adversarial sequence prediction and mixture tracking on a predator-prey "
                 "benchmark"};
    app.require_subcommand(1);
    app.set_config("--config", "", "Read options from an INI file (command-line flags win)");
    app.allow_config_extras(false);  // unknown keys are rejected

    GenDataArgs gd;
    CLI::App* gen_data = app.add_subcommand("gen-data", "Sample a ground-truth dataset");
    gen_data->add_option("--out", gd.out, "Dataset file to write")->capture_default_str();
    gen_data->add_option("--cases", gd.cases, "Number of cases")->capture_default_str();
    gen_data->add_option("--seed", gd.seed, "Sampling seed")->capture_default_str();
    gen_data->add_option("--dt", gd.dt, "Integration output step")->capture_default_str();
    gen_data->add_option("--history", gd.history, "History window length T_h")
        ->capture_default_str();
    gen_data->add_option("--horizon", gd.horizon, "Prediction steps T per case")
        ->capture_default_str();
    gen_data->add_option("--param-lo", gd.ranges.param_lo, "Lower bound of the rate parameters")
        ->capture_default_str();
    gen_data->add_option("--param-hi", gd.ranges.param_hi, "Upper bound of the rate parameters")
        ->capture_default_str();
    gen_data->add_option("--state-lo", gd.ranges.state_lo, "Lower bound of initial populations")
        ->capture_default_str();
    gen_data->add_option("--state-hi", gd.ranges.state_hi, "Upper bound of initial populations")
        ->capture_default_str();
    gen_data->callback([&] { run_gen_data(gd); });

    TrainArgs ta;
    CLI::App* train = app.add_subcommand("train", "Adversarial training with consensus updates");
    train->add_option("--data", ta.data, "Dataset file")->required();
    train->add_option("--out", ta.out, "Checkpoint file to write")->capture_default_str();
    train->add_option("--log", ta.log, "Training-curve CSV to write")->capture_default_str();
    train->add_option("--profile", ta.profile, "Network profile: full or scaled")
        ->capture_default_str();
    train->add_option("--noise", ta.noise, "Latent noise: gaussian or uniform")
        ->capture_default_str();
    train->add_option("--alpha", ta.alpha, "Learning rate")->capture_default_str();
    train->add_option("--gamma", ta.gamma, "Consensus regularization coefficient")
        ->capture_default_str();
    train->add_option("--iterations", ta.iterations, "Training iterations")
        ->capture_default_str();
    train->add_option("--batch", ta.batch, "Batch size")->capture_default_str();
    train->add_option("--log-interval", ta.log_interval, "Iterations between log rows")
        ->capture_default_str();
    train->add_option("--checkpoint-interval", ta.checkpoint_interval,
                      "Iterations between checkpoint snapshots")
        ->capture_default_str();
    train->add_option("--seed", ta.seed, "Training seed")->capture_default_str();
    train->add_flag("--sweep", ta.sweep,
                    "Train gamma in {0.00, 0.33, 1.00} and emit one curve per value");
    train->callback([&] { run_train(ta); });

    EvalArgs ea;
    CLI::App* eval = app.add_subcommand("eval", "Distribution evaluation of a trained model");
    eval->add_option("--checkpoint", ea.checkpoint, "Trained model checkpoint")
        ->capture_default_str();
    eval->add_option("--report", ea.report, "Summary JSON to write")->capture_default_str();
    eval->add_option("--violin", ea.violin, "Pooled-sample CSV to write")->capture_default_str();
    eval->add_option("--rollout-dump", ea.rollout_dump,
                     "Optional CSV dump of every rollout (case_id,rollout,t,x,y)");
    eval->add_option("-m", ea.m, "Number of parameter sets")->capture_default_str();
    eval->add_option("-n", ea.n, "Rollouts per parameter set")->capture_default_str();
    eval->add_option("-T", ea.T, "Prediction steps")->capture_default_str();
    eval->add_option("--history", ea.history, "History window length")->capture_default_str();
    eval->add_option("--dt", ea.dt, "Integration output step")->capture_default_str();
    eval->add_option("--seed", ea.seed, "Evaluation seed")->capture_default_str();
    eval->add_flag("--oracle", ea.oracle,
                   "Replace the model with the true-dynamics oracle (harness self-check)");
    eval->add_flag("--pool-all", ea.pool_all, "Pool every timestep instead of the terminal one");
    eval->callback([&] { run_eval(ea); });

    TrackArgs tr;
    CLI::App* track_cmd = app.add_subcommand("track", "Mixture particle tracking on a held-out case");
    track_cmd->add_option("--checkpoint", tr.checkpoint, "Trained model checkpoint")
        ->capture_default_str();
    track_cmd->add_option("--out", tr.out, "Per-step CSV to write")->capture_default_str();
    track_cmd->add_option("--summary", tr.summary, "Summary JSON to write")
        ->capture_default_str();
    track_cmd->add_option("--particles", tr.particles, "Particles per component")
        ->capture_default_str();
    track_cmd->add_option("--steps", tr.steps, "Tracking steps")->capture_default_str();
    track_cmd->add_option("--history", tr.history, "History window length")
        ->capture_default_str();
    track_cmd->add_option("--dt", tr.dt, "Integration output step")->capture_default_str();
    track_cmd->add_option("--sigma", tr.sigma, "Measurement noise standard deviation")
        ->capture_default_str();
    track_cmd->add_option("--ess", tr.ess, "Resampling threshold on the ESS ratio")
        ->capture_default_str();
    track_cmd->add_option("--seed", tr.seed, "Tracking seed")->capture_default_str();
    track_cmd->callback([&] { run_track(tr); });

    BaselineArgs ba;
    CLI::App* baseline = app.add_subcommand(
        "baseline", "Horizon-MAE comparison of the model against cam/gmr/pmlp/plstm");
    baseline->add_option("--data", ba.data, "Dataset file")->required();
    baseline->add_option("--checkpoint", ba.checkpoint, "Trained model checkpoint")
        ->capture_default_str();
    baseline->add_option("--out", ba.out, "Comparison table CSV to write")
        ->capture_default_str();
    baseline->add_option("--horizons", ba.horizons, "Number of horizon rows")
        ->capture_default_str();
    baseline->add_option("--steps-per-second", ba.steps_per_second,
                         "Steps per second-equivalent horizon unit")
        ->capture_default_str();
    baseline->add_option("--eval-cases", ba.eval_cases, "Held-out cases used for evaluation")
        ->capture_default_str();
    baseline->add_option("--rollouts", ba.rollouts, "Rollouts per case and model")
        ->capture_default_str();
    baseline->add_option("--pnet-iterations", ba.pnet_iterations,
                         "Training iterations for the perturbed nets")
        ->capture_default_str();
    baseline->add_option("--pnet-alpha", ba.pnet_alpha, "Learning rate for the perturbed nets")
        ->capture_default_str();
    baseline->add_option("--pnet-batch", ba.pnet_batch, "Batch size for the perturbed nets")
        ->capture_default_str();
    baseline->add_option("--gmr-k", ba.gmr_components, "Mixture components for regression")
        ->capture_default_str();
    baseline->add_option("--seed", ba.seed, "Fitting and evaluation seed")
        ->capture_default_str();
    baseline->callback([&] { run_baseline(ba); });

    SmoothArgs sm;
    CLI::App* smooth = app.add_subcommand("smooth", "Kalman-smooth recorded trajectories");
    smooth->add_option("--in", sm.in, "Input CSV (agent_id,t,x,y[,vx,vy])")->required();
    smooth->add_option("--out", sm.out, "Smoothed CSV to write")->capture_default_str();
    smooth->add_option("--process-noise", sm.process_noise, "White-jerk spectral density")
        ->capture_default_str();
    smooth->add_option("--meas-var", sm.meas_var, "Position measurement variance")
        ->capture_default_str();
    smooth->callback([&] { run_smooth(sm); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
