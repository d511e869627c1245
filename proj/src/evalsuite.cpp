// SPDX-License-Identifier: Apache-2.0
#include "magpred/evalsuite.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "magpred/csv.hpp"

namespace magpred {

Tensor GanSampler::propose(const std::vector<Tensor>& window_seq, std::mt19937_64& rng) {
    const int batch = window_seq.front().rows();
    std::vector<Tensor> cond;
    cond.reserve(window_seq.size());
    for (const Tensor& w : window_seq) cond.push_back(norm_.normalize_states(w));
    auto noise = sample_noise_seq(static_cast<int>(window_seq.size()), batch,
                                  gen_->cfg.noise_dim, kind_, rng);
    return norm_.denormalize_actions(generate_values(*gen_, cond, noise));
}

Tensor TrueDynamicsSampler::propose(const std::vector<Tensor>& window_seq, std::mt19937_64&) {
    const Tensor& last = window_seq.back();
    Tensor actions(last.rows(), 2);
    for (int r = 0; r < last.rows(); ++r) {
        const State s{last(r, 0), last(r, 1)};
        const State next = integrate(s, params_, dt_, 1, Direction::Forward).back();
        actions(r, 0) = next[0] - s[0];
        actions(r, 1) = next[1] - s[1];
    }
    return actions;
}

std::vector<RolloutResult> rollout_batch(ActionSampler& sampler,
                                         const std::vector<State>& history, int n, int T,
                                         std::uint64_t noise_seed, int case_id) {
    if (history.empty()) throw std::invalid_argument("rollout: empty history");
    if (n < 1 || T < 1) throw std::invalid_argument("rollout: n and T must be >= 1");

    std::mt19937_64 rng(noise_seed);
    std::vector<Tensor> window(history.size(), Tensor(n, 2));
    for (std::size_t k = 0; k < history.size(); ++k)
        for (int r = 0; r < n; ++r) {
            window[k](r, 0) = history[k][0];
            window[k](r, 1) = history[k][1];
        }

    std::vector<RolloutResult> out(static_cast<std::size_t>(n));
    for (int r = 0; r < n; ++r) {
        out[static_cast<std::size_t>(r)].case_id = case_id;
        out[static_cast<std::size_t>(r)].noise_seed = noise_seed;
        out[static_cast<std::size_t>(r)].states.push_back(history.back());
    }

    for (int t = 0; t < T; ++t) {
        Tensor actions = sampler.propose(window, rng);
        Tensor next(n, 2);
        for (int r = 0; r < n; ++r) {
            const double nx = window.back()(r, 0) + actions(r, 0);
            const double ny = window.back()(r, 1) + actions(r, 1);
            if (!std::isfinite(nx) || !std::isfinite(ny))
                throw RolloutError("rollout produced a non-finite state at step " +
                                       std::to_string(t + 1),
                                   t + 1);
            next(r, 0) = nx;
            next(r, 1) = ny;
            out[static_cast<std::size_t>(r)].actions.push_back({actions(r, 0), actions(r, 1)});
            out[static_cast<std::size_t>(r)].states.push_back({nx, ny});
        }
        window.erase(window.begin());
        window.push_back(std::move(next));
    }
    return out;
}

RolloutResult rollout(ActionSampler& sampler, const std::vector<State>& history, int T,
                      std::uint64_t noise_seed, int case_id) {
    return rollout_batch(sampler, history, 1, T, noise_seed, case_id).front();
}

double mae(const std::vector<State>& pred, const std::vector<State>& truth) {
    if (pred.empty()) throw std::invalid_argument("mae: empty input");
    if (pred.size() != truth.size()) throw std::invalid_argument("mae: length mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i)
        acc += std::abs(pred[i][0] - truth[i][0]) + std::abs(pred[i][1] - truth[i][1]);
    return acc / (2.0 * static_cast<double>(pred.size()));
}

double wasserstein1(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) throw std::invalid_argument("wasserstein1: empty sample set");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const long long na = static_cast<long long>(a.size());
    const long long nb = static_cast<long long>(b.size());
    // walk the union of quantile breakpoints; positions tracked as integer
    // multiples of 1/(na*nb) so boundaries are exact
    const double denom = static_cast<double>(na) * static_cast<double>(nb);
    long long i = 0, j = 0, pos = 0;
    double w = 0.0;
    while (i < na && j < nb) {
        const long long next_a = (i + 1) * nb;
        const long long next_b = (j + 1) * na;
        const long long next = std::min(next_a, next_b);
        w += static_cast<double>(next - pos) / denom *
             std::abs(a[static_cast<std::size_t>(i)] - b[static_cast<std::size_t>(j)]);
        pos = next;
        if (next == next_a) ++i;
        if (next == next_b) ++j;
    }
    return w;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

DistributionSummary summarize(std::vector<double> values, const std::vector<double>& reference,
                              int bins) {
    DistributionSummary s;
    s.values = std::move(values);
    double acc = 0.0, sq = 0.0;
    for (double v : s.values) {
        acc += v;
        sq += v * v;
    }
    const double count = static_cast<double>(s.values.size());
    s.mean = acc / count;
    s.stddev = std::sqrt(std::max(0.0, sq / count - s.mean * s.mean));

    double lo = s.values.front(), hi = s.values.front();
    for (double v : s.values) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (hi <= lo) hi = lo + 1e-12;
    s.bin_edges.resize(static_cast<std::size_t>(bins) + 1);
    for (int k = 0; k <= bins; ++k)
        s.bin_edges[static_cast<std::size_t>(k)] = lo + (hi - lo) * k / bins;
    s.counts.assign(static_cast<std::size_t>(bins), 0);
    for (double v : s.values) {
        int k = static_cast<int>((v - lo) / (hi - lo) * bins);
        k = std::min(std::max(k, 0), bins - 1);
        ++s.counts[static_cast<std::size_t>(k)];
    }
    if (!reference.empty()) s.w1_to_reference = wasserstein1(s.values, reference);
    return s;
}

}  // namespace

DistributionReport evaluate_distribution(
    ActionSampler& sampler, const EvalConfig& cfg, std::uint64_t seed,
    const std::function<void(int, const LvParams&, const State&)>& on_case,
    const std::function<void(const RolloutResult&)>& on_rollout) {
    if (cfg.m < 1 || cfg.n < 1 || cfg.T < 1)
        throw std::invalid_argument("evaluate_distribution: m, n, T must be >= 1");

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> pdist(cfg.ranges.param_lo, cfg.ranges.param_hi);
    std::uniform_real_distribution<double> sdist(cfg.ranges.state_lo, cfg.ranges.state_hi);

    std::vector<double> pred_x, pred_y, true_x, true_y;
    for (int i = 0; i < cfg.m; ++i) {
        LvParams params;
        State s0;
        std::vector<State> truth, hist;
        for (;;) {
            params = LvParams{pdist(rng), pdist(rng), pdist(rng), pdist(rng)};
            s0 = State{sdist(rng), sdist(rng)};
            try {
                truth = integrate(s0, params, cfg.dt, cfg.T, Direction::Forward);
                hist = backward_history(s0, params, cfg.dt, cfg.history);
                break;
            } catch (const IntegrationBlowup&) {
                continue;  // redraw, mirroring dataset construction
            }
        }
        if (on_case) on_case(i, params, s0);

        auto rollouts =
            rollout_batch(sampler, hist, cfg.n, cfg.T, splitmix64(seed + 0x51ULL * i), i);
        for (const RolloutResult& r : rollouts) {
            if (on_rollout) on_rollout(r);
            if (cfg.pool_all_steps) {
                for (std::size_t t = 1; t < r.states.size(); ++t) {
                    pred_x.push_back(r.states[t][0]);
                    pred_y.push_back(r.states[t][1]);
                }
            } else {
                pred_x.push_back(r.states.back()[0]);
                pred_y.push_back(r.states.back()[1]);
            }
        }
        if (cfg.pool_all_steps) {
            for (std::size_t t = 1; t < truth.size(); ++t) {
                true_x.push_back(truth[t][0]);
                true_y.push_back(truth[t][1]);
            }
        } else {
            true_x.push_back(truth.back()[0]);
            true_y.push_back(truth.back()[1]);
        }
    }

    DistributionReport rep;
    rep.true_x = summarize(true_x, {}, cfg.bins);
    rep.true_y = summarize(true_y, {}, cfg.bins);
    rep.pred_x = summarize(pred_x, rep.true_x.values, cfg.bins);
    rep.pred_y = summarize(pred_y, rep.true_y.values, cfg.bins);
    return rep;
}

RolloutCsvWriter::RolloutCsvWriter(const std::string& path) : out_(path, std::ios::trunc) {
    if (!out_) throw std::runtime_error("rollout dump: cannot open '" + path + "'");
    out_ << "case_id,rollout,t,x,y\n";
}

void RolloutCsvWriter::write(const RolloutResult& r) {
    if (r.case_id != last_case_) {
        last_case_ = r.case_id;
        rollout_in_case_ = 0;
    }
    for (std::size_t t = 0; t < r.states.size(); ++t)
        out_ << r.case_id << ',' << rollout_in_case_ << ',' << t << ','
             << format_double(r.states[t][0]) << ',' << format_double(r.states[t][1]) << '\n';
    ++rollout_in_case_;
}

void export_violin_data(const DistributionReport& report, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("export_violin_data: cannot open '" + path + "'");
    out << "variable,source,value\n";
    auto dump = [&out](const char* var, const char* source, const std::vector<double>& vs) {
        for (double v : vs) out << var << ',' << source << ',' << format_double(v) << '\n';
    };
    dump("x", "predicted", report.pred_x.values);
    dump("x", "truth", report.true_x.values);
    dump("y", "predicted", report.pred_y.values);
    dump("y", "truth", report.true_y.values);
    if (!out) throw std::runtime_error("export_violin_data: write failed for '" + path + "'");
}

}  // namespace magpred
