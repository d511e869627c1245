// SPDX-License-Identifier: Apache-2.0
#include "magpred/lvsys.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

namespace magpred {

using nlohmann::json;

State lv_derivative(const State& s, const LvParams& p) {
    const double x = s[0], y = s[1];
    return {p.a * x - p.b * x * y, p.c * x * y - p.d * y};
}

double lv_invariant(const State& s, const LvParams& p) {
    return p.c * s[0] - p.d * std::log(s[0]) + p.b * s[1] - p.a * std::log(s[1]);
}

namespace {

State axpy(const State& s, double h, const State& k) {
    return {s[0] + h * k[0], s[1] + h * k[1]};
}

bool in_domain(const State& s) {
    return std::isfinite(s[0]) && std::isfinite(s[1]) && s[0] >= 0.0 && s[1] >= 0.0 &&
           s[0] <= 1e6 && s[1] <= 1e6;
}

}  // namespace

std::vector<State> integrate(const State& s0, const LvParams& p, double dt, int steps,
                             Direction dir, double max_substep) {
    if (steps < 1) throw std::invalid_argument("integrate: steps must be >= 1");
    if (dt <= 0.0) throw std::invalid_argument("integrate: dt must be positive");
    if (max_substep <= 0.0) throw std::invalid_argument("integrate: max_substep must be positive");
    const double sign = dir == Direction::Forward ? 1.0 : -1.0;
    const int substeps = std::max(1, static_cast<int>(std::ceil(dt / max_substep - 1e-12)));
    const double h = dt / substeps;
    auto f = [&](const State& q) {
        State d = lv_derivative(q, p);
        return State{sign * d[0], sign * d[1]};
    };
    std::vector<State> traj;
    traj.reserve(static_cast<std::size_t>(steps) + 1);
    traj.push_back(s0);
    State s = s0;
    for (int step = 0; step < steps; ++step) {
        for (int sub = 0; sub < substeps; ++sub) {
            const State k1 = f(s);
            const State k2 = f(axpy(s, h / 2, k1));
            const State k3 = f(axpy(s, h / 2, k2));
            const State k4 = f(axpy(s, h, k3));
            s = {s[0] + h / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]),
                 s[1] + h / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])};
            if (!in_domain(s))
                throw IntegrationBlowup("integration blew up at step " + std::to_string(step + 1) +
                                            ": state (" + std::to_string(s[0]) + ", " +
                                            std::to_string(s[1]) + ")",
                                        step + 1);
        }
        traj.push_back(s);
    }
    return traj;
}

std::vector<State> backward_history(const State& s0, const LvParams& p, double dt, int t_h) {
    std::vector<State> back = integrate(s0, p, dt, t_h, Direction::Backward);
    std::vector<State> hist(back.rbegin(), back.rend());
    return hist;
}

State Dataset::action(const PairRef& pr) const {
    const std::vector<State>& traj = cases[static_cast<std::size_t>(pr.case_idx)].traj;
    const State& s = traj[static_cast<std::size_t>(pr.t)];
    const State& n = traj[static_cast<std::size_t>(pr.t) + 1];
    return {n[0] - s[0], n[1] - s[1]};
}

std::vector<PairRef> Dataset::pairs(int first_case, int last_case) const {
    std::vector<PairRef> out;
    for (int ci = first_case; ci < last_case; ++ci)
        for (int t = history; t < history + horizon; ++t) out.push_back(PairRef{ci, t});
    return out;
}

std::vector<PairRef> Dataset::all_pairs() const {
    return pairs(0, static_cast<int>(cases.size()));
}

Batch Dataset::make_batch(const std::vector<PairRef>& refs) const {
    const int B = static_cast<int>(refs.size());
    Batch batch;
    batch.cond_seq.assign(static_cast<std::size_t>(history) + 1, Tensor(B, 2));
    batch.actions = Tensor(B, 2);
    for (int r = 0; r < B; ++r) {
        const PairRef& pr = refs[static_cast<std::size_t>(r)];
        const std::vector<State>& traj = cases[static_cast<std::size_t>(pr.case_idx)].traj;
        for (int k = 0; k <= history; ++k) {
            const State& s = traj[static_cast<std::size_t>(pr.t - history + k)];
            batch.cond_seq[static_cast<std::size_t>(k)](r, 0) = s[0];
            batch.cond_seq[static_cast<std::size_t>(k)](r, 1) = s[1];
        }
        const State a = action(pr);
        batch.actions(r, 0) = a[0];
        batch.actions(r, 1) = a[1];
    }
    return batch;
}

Dataset sample_dataset(int count, std::uint64_t seed, const SampleRanges& ranges, double dt,
                       int history, int horizon) {
    if (count < 1) throw std::invalid_argument("sample_dataset: count must be >= 1");
    Dataset ds;
    ds.seed = seed;
    ds.ranges = ranges;
    ds.dt = dt;
    ds.history = history;
    ds.horizon = horizon;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> pdist(ranges.param_lo, ranges.param_hi);
    std::uniform_real_distribution<double> sdist(ranges.state_lo, ranges.state_hi);
    while (static_cast<int>(ds.cases.size()) < count) {
        CaseData cd;
        cd.params = LvParams{pdist(rng), pdist(rng), pdist(rng), pdist(rng)};
        cd.s0 = State{sdist(rng), sdist(rng)};
        try {
            cd.traj = integrate(cd.s0, cd.params, dt, history + horizon, Direction::Forward);
        } catch (const IntegrationBlowup&) {
            ++ds.redraws;
            continue;
        }
        ds.cases.push_back(std::move(cd));
    }
    return ds;
}

Normalizer fit_normalizer(const Dataset& ds) {
    Normalizer n = Normalizer::identity(2, 2);
    std::array<double, 2> smean{}, ssq{}, amean{}, asq{};
    std::size_t scount = 0, acount = 0;
    for (const CaseData& cd : ds.cases) {
        for (const State& s : cd.traj) {
            for (int j = 0; j < 2; ++j) {
                smean[static_cast<std::size_t>(j)] += s[static_cast<std::size_t>(j)];
                ssq[static_cast<std::size_t>(j)] +=
                    s[static_cast<std::size_t>(j)] * s[static_cast<std::size_t>(j)];
            }
            ++scount;
        }
    }
    for (const PairRef& pr : ds.all_pairs()) {
        const State a = ds.action(pr);
        for (int j = 0; j < 2; ++j) {
            amean[static_cast<std::size_t>(j)] += a[static_cast<std::size_t>(j)];
            asq[static_cast<std::size_t>(j)] +=
                a[static_cast<std::size_t>(j)] * a[static_cast<std::size_t>(j)];
        }
        ++acount;
    }
    if (scount == 0 || acount == 0) throw DatasetError("fit_normalizer: empty dataset");
    for (int j = 0; j < 2; ++j) {
        const std::size_t js = static_cast<std::size_t>(j);
        const double sm = smean[js] / static_cast<double>(scount);
        const double sv = ssq[js] / static_cast<double>(scount) - sm * sm;
        n.state_mean[js] = sm;
        n.state_scale[js] = std::max(std::sqrt(std::max(sv, 0.0)), 1e-8);
        const double am = amean[js] / static_cast<double>(acount);
        const double av = asq[js] / static_cast<double>(acount) - am * am;
        n.action_mean[js] = am;
        n.action_scale[js] = std::max(std::sqrt(std::max(av, 0.0)), 1e-8);
    }
    return n;
}

void Dataset::save(const std::string& path) const {
    json j;
    j["format"] = "magpred-dataset";
    j["version"] = kVersion;
    j["seed"] = seed;
    j["ranges"] = {{"param_lo", ranges.param_lo},
                   {"param_hi", ranges.param_hi},
                   {"state_lo", ranges.state_lo},
                   {"state_hi", ranges.state_hi}};
    j["dt"] = dt;
    j["history"] = history;
    j["horizon"] = horizon;
    j["redraws"] = redraws;
    json jcases = json::array();
    for (const CaseData& cd : cases) {
        json jc;
        jc["params"] = {cd.params.a, cd.params.b, cd.params.c, cd.params.d};
        jc["s0"] = {cd.s0[0], cd.s0[1]};
        json jt = json::array();
        for (const State& s : cd.traj) jt.push_back({s[0], s[1]});
        jc["traj"] = std::move(jt);
        // derived one-step increments, stored for direct consumption
        json ja = json::array();
        for (std::size_t t = static_cast<std::size_t>(history);
             t + 1 < cd.traj.size() && t < static_cast<std::size_t>(history + horizon); ++t)
            ja.push_back({cd.traj[t + 1][0] - cd.traj[t][0], cd.traj[t + 1][1] - cd.traj[t][1]});
        jc["actions"] = std::move(ja);
        jcases.push_back(std::move(jc));
    }
    j["cases"] = std::move(jcases);
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DatasetError("dataset: cannot open '" + path + "' for writing");
    out << j.dump();
    if (!out) throw DatasetError("dataset: write failed for '" + path + "'");
}

Dataset Dataset::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DatasetError("dataset: cannot open '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw DatasetError("dataset: unparseable file '" + path + "': " + e.what());
    }
    try {
        if (j.value("format", "") != "magpred-dataset")
            throw DatasetError("dataset: '" + path + "' is not a dataset file");
        if (j.at("version").get<int>() != kVersion)
            throw DatasetError("dataset: unsupported version " +
                               std::to_string(j.at("version").get<int>()));
        Dataset ds;
        ds.seed = j.at("seed").get<std::uint64_t>();
        ds.ranges.param_lo = j.at("ranges").at("param_lo").get<double>();
        ds.ranges.param_hi = j.at("ranges").at("param_hi").get<double>();
        ds.ranges.state_lo = j.at("ranges").at("state_lo").get<double>();
        ds.ranges.state_hi = j.at("ranges").at("state_hi").get<double>();
        ds.dt = j.at("dt").get<double>();
        ds.history = j.at("history").get<int>();
        ds.horizon = j.at("horizon").get<int>();
        ds.redraws = j.at("redraws").get<int>();
        for (const json& jc : j.at("cases")) {
            CaseData cd;
            const auto pv = jc.at("params").get<std::vector<double>>();
            cd.params = LvParams{pv.at(0), pv.at(1), pv.at(2), pv.at(3)};
            const auto sv = jc.at("s0").get<std::vector<double>>();
            cd.s0 = State{sv.at(0), sv.at(1)};
            for (const json& js : jc.at("traj"))
                cd.traj.push_back(State{js.at(0).get<double>(), js.at(1).get<double>()});
            ds.cases.push_back(std::move(cd));
        }
        return ds;
    } catch (const DatasetError&) {
        throw;
    } catch (const json::exception& e) {
        throw DatasetError("dataset: malformed content in '" + path + "': " + e.what());
    }
}

}  // namespace magpred
