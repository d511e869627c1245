// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <random>

#include "magpred/lvsys.hpp"

using namespace magpred;

TEST_CASE("derivative field evaluates the predator-prey equations") {
    {
        State d = lv_derivative({0.0, 1.0}, LvParams{1, 1, 1, 1});
        CHECK(d[0] == 0.0);
        CHECK(d[1] == doctest::Approx(-1.0));
    }
    {
        // equilibrium at (d/c, a/b)
        State d = lv_derivative({2.0, 2.0}, LvParams{2, 1, 1, 2});
        CHECK(d[0] == doctest::Approx(0.0));
        CHECK(d[1] == doctest::Approx(0.0));
    }
    {
        State d = lv_derivative({1.0, 1.0}, LvParams{3, 4, 5, 3});
        CHECK(d[0] == doctest::Approx(-1.0));
        CHECK(d[1] == doctest::Approx(2.0));
    }
}

TEST_CASE("forward then backward integration returns to the start") {
    std::mt19937_64 rng(801);
    std::uniform_real_distribution<double> pd(3.0, 5.0), sd(1.0, 3.0);
    for (int rep = 0; rep < 50; ++rep) {
        LvParams p{pd(rng), pd(rng), pd(rng), pd(rng)};
        State s0{sd(rng), sd(rng)};
        auto fwd = integrate(s0, p, 0.05, 20, Direction::Forward);
        auto bwd = integrate(fwd.back(), p, 0.05, 20, Direction::Backward);
        CHECK(std::abs(bwd.back()[0] - s0[0]) < 1e-6);
        CHECK(std::abs(bwd.back()[1] - s0[1]) < 1e-6);
    }
}

TEST_CASE("decoupled axis decays exponentially") {
    // with x = 0 the prey equation vanishes and dy/dt = -d y
    const double y0 = 2.0;
    auto traj = integrate({0.0, y0}, LvParams{1, 1, 1, 1}, 0.05, 20, Direction::Forward);
    const double expected = y0 * std::exp(-1.0);
    CHECK(std::abs(traj.back()[1] - expected) < 1e-6);
    CHECK(traj.back()[0] == 0.0);
}

TEST_CASE("step refinement changes the solution by less than 1e-5") {
    std::mt19937_64 rng(802);
    std::uniform_real_distribution<double> pd(3.0, 5.0), sd(1.0, 3.0);
    for (int rep = 0; rep < 10; ++rep) {
        LvParams p{pd(rng), pd(rng), pd(rng), pd(rng)};
        State s0{sd(rng), sd(rng)};
        const int steps = 100;  // 5 time units at dt = 0.05
        auto coarse = integrate(s0, p, 0.05, steps, Direction::Forward);
        auto fine = integrate(s0, p, 0.005, steps * 10, Direction::Forward);
        for (int k = 0; k <= steps; ++k) {
            CHECK(std::abs(coarse[static_cast<std::size_t>(k)][0] -
                           fine[static_cast<std::size_t>(k) * 10][0]) < 1e-5);
            CHECK(std::abs(coarse[static_cast<std::size_t>(k)][1] -
                           fine[static_cast<std::size_t>(k) * 10][1]) < 1e-5);
        }
    }
}

TEST_CASE("first integral drifts less than 1e-4 relative over 5 time units") {
    std::mt19937_64 rng(803);
    std::uniform_real_distribution<double> pd(3.0, 5.0), sd(1.0, 3.0);
    for (int rep = 0; rep < 100; ++rep) {
        LvParams p{pd(rng), pd(rng), pd(rng), pd(rng)};
        State s0{sd(rng), sd(rng)};
        auto traj = integrate(s0, p, 0.05, 100, Direction::Forward);
        const double v0 = lv_invariant(s0, p);
        double worst = 0.0;
        for (const State& s : traj)
            worst = std::max(worst, std::abs(lv_invariant(s, p) - v0) / std::abs(v0));
        CHECK(worst < 1e-4);
    }
}

TEST_CASE("integration reports the blow-up step when leaving the domain") {
    // strongly negative-divergent field: start on the axis and reverse time
    try {
        integrate({1e5, 1e5}, LvParams{5, 5, 5, 5}, 0.5, 100, Direction::Forward);
        FAIL("expected IntegrationBlowup");
    } catch (const IntegrationBlowup& e) {
        CHECK(e.step >= 1);
        CHECK(std::string(e.what()).find("step") != std::string::npos);
    }
}

TEST_CASE("sampled datasets respect the configured ranges") {
    Dataset ds = sample_dataset(50, 11, SampleRanges{});
    REQUIRE(ds.cases.size() == 50);
    for (const CaseData& cd : ds.cases) {
        for (double v : {cd.params.a, cd.params.b, cd.params.c, cd.params.d}) {
            CHECK(v >= 3.0);
            CHECK(v <= 5.0);
        }
        CHECK(cd.s0[0] >= 1.0);
        CHECK(cd.s0[0] <= 3.0);
        CHECK(cd.s0[1] >= 1.0);
        CHECK(cd.s0[1] <= 3.0);
        CHECK(cd.traj.size() == static_cast<std::size_t>(ds.history + ds.horizon + 1));
        for (const State& s : cd.traj) {
            CHECK(s[0] > 0.0);
            CHECK(s[1] > 0.0);
        }
    }
}

TEST_CASE("actions reconstruct the successor state") {
    Dataset ds = sample_dataset(20, 12, SampleRanges{});
    for (const PairRef& pr : ds.all_pairs()) {
        const State a = ds.action(pr);
        const State& s = ds.cases[static_cast<std::size_t>(pr.case_idx)]
                             .traj[static_cast<std::size_t>(pr.t)];
        const State& next = ds.cases[static_cast<std::size_t>(pr.case_idx)]
                                .traj[static_cast<std::size_t>(pr.t) + 1];
        CHECK(s[0] + a[0] == next[0]);
        CHECK(s[1] + a[1] == next[1]);
    }
}

TEST_CASE("dataset sampling is deterministic in the seed") {
    Dataset a = sample_dataset(10, 77, SampleRanges{});
    Dataset b = sample_dataset(10, 77, SampleRanges{});
    REQUIRE(a.cases.size() == b.cases.size());
    for (std::size_t i = 0; i < a.cases.size(); ++i) {
        CHECK(a.cases[i].params.a == b.cases[i].params.a);
        CHECK(a.cases[i].traj == b.cases[i].traj);
    }
}

TEST_CASE("dataset file round-trip preserves cases and metadata") {
    Dataset ds = sample_dataset(5, 13, SampleRanges{}, 0.05, 4, 6);
    const std::string path = "/tmp/magpred_lvsys_ds_" + std::to_string(::getpid()) + ".json";
    ds.save(path);
    Dataset back = Dataset::load(path);
    CHECK(back.seed == ds.seed);
    CHECK(back.history == ds.history);
    CHECK(back.horizon == ds.horizon);
    REQUIRE(back.cases.size() == ds.cases.size());
    for (std::size_t i = 0; i < ds.cases.size(); ++i) CHECK(back.cases[i].traj == ds.cases[i].traj);
    std::remove(path.c_str());
}

TEST_CASE("batch assembly lays out windows and actions consistently") {
    Dataset ds = sample_dataset(3, 14, SampleRanges{}, 0.05, 4, 6);
    auto refs = ds.all_pairs();
    REQUIRE(refs.size() == 18);
    Batch b = ds.make_batch({refs[0], refs[5], refs[17]});
    REQUIRE(b.cond_seq.size() == 5);
    CHECK(b.cond_seq[0].rows() == 3);
    CHECK(b.actions.rows() == 3);
    // row 2 corresponds to refs[17]: last pair of the last case
    const PairRef& pr = refs[17];
    const CaseData& cd = ds.cases[static_cast<std::size_t>(pr.case_idx)];
    CHECK(b.cond_seq[4](2, 0) == cd.traj[static_cast<std::size_t>(pr.t)][0]);
    CHECK(b.cond_seq[0](2, 1) == cd.traj[static_cast<std::size_t>(pr.t - 4)][1]);
    const State a = ds.action(pr);
    CHECK(b.actions(2, 0) == a[0]);
    CHECK(b.actions(2, 1) == a[1]);
}

TEST_CASE("normalizer statistics reflect the dataset") {
    Dataset ds = sample_dataset(30, 15, SampleRanges{});
    Normalizer n = fit_normalizer(ds);
    // populations are positive so the mean must be well above zero
    CHECK(n.state_mean[0] > 0.5);
    CHECK(n.state_mean[1] > 0.5);
    CHECK(n.state_scale[0] > 0.0);
    CHECK(n.action_scale[0] > 0.0);
    // normalized states should be roughly centered
    Tensor s(1, 2);
    s(0, 0) = n.state_mean[0];
    s(0, 1) = n.state_mean[1];
    Tensor z = n.normalize_states(s);
    CHECK(z(0, 0) == doctest::Approx(0.0));
    CHECK(z(0, 1) == doctest::Approx(0.0));
}
