// SPDX-License-Identifier: Apache-2.0
#include "magpred/mixtracker.hpp"

#include <algorithm>
#include <cmath>

namespace magpred {

State MixtureBelief::posterior_mean() const {
    State mean{0.0, 0.0};
    for (const Component& c : components) {
        State cm{0.0, 0.0};
        for (const Particle& p : c.particles) {
            cm[0] += p.weight * p.state[0];
            cm[1] += p.weight * p.state[1];
        }
        mean[0] += c.pi * cm[0];
        mean[1] += c.pi * cm[1];
    }
    return mean;
}

State MixtureBelief::cloud_mean() const {
    State m{0.0, 0.0};
    std::size_t n = 0;
    for (const Component& c : components)
        for (const Particle& p : c.particles) {
            m[0] += p.state[0];
            m[1] += p.state[1];
            ++n;
        }
    m[0] /= static_cast<double>(n);
    m[1] /= static_cast<double>(n);
    return m;
}

State MixtureBelief::cloud_std() const {
    const State m = cloud_mean();
    State v{0.0, 0.0};
    std::size_t n = 0;
    for (const Component& c : components)
        for (const Particle& p : c.particles) {
            v[0] += (p.state[0] - m[0]) * (p.state[0] - m[0]);
            v[1] += (p.state[1] - m[1]) * (p.state[1] - m[1]);
            ++n;
        }
    return {std::sqrt(v[0] / static_cast<double>(n)), std::sqrt(v[1] / static_cast<double>(n))};
}

void MixtureBelief::check_normalization(double tol) const {
    double pi_sum = 0.0;
    for (const Component& c : components) {
        pi_sum += c.pi;
        double w = 0.0;
        for (const Particle& p : c.particles) w += p.weight;
        if (std::abs(w - 1.0) > tol)
            throw std::logic_error("mixture belief: particle weights sum to " +
                                   std::to_string(w));
    }
    if (std::abs(pi_sum - 1.0) > tol)
        throw std::logic_error("mixture belief: component weights sum to " +
                               std::to_string(pi_sum));
}

namespace {

std::vector<double> cholesky_lower(const Tensor& R) {
    const int d = R.rows();
    if (R.cols() != d) throw std::invalid_argument("measurement model: R must be square");
    std::vector<double> L(static_cast<std::size_t>(d) * d, 0.0);
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j <= i; ++j) {
            if (std::abs(R(i, j) - R(j, i)) > 1e-12 * std::max(1.0, std::abs(R(i, j))))
                throw std::invalid_argument("measurement model: R must be symmetric");
            double s = R(i, j);
            for (int k = 0; k < j; ++k)
                s -= L[static_cast<std::size_t>(i) * d + k] * L[static_cast<std::size_t>(j) * d + k];
            if (i == j) {
                if (s <= 0.0)
                    throw std::invalid_argument("measurement model: R is not positive definite");
                L[static_cast<std::size_t>(i) * d + j] = std::sqrt(s);
            } else {
                L[static_cast<std::size_t>(i) * d + j] = s / L[static_cast<std::size_t>(j) * d + j];
            }
        }
    }
    return L;
}

}  // namespace

MeasurementModel::MeasurementModel(Tensor R_in) : R(std::move(R_in)), chol_(cholesky_lower(R)) {}

MeasurementModel MeasurementModel::isotropic(int dim, double sigma) {
    Tensor R(dim, dim);
    for (int i = 0; i < dim; ++i) R(i, i) = sigma * sigma;
    return MeasurementModel(std::move(R));
}

double MeasurementModel::log_likelihood(const State& x, const State& z) const {
    const int d = R.rows();
    std::vector<double> r(static_cast<std::size_t>(d));
    for (int i = 0; i < d; ++i)
        r[static_cast<std::size_t>(i)] = z[static_cast<std::size_t>(i)] -
                                         x[static_cast<std::size_t>(i)];
    // forward solve L y = r, then ll = -1/2 ||y||^2 (constant dropped)
    double quad = 0.0;
    for (int i = 0; i < d; ++i) {
        double s = r[static_cast<std::size_t>(i)];
        for (int k = 0; k < i; ++k)
            s -= chol_[static_cast<std::size_t>(i) * d + k] * r[static_cast<std::size_t>(k)];
        s /= chol_[static_cast<std::size_t>(i) * d + i];
        r[static_cast<std::size_t>(i)] = s;
        quad += s * s;
    }
    return -0.5 * quad;
}

MixtureBelief init_belief(const std::vector<State>& history, int n_components, int particles,
                          double init_noise, std::mt19937_64& rng) {
    if (history.empty()) throw std::invalid_argument("init_belief: empty history");
    if (n_components < 1 || particles < 1)
        throw std::invalid_argument("init_belief: need at least one component and particle");
    std::normal_distribution<double> nd(0.0, init_noise);
    MixtureBelief belief;
    for (int n = 0; n < n_components; ++n) {
        Component comp;
        comp.pi = 1.0 / n_components;
        for (int i = 0; i < particles; ++i) {
            Particle p;
            p.weight = 1.0 / particles;
            p.history.reserve(history.size());
            for (const State& s : history)
                p.history.push_back({s[0] + nd(rng), s[1] + nd(rng)});
            p.state = p.history.back();
            comp.particles.push_back(std::move(p));
        }
        belief.components.push_back(std::move(comp));
    }
    return belief;
}

PriorOutcome prior_update(MixtureBelief& belief, ActionSampler& sampler, std::mt19937_64& rng) {
    PriorOutcome outcome;
    for (Component& comp : belief.components) {
        const int P = static_cast<int>(comp.particles.size());
        const std::size_t window_len = comp.particles.front().history.size();
        std::vector<Tensor> window(window_len, Tensor(P, 2));
        for (int i = 0; i < P; ++i)
            for (std::size_t k = 0; k < window_len; ++k) {
                window[k](i, 0) = comp.particles[static_cast<std::size_t>(i)].history[k][0];
                window[k](i, 1) = comp.particles[static_cast<std::size_t>(i)].history[k][1];
            }
        Tensor actions = sampler.propose(window, rng);

        std::vector<int> survivors;
        std::vector<int> rejected;
        for (int i = 0; i < P; ++i) {
            Particle& p = comp.particles[static_cast<std::size_t>(i)];
            const State next{p.state[0] + actions(i, 0), p.state[1] + actions(i, 1)};
            if (!std::isfinite(next[0]) || !std::isfinite(next[1])) {
                rejected.push_back(i);
                continue;
            }
            p.history.erase(p.history.begin());
            p.history.push_back(next);
            p.state = next;
            survivors.push_back(i);
        }
        if (!rejected.empty()) {
            if (survivors.empty())
                throw std::runtime_error("prior_update: every particle propagated non-finite");
            std::uniform_int_distribution<std::size_t> pick(0, survivors.size() - 1);
            for (int i : rejected) {
                const int src = survivors[pick(rng)];
                const double w = comp.particles[static_cast<std::size_t>(i)].weight;
                comp.particles[static_cast<std::size_t>(i)] =
                    comp.particles[static_cast<std::size_t>(src)];
                comp.particles[static_cast<std::size_t>(i)].weight = w;
                ++outcome.rejected;
            }
        }
    }
    return outcome;
}

MeasurementOutcome measurement_update_loglik(MixtureBelief& belief,
                                             const std::vector<std::vector<double>>& lls) {
    double max_ll = -std::numeric_limits<double>::infinity();
    for (const auto& comp_lls : lls)
        for (double ll : comp_lls) max_ll = std::max(max_ll, ll);

    MeasurementOutcome outcome;
    if (!std::isfinite(max_ll)) {
        // every likelihood vanished: keep pi, reset particle weights uniform
        for (Component& comp : belief.components)
            for (Particle& p : comp.particles)
                p.weight = 1.0 / static_cast<double>(comp.particles.size());
        outcome.underflow_reset = true;
        return outcome;
    }

    std::vector<double> comp_mass(belief.components.size(), 0.0);
    double total = 0.0;
    for (std::size_t n = 0; n < belief.components.size(); ++n) {
        Component& comp = belief.components[n];
        double mass = 0.0;
        for (std::size_t i = 0; i < comp.particles.size(); ++i)
            mass += comp.particles[i].weight * std::exp(lls[n][i] - max_ll);
        comp_mass[n] = mass;
        total += comp.pi * mass;
    }
    if (total <= 0.0 || !std::isfinite(total)) {
        for (Component& comp : belief.components)
            for (Particle& p : comp.particles)
                p.weight = 1.0 / static_cast<double>(comp.particles.size());
        outcome.underflow_reset = true;
        return outcome;
    }

    for (std::size_t n = 0; n < belief.components.size(); ++n) {
        Component& comp = belief.components[n];
        if (comp_mass[n] > 0.0) {
            for (std::size_t i = 0; i < comp.particles.size(); ++i)
                comp.particles[i].weight =
                    comp.particles[i].weight * std::exp(lls[n][i] - max_ll) / comp_mass[n];
        } else {
            // component fell off the likelihood support; its pi goes to zero
            for (Particle& p : comp.particles)
                p.weight = 1.0 / static_cast<double>(comp.particles.size());
        }
        comp.pi = comp.pi * comp_mass[n] / total;
    }
    return outcome;
}

MeasurementOutcome measurement_update(MixtureBelief& belief, const State& z,
                                      const MeasurementModel& model) {
    if (!std::isfinite(z[0]) || !std::isfinite(z[1]))
        throw std::invalid_argument("measurement_update: non-finite measurement");
    std::vector<std::vector<double>> lls;
    lls.reserve(belief.components.size());
    for (const Component& comp : belief.components) {
        std::vector<double> comp_lls;
        comp_lls.reserve(comp.particles.size());
        for (const Particle& p : comp.particles)
            comp_lls.push_back(model.log_likelihood(p.state, z));
        lls.push_back(std::move(comp_lls));
    }
    return measurement_update_loglik(belief, lls);
}

void resample(MixtureBelief& belief, double threshold, std::mt19937_64& rng) {
    if (threshold <= 0.0 || threshold > 1.0)
        throw std::invalid_argument("resample: threshold must be in (0, 1]");
    for (Component& comp : belief.components) {
        const std::size_t P = comp.particles.size();
        double sq = 0.0;
        for (const Particle& p : comp.particles) sq += p.weight * p.weight;
        const double ess = 1.0 / sq;
        if (ess / static_cast<double>(P) >= threshold) continue;

        std::uniform_real_distribution<double> ud(0.0, 1.0 / static_cast<double>(P));
        const double u0 = ud(rng);
        std::vector<Particle> next;
        next.reserve(P);
        double cum = comp.particles[0].weight;
        std::size_t idx = 0;
        for (std::size_t k = 0; k < P; ++k) {
            const double u = u0 + static_cast<double>(k) / static_cast<double>(P);
            while (u > cum && idx + 1 < P) cum += comp.particles[++idx].weight;
            next.push_back(comp.particles[idx]);
            next.back().weight = 1.0 / static_cast<double>(P);
        }
        comp.particles = std::move(next);
    }
}

TrackResult track(ActionSampler& sampler, const std::vector<State>& truth,
                  const std::vector<State>& measurements, const std::vector<State>& init_history,
                  const MeasurementModel& model, const TrackerConfig& cfg) {
    if (truth.size() != measurements.size())
        throw std::invalid_argument("track: truth and measurement lengths differ");
    std::mt19937_64 rng(cfg.seed);
    MixtureBelief belief = init_belief(init_history, cfg.n_components, cfg.particles,
                                       cfg.init_history_noise, rng);
    TrackResult result;
    double sq_err = 0.0;
    for (std::size_t k = 0; k < measurements.size(); ++k) {
        prior_update(belief, sampler, rng);
        const MeasurementOutcome mo = measurement_update(belief, measurements[k], model);
        belief.check_normalization(1e-12);
        resample(belief, cfg.ess_threshold, rng);

        TrackStep step;
        step.k = static_cast<int>(k) + 1;
        step.truth = truth[k];
        step.measurement = measurements[k];
        step.posterior_mean = belief.posterior_mean();
        step.cloud_mean = belief.cloud_mean();
        step.cloud_std = belief.cloud_std();
        for (const Component& c : belief.components) step.component_pi.push_back(c.pi);
        step.underflow_reset = mo.underflow_reset;
        result.steps.push_back(std::move(step));

        const State& pm = result.steps.back().posterior_mean;
        sq_err += (pm[0] - truth[k][0]) * (pm[0] - truth[k][0]) +
                  (pm[1] - truth[k][1]) * (pm[1] - truth[k][1]);
    }
    result.rmse = std::sqrt(sq_err / (2.0 * static_cast<double>(measurements.size())));
    return result;
}

}  // namespace magpred
