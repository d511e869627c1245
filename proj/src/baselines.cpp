// SPDX-License-Identifier: Apache-2.0
#include "magpred/baselines.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

namespace magpred {

namespace {

// quadratic least-squares extrapolation one step past the window
double quad_next(const Eigen::VectorXd& values) {
    const int n = static_cast<int>(values.size());
    const double t_mid = (n - 1) / 2.0;
    Eigen::MatrixXd design(n, 3);
    for (int i = 0; i < n; ++i) {
        const double tc = i - t_mid;
        design(i, 0) = 1.0;
        design(i, 1) = tc;
        design(i, 2) = tc * tc;
    }
    const Eigen::Vector3d coef = design.colPivHouseholderQr().solve(values);
    const double tc = n - t_mid;
    return coef(0) + coef(1) * tc + coef(2) * tc * tc;
}

}  // namespace

Tensor CamSampler::propose(const std::vector<Tensor>& window_seq, std::mt19937_64&) {
    if (window_seq.size() < 3)
        throw std::invalid_argument("cam: need at least 3 history states to estimate "
                                    "velocity and acceleration");
    const int B = window_seq.front().rows();
    const int dim = window_seq.front().cols();
    const int L = static_cast<int>(window_seq.size());
    Tensor actions(B, dim);
    Eigen::VectorXd column(L);
    for (int r = 0; r < B; ++r)
        for (int j = 0; j < dim; ++j) {
            for (int k = 0; k < L; ++k) column(k) = window_seq[static_cast<std::size_t>(k)](r, j);
            actions(r, j) = quad_next(column) - column(L - 1);
        }
    return actions;
}

std::vector<State> cam_predict(const std::vector<State>& history, int horizon) {
    if (history.size() < 3)
        throw std::invalid_argument("cam_predict: need at least 3 history states");
    if (horizon < 1) throw std::invalid_argument("cam_predict: horizon must be >= 1");
    CamSampler cam;
    std::mt19937_64 unused(0);
    std::vector<State> window = history;
    std::vector<State> out = {history.back()};
    std::vector<Tensor> seq(window.size(), Tensor(1, 2));
    for (int t = 0; t < horizon; ++t) {
        for (std::size_t k = 0; k < window.size(); ++k) {
            seq[k](0, 0) = window[k][0];
            seq[k](0, 1) = window[k][1];
        }
        const Tensor a = cam.propose(seq, unused);
        const State next{window.back()[0] + a(0, 0), window.back()[1] + a(0, 1)};
        out.push_back(next);
        window.erase(window.begin());
        window.push_back(next);
    }
    return out;
}

// --- Gaussian mixture ----------------------------------------------------------

namespace {

struct EigenGaussian {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
    Eigen::LLT<Eigen::MatrixXd> llt;
    double log_norm = 0.0;  // -1/2 (D log 2pi + log det)

    void refresh(double ridge) {
        cov = 0.5 * (cov + cov.transpose());
        cov.diagonal().array() += ridge;
        llt.compute(cov);
        if (llt.info() != Eigen::Success)
            throw GmrSingularCovariance("gmr: covariance is not positive definite");
        const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
        const double lo = es.eigenvalues().minCoeff();
        const double hi = es.eigenvalues().maxCoeff();
        if (lo <= 0.0 || hi / lo > 1e12)
            throw GmrSingularCovariance(
                "gmr: singular covariance matrix (condition number above 1e12); shorten the "
                "history or reduce the component count");
        double log_det = 0.0;
        for (int i = 0; i < cov.rows(); ++i) log_det += 2.0 * std::log(llt.matrixL()(i, i));
        log_norm = -0.5 * (cov.rows() * std::log(2.0 * M_PI) + log_det);
    }

    double log_pdf(const Eigen::VectorXd& x) const {
        const Eigen::VectorXd d = x - mean;
        const Eigen::VectorXd y = llt.matrixL().solve(d);
        return log_norm - 0.5 * y.squaredNorm();
    }
};

Tensor to_tensor(const Eigen::MatrixXd& m) {
    Tensor t(static_cast<int>(m.rows()), static_cast<int>(m.cols()));
    for (int i = 0; i < m.rows(); ++i)
        for (int j = 0; j < m.cols(); ++j) t(i, j) = m(i, j);
    return t;
}

Eigen::MatrixXd to_eigen(const Tensor& t) {
    Eigen::MatrixXd m(t.rows(), t.cols());
    for (int i = 0; i < t.rows(); ++i)
        for (int j = 0; j < t.cols(); ++j) m(i, j) = t(i, j);
    return m;
}

}  // namespace

GaussianMixture fit_gmm(const std::vector<std::vector<double>>& rows, const GmrConfig& cfg) {
    if (rows.empty()) throw std::invalid_argument("fit_gmm: no data");
    const int N = static_cast<int>(rows.size());
    const int D = static_cast<int>(rows.front().size());
    const int K = cfg.components;
    if (K < 1 || K > N) throw std::invalid_argument("fit_gmm: component count out of range");

    Eigen::MatrixXd X(N, D);
    for (int i = 0; i < N; ++i)
        for (int j = 0; j < D; ++j) X(i, j) = rows[static_cast<std::size_t>(i)]
                                                  [static_cast<std::size_t>(j)];

    // data moments seed the components
    const Eigen::VectorXd global_mean = X.colwise().mean();
    const Eigen::MatrixXd centered = X.rowwise() - global_mean.transpose();
    Eigen::MatrixXd global_cov = centered.transpose() * centered / N;

    std::mt19937_64 rng(cfg.seed);
    std::uniform_int_distribution<int> pick(0, N - 1);
    std::vector<EigenGaussian> comps(static_cast<std::size_t>(K));
    std::vector<double> weights(static_cast<std::size_t>(K), 1.0 / K);
    for (EigenGaussian& c : comps) {
        c.mean = X.row(pick(rng)).transpose();
        c.cov = global_cov;
        c.refresh(cfg.ridge);
    }

    GaussianMixture out;
    Eigen::MatrixXd resp(N, K);
    double prev_ll = -std::numeric_limits<double>::infinity();
    for (int iter = 0; iter < cfg.max_iterations; ++iter) {
        // E step with log-sum-exp
        double total_ll = 0.0;
        for (int i = 0; i < N; ++i) {
            double max_l = -std::numeric_limits<double>::infinity();
            for (int k = 0; k < K; ++k) {
                resp(i, k) = std::log(weights[static_cast<std::size_t>(k)]) +
                             comps[static_cast<std::size_t>(k)].log_pdf(X.row(i).transpose());
                max_l = std::max(max_l, resp(i, k));
            }
            double sum = 0.0;
            for (int k = 0; k < K; ++k) sum += std::exp(resp(i, k) - max_l);
            const double log_sum = max_l + std::log(sum);
            total_ll += log_sum;
            for (int k = 0; k < K; ++k) resp(i, k) = std::exp(resp(i, k) - log_sum);
        }
        out.loglik_history.push_back(total_ll);

        // M step
        for (int k = 0; k < K; ++k) {
            const double nk = resp.col(k).sum();
            weights[static_cast<std::size_t>(k)] = nk / N;
            EigenGaussian& c = comps[static_cast<std::size_t>(k)];
            c.mean = (resp.col(k).transpose() * X).transpose() / nk;
            Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(D, D);
            for (int i = 0; i < N; ++i) {
                const Eigen::VectorXd d = X.row(i).transpose() - c.mean;
                cov.noalias() += resp(i, k) * d * d.transpose();
            }
            c.cov = cov / nk;
            c.refresh(cfg.ridge);
        }

        if (std::isfinite(prev_ll) &&
            std::abs(total_ll - prev_ll) < cfg.tol * std::max(1.0, std::abs(total_ll)))
            break;
        prev_ll = total_ll;
    }

    out.weights = weights;
    for (const EigenGaussian& c : comps) {
        out.means.push_back(to_tensor(c.mean.transpose()));
        out.covariances.push_back(to_tensor(c.cov));
    }
    return out;
}

Tensor MixtureConditional::mean() const {
    const int dy = means.front().cols();
    Tensor m(1, dy);
    for (std::size_t k = 0; k < means.size(); ++k)
        for (int j = 0; j < dy; ++j) m(0, j) += responsibilities[k] * means[k](0, j);
    return m;
}

MixtureConditional condition(const GaussianMixture& mix, const std::vector<double>& x, int dy) {
    const int K = static_cast<int>(mix.weights.size());
    const int D = mix.means.front().cols();
    const int dx = D - dy;
    if (static_cast<int>(x.size()) != dx)
        throw std::invalid_argument("condition: input dimension mismatch");
    Eigen::VectorXd xv(dx);
    for (int i = 0; i < dx; ++i) xv(i) = x[static_cast<std::size_t>(i)];

    MixtureConditional c;
    std::vector<double> logr(static_cast<std::size_t>(K));
    double max_l = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < K; ++k) {
        const Eigen::MatrixXd mean = to_eigen(mix.means[static_cast<std::size_t>(k)]);
        const Eigen::MatrixXd cov = to_eigen(mix.covariances[static_cast<std::size_t>(k)]);
        const Eigen::VectorXd mx = mean.transpose().topRows(dx);
        const Eigen::VectorXd my = mean.transpose().bottomRows(dy);
        const Eigen::MatrixXd sxx = cov.topLeftCorner(dx, dx);
        const Eigen::MatrixXd sxy = cov.topRightCorner(dx, dy);
        const Eigen::MatrixXd syy = cov.bottomRightCorner(dy, dy);

        const Eigen::LLT<Eigen::MatrixXd> llt(sxx);
        if (llt.info() != Eigen::Success)
            throw GmrSingularCovariance("gmr: conditioning block is not positive definite");
        const Eigen::VectorXd dxv = xv - mx;
        c.means.push_back(to_tensor((my + sxy.transpose() * llt.solve(dxv)).transpose()));
        Eigen::MatrixXd ccov = syy - sxy.transpose() * llt.solve(sxy);
        ccov = 0.5 * (ccov + ccov.transpose());
        ccov.diagonal().array() += 1e-12;
        c.covariances.push_back(to_tensor(ccov));

        double log_det = 0.0;
        for (int i = 0; i < dx; ++i) log_det += 2.0 * std::log(llt.matrixL()(i, i));
        const Eigen::VectorXd white = llt.matrixL().solve(dxv);
        logr[static_cast<std::size_t>(k)] =
            std::log(mix.weights[static_cast<std::size_t>(k)]) -
            0.5 * (dx * std::log(2.0 * M_PI) + log_det + white.squaredNorm());
        max_l = std::max(max_l, logr[static_cast<std::size_t>(k)]);
    }
    double sum = 0.0;
    for (double l : logr) sum += std::exp(l - max_l);
    for (double l : logr) c.responsibilities.push_back(std::exp(l - max_l) / sum);
    return c;
}

Tensor sample_conditional(const MixtureConditional& c, std::mt19937_64& rng) {
    const int dy = c.means.front().cols();
    std::uniform_real_distribution<double> ud(0.0, 1.0);
    const double u = ud(rng);
    std::size_t k = 0;
    double cum = 0.0;
    for (; k < c.responsibilities.size(); ++k) {
        cum += c.responsibilities[k];
        if (u <= cum) break;
    }
    k = std::min(k, c.responsibilities.size() - 1);
    const Eigen::LLT<Eigen::MatrixXd> llt(to_eigen(c.covariances[k]));
    std::normal_distribution<double> nd(0.0, 1.0);
    Eigen::VectorXd xi(dy);
    for (int j = 0; j < dy; ++j) xi(j) = nd(rng);
    const Eigen::VectorXd y =
        to_eigen(c.means[k]).transpose() + Eigen::MatrixXd(llt.matrixL()) * xi;
    Tensor out(1, dy);
    for (int j = 0; j < dy; ++j) out(0, j) = y(j);
    return out;
}

GmrModel GmrModel::fit(const Dataset& data, const Normalizer& norm, const GmrConfig& cfg) {
    GmrModel model;
    model.norm_ = norm;
    model.history_len_ = data.history;
    std::vector<std::vector<double>> rows;
    for (const PairRef& pr : data.all_pairs()) {
        const Batch b = data.make_batch({pr});
        std::vector<double> row;
        for (const Tensor& w : b.cond_seq) {
            const Tensor z = norm.normalize_states(w);
            row.push_back(z(0, 0));
            row.push_back(z(0, 1));
        }
        const Tensor a = norm.normalize_actions(b.actions);
        row.push_back(a(0, 0));
        row.push_back(a(0, 1));
        rows.push_back(std::move(row));
    }
    model.mix_ = fit_gmm(rows, cfg);
    return model;
}

namespace {

std::vector<double> flatten_window_row(const std::vector<Tensor>& window_seq, int row,
                                       const Normalizer& norm) {
    std::vector<double> x;
    x.reserve(window_seq.size() * 2);
    for (const Tensor& w : window_seq) {
        Tensor rowt(1, 2);
        rowt(0, 0) = w(row, 0);
        rowt(0, 1) = w(row, 1);
        const Tensor z = norm.normalize_states(rowt);
        x.push_back(z(0, 0));
        x.push_back(z(0, 1));
    }
    return x;
}

}  // namespace

Tensor GmrModel::propose(const std::vector<Tensor>& window_seq, std::mt19937_64& rng) {
    const int B = window_seq.front().rows();
    Tensor out(B, action_dim_);
    for (int r = 0; r < B; ++r) {
        const MixtureConditional c =
            condition(mix_, flatten_window_row(window_seq, r, norm_), action_dim_);
        const Tensor raw = norm_.denormalize_actions(sample_conditional(c, rng));
        for (int j = 0; j < action_dim_; ++j) out(r, j) = raw(0, j);
    }
    return out;
}

Tensor GmrModel::conditional_mean(const std::vector<Tensor>& window_seq) const {
    const int B = window_seq.front().rows();
    Tensor out(B, action_dim_);
    for (int r = 0; r < B; ++r) {
        const MixtureConditional c =
            condition(mix_, flatten_window_row(window_seq, r, norm_), action_dim_);
        const Tensor raw = norm_.denormalize_actions(c.mean());
        for (int j = 0; j < action_dim_; ++j) out(r, j) = raw(0, j);
    }
    return out;
}

Checkpoint GmrModel::to_checkpoint() const {
    Checkpoint ck;
    ck.kind = "gmr";
    ck.norm = norm_;
    ck.extra["components"] = static_cast<double>(mix_.weights.size());
    ck.extra["history_len"] = static_cast<double>(history_len_);
    Tensor w(1, static_cast<int>(mix_.weights.size()));
    for (std::size_t k = 0; k < mix_.weights.size(); ++k)
        w(0, static_cast<int>(k)) = mix_.weights[k];
    ck.add("weights", w);
    for (std::size_t k = 0; k < mix_.means.size(); ++k) {
        ck.add("mean" + std::to_string(k), mix_.means[k]);
        ck.add("cov" + std::to_string(k), mix_.covariances[k]);
    }
    return ck;
}

GmrModel GmrModel::from_checkpoint(const Checkpoint& ck) {
    if (ck.kind != "gmr")
        throw CheckpointCorrupt("checkpoint: expected kind 'gmr', got '" + ck.kind + "'");
    GmrModel m;
    m.norm_ = ck.norm;
    m.history_len_ = static_cast<int>(ck.extra.at("history_len"));
    const int K = static_cast<int>(ck.extra.at("components"));
    const Tensor& w = ck.tensor("weights");
    for (int k = 0; k < K; ++k) {
        m.mix_.weights.push_back(w(0, k));
        m.mix_.means.push_back(ck.tensor("mean" + std::to_string(k)));
        m.mix_.covariances.push_back(ck.tensor("cov" + std::to_string(k)));
    }
    return m;
}

// --- perturbed nets --------------------------------------------------------------

PerturbedNet PerturbedNet::init(const PnetConfig& cfg, int history_len, const Normalizer& norm,
                                std::mt19937_64& rng) {
    PerturbedNet net;
    net.cfg_ = cfg;
    net.history_len_ = history_len;
    net.norm_ = norm;
    const int flat_in = (history_len + 1) * net.state_dim_;
    int next_in;
    int fc_count;
    if (cfg.lstm_first) {
        net.lstm_ = LstmLayer::init(net.state_dim_, cfg.width, rng);
        next_in = cfg.width;
        fc_count = cfg.layers - 1;
    } else {
        next_in = flat_in;
        fc_count = cfg.layers;
    }
    for (int i = 0; i < fc_count; ++i) {
        net.fc_.push_back(DenseLayer::init(next_in, cfg.width, rng));
        next_in = cfg.width;
    }
    net.out_ = DenseLayer::init(next_in, net.action_dim_, rng);
    return net;
}

std::vector<Tensor*> PerturbedNet::params() {
    std::vector<Tensor*> out;
    if (cfg_.lstm_first) {
        out.push_back(&lstm_.Wx);
        out.push_back(&lstm_.Wh);
        out.push_back(&lstm_.b);
    }
    for (DenseLayer& l : fc_) {
        out.push_back(&l.W);
        out.push_back(&l.b);
    }
    out.push_back(&out_.W);
    out.push_back(&out_.b);
    return out;
}

Var PerturbedNet::forward(Tape& tape, const std::vector<Var>& inputs,
                          std::vector<Var>* leaves) const {
    auto leaf = [&](const Tensor& t) {
        Var v = tape.leaf(t);
        if (leaves) leaves->push_back(v);
        return v;
    };
    Var z;
    if (cfg_.lstm_first) {
        LstmVars lv{leaf(lstm_.Wx), leaf(lstm_.Wh), leaf(lstm_.b)};
        const int batch = inputs.front().rows();
        Var h = tape.constant(Tensor(batch, cfg_.width));
        Var c = tape.constant(Tensor(batch, cfg_.width));
        for (const Var& x : inputs) std::tie(h, c) = lstm_step(x, h, c, lv);
        z = h;
    } else {
        z = inputs.front();
        for (std::size_t k = 1; k < inputs.size(); ++k) z = concat_cols(z, inputs[k]);
    }
    for (const DenseLayer& l : fc_) {
        Var w = leaf(l.W);
        Var b = leaf(l.b);
        z = relu(add_row(matmul(z, w), b));
    }
    Var w = leaf(out_.W);
    Var b = leaf(out_.b);
    return add_row(matmul(z, w), b);
}

Tensor PerturbedNet::propose(const std::vector<Tensor>& window_seq, std::mt19937_64& rng) {
    Tape tape;
    std::vector<Var> inputs;
    for (const Tensor& w : window_seq) {
        Tensor z = norm_.normalize_states(w);
        if (cfg_.sigma_in > 0.0) {
            std::normal_distribution<double> nd(0.0, cfg_.sigma_in);
            for (std::size_t i = 0; i < z.size(); ++i) z[i] += nd(rng);
        }
        inputs.push_back(tape.constant(std::move(z)));
    }
    return norm_.denormalize_actions(forward(tape, inputs).value());
}

Checkpoint PerturbedNet::to_checkpoint() const {
    Checkpoint ck;
    ck.kind = cfg_.lstm_first ? "plstm" : "pmlp";
    ck.norm = norm_;
    ck.extra["layers"] = cfg_.layers;
    ck.extra["width"] = cfg_.width;
    ck.extra["sigma_in"] = cfg_.sigma_in;
    ck.extra["history_len"] = history_len_;
    if (cfg_.lstm_first) {
        ck.add("lstm.Wx", lstm_.Wx);
        ck.add("lstm.Wh", lstm_.Wh);
        ck.add("lstm.b", lstm_.b);
    }
    for (std::size_t i = 0; i < fc_.size(); ++i) {
        ck.add("fc" + std::to_string(i) + ".W", fc_[i].W);
        ck.add("fc" + std::to_string(i) + ".b", fc_[i].b);
    }
    ck.add("out.W", out_.W);
    ck.add("out.b", out_.b);
    return ck;
}

PerturbedNet PerturbedNet::from_checkpoint(const Checkpoint& ck) {
    if (ck.kind != "pmlp" && ck.kind != "plstm")
        throw CheckpointCorrupt("checkpoint: expected a perturbed-net kind, got '" + ck.kind +
                                "'");
    PnetConfig cfg;
    cfg.lstm_first = ck.kind == "plstm";
    cfg.layers = static_cast<int>(ck.extra.at("layers"));
    cfg.width = static_cast<int>(ck.extra.at("width"));
    cfg.sigma_in = ck.extra.at("sigma_in");
    std::mt19937_64 scratch(0);
    PerturbedNet net = PerturbedNet::init(cfg, static_cast<int>(ck.extra.at("history_len")),
                                          ck.norm, scratch);
    auto assign = [&ck](const std::string& name, Tensor& dst) {
        const Tensor& src = ck.tensor(name);
        if (!src.same_shape(dst))
            throw CheckpointShapeMismatch("checkpoint: tensor '" + name + "' has shape " +
                                          src.shape_str() + ", expected " + dst.shape_str());
        dst = src;
    };
    if (cfg.lstm_first) {
        assign("lstm.Wx", net.lstm_.Wx);
        assign("lstm.Wh", net.lstm_.Wh);
        assign("lstm.b", net.lstm_.b);
    }
    for (std::size_t i = 0; i < net.fc_.size(); ++i) {
        assign("fc" + std::to_string(i) + ".W", net.fc_[i].W);
        assign("fc" + std::to_string(i) + ".b", net.fc_[i].b);
    }
    assign("out.W", net.out_.W);
    assign("out.b", net.out_.b);
    return net;
}

BatchSource dataset_batches(const Dataset& data) {
    const auto pairs = data.all_pairs();
    return [&data, pairs](int batch_size, std::mt19937_64& rng) {
        std::uniform_int_distribution<std::size_t> pick(0, pairs.size() - 1);
        std::vector<PairRef> refs;
        refs.reserve(static_cast<std::size_t>(batch_size));
        for (int b = 0; b < batch_size; ++b) refs.push_back(pairs[pick(rng)]);
        return data.make_batch(refs);
    };
}

PnetLog pnet_train(PerturbedNet& net, const BatchSource& source, const OptimizerConfig& cfg,
                   std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<Tensor*> params = net.params();
    std::vector<Tensor> sq;
    for (const Tensor* p : params) sq.emplace_back(p->rows(), p->cols());

    PnetLog log;
    for (long iter = 1; iter <= cfg.iterations; ++iter) {
        Batch batch = source(cfg.batch_size, rng);
        Tape tape;
        std::vector<Var> inputs;
        std::normal_distribution<double> nd(0.0, net.config().sigma_in);
        for (const Tensor& w : batch.cond_seq) {
            Tensor z = net.normalizer().normalize_states(w);
            if (net.config().sigma_in > 0.0)
                for (std::size_t i = 0; i < z.size(); ++i) z[i] += nd(rng);
            inputs.push_back(tape.constant(std::move(z)));
        }
        std::vector<Var> leaves;
        Var pred = net.forward(tape, inputs, &leaves);
        Var target = tape.constant(net.normalizer().normalize_actions(batch.actions));
        Var mse = mean(square(sub(pred, target)));
        auto grads = backward(mse, leaves);

        double gnorm_sq = 0.0;
        for (const Var& g : grads)
            for (std::size_t i = 0; i < g.value().size(); ++i)
                gnorm_sq += g.value()[i] * g.value()[i];
        const double gnorm = std::sqrt(gnorm_sq);
        if (!std::isfinite(gnorm) || gnorm > cfg.divergence_norm) {
            log.diverged = true;
            log.diverged_at = iter;
            log.records.push_back({iter, mse.value()[0]});
            break;
        }

        for (std::size_t k = 0; k < params.size(); ++k) {
            Tensor& x = *params[k];
            const Tensor& g = grads[k].value();
            if (cfg.precondition) {
                Tensor& s = sq[k];
                for (std::size_t i = 0; i < x.size(); ++i) {
                    s[i] = cfg.rho * s[i] + (1.0 - cfg.rho) * g[i] * g[i];
                    x[i] -= cfg.alpha * g[i] / (std::sqrt(s[i]) + cfg.epsilon);
                }
            } else {
                for (std::size_t i = 0; i < x.size(); ++i) x[i] -= cfg.alpha * g[i];
            }
        }
        if (cfg.log_interval > 0 && iter % cfg.log_interval == 0)
            log.records.push_back({iter, mse.value()[0]});
    }
    return log;
}

}  // namespace magpred
