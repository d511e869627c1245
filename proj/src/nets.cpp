// SPDX-License-Identifier: Apache-2.0
#include "magpred/nets.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

namespace magpred {

using nlohmann::json;

DenseLayer DenseLayer::init(int in, int out, std::mt19937_64& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    DenseLayer l;
    l.W = Tensor::uniform(in, out, -bound, bound, rng);
    l.b = Tensor(1, out);
    return l;
}

LstmLayer LstmLayer::init(int in, int hidden, std::mt19937_64& rng) {
    LstmLayer l;
    const double bx = 1.0 / std::sqrt(static_cast<double>(in));
    const double bh = 1.0 / std::sqrt(static_cast<double>(hidden));
    l.Wx = Tensor::uniform(in, 4 * hidden, -bx, bx, rng);
    l.Wh = Tensor::uniform(hidden, 4 * hidden, -bh, bh, rng);
    l.b = Tensor(1, 4 * hidden);
    for (int j = hidden; j < 2 * hidden; ++j) l.b(0, j) = 1.0;  // forget gate
    return l;
}

std::pair<Var, Var> lstm_step(Var x, Var h, Var c, const LstmVars& p) {
    const int hidden = p.Wh.rows();
    Var gates = add_row(add(matmul(x, p.Wx), matmul(h, p.Wh)), p.b);
    Var gi = sigmoid(slice_cols(gates, 0, hidden));
    Var gf = sigmoid(slice_cols(gates, hidden, 2 * hidden));
    Var gc = tanh(slice_cols(gates, 2 * hidden, 3 * hidden));
    Var go = sigmoid(slice_cols(gates, 3 * hidden, 4 * hidden));
    Var c2 = add(mul(gf, c), mul(gi, gc));
    Var h2 = mul(go, tanh(c2));
    return {h2, c2};
}

namespace {

std::vector<DenseLayer> init_fc_stack(int in, const NetConfig& cfg, std::mt19937_64& rng) {
    std::vector<DenseLayer> fc;
    int width_in = in;
    for (int i = 0; i < cfg.fc_layers; ++i) {
        fc.push_back(DenseLayer::init(width_in, cfg.fc_width, rng));
        width_in = cfg.fc_width;
    }
    return fc;
}

Var run_lstm(const LstmVars& p, const std::vector<Var>& inputs) {
    Tape& tape = *p.Wx.tape();
    const int batch = inputs.front().rows();
    const int hidden = p.Wh.rows();
    Var h = tape.constant(Tensor(batch, hidden));
    Var c = tape.constant(Tensor(batch, hidden));
    for (const Var& x : inputs) std::tie(h, c) = lstm_step(x, h, c, p);
    return h;
}

Var run_fc(const std::vector<DenseVars>& fc, const DenseVars& out, Var z) {
    for (const DenseVars& l : fc) z = relu(add_row(matmul(z, l.W), l.b));
    return add_row(matmul(z, out.W), out.b);
}

DenseVars upload(Tape& tape, const DenseLayer& l) {
    return DenseVars{tape.leaf(l.W), tape.leaf(l.b)};
}
LstmVars upload(Tape& tape, const LstmLayer& l) {
    return LstmVars{tape.leaf(l.Wx), tape.leaf(l.Wh), tape.leaf(l.b)};
}

void collect(std::vector<std::pair<std::string, Tensor*>>& dst, const std::string& prefix,
             LstmLayer& l) {
    dst.emplace_back(prefix + ".Wx", &l.Wx);
    dst.emplace_back(prefix + ".Wh", &l.Wh);
    dst.emplace_back(prefix + ".b", &l.b);
}
void collect(std::vector<std::pair<std::string, Tensor*>>& dst, const std::string& prefix,
             DenseLayer& l) {
    dst.emplace_back(prefix + ".W", &l.W);
    dst.emplace_back(prefix + ".b", &l.b);
}

template <class Net>
std::vector<std::pair<std::string, Tensor*>> named_net_params(Net& net) {
    std::vector<std::pair<std::string, Tensor*>> out;
    collect(out, "lstm", net.lstm);
    for (std::size_t i = 0; i < net.fc.size(); ++i)
        collect(out, "fc" + std::to_string(i), net.fc[i]);
    collect(out, "out", net.out);
    return out;
}

template <class Net>
std::vector<Tensor*> net_params(Net& net) {
    std::vector<Tensor*> out;
    for (auto& [name, t] : named_net_params(net)) out.push_back(t);
    return out;
}

}  // namespace

GeneratorNet GeneratorNet::init(const NetConfig& cfg, std::mt19937_64& rng) {
    GeneratorNet net;
    net.cfg = cfg;
    net.lstm = LstmLayer::init(cfg.cond_dim + cfg.noise_dim, cfg.lstm_hidden, rng);
    net.fc = init_fc_stack(cfg.lstm_hidden, cfg, rng);
    const int last = cfg.fc_layers > 0 ? cfg.fc_width : cfg.lstm_hidden;
    net.out = DenseLayer::init(last, cfg.action_dim, rng);
    return net;
}

DiscriminatorNet DiscriminatorNet::init(const NetConfig& cfg, std::mt19937_64& rng) {
    DiscriminatorNet net;
    net.cfg = cfg;
    net.lstm = LstmLayer::init(cfg.cond_dim, cfg.lstm_hidden, rng);
    net.fc = init_fc_stack(cfg.lstm_hidden + cfg.action_dim, cfg, rng);
    const int last = cfg.fc_layers > 0 ? cfg.fc_width : cfg.lstm_hidden + cfg.action_dim;
    net.out = DenseLayer::init(last, 1, rng);
    return net;
}

std::vector<Tensor*> GeneratorNet::params() { return net_params(*this); }
std::vector<std::pair<std::string, Tensor*>> GeneratorNet::named_params() {
    return named_net_params(*this);
}
std::vector<Tensor*> DiscriminatorNet::params() { return net_params(*this); }
std::vector<std::pair<std::string, Tensor*>> DiscriminatorNet::named_params() {
    return named_net_params(*this);
}

GeneratorVars upload(Tape& tape, const GeneratorNet& net) {
    GeneratorVars v;
    v.lstm = upload(tape, net.lstm);
    for (const DenseLayer& l : net.fc) v.fc.push_back(upload(tape, l));
    v.out = upload(tape, net.out);
    return v;
}

DiscriminatorVars upload(Tape& tape, const DiscriminatorNet& net) {
    DiscriminatorVars v;
    v.lstm = upload(tape, net.lstm);
    for (const DenseLayer& l : net.fc) v.fc.push_back(upload(tape, l));
    v.out = upload(tape, net.out);
    return v;
}

Var generate(const GeneratorVars& gv, const std::vector<Var>& cond_seq,
             const std::vector<Var>& noise_seq) {
    if (cond_seq.size() != noise_seq.size())
        throw std::invalid_argument("generate: condition and noise sequence lengths differ (" +
                                    std::to_string(cond_seq.size()) + " vs " +
                                    std::to_string(noise_seq.size()) + ")");
    if (cond_seq.empty()) throw std::invalid_argument("generate: empty sequence");
    std::vector<Var> joined;
    joined.reserve(cond_seq.size());
    for (std::size_t t = 0; t < cond_seq.size(); ++t)
        joined.push_back(concat_cols(cond_seq[t], noise_seq[t]));
    Var h = run_lstm(gv.lstm, joined);
    return run_fc(gv.fc, gv.out, h);
}

Var discriminate(const DiscriminatorVars& dv, const std::vector<Var>& cond_seq, Var action) {
    if (cond_seq.empty()) throw std::invalid_argument("discriminate: empty sequence");
    Var h = run_lstm(dv.lstm, cond_seq);
    Var z = concat_cols(h, action);
    return sigmoid(run_fc(dv.fc, dv.out, z));
}

Tensor generate_values(const GeneratorNet& net, const std::vector<Tensor>& cond_seq,
                       const std::vector<Tensor>& noise_seq) {
    Tape tape;
    GeneratorVars gv = upload(tape, net);
    std::vector<Var> cs, ns;
    for (const Tensor& t : cond_seq) cs.push_back(tape.constant(t));
    for (const Tensor& t : noise_seq) ns.push_back(tape.constant(t));
    return generate(gv, cs, ns).value();
}

Tensor discriminate_values(const DiscriminatorNet& net, const std::vector<Tensor>& cond_seq,
                           const Tensor& action) {
    Tape tape;
    DiscriminatorVars dv = upload(tape, net);
    std::vector<Var> cs;
    for (const Tensor& t : cond_seq) cs.push_back(tape.constant(t));
    return discriminate(dv, cs, tape.constant(action)).value();
}

std::vector<Tensor> sample_noise_seq(int seq_len, int batch, int dim, NoiseKind kind,
                                     std::mt19937_64& rng) {
    std::vector<Tensor> seq;
    seq.reserve(static_cast<std::size_t>(seq_len));
    for (int t = 0; t < seq_len; ++t)
        seq.push_back(kind == NoiseKind::Gaussian ? Tensor::gaussian(batch, dim, 0.0, 1.0, rng)
                                                  : Tensor::uniform(batch, dim, 0.0, 1.0, rng));
    return seq;
}

// --- normalizer ---------------------------------------------------------------

Normalizer Normalizer::identity(int state_dim, int action_dim) {
    Normalizer n;
    n.state_mean.assign(static_cast<std::size_t>(state_dim), 0.0);
    n.state_scale.assign(static_cast<std::size_t>(state_dim), 1.0);
    n.action_mean.assign(static_cast<std::size_t>(action_dim), 0.0);
    n.action_scale.assign(static_cast<std::size_t>(action_dim), 1.0);
    return n;
}

namespace {
Tensor affine(const Tensor& batch, const std::vector<double>& mean,
              const std::vector<double>& scale, bool forward) {
    if (static_cast<std::size_t>(batch.cols()) != mean.size())
        throw ShapeError("normalizer: dimension mismatch, got " + batch.shape_str());
    Tensor out = batch;
    for (int i = 0; i < out.rows(); ++i)
        for (int j = 0; j < out.cols(); ++j)
            out(i, j) = forward ? (out(i, j) - mean[static_cast<std::size_t>(j)]) /
                                      scale[static_cast<std::size_t>(j)]
                                : out(i, j) * scale[static_cast<std::size_t>(j)] +
                                      mean[static_cast<std::size_t>(j)];
    return out;
}
}  // namespace

Tensor Normalizer::normalize_states(const Tensor& batch) const {
    return affine(batch, state_mean, state_scale, true);
}
Tensor Normalizer::normalize_actions(const Tensor& batch) const {
    return affine(batch, action_mean, action_scale, true);
}
Tensor Normalizer::denormalize_actions(const Tensor& batch) const {
    return affine(batch, action_mean, action_scale, false);
}

// --- checkpoint ---------------------------------------------------------------

namespace {

json to_json(const Tensor& t) {
    return json{{"rows", t.rows()}, {"cols", t.cols()}, {"data", t.values()}};
}

Tensor tensor_from_json(const json& j) {
    return Tensor(j.at("rows").get<int>(), j.at("cols").get<int>(),
                  j.at("data").get<std::vector<double>>());
}

json to_json(const NetConfig& c) {
    return json{{"cond_dim", c.cond_dim},       {"action_dim", c.action_dim},
                {"noise_dim", c.noise_dim},     {"lstm_hidden", c.lstm_hidden},
                {"fc_layers", c.fc_layers},     {"fc_width", c.fc_width}};
}

NetConfig net_config_from_json(const json& j) {
    NetConfig c;
    c.cond_dim = j.at("cond_dim").get<int>();
    c.action_dim = j.at("action_dim").get<int>();
    c.noise_dim = j.at("noise_dim").get<int>();
    c.lstm_hidden = j.at("lstm_hidden").get<int>();
    c.fc_layers = j.at("fc_layers").get<int>();
    c.fc_width = j.at("fc_width").get<int>();
    return c;
}

}  // namespace

const Tensor& Checkpoint::tensor(const std::string& name) const {
    for (const auto& [n, t] : tensors)
        if (n == name) return t;
    throw CheckpointCorrupt("checkpoint: missing tensor '" + name + "'");
}

void Checkpoint::save(const std::string& path) const {
    json j;
    j["format"] = "magpred-checkpoint";
    j["version"] = kVersion;
    j["kind"] = kind;
    j["meta"] = {{"iteration", meta.iteration},
                 {"gamma", meta.gamma},
                 {"alpha", meta.alpha},
                 {"seed", meta.seed}};
    j["net"] = to_json(net);
    j["normalizer"] = {{"state_mean", norm.state_mean},
                       {"state_scale", norm.state_scale},
                       {"action_mean", norm.action_mean},
                       {"action_scale", norm.action_scale}};
    j["extra"] = extra;
    json arrays = json::array();
    for (const auto& [name, t] : tensors) {
        json e = to_json(t);
        e["name"] = name;
        arrays.push_back(std::move(e));
    }
    j["tensors"] = std::move(arrays);

    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("checkpoint: cannot open '" + path + "' for writing");
    out << j.dump();
    if (!out) throw std::runtime_error("checkpoint: write failed for '" + path + "'");
}

Checkpoint Checkpoint::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw CheckpointCorrupt("checkpoint: cannot open '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw CheckpointCorrupt("checkpoint: unparseable file '" + path + "': " + e.what());
    }
    try {
        if (j.value("format", "") != "magpred-checkpoint")
            throw CheckpointCorrupt("checkpoint: '" + path + "' is not a checkpoint file");
        const int version = j.at("version").get<int>();
        if (version != kVersion)
            throw CheckpointVersionMismatch("checkpoint: version " + std::to_string(version) +
                                            " unsupported (expected " +
                                            std::to_string(kVersion) + ")");
        Checkpoint ck;
        ck.kind = j.at("kind").get<std::string>();
        ck.meta.iteration = j.at("meta").at("iteration").get<long>();
        ck.meta.gamma = j.at("meta").at("gamma").get<double>();
        ck.meta.alpha = j.at("meta").at("alpha").get<double>();
        ck.meta.seed = j.at("meta").at("seed").get<std::uint64_t>();
        ck.net = net_config_from_json(j.at("net"));
        ck.norm.state_mean = j.at("normalizer").at("state_mean").get<std::vector<double>>();
        ck.norm.state_scale = j.at("normalizer").at("state_scale").get<std::vector<double>>();
        ck.norm.action_mean = j.at("normalizer").at("action_mean").get<std::vector<double>>();
        ck.norm.action_scale = j.at("normalizer").at("action_scale").get<std::vector<double>>();
        ck.extra = j.at("extra").get<std::map<std::string, double>>();
        for (const json& e : j.at("tensors"))
            ck.tensors.emplace_back(e.at("name").get<std::string>(), tensor_from_json(e));
        return ck;
    } catch (const CheckpointVersionMismatch&) {
        throw;
    } catch (const CheckpointCorrupt&) {
        throw;
    } catch (const json::exception& e) {
        throw CheckpointCorrupt("checkpoint: malformed content in '" + path + "': " + e.what());
    }
}

namespace {

void apply_named(const Checkpoint& ck, const std::string& prefix,
                 std::vector<std::pair<std::string, Tensor*>> dst) {
    for (auto& [name, target] : dst) {
        const Tensor& src = ck.tensor(prefix + name);
        if (!src.same_shape(*target))
            throw CheckpointShapeMismatch("checkpoint: tensor '" + prefix + name + "' has shape " +
                                          src.shape_str() + ", expected " + target->shape_str());
        *target = src;
    }
}

}  // namespace

void save_gan_checkpoint(const std::string& path, const GeneratorNet& gen,
                         const DiscriminatorNet& disc, const Normalizer& norm,
                         const TrainMeta& meta) {
    Checkpoint ck;
    ck.kind = "gan";
    ck.meta = meta;
    ck.net = gen.cfg;
    ck.norm = norm;
    for (auto& [name, t] : const_cast<GeneratorNet&>(gen).named_params())
        ck.add("gen." + name, *t);
    for (auto& [name, t] : const_cast<DiscriminatorNet&>(disc).named_params())
        ck.add("disc." + name, *t);
    ck.save(path);
}

GanCheckpoint load_gan_checkpoint(const std::string& path) {
    Checkpoint ck = Checkpoint::load(path);
    if (ck.kind != "gan")
        throw CheckpointCorrupt("checkpoint: expected kind 'gan', got '" + ck.kind + "'");
    GanCheckpoint out;
    std::mt19937_64 scratch(0);
    out.gen = GeneratorNet::init(ck.net, scratch);
    out.disc = DiscriminatorNet::init(ck.net, scratch);
    out.norm = ck.norm;
    out.meta = ck.meta;
    apply_named(ck, "gen.", out.gen.named_params());
    apply_named(ck, "disc.", out.disc.named_params());
    return out;
}

}  // namespace magpred
