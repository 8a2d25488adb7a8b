#include "flockrl/nn.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "flockrl/errors.hpp"
#include "flockrl/rng.hpp"

namespace flockrl {

std::size_t Mlp::parameter_count() const {
    std::size_t n = 0;
    for (std::size_t k = 0; k < weights.size(); ++k) n += weights[k].size() + biases[k].size();
    return n;
}

bool Mlp::same_shape(const Mlp& other) const {
    return layer_sizes == other.layer_sizes && output_activation == other.output_activation;
}

void MlpGrad::zero() {
    for (auto& w : weights) std::fill(w.begin(), w.end(), 0.0);
    for (auto& b : biases) std::fill(b.begin(), b.end(), 0.0);
}

bool MlpGrad::all_finite() const {
    for (const auto& w : weights)
        for (double x : w)
            if (!std::isfinite(x)) return false;
    for (const auto& b : biases)
        for (double x : b)
            if (!std::isfinite(x)) return false;
    return true;
}

MlpGrad make_grad(const Mlp& net) {
    MlpGrad g;
    g.weights.reserve(net.weights.size());
    g.biases.reserve(net.biases.size());
    for (std::size_t k = 0; k < net.weights.size(); ++k) {
        g.weights.emplace_back(net.weights[k].size(), 0.0);
        g.biases.emplace_back(net.biases[k].size(), 0.0);
    }
    return g;
}

MlpWorkspace make_workspace(const Mlp& net) {
    MlpWorkspace ws;
    ws.activations.resize(net.layer_sizes.size());
    std::size_t widest = 0;
    for (std::size_t k = 0; k < net.layer_sizes.size(); ++k) {
        ws.activations[k].resize(static_cast<std::size_t>(net.layer_sizes[k]));
        widest = std::max(widest, static_cast<std::size_t>(net.layer_sizes[k]));
    }
    ws.delta_a.resize(widest);
    ws.delta_b.resize(widest);
    return ws;
}

AdamState make_adam(const Mlp& net, double learning_rate) {
    AdamState s;
    s.learning_rate = learning_rate;
    s.m = make_grad(net);
    s.v = make_grad(net);
    return s;
}

Mlp mlp_init(const std::vector<int>& layer_sizes, std::uint64_t seed, OutputActivation out_act) {
    if (layer_sizes.size() < 2) throw ConfigError("mlp_init: need at least input and output layer");
    for (int s : layer_sizes)
        if (s < 1) throw ConfigError("mlp_init: layer sizes must be >= 1");

    Mlp net;
    net.layer_sizes = layer_sizes;
    net.output_activation = out_act;
    Rng rng(seed);
    for (std::size_t k = 0; k + 1 < layer_sizes.size(); ++k) {
        const int fan_in = layer_sizes[k];
        const int fan_out = layer_sizes[k + 1];
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        std::vector<double> w(static_cast<std::size_t>(fan_in) * fan_out);
        for (double& x : w) x = rng.uniform(-bound, bound);
        net.weights.push_back(std::move(w));
        net.biases.emplace_back(static_cast<std::size_t>(fan_out), 0.0);
    }
    return net;
}

const std::vector<double>& mlp_forward(const Mlp& net, const std::vector<double>& input,
                                       MlpWorkspace& ws) {
    if (static_cast<int>(input.size()) != net.input_size())
        throw DimensionError("mlp_forward: input length " + std::to_string(input.size()) +
                             " != " + std::to_string(net.input_size()));
    ws.activations[0] = input;
    const int L = net.num_layers();
    for (int k = 0; k < L; ++k) {
        const auto& x = ws.activations[static_cast<std::size_t>(k)];
        auto& y = ws.activations[static_cast<std::size_t>(k) + 1];
        const int in = net.layer_sizes[static_cast<std::size_t>(k)];
        const int out = net.layer_sizes[static_cast<std::size_t>(k) + 1];
        const double* w = net.weights[static_cast<std::size_t>(k)].data();
        const double* b = net.biases[static_cast<std::size_t>(k)].data();
        const bool squash = (k + 1 < L) || net.output_activation == OutputActivation::Tanh;
        for (int o = 0; o < out; ++o) {
            const double* row = w + static_cast<std::size_t>(o) * in;
            double acc = b[o];
            for (int i = 0; i < in; ++i) acc += row[i] * x[static_cast<std::size_t>(i)];
            y[static_cast<std::size_t>(o)] = squash ? std::tanh(acc) : acc;
        }
    }
    return ws.activations.back();
}

std::vector<double> mlp_forward(const Mlp& net, const std::vector<double>& input) {
    MlpWorkspace ws = make_workspace(net);
    return mlp_forward(net, input, ws);
}

void mlp_backward(const Mlp& net, const MlpWorkspace& ws,
                  const std::vector<double>& upstream_grad, MlpGrad& grad,
                  std::vector<double>* input_grad) {
    if (static_cast<int>(upstream_grad.size()) != net.output_size())
        throw DimensionError("mlp_backward: upstream length " + std::to_string(upstream_grad.size()) +
                             " != " + std::to_string(net.output_size()));
    const int L = net.num_layers();

    // delta = dL/d(pre-activation) of the current layer, reusing two scratch
    // buffers (they outlive each swap).
    auto& cur = const_cast<MlpWorkspace&>(ws).delta_a;
    auto& nxt = const_cast<MlpWorkspace&>(ws).delta_b;

    {
        const auto& y = ws.activations[static_cast<std::size_t>(L)];
        const int out = net.layer_sizes[static_cast<std::size_t>(L)];
        for (int o = 0; o < out; ++o) {
            double d = upstream_grad[static_cast<std::size_t>(o)];
            if (net.output_activation == OutputActivation::Tanh) {
                const double a = y[static_cast<std::size_t>(o)];
                d *= 1.0 - a * a;
            }
            cur[static_cast<std::size_t>(o)] = d;
        }
    }

    for (int k = L - 1; k >= 0; --k) {
        const int in = net.layer_sizes[static_cast<std::size_t>(k)];
        const int out = net.layer_sizes[static_cast<std::size_t>(k) + 1];
        const auto& x = ws.activations[static_cast<std::size_t>(k)];
        const double* w = net.weights[static_cast<std::size_t>(k)].data();
        double* gw = grad.weights[static_cast<std::size_t>(k)].data();
        double* gb = grad.biases[static_cast<std::size_t>(k)].data();

        for (int o = 0; o < out; ++o) {
            const double d = cur[static_cast<std::size_t>(o)];
            gb[o] += d;
            double* grow = gw + static_cast<std::size_t>(o) * in;
            for (int i = 0; i < in; ++i) grow[i] += d * x[static_cast<std::size_t>(i)];
        }

        const bool need_down = k > 0 || input_grad != nullptr;
        if (!need_down) break;

        for (int i = 0; i < in; ++i) nxt[static_cast<std::size_t>(i)] = 0.0;
        for (int o = 0; o < out; ++o) {
            const double d = cur[static_cast<std::size_t>(o)];
            const double* row = w + static_cast<std::size_t>(o) * in;
            for (int i = 0; i < in; ++i) nxt[static_cast<std::size_t>(i)] += d * row[i];
        }
        if (k > 0) {
            // chain through the tanh of layer k's input activations
            for (int i = 0; i < in; ++i) {
                const double a = x[static_cast<std::size_t>(i)];
                nxt[static_cast<std::size_t>(i)] *= 1.0 - a * a;
            }
        } else if (input_grad) {
            input_grad->assign(nxt.begin(), nxt.begin() + in);
        }
        std::swap(cur, nxt);
    }
}

void mlp_backward_input(const Mlp& net, const MlpWorkspace& ws,
                        const std::vector<double>& upstream_grad,
                        std::vector<double>& input_grad) {
    if (static_cast<int>(upstream_grad.size()) != net.output_size())
        throw DimensionError("mlp_backward_input: upstream length mismatch");
    const int L = net.num_layers();
    auto& cur = const_cast<MlpWorkspace&>(ws).delta_a;
    auto& nxt = const_cast<MlpWorkspace&>(ws).delta_b;

    {
        const auto& y = ws.activations[static_cast<std::size_t>(L)];
        for (int o = 0; o < net.layer_sizes[static_cast<std::size_t>(L)]; ++o) {
            double d = upstream_grad[static_cast<std::size_t>(o)];
            if (net.output_activation == OutputActivation::Tanh) {
                const double a = y[static_cast<std::size_t>(o)];
                d *= 1.0 - a * a;
            }
            cur[static_cast<std::size_t>(o)] = d;
        }
    }

    for (int k = L - 1; k >= 0; --k) {
        const int in = net.layer_sizes[static_cast<std::size_t>(k)];
        const int out = net.layer_sizes[static_cast<std::size_t>(k) + 1];
        const auto& x = ws.activations[static_cast<std::size_t>(k)];
        const double* w = net.weights[static_cast<std::size_t>(k)].data();

        for (int i = 0; i < in; ++i) nxt[static_cast<std::size_t>(i)] = 0.0;
        for (int o = 0; o < out; ++o) {
            const double d = cur[static_cast<std::size_t>(o)];
            const double* row = w + static_cast<std::size_t>(o) * in;
            for (int i = 0; i < in; ++i) nxt[static_cast<std::size_t>(i)] += d * row[i];
        }
        if (k > 0) {
            for (int i = 0; i < in; ++i) {
                const double a = x[static_cast<std::size_t>(i)];
                nxt[static_cast<std::size_t>(i)] *= 1.0 - a * a;
            }
        } else {
            input_grad.assign(nxt.begin(), nxt.begin() + in);
        }
        std::swap(cur, nxt);
    }
}

void adam_step(AdamState& state, Mlp& net, const MlpGrad& grad) {
    if (grad.weights.size() != net.weights.size())
        throw DimensionError("adam_step: gradient/network layer count mismatch");
    if (!grad.all_finite()) throw NumericError("adam_step: non-finite gradient, update aborted");

    state.step += 1;
    const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    const double lr = state.learning_rate;
    const double b1 = state.beta1, b2 = state.beta2, eps = state.epsilon;

    auto update = [&](std::vector<double>& p, std::vector<double>& m, std::vector<double>& v,
                      const std::vector<double>& g) {
        if (p.size() != g.size()) throw DimensionError("adam_step: gradient shape mismatch");
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            const double mhat = m[i] / c1;
            const double vhat = v[i] / c2;
            p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    };
    for (std::size_t k = 0; k < net.weights.size(); ++k) {
        update(net.weights[k], state.m.weights[k], state.v.weights[k], grad.weights[k]);
        update(net.biases[k], state.m.biases[k], state.v.biases[k], grad.biases[k]);
    }
}

void soft_update(Mlp& target, const Mlp& source, double tau) {
    if (!target.same_shape(source)) throw DimensionError("soft_update: shape mismatch");
    if (!(tau >= 0.0 && tau <= 1.0)) throw ConfigError("soft_update: tau must be in [0,1]");
    for (std::size_t k = 0; k < target.weights.size(); ++k) {
        auto& tw = target.weights[k];
        const auto& sw = source.weights[k];
        for (std::size_t i = 0; i < tw.size(); ++i) tw[i] = tau * sw[i] + (1.0 - tau) * tw[i];
        auto& tb = target.biases[k];
        const auto& sb = source.biases[k];
        for (std::size_t i = 0; i < tb.size(); ++i) tb[i] = tau * sb[i] + (1.0 - tau) * tb[i];
    }
}

double l2_param_norm(const Mlp& net) {
    double ss = 0.0;
    for (const auto& w : net.weights)
        for (double x : w) ss += x * x;
    for (const auto& b : net.biases)
        for (double x : b) ss += x * x;
    return std::sqrt(ss);
}

void add_l2_norm_gradient(const Mlp& net, double alpha, MlpGrad& grad) {
    const double norm = l2_param_norm(net);
    if (norm == 0.0) return;  // subgradient 0 at the origin
    const double scale = alpha / norm;
    for (std::size_t k = 0; k < net.weights.size(); ++k) {
        const auto& w = net.weights[k];
        auto& gw = grad.weights[k];
        for (std::size_t i = 0; i < w.size(); ++i) gw[i] += scale * w[i];
        const auto& b = net.biases[k];
        auto& gb = grad.biases[k];
        for (std::size_t i = 0; i < b.size(); ++i) gb[i] += scale * b[i];
    }
}

namespace {

constexpr char kMagic[4] = {'F', 'L', 'R', 'L'};
constexpr std::uint32_t kFormatVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(out, bits);
}

void put_f64_vec(std::ostream& out, const std::vector<double>& v) {
    for (double x : v) put_f64(out, x);
}

std::uint32_t get_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw CorruptCheckpointError("checkpoint truncated");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

std::uint64_t get_u64(std::istream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    if (!in) throw CorruptCheckpointError("checkpoint truncated");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

double get_f64(std::istream& in) {
    std::uint64_t bits = get_u64(in);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

void get_f64_vec(std::istream& in, std::vector<double>& v) {
    for (double& x : v) x = get_f64(in);
}

}  // namespace

void write_params(const Mlp& net, const AdamState& adam, std::ostream& out) {
    out.write(kMagic, 4);
    put_u32(out, kFormatVersion);
    put_u32(out, static_cast<std::uint32_t>(net.output_activation));
    put_u32(out, static_cast<std::uint32_t>(net.layer_sizes.size()));
    for (int s : net.layer_sizes) put_u32(out, static_cast<std::uint32_t>(s));
    for (const auto& w : net.weights) put_f64_vec(out, w);
    for (const auto& b : net.biases) put_f64_vec(out, b);
    put_f64(out, adam.learning_rate);
    put_f64(out, adam.beta1);
    put_f64(out, adam.beta2);
    put_f64(out, adam.epsilon);
    put_u64(out, adam.step);
    for (const auto& w : adam.m.weights) put_f64_vec(out, w);
    for (const auto& b : adam.m.biases) put_f64_vec(out, b);
    for (const auto& w : adam.v.weights) put_f64_vec(out, w);
    for (const auto& b : adam.v.biases) put_f64_vec(out, b);
}

void read_params(Mlp& net, AdamState& adam, std::istream& in) {
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw CorruptCheckpointError("bad checkpoint magic");
    const std::uint32_t version = get_u32(in);
    if (version != kFormatVersion)
        throw CorruptCheckpointError("unsupported checkpoint version " + std::to_string(version));
    const std::uint32_t act = get_u32(in);
    if (act > 1) throw CorruptCheckpointError("bad output activation code");
    const std::uint32_t nlayers = get_u32(in);
    if (nlayers < 2 || nlayers > 64) throw CorruptCheckpointError("implausible layer count");

    std::vector<int> sizes(nlayers);
    for (auto& s : sizes) {
        const std::uint32_t v = get_u32(in);
        if (v == 0 || v > (1u << 20)) throw CorruptCheckpointError("implausible layer size");
        s = static_cast<int>(v);
    }

    Mlp loaded;
    loaded.layer_sizes = sizes;
    loaded.output_activation = static_cast<OutputActivation>(act);
    for (std::size_t k = 0; k + 1 < sizes.size(); ++k) {
        loaded.weights.emplace_back(static_cast<std::size_t>(sizes[k]) * sizes[k + 1]);
        loaded.biases.emplace_back(static_cast<std::size_t>(sizes[k + 1]));
    }
    for (auto& w : loaded.weights) get_f64_vec(in, w);
    for (auto& b : loaded.biases) get_f64_vec(in, b);

    AdamState a;
    a.learning_rate = get_f64(in);
    a.beta1 = get_f64(in);
    a.beta2 = get_f64(in);
    a.epsilon = get_f64(in);
    a.step = get_u64(in);
    a.m = make_grad(loaded);
    a.v = make_grad(loaded);
    for (auto& w : a.m.weights) get_f64_vec(in, w);
    for (auto& b : a.m.biases) get_f64_vec(in, b);
    for (auto& w : a.v.weights) get_f64_vec(in, w);
    for (auto& b : a.v.biases) get_f64_vec(in, b);

    net = std::move(loaded);
    adam = std::move(a);
}

void save_params(const Mlp& net, const AdamState& adam, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw CorruptCheckpointError("cannot open for write: " + path);
    write_params(net, adam, out);
    if (!out) throw CorruptCheckpointError("write failed: " + path);
}

void load_params(Mlp& net, AdamState& adam, const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CorruptCheckpointError("cannot open: " + path);
    read_params(net, adam, in);
    // a single-network file must end exactly after the Adam block
    in.peek();
    if (!in.eof()) throw CorruptCheckpointError("trailing bytes after checkpoint body: " + path);
}

}  // namespace flockrl
