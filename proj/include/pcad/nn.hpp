#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "pcad/rng.hpp"

namespace pcad::nn {

enum class Activation { Identity, Relu, Tanh, Softmax };

inline std::string activation_name(Activation a) {
    switch (a) {
        case Activation::Identity: return "identity";
        case Activation::Relu: return "relu";
        case Activation::Tanh: return "tanh";
        case Activation::Softmax: return "softmax";
    }
    throw std::logic_error("unknown activation");
}

inline Activation activation_from_name(const std::string& s) {
    if (s == "identity") return Activation::Identity;
    if (s == "relu") return Activation::Relu;
    if (s == "tanh") return Activation::Tanh;
    if (s == "softmax") return Activation::Softmax;
    throw std::runtime_error("unknown activation name: " + s);
}

// Dense row-major matrix of doubles; rows are samples.
struct Matrix {
    std::size_t rows = 0, cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    static Matrix from_row(const std::vector<double>& row) {
        Matrix m(1, row.size());
        m.data = row;
        return m;
    }
    std::vector<double> row(std::size_t r) const {
        return {data.begin() + static_cast<std::ptrdiff_t>(r * cols),
                data.begin() + static_cast<std::ptrdiff_t>((r + 1) * cols)};
    }
};

struct Layer {
    std::size_t in = 0, out = 0;
    std::vector<double> weights;  // out x in, row-major
    std::vector<double> bias;     // out
    Activation act = Activation::Identity;
};

struct Mlp {
    std::vector<Layer> layers;

    std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().in; }
    std::size_t output_dim() const { return layers.empty() ? 0 : layers.back().out; }

    std::size_t param_count() const {
        std::size_t n = 0;
        for (const auto& l : layers) n += l.weights.size() + l.bias.size();
        return n;
    }

    // dims = {in, h1, ..., out}; acts has dims.size()-1 entries.
    static Mlp make(const std::vector<std::size_t>& dims, const std::vector<Activation>& acts) {
        if (dims.size() < 2 || acts.size() != dims.size() - 1)
            throw std::invalid_argument("inconsistent layer specification");
        Mlp net;
        for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
            Layer l;
            l.in = dims[i];
            l.out = dims[i + 1];
            l.weights.assign(l.out * l.in, 0.0);
            l.bias.assign(l.out, 0.0);
            l.act = acts[i];
            net.layers.push_back(std::move(l));
        }
        return net;
    }

    // uniform(-sqrt(1/fan_in), +sqrt(1/fan_in)), biases zero
    void init_uniform(Rng& rng) {
        for (auto& l : layers) {
            double bound = std::sqrt(1.0 / static_cast<double>(l.in));
            for (auto& w : l.weights) w = rng.uniform(-bound, bound);
            for (auto& b : l.bias) b = 0.0;
        }
    }

    void zero_last_layer() {
        auto& l = layers.back();
        std::fill(l.weights.begin(), l.weights.end(), 0.0);
        std::fill(l.bias.begin(), l.bias.end(), 0.0);
    }

    std::vector<double> flatten_params() const {
        std::vector<double> flat;
        flat.reserve(param_count());
        for (const auto& l : layers) {
            flat.insert(flat.end(), l.weights.begin(), l.weights.end());
            flat.insert(flat.end(), l.bias.begin(), l.bias.end());
        }
        return flat;
    }

    void load_params(const std::vector<double>& flat) {
        if (flat.size() != param_count()) throw std::invalid_argument("parameter count mismatch");
        std::size_t pos = 0;
        for (auto& l : layers) {
            std::copy(flat.begin() + static_cast<std::ptrdiff_t>(pos),
                      flat.begin() + static_cast<std::ptrdiff_t>(pos + l.weights.size()),
                      l.weights.begin());
            pos += l.weights.size();
            std::copy(flat.begin() + static_cast<std::ptrdiff_t>(pos),
                      flat.begin() + static_cast<std::ptrdiff_t>(pos + l.bias.size()),
                      l.bias.begin());
            pos += l.bias.size();
        }
    }
};

// acts[0] is the input; acts[l+1] the post-activation output of layer l.
struct ForwardTrace {
    std::vector<Matrix> acts;
    const Matrix& output() const { return acts.back(); }
};

inline void apply_activation(Activation act, Matrix& z) {
    switch (act) {
        case Activation::Identity:
            return;
        case Activation::Relu:
            for (auto& v : z.data) v = v > 0.0 ? v : 0.0;
            return;
        case Activation::Tanh:
            for (auto& v : z.data) v = std::tanh(v);
            return;
        case Activation::Softmax:
            for (std::size_t r = 0; r < z.rows; ++r) {
                double m = z.at(r, 0);
                for (std::size_t c = 1; c < z.cols; ++c) m = std::max(m, z.at(r, c));
                double sum = 0.0;
                for (std::size_t c = 0; c < z.cols; ++c) {
                    double e = std::exp(z.at(r, c) - m);
                    z.at(r, c) = e;
                    sum += e;
                }
                for (std::size_t c = 0; c < z.cols; ++c) z.at(r, c) /= sum;
            }
            return;
    }
}

inline ForwardTrace forward(const Mlp& net, const Matrix& input) {
    if (input.cols != net.input_dim())
        throw std::invalid_argument("input dimension mismatch: got " +
                                    std::to_string(input.cols) + ", net expects " +
                                    std::to_string(net.input_dim()));
    ForwardTrace trace;
    trace.acts.reserve(net.layers.size() + 1);
    trace.acts.push_back(input);
    for (const auto& l : net.layers) {
        const Matrix& x = trace.acts.back();
        Matrix z(x.rows, l.out);
        for (std::size_t r = 0; r < x.rows; ++r) {
            const double* xr = &x.data[r * x.cols];
            double* zr = &z.data[r * z.cols];
            for (std::size_t o = 0; o < l.out; ++o) {
                const double* wr = &l.weights[o * l.in];
                double acc = l.bias[o];
                for (std::size_t i = 0; i < l.in; ++i) acc += wr[i] * xr[i];
                zr[o] = acc;
            }
        }
        apply_activation(l.act, z);
        trace.acts.push_back(std::move(z));
    }
    return trace;
}

struct Gradients {
    std::vector<std::vector<double>> dweights;  // per layer, shaped like weights
    std::vector<std::vector<double>> dbias;
    Matrix dinput;

    std::vector<double> flatten() const {
        std::vector<double> flat;
        for (std::size_t l = 0; l < dweights.size(); ++l) {
            flat.insert(flat.end(), dweights[l].begin(), dweights[l].end());
            flat.insert(flat.end(), dbias[l].begin(), dbias[l].end());
        }
        return flat;
    }

    void accumulate(const Gradients& other) {
        for (std::size_t l = 0; l < dweights.size(); ++l) {
            for (std::size_t i = 0; i < dweights[l].size(); ++i)
                dweights[l][i] += other.dweights[l][i];
            for (std::size_t i = 0; i < dbias[l].size(); ++i) dbias[l][i] += other.dbias[l][i];
        }
    }
};

// Exact reverse pass. upstream is dL/d(output); relu'(0) = 0 by convention.
inline Gradients backward(const Mlp& net, const ForwardTrace& trace, const Matrix& upstream) {
    if (trace.acts.size() != net.layers.size() + 1)
        throw std::invalid_argument("trace does not match network");
    if (upstream.rows != trace.output().rows || upstream.cols != trace.output().cols)
        throw std::invalid_argument("upstream gradient shape mismatch");

    Gradients g;
    g.dweights.resize(net.layers.size());
    g.dbias.resize(net.layers.size());
    Matrix grad = upstream;
    for (std::size_t li = net.layers.size(); li-- > 0;) {
        const Layer& l = net.layers[li];
        const Matrix& y = trace.acts[li + 1];
        const Matrix& x = trace.acts[li];

        Matrix dz(grad.rows, l.out);
        switch (l.act) {
            case Activation::Identity:
                dz = grad;
                break;
            case Activation::Relu:
                for (std::size_t i = 0; i < dz.data.size(); ++i)
                    dz.data[i] = y.data[i] > 0.0 ? grad.data[i] : 0.0;
                break;
            case Activation::Tanh:
                for (std::size_t i = 0; i < dz.data.size(); ++i)
                    dz.data[i] = grad.data[i] * (1.0 - y.data[i] * y.data[i]);
                break;
            case Activation::Softmax:
                for (std::size_t r = 0; r < grad.rows; ++r) {
                    double inner = 0.0;
                    for (std::size_t c = 0; c < l.out; ++c)
                        inner += grad.at(r, c) * y.at(r, c);
                    for (std::size_t c = 0; c < l.out; ++c)
                        dz.at(r, c) = y.at(r, c) * (grad.at(r, c) - inner);
                }
                break;
        }

        g.dweights[li].assign(l.weights.size(), 0.0);
        g.dbias[li].assign(l.bias.size(), 0.0);
        for (std::size_t r = 0; r < dz.rows; ++r) {
            const double* xr = &x.data[r * x.cols];
            const double* dzr = &dz.data[r * dz.cols];
            for (std::size_t o = 0; o < l.out; ++o) {
                double d = dzr[o];
                g.dbias[li][o] += d;
                double* dwr = &g.dweights[li][o * l.in];
                for (std::size_t i = 0; i < l.in; ++i) dwr[i] += d * xr[i];
            }
        }

        Matrix dx(dz.rows, l.in);
        for (std::size_t r = 0; r < dz.rows; ++r) {
            const double* dzr = &dz.data[r * dz.cols];
            double* dxr = &dx.data[r * dx.cols];
            for (std::size_t o = 0; o < l.out; ++o) {
                double d = dzr[o];
                const double* wr = &l.weights[o * l.in];
                for (std::size_t i = 0; i < l.in; ++i) dxr[i] += d * wr[i];
            }
        }
        grad = std::move(dx);
    }
    g.dinput = std::move(grad);
    return g;
}

struct AdamWState {
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8, weight_decay = 1e-2;
    long step = 0;
    std::vector<std::vector<double>> mw, vw, mb, vb;

    static AdamWState for_net(const Mlp& net, double weight_decay = 1e-2) {
        AdamWState s;
        s.weight_decay = weight_decay;
        for (const auto& l : net.layers) {
            s.mw.emplace_back(l.weights.size(), 0.0);
            s.vw.emplace_back(l.weights.size(), 0.0);
            s.mb.emplace_back(l.bias.size(), 0.0);
            s.vb.emplace_back(l.bias.size(), 0.0);
        }
        return s;
    }
};

namespace detail {
inline void adamw_update(std::vector<double>& p, const std::vector<double>& g,
                         std::vector<double>& m, std::vector<double>& v,
                         const AdamWState& s, double lr, double c1, double c2, double wd) {
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (!std::isfinite(g[i])) throw std::runtime_error("gradient blow-up");
        m[i] = s.beta1 * m[i] + (1.0 - s.beta1) * g[i];
        v[i] = s.beta2 * v[i] + (1.0 - s.beta2) * g[i] * g[i];
        double mhat = m[i] / c1;
        double vhat = v[i] / c2;
        p[i] -= lr * (mhat / (std::sqrt(vhat) + s.eps) + wd * p[i]);
    }
}
}  // namespace detail

// Decoupled weight decay on weights only; biases decay-free.
inline void adamw_step(AdamWState& state, Mlp& net, const Gradients& grads, double lr) {
    ++state.step;
    double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        detail::adamw_update(net.layers[l].weights, grads.dweights[l], state.mw[l], state.vw[l],
                             state, lr, c1, c2, state.weight_decay);
        detail::adamw_update(net.layers[l].bias, grads.dbias[l], state.mb[l], state.vb[l],
                             state, lr, c1, c2, 0.0);
    }
}

struct LrSchedule {
    double base_lr = 0.01;
    long total_steps = 1;
};

// Cosine annealing from base_lr down to zero.
inline double lr_at(const LrSchedule& sched, long step) {
    if (sched.base_lr <= 0.0) throw std::invalid_argument("base_lr must be > 0");
    if (step < 0 || step > sched.total_steps)
        throw std::invalid_argument("step outside schedule");
    double frac = static_cast<double>(step) / static_cast<double>(sched.total_steps);
    return sched.base_lr * (1.0 + std::cos(3.14159265358979323846 * frac)) / 2.0;
}

inline double clamped_log(double p) {
    return std::log(std::max(1e-12, std::min(1.0, p)));
}

// Mean over the batch of -log p(label); probabilities clamped to [1e-12, 1].
inline double cross_entropy(const Matrix& probs, const std::vector<int>& labels) {
    if (probs.rows != labels.size()) throw std::invalid_argument("label count mismatch");
    double total = 0.0;
    for (std::size_t r = 0; r < probs.rows; ++r) {
        int y = labels[r];
        if (y < 0 || static_cast<std::size_t>(y) >= probs.cols)
            throw std::invalid_argument("label out of range");
        total -= clamped_log(probs.at(r, static_cast<std::size_t>(y)));
    }
    return total / static_cast<double>(probs.rows);
}

// --- checkpoint serialization ------------------------------------------------
// {"dims": [...], "activations": [...], "params": [flat per layer: W then b]}
// plus optional "adamw" optimizer state. Values are plain JSON numbers; the
// writer emits round-trip-exact decimal so reload is bitwise identical.

inline nlohmann::json mlp_to_json(const Mlp& net) {
    nlohmann::json j;
    std::vector<std::size_t> dims{net.input_dim()};
    std::vector<std::string> acts;
    for (const auto& l : net.layers) {
        dims.push_back(l.out);
        acts.push_back(activation_name(l.act));
    }
    j["dims"] = dims;
    j["activations"] = acts;
    j["params"] = net.flatten_params();
    return j;
}

inline Mlp mlp_from_json(const nlohmann::json& j) {
    auto dims = j.at("dims").get<std::vector<std::size_t>>();
    auto act_names = j.at("activations").get<std::vector<std::string>>();
    std::vector<Activation> acts;
    acts.reserve(act_names.size());
    for (const auto& n : act_names) acts.push_back(activation_from_name(n));
    Mlp net = Mlp::make(dims, acts);
    net.load_params(j.at("params").get<std::vector<double>>());
    return net;
}

inline nlohmann::json adamw_to_json(const AdamWState& s) {
    nlohmann::json j;
    j["beta1"] = s.beta1;
    j["beta2"] = s.beta2;
    j["eps"] = s.eps;
    j["weight_decay"] = s.weight_decay;
    j["step"] = s.step;
    j["mw"] = s.mw;
    j["vw"] = s.vw;
    j["mb"] = s.mb;
    j["vb"] = s.vb;
    return j;
}

inline AdamWState adamw_from_json(const nlohmann::json& j) {
    AdamWState s;
    s.beta1 = j.at("beta1").get<double>();
    s.beta2 = j.at("beta2").get<double>();
    s.eps = j.at("eps").get<double>();
    s.weight_decay = j.at("weight_decay").get<double>();
    s.step = j.at("step").get<long>();
    s.mw = j.at("mw").get<std::vector<std::vector<double>>>();
    s.vw = j.at("vw").get<std::vector<std::vector<double>>>();
    s.mb = j.at("mb").get<std::vector<std::vector<double>>>();
    s.vb = j.at("vb").get<std::vector<std::vector<double>>>();
    return s;
}

}  // namespace pcad::nn
