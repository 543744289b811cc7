#pragma once

// Fully connected networks on top of the autodiff engine. Two forward paths
// share the same kernels and therefore produce bitwise identical values:
// forward() records a graph for training, forward_eval() is allocation-light
// for action selection, probes and target computation.

#include <string>
#include <vector>

#include "apc/autodiff.hpp"
#include "apc/rng.hpp"

namespace apc::ad {

enum class Activation { identity, tanh, relu };

inline const char* activation_name(Activation a) {
    switch (a) {
    case Activation::identity: return "identity";
    case Activation::tanh: return "tanh";
    case Activation::relu: return "relu";
    }
    return "?";
}

template <class R>
struct Linear {
    Var<R> W; // in x out
    Var<R> b; // 1 x out
    Activation act = Activation::identity;
    int in = 0, out = 0;
};

template <class R>
struct Mlp {
    std::vector<Linear<R>> layers;

    // widths = {in, hidden..., out}; hidden layers use hidden_act, the final
    // layer uses out_act. Initialization is uniform fan-in scaled: He-style
    // for relu, Xavier-style otherwise; zero_last zeroes the final layer.
    static Mlp make(const std::vector<int>& widths, Activation hidden_act, Activation out_act,
                    Rng& rng, bool zero_last = false) {
        if (widths.size() < 2) throw DimensionError("Mlp::make: need at least in/out widths");
        Mlp m;
        for (size_t l = 0; l + 1 < widths.size(); ++l) {
            const int in = widths[l], out = widths[l + 1];
            const bool last = (l + 2 == widths.size());
            const Activation act = last ? out_act : hidden_act;
            Mat<R> W(in, out), b(1, out);
            if (!(last && zero_last)) {
                const double bound = (hidden_act == Activation::relu)
                                         ? std::sqrt(6.0 / in)
                                         : std::sqrt(6.0 / (in + out));
                for (auto& w : W.d) w = static_cast<R>(rng.uniform(-bound, bound));
            }
            Linear<R> lay;
            lay.W = Var<R>::leaf(std::move(W), true);
            lay.b = Var<R>::leaf(std::move(b), true);
            lay.act = act;
            lay.in = in;
            lay.out = out;
            m.layers.push_back(std::move(lay));
        }
        return m;
    }

    int in_dim() const { return layers.front().in; }
    int out_dim() const { return layers.back().out; }

    // Graph-recording forward pass. Throws NumericError if the output is not
    // finite, DimensionError on width mismatch.
    Var<R> forward(const Var<R>& input) const {
        if (input.cols() != in_dim()) throw DimensionError("Mlp::forward: input width mismatch");
        Var<R> h = input;
        for (const auto& lay : layers) {
            h = add_rowvec(matmul(h, lay.W), lay.b);
            switch (lay.act) {
            case Activation::identity: break;
            case Activation::tanh: h = tanh_(h); break;
            case Activation::relu: h = relu(h); break;
            }
        }
        if (!h.value().all_finite()) throw NumericError("Mlp::forward: non-finite output");
        return h;
    }

    // Graph-free forward; same kernels, same op order, bitwise equal values.
    Mat<R> forward_eval(const Mat<R>& input) const {
        if (input.cols != in_dim()) throw DimensionError("Mlp::forward_eval: input width mismatch");
        Mat<R> h = input;
        for (const auto& lay : layers) {
            Mat<R> y = kern::matmul(h, lay.W.value());
            for (int i = 0; i < y.rows; ++i)
                for (int j = 0; j < y.cols; ++j) y(i, j) += lay.b.value()(0, j);
            switch (lay.act) {
            case Activation::identity: break;
            case Activation::tanh:
                kern::map(y.size(), y.ptr(), y.ptr(), [](R v) { return std::tanh(v); });
                break;
            case Activation::relu:
                kern::map(y.size(), y.ptr(), y.ptr(), [](R v) { return v > R(0) ? v : R(0); });
                break;
            }
            h = std::move(y);
        }
        if (!h.all_finite()) throw NumericError("Mlp::forward_eval: non-finite output");
        return h;
    }

    std::vector<Var<R>> params() const {
        std::vector<Var<R>> out;
        out.reserve(layers.size() * 2);
        for (const auto& lay : layers) {
            out.push_back(lay.W);
            out.push_back(lay.b);
        }
        return out;
    }

    size_t param_count() const {
        size_t n = 0;
        for (const auto& lay : layers) n += lay.W.value().size() + lay.b.value().size();
        return n;
    }

    // Deep copy with fresh leaves (used to spawn target networks).
    Mlp clone() const {
        Mlp m;
        for (const auto& lay : layers) {
            Linear<R> c;
            c.W = Var<R>::leaf(lay.W.value(), true);
            c.b = Var<R>::leaf(lay.b.value(), true);
            c.act = lay.act;
            c.in = lay.in;
            c.out = lay.out;
            m.layers.push_back(std::move(c));
        }
        return m;
    }

    void copy_values_from(const Mlp& other) {
        if (other.layers.size() != layers.size()) throw DimensionError("copy_values_from: layer count");
        for (size_t l = 0; l < layers.size(); ++l) {
            layers[l].W.value() = other.layers[l].W.value();
            layers[l].b.value() = other.layers[l].b.value();
        }
    }
};

// target <- (1 - tau) * target + tau * online, elementwise.
template <class R>
void polyak_update(Mlp<R>& target, const Mlp<R>& online, R tau) {
    if (target.layers.size() != online.layers.size())
        throw ContractError("polyak_update: mismatched networks");
    for (size_t l = 0; l < target.layers.size(); ++l) {
        auto blend = [tau](Mat<R>& t, const Mat<R>& o) {
            if (!t.same_shape(o)) throw ContractError("polyak_update: shape mismatch");
            for (size_t i = 0; i < t.size(); ++i) t.d[i] = (R(1) - tau) * t.d[i] + tau * o.d[i];
        };
        blend(target.layers[l].W.value(), online.layers[l].W.value());
        blend(target.layers[l].b.value(), online.layers[l].b.value());
    }
}

template <class R>
void set_requires_grad(const std::vector<Var<R>>& params, bool on) {
    for (auto p : params) p.set_requires_grad(on);
}

} // namespace apc::ad
