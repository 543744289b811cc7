#pragma once

// Adam with bias correction. Gradients are consumed: a step clears them.

#include <cmath>
#include <vector>

#include "apc/autodiff.hpp"

namespace apc::ad {

template <class R>
struct AdamState {
    long step_count = 0;
    R beta1 = R(0.9);
    R beta2 = R(0.999);
    R eps = R(1e-8);
    std::vector<Mat<R>> m; // first moments, aligned with the parameter list
    std::vector<Mat<R>> v; // second moments
};

template <class R>
void adam_step(const std::vector<Var<R>>& params, AdamState<R>& st, R lr) {
    if (st.m.empty()) {
        for (const auto& p : params) {
            st.m.push_back(Mat<R>::zeros(p.rows(), p.cols()));
            st.v.push_back(Mat<R>::zeros(p.rows(), p.cols()));
        }
    }
    if (st.m.size() != params.size()) throw ContractError("adam_step: parameter list changed");
    for (const auto& p : params)
        if (!p.has_grad()) throw ContractError("adam_step: parameter has no gradient");

    st.step_count += 1;
    const R b1t = static_cast<R>(std::pow(static_cast<double>(st.beta1), static_cast<double>(st.step_count)));
    const R b2t = static_cast<R>(std::pow(static_cast<double>(st.beta2), static_cast<double>(st.step_count)));
    for (size_t pi = 0; pi < params.size(); ++pi) {
        auto& theta = const_cast<Var<R>&>(params[pi]).value();
        const Mat<R>& g = params[pi].grad();
        Mat<R>& m = st.m[pi];
        Mat<R>& v = st.v[pi];
        for (size_t i = 0; i < theta.size(); ++i) {
            m.d[i] = st.beta1 * m.d[i] + (R(1) - st.beta1) * g.d[i];
            v.d[i] = st.beta2 * v.d[i] + (R(1) - st.beta2) * g.d[i] * g.d[i];
            const R mhat = m.d[i] / (R(1) - b1t);
            const R vhat = v.d[i] / (R(1) - b2t);
            theta.d[i] -= lr * mhat / (std::sqrt(vhat) + st.eps);
        }
    }
    for (auto p : params) p.clear_grad();
}

template <class R>
R grad_global_norm(const std::vector<Var<R>>& params) {
    double s = 0;
    for (const auto& p : params) {
        if (!p.has_grad()) throw ContractError("grad_global_norm: parameter has no gradient");
        for (const R& g : p.grad().d) s += static_cast<double>(g) * static_cast<double>(g);
    }
    return static_cast<R>(std::sqrt(s));
}

// Scales all gradients so the global norm is at most max_norm.
template <class R>
void clip_grad_norm(const std::vector<Var<R>>& params, R max_norm) {
    const R norm = grad_global_norm(params);
    if (norm <= max_norm || norm <= R(0)) return;
    const R factor = max_norm / norm;
    for (auto p : params) {
        auto n = p.node();
        for (auto& g : n->grad.d) g *= factor;
    }
}

} // namespace apc::ad
