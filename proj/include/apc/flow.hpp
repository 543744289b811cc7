#pragma once

// State-conditioned RealNVP behavior prior. A stack of affine coupling
// layers interleaved with parameter-free Flip layers maps base samples
// z ~ N(0, base_var * I) to demonstrated actions; both directions are exact
// and carry the log|det J| of the transform. The scale nets are bounded with
// 5 * tanh before exponentiation so inversion stays well conditioned.
//
// Two evaluation paths exist: graph_* records an autodiff graph for
// maximum-likelihood training, the plain methods run the same kernels
// without recording and are used online (priors are frozen during RL).

#include <memory>
#include <utility>
#include <variant>
#include <vector>

#include "apc/adam.hpp"
#include "apc/autodiff.hpp"
#include "apc/data.hpp"
#include "apc/mlp.hpp"
#include "apc/rng.hpp"
#include "apc/serialize.hpp"

namespace apc::flow {

inline constexpr double kTwoPi = 6.283185307179586476925286766559;
inline constexpr double kScaleBound = 5.0;  // tanh scaling of the log-scale output
inline constexpr double kScaleGuard = 15.0; // |log-scale| beyond this is an error

template <class R>
struct CouplingLayer {
    int split_d = 0;       // passthrough dims [0, d), transformed dims [d, D)
    ad::Mlp<R> scale_net;  // (d + state_dim) -> (D - d)
    ad::Mlp<R> shift_net;  // (d + state_dim) -> (D - d)
};

template <class R>
struct NormStats {
    std::vector<R> mean, stdev;
};

template <class R>
class FlowPrior {
public:
    int action_dim = 0;
    int state_dim = 0;
    R base_var = R(0.2);
    NormStats<R> norm; // dataset state statistics, applied before the nets
    std::vector<CouplingLayer<R>> couplings; // a Flip sits between consecutive couplings

    static FlowPrior make(int action_dim, int state_dim, int n_coupling,
                          const std::vector<int>& hidden, R base_var, Rng& rng) {
        if (action_dim < 2) throw DimensionError("FlowPrior: action_dim must be >= 2 for coupling splits");
        FlowPrior p;
        p.action_dim = action_dim;
        p.state_dim = state_dim;
        p.base_var = base_var;
        p.norm.mean.assign(state_dim, R(0));
        p.norm.stdev.assign(state_dim, R(1));
        const int d = action_dim / 2;
        for (int l = 0; l < n_coupling; ++l) {
            CouplingLayer<R> c;
            c.split_d = d;
            std::vector<int> widths;
            widths.push_back(d + state_dim);
            for (int h : hidden) widths.push_back(h);
            widths.push_back(action_dim - d);
            // zero-initialized final layers: the fresh flow is a pure permutation
            c.scale_net = ad::Mlp<R>::make(widths, ad::Activation::relu, ad::Activation::identity, rng, true);
            c.shift_net = ad::Mlp<R>::make(widths, ad::Activation::relu, ad::Activation::identity, rng, true);
            p.couplings.push_back(std::move(c));
        }
        return p;
    }

    Mat<R> normalize_states(const Mat<R>& s) const {
        if (s.cols != state_dim) throw DimensionError("FlowPrior: state width mismatch");
        Mat<R> out = s;
        for (int i = 0; i < out.rows; ++i)
            for (int j = 0; j < out.cols; ++j) out(i, j) = (out(i, j) - norm.mean[j]) / norm.stdev[j];
        return out;
    }

    // ---- plain batch evaluation ----

    // rows of z -> rows of a; logdet per row (sum of scale outputs).
    std::pair<Mat<R>, Mat<R>> forward(const Mat<R>& z, const Mat<R>& s_raw) const {
        const Mat<R> s = normalize_states(s_raw);
        Mat<R> x = z;
        Mat<R> logdet(z.rows, 1);
        for (size_t l = 0; l < couplings.size(); ++l) {
            if (l > 0) reverse_rows_inplace(x);
            apply_coupling_forward(couplings[l], x, s, logdet);
        }
        if (!x.all_finite()) throw NumericError("flow forward: non-finite output");
        return {std::move(x), std::move(logdet)};
    }

    // rows of a -> rows of z; logdet per row equals minus the forward logdet
    // at the same point.
    std::pair<Mat<R>, Mat<R>> inverse(const Mat<R>& a, const Mat<R>& s_raw) const {
        const Mat<R> s = normalize_states(s_raw);
        Mat<R> y = a;
        Mat<R> logdet(a.rows, 1);
        for (size_t l = couplings.size(); l-- > 0;) {
            apply_coupling_inverse(couplings[l], y, s, logdet);
            if (l > 0) reverse_rows_inplace(y);
        }
        if (!y.all_finite()) throw NumericError("flow inverse: non-finite output");
        return {std::move(y), std::move(logdet)};
    }

    // Exact change-of-variables log density of action a at state s.
    Mat<R> log_prob(const Mat<R>& a, const Mat<R>& s_raw) const {
        auto [z, logdet_inv] = inverse(a, s_raw);
        Mat<R> out(a.rows, 1);
        const double c = -0.5 * std::log(kTwoPi * static_cast<double>(base_var));
        for (int i = 0; i < z.rows; ++i) {
            double lp = static_cast<double>(logdet_inv(i, 0));
            for (int j = 0; j < z.cols; ++j) {
                const double v = z(i, j);
                lp += c - v * v / (2.0 * static_cast<double>(base_var));
            }
            out(i, 0) = static_cast<R>(lp);
        }
        return out;
    }

    // ---- graph-recording evaluation (training) ----

    std::pair<ad::Var<R>, ad::Var<R>> graph_forward(const ad::Var<R>& z, const ad::Var<R>& s_norm) const {
        ad::Var<R> x = z;
        ad::Var<R> logdet = ad::Var<R>::constant(Mat<R>::zeros(z.rows(), 1));
        for (size_t l = 0; l < couplings.size(); ++l) {
            if (l > 0) x = ad::reverse_cols(x);
            std::tie(x, logdet) = graph_coupling_forward(couplings[l], x, s_norm, logdet);
        }
        return {x, logdet};
    }

    std::pair<ad::Var<R>, ad::Var<R>> graph_inverse(const ad::Var<R>& a, const ad::Var<R>& s_norm) const {
        ad::Var<R> y = a;
        ad::Var<R> logdet = ad::Var<R>::constant(Mat<R>::zeros(a.rows(), 1));
        for (size_t l = couplings.size(); l-- > 0;) {
            std::tie(y, logdet) = graph_coupling_inverse(couplings[l], y, s_norm, logdet);
            if (l > 0) y = ad::reverse_cols(y);
        }
        return {y, logdet};
    }

    // log N(z; 0, base_var I) + logdet_inv, per row.
    ad::Var<R> graph_log_prob(const ad::Var<R>& a, const ad::Var<R>& s_norm) const {
        auto [z, logdet_inv] = graph_inverse(a, s_norm);
        const R c = static_cast<R>(-0.5 * std::log(kTwoPi * static_cast<double>(base_var)));
        auto quad = ad::scale(ad::sum_rows(ad::square(z)), static_cast<R>(-0.5 / static_cast<double>(base_var)));
        auto base = ad::add_scalar(quad, static_cast<R>(c * action_dim));
        return ad::add(base, logdet_inv);
    }

    std::vector<ad::Var<R>> params() const {
        std::vector<ad::Var<R>> out;
        for (const auto& c : couplings) {
            for (auto p : c.scale_net.params()) out.push_back(p);
            for (auto p : c.shift_net.params()) out.push_back(p);
        }
        return out;
    }

private:
    static void reverse_rows_inplace(Mat<R>& x) {
        for (int i = 0; i < x.rows; ++i)
            for (int j = 0, k = x.cols - 1; j < k; ++j, --k) std::swap(x(i, j), x(i, k));
    }

    static Mat<R> concat(const Mat<R>& a, const Mat<R>& b) {
        Mat<R> out(a.rows, a.cols + b.cols);
        for (int i = 0; i < a.rows; ++i) {
            for (int j = 0; j < a.cols; ++j) out(i, j) = a(i, j);
            for (int j = 0; j < b.cols; ++j) out(i, a.cols + j) = b(i, j);
        }
        return out;
    }

    void apply_coupling_forward(const CouplingLayer<R>& c, Mat<R>& x, const Mat<R>& s,
                                Mat<R>& logdet) const {
        const int d = c.split_d, D = action_dim;
        Mat<R> head(x.rows, d);
        for (int i = 0; i < x.rows; ++i)
            for (int j = 0; j < d; ++j) head(i, j) = x(i, j);
        const Mat<R> in = concat(head, s);
        Mat<R> sc = c.scale_net.forward_eval(in);
        const Mat<R> sh = c.shift_net.forward_eval(in);
        for (auto& v : sc.d) v = static_cast<R>(kScaleBound) * std::tanh(v);
        check_scale(sc);
        for (int i = 0; i < x.rows; ++i)
            for (int j = d; j < D; ++j) {
                const R sij = sc(i, j - d);
                x(i, j) = x(i, j) * std::exp(sij) + sh(i, j - d);
                logdet(i, 0) += sij;
            }
    }

    void apply_coupling_inverse(const CouplingLayer<R>& c, Mat<R>& y, const Mat<R>& s,
                                Mat<R>& logdet) const {
        const int d = c.split_d, D = action_dim;
        Mat<R> head(y.rows, d);
        for (int i = 0; i < y.rows; ++i)
            for (int j = 0; j < d; ++j) head(i, j) = y(i, j);
        const Mat<R> in = concat(head, s);
        Mat<R> sc = c.scale_net.forward_eval(in);
        const Mat<R> sh = c.shift_net.forward_eval(in);
        for (auto& v : sc.d) v = static_cast<R>(kScaleBound) * std::tanh(v);
        check_scale(sc);
        for (int i = 0; i < y.rows; ++i)
            for (int j = d; j < D; ++j) {
                const R sij = sc(i, j - d);
                y(i, j) = (y(i, j) - sh(i, j - d)) * std::exp(-sij);
                logdet(i, 0) -= sij;
            }
    }

    static void check_scale(const Mat<R>& sc) {
        for (const R& v : sc.d)
            if (!(std::abs(static_cast<double>(v)) <= kScaleGuard))
                throw NumericError("coupling layer: log-scale out of bounds, flow ill-conditioned");
    }

    std::pair<ad::Var<R>, ad::Var<R>> graph_coupling_forward(const CouplingLayer<R>& c,
                                                             const ad::Var<R>& x,
                                                             const ad::Var<R>& s_norm,
                                                             const ad::Var<R>& logdet) const {
        const int d = c.split_d, D = action_dim;
        auto head = ad::slice_cols(x, 0, d);
        auto tail = ad::slice_cols(x, d, D);
        auto in = ad::concat_cols(head, s_norm);
        auto sc = ad::scale(ad::tanh_(c.scale_net.forward(in)), static_cast<R>(kScaleBound));
        auto sh = c.shift_net.forward(in);
        auto out_tail = ad::add(ad::mul(tail, ad::exp_(sc)), sh);
        return {ad::concat_cols(head, out_tail), ad::add(logdet, ad::sum_rows(sc))};
    }

    std::pair<ad::Var<R>, ad::Var<R>> graph_coupling_inverse(const CouplingLayer<R>& c,
                                                             const ad::Var<R>& y,
                                                             const ad::Var<R>& s_norm,
                                                             const ad::Var<R>& logdet) const {
        const int d = c.split_d, D = action_dim;
        auto head = ad::slice_cols(y, 0, d);
        auto tail = ad::slice_cols(y, d, D);
        auto in = ad::concat_cols(head, s_norm);
        auto sc = ad::scale(ad::tanh_(c.scale_net.forward(in)), static_cast<R>(kScaleBound));
        auto sh = c.shift_net.forward(in);
        auto out_tail = ad::mul(ad::sub(tail, sh), ad::exp_(ad::neg(sc)));
        return {ad::concat_cols(head, out_tail), ad::sub(logdet, ad::sum_rows(sc))};
    }
};

// The prior-free actor's flow: forward and inverse are the identity and the
// log-det is exactly zero.
template <class R>
struct IdentityFlow {
    int action_dim = 0;
};

// Value-semantic wrapper over the two flow kinds.
template <class R>
class AnyFlow {
public:
    AnyFlow() : v_(IdentityFlow<R>{0}) {}
    AnyFlow(IdentityFlow<R> f) : v_(std::move(f)) {}
    AnyFlow(FlowPrior<R> f) : v_(std::make_shared<FlowPrior<R>>(std::move(f))) {}
    AnyFlow(std::shared_ptr<FlowPrior<R>> f) : v_(std::move(f)) {}

    bool is_identity() const { return std::holds_alternative<IdentityFlow<R>>(v_); }

    int action_dim() const {
        if (is_identity()) return std::get<IdentityFlow<R>>(v_).action_dim;
        return prior().action_dim;
    }

    const FlowPrior<R>& prior() const { return *std::get<std::shared_ptr<FlowPrior<R>>>(v_); }

    std::pair<Mat<R>, Mat<R>> forward(const Mat<R>& z, const Mat<R>& s) const {
        if (is_identity()) return {z, Mat<R>::zeros(z.rows, 1)};
        return prior().forward(z, s);
    }

    std::pair<Mat<R>, Mat<R>> inverse(const Mat<R>& a, const Mat<R>& s) const {
        if (is_identity()) return {a, Mat<R>::zeros(a.rows, 1)};
        return prior().inverse(a, s);
    }

private:
    std::variant<IdentityFlow<R>, std::shared_ptr<FlowPrior<R>>> v_;
};

// ---- training ----

template <class R>
struct FlowTrainConfig {
    R lr = R(1e-4);
    int batch_size = 64;
    int epochs = 100;
    R grad_clip_norm = R(1.0);
    R lambda_ic = R(1e-3);
    R lambda_fs = R(1e-3);
    R noise_std = R(0.01);
    R eps_stab = R(1e-6);
    R base_var = R(0.2);
    int coupling_layers = 10;
    std::vector<int> hidden = {256};
    double holdout_frac = 0.1;
};

// Full training objective on one minibatch:
//   -mean log_prob + lambda_ic * L_ic + lambda_fs * L_fs
// where L_ic perturbs actions with eps_a ~ N(0, noise_std^2 I) and measures
// latent displacement against ||eps_a||^2, and L_fs does the analogue in
// latent space around z = inverse(a).
template <class R>
ad::Var<R> flow_loss(const FlowPrior<R>& prior, const Mat<R>& actions, const Mat<R>& states,
                     const FlowTrainConfig<R>& cfg, Rng& rng) {
    if (actions.rows == 0) throw ContractError("flow_loss: empty batch");
    const int m = actions.rows, D = prior.action_dim;

    auto s_norm = ad::Var<R>::constant(prior.normalize_states(states));
    auto a = ad::Var<R>::constant(actions);

    auto [z0, logdet_inv] = prior.graph_inverse(a, s_norm);
    const R c = static_cast<R>(-0.5 * std::log(kTwoPi * static_cast<double>(prior.base_var)));
    auto quad = ad::scale(ad::sum_rows(ad::square(z0)), static_cast<R>(-0.5 / static_cast<double>(prior.base_var)));
    auto logp = ad::add(ad::add_scalar(quad, static_cast<R>(c * D)), logdet_inv);
    auto loss = ad::neg(ad::mean_all(logp));

    if (cfg.lambda_ic > R(0)) {
        Mat<R> eps(m, D);
        Mat<R> w(m, 1);
        for (int i = 0; i < m; ++i) {
            double norm2 = 0;
            for (int j = 0; j < D; ++j) {
                const double e = rng.normal(0.0, static_cast<double>(cfg.noise_std));
                eps(i, j) = static_cast<R>(e);
                norm2 += e * e;
            }
            w(i, 0) = static_cast<R>(1.0 / (norm2 + static_cast<double>(cfg.eps_stab)));
        }
        Mat<R> a_pert = actions;
        for (size_t i = 0; i < a_pert.size(); ++i) a_pert.d[i] += eps.d[i];
        auto [z1, ld1] = prior.graph_inverse(ad::Var<R>::constant(a_pert), s_norm);
        (void)ld1;
        auto disp = ad::sum_rows(ad::square(ad::sub(z1, z0)));
        auto l_ic = ad::mean_all(ad::mul(disp, ad::Var<R>::constant(w)));
        loss = ad::add(loss, ad::scale(l_ic, cfg.lambda_ic));
    }

    if (cfg.lambda_fs > R(0)) {
        Mat<R> delta(m, D);
        Mat<R> w(m, 1);
        for (int i = 0; i < m; ++i) {
            double norm2 = 0;
            for (int j = 0; j < D; ++j) {
                const double e = rng.normal(0.0, static_cast<double>(cfg.noise_std));
                delta(i, j) = static_cast<R>(e);
                norm2 += e * e;
            }
            w(i, 0) = static_cast<R>(1.0 / (norm2 + static_cast<double>(cfg.eps_stab)));
        }
        auto z_pert = ad::add(z0, ad::Var<R>::constant(delta));
        auto [a1, lda] = prior.graph_forward(z_pert, s_norm);
        auto [a0, ldb] = prior.graph_forward(z0, s_norm);
        (void)lda;
        (void)ldb;
        auto disp = ad::sum_rows(ad::square(ad::sub(a1, a0)));
        auto l_fs = ad::mean_all(ad::mul(disp, ad::Var<R>::constant(w)));
        loss = ad::add(loss, ad::scale(l_fs, cfg.lambda_fs));
    }
    return loss;
}

struct FlowTrainCurve {
    std::vector<double> train_nll;   // per-epoch mean over the training split
    std::vector<double> holdout_nll; // per-epoch mean over the held-out split
};

// Mean NLL over a set of pairs, evaluation path.
template <class R>
double mean_nll(const FlowPrior<R>& prior, const Mat<R>& actions, const Mat<R>& states) {
    if (actions.rows == 0) return 0.0;
    Mat<R> lp = prior.log_prob(actions, states);
    double s = 0;
    for (int i = 0; i < lp.rows; ++i) s -= lp(i, 0);
    return s / lp.rows;
}

// Minibatch Adam with per-step gradient-norm clipping. Deterministic given
// (dataset, cfg, rng): two identical invocations produce identical priors.
template <class R>
FlowPrior<R> train_prior(const data::DemoDataset& ds, const FlowTrainConfig<R>& cfg, Rng& rng,
                         FlowTrainCurve* curve = nullptr) {
    const size_t n = ds.size();
    if (n == 0) throw ContractError("train_prior: empty dataset");

    FlowPrior<R> prior = FlowPrior<R>::make(ds.action_dim, ds.state_dim, cfg.coupling_layers,
                                            cfg.hidden, cfg.base_var, rng);
    const data::DatasetStats stats = data::dataset_stats(ds);
    for (int j = 0; j < ds.state_dim; ++j) {
        prior.norm.mean[j] = static_cast<R>(stats.state_mean[j]);
        prior.norm.stdev[j] = static_cast<R>(stats.state_std[j]);
    }

    // held-out split for NLL monitoring
    std::vector<size_t> idx(n);
    for (size_t i = 0; i < n; ++i) idx[i] = i;
    for (size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.uniform_int(i)]);
    size_t n_hold = static_cast<size_t>(std::lround(cfg.holdout_frac * static_cast<double>(n)));
    if (n_hold >= n) n_hold = n - 1;
    std::vector<size_t> hold(idx.begin(), idx.begin() + n_hold);
    std::vector<size_t> train(idx.begin() + n_hold, idx.end());

    auto gather = [&](const std::vector<size_t>& which, size_t off, size_t count, Mat<R>& A, Mat<R>& S) {
        A = Mat<R>(static_cast<int>(count), ds.action_dim);
        S = Mat<R>(static_cast<int>(count), ds.state_dim);
        for (size_t r = 0; r < count; ++r) {
            const size_t i = which[off + r];
            for (int j = 0; j < ds.action_dim; ++j) A(static_cast<int>(r), j) = ds.action(i)[j];
            for (int j = 0; j < ds.state_dim; ++j) S(static_cast<int>(r), j) = ds.state(i)[j];
        }
    };

    Mat<R> hold_a, hold_s;
    if (!hold.empty()) gather(hold, 0, hold.size(), hold_a, hold_s);
    Mat<R> train_a_all, train_s_all;
    gather(train, 0, train.size(), train_a_all, train_s_all);

    auto params = prior.params();
    ad::AdamState<R> opt;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (size_t i = train.size(); i > 1; --i) std::swap(train[i - 1], train[rng.uniform_int(i)]);
        for (size_t off = 0; off < train.size(); off += cfg.batch_size) {
            const size_t count = std::min<size_t>(cfg.batch_size, train.size() - off);
            Mat<R> A, S;
            gather(train, off, count, A, S);
            auto loss = flow_loss(prior, A, S, cfg, rng);
            ad::backward(loss);
            ad::clip_grad_norm(params, cfg.grad_clip_norm);
            ad::adam_step(params, opt, cfg.lr);
        }
        if (curve) {
            curve->train_nll.push_back(mean_nll(prior, train_a_all, train_s_all));
            curve->holdout_nll.push_back(hold.empty() ? 0.0 : mean_nll(prior, hold_a, hold_s));
        }
    }
    return prior;
}

// ---- serialization: versioned "APCF" container, docs/formats.md ----

inline constexpr uint16_t kPriorVersion = 1;

template <class R>
void save_prior(const FlowPrior<R>& p, const std::string& path) {
    io::BinWriter w;
    w.magic("APCF");
    w.u16(kPriorVersion);
    w.u32(static_cast<uint32_t>(p.action_dim));
    w.u32(static_cast<uint32_t>(p.state_dim));
    w.u32(static_cast<uint32_t>(p.couplings.size()));
    w.f32(static_cast<float>(p.base_var));
    for (const R& v : p.norm.mean) w.f32(static_cast<float>(v));
    for (const R& v : p.norm.stdev) w.f32(static_cast<float>(v));
    for (const auto& c : p.couplings) {
        w.u32(static_cast<uint32_t>(c.split_d));
        io::write_mlp(w, c.scale_net);
        io::write_mlp(w, c.shift_net);
    }
    w.save(path);
}

template <class R>
FlowPrior<R> load_prior(const std::string& path) {
    io::BinReader r = io::BinReader::from_file(path);
    r.expect_magic("APCF", "prior");
    const uint16_t version = r.u16();
    if (version != kPriorVersion)
        throw VersionError("unsupported prior version " + std::to_string(version));
    FlowPrior<R> p;
    p.action_dim = static_cast<int>(r.u32());
    p.state_dim = static_cast<int>(r.u32());
    const uint32_t n_coupling = r.u32();
    p.base_var = static_cast<R>(r.f32());
    p.norm.mean.resize(p.state_dim);
    p.norm.stdev.resize(p.state_dim);
    for (auto& v : p.norm.mean) v = static_cast<R>(r.f32());
    for (auto& v : p.norm.stdev) v = static_cast<R>(r.f32());
    for (uint32_t l = 0; l < n_coupling; ++l) {
        CouplingLayer<R> c;
        c.split_d = static_cast<int>(r.u32());
        c.scale_net = io::read_mlp<R>(r);
        c.shift_net = io::read_mlp<R>(r);
        p.couplings.push_back(std::move(c));
    }
    return p;
}

} // namespace apc::flow
