#pragma once

// Reverse-mode differentiation over dense 2-D tensors, define-by-run: each
// forward pass records a fresh graph, backward() consumes it. Calling
// backward twice through the same recorded nodes is rejected (single
// documented policy; re-run the forward pass instead). Parameter leaves
// persist across graphs and accumulate gradients until an optimizer step
// clears them.

#include <array>
#include <atomic>
#include <cmath>
#include <functional>
#include <memory>
#include <vector>

#include "apc/kernels.hpp"
#include "apc/mat.hpp"

namespace apc::ad {

template <class R>
struct Node {
    Mat<R> val;
    Mat<R> grad; // allocated lazily during backward
    bool requires_grad = false; // leaf flag: gradient requested for this tensor
    bool needs_grad = false;    // this node or some ancestor requires grad
    bool leaf = false;
    bool consumed = false; // a backward pass already ran through this node
    uint64_t visit_epoch = 0; // DFS bookkeeping for backward()
    int visit_state = 0;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> vjp; // pushes this->grad into parents

    void ensure_grad() {
        if (grad.rows != val.rows || grad.cols != val.cols) grad = Mat<R>::zeros(val.rows, val.cols);
    }
    bool has_grad() const { return grad.rows == val.rows && grad.cols == val.cols && grad.rows > 0; }
};

template <class R>
class Var {
public:
    Var() = default;
    explicit Var(std::shared_ptr<Node<R>> n) : n_(std::move(n)) {}

    static Var leaf(Mat<R> value, bool requires_grad) {
        auto n = std::make_shared<Node<R>>();
        n->val = std::move(value);
        n->leaf = true;
        n->requires_grad = requires_grad;
        n->needs_grad = requires_grad;
        return Var(std::move(n));
    }

    static Var constant(Mat<R> value) { return leaf(std::move(value), false); }

    bool defined() const { return n_ != nullptr; }
    int rows() const { return n_->val.rows; }
    int cols() const { return n_->val.cols; }

    const Mat<R>& value() const { return n_->val; }
    Mat<R>& value() { return n_->val; } // in-place parameter updates

    const Mat<R>& grad() const { return n_->grad; }
    bool has_grad() const { return n_ && n_->has_grad(); }

    void clear_grad() { n_->grad = Mat<R>(); }
    void zero_grad() {
        n_->ensure_grad();
        for (auto& g : n_->grad.d) g = R(0);
    }

    void set_requires_grad(bool on) {
        n_->requires_grad = on;
        n_->needs_grad = on;
    }

    std::shared_ptr<Node<R>> node() const { return n_; }

private:
    std::shared_ptr<Node<R>> n_;
};

namespace detail {

template <class R>
Var<R> make_op(Mat<R> value, std::vector<std::shared_ptr<Node<R>>> parents,
               std::function<void(Node<R>&)> vjp) {
    auto n = std::make_shared<Node<R>>();
    n->val = std::move(value);
    bool needs = false;
    for (const auto& p : parents) needs = needs || p->needs_grad;
    n->needs_grad = needs;
    if (needs) {
        n->parents = std::move(parents);
        n->vjp = std::move(vjp);
    }
    return Var<R>(std::move(n));
}

template <class R>
void accumulate(Node<R>& parent, const Mat<R>& delta) {
    parent.ensure_grad();
    R* g = parent.grad.ptr();
    const R* x = delta.ptr();
    const size_t n = delta.size();
    for (size_t i = 0; i < n; ++i) g[i] += x[i];
}

} // namespace detail

// ---- shape helpers ----

template <class R>
void check_same_shape(const Var<R>& a, const Var<R>& b, const char* what) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw DimensionError(std::string(what) + ": shape mismatch");
}

// ---- binary ops ----

template <class R>
Var<R> matmul(const Var<R>& a, const Var<R>& b) {
    if (a.cols() != b.rows()) throw DimensionError("matmul: inner dimensions differ");
    Mat<R> out = kern::matmul(a.value(), b.value());
    auto an = a.node(), bn = b.node();
    return detail::make_op<R>(std::move(out), {an, bn}, [an, bn](Node<R>& self) {
        // dA = dC @ B^T ; dB = A^T @ dC
        if (an->needs_grad) {
            Mat<R> bt = kern::transposed(bn->val);
            an->ensure_grad();
            kern::matmul_acc(self.grad, bt, an->grad);
        }
        if (bn->needs_grad) {
            Mat<R> at = kern::transposed(an->val);
            bn->ensure_grad();
            kern::matmul_acc(at, self.grad, bn->grad);
        }
    });
}

// y = x + b with b a 1 x n row vector broadcast over the rows of x.
template <class R>
Var<R> add_rowvec(const Var<R>& x, const Var<R>& b) {
    if (b.rows() != 1 || b.cols() != x.cols()) throw DimensionError("add_rowvec: bias must be 1 x cols(x)");
    Mat<R> out = x.value();
    for (int i = 0; i < out.rows; ++i)
        for (int j = 0; j < out.cols; ++j) out(i, j) += b.value()(0, j);
    auto xn = x.node(), bn = b.node();
    return detail::make_op<R>(std::move(out), {xn, bn}, [xn, bn](Node<R>& self) {
        if (xn->needs_grad) detail::accumulate(*xn, self.grad);
        if (bn->needs_grad) {
            bn->ensure_grad();
            for (int i = 0; i < self.grad.rows; ++i)
                for (int j = 0; j < self.grad.cols; ++j) bn->grad(0, j) += self.grad(i, j);
        }
    });
}

template <class R>
Var<R> add(const Var<R>& a, const Var<R>& b) {
    check_same_shape(a, b, "add");
    Mat<R> out = a.value();
    for (size_t i = 0; i < out.size(); ++i) out.d[i] += b.value().d[i];
    auto an = a.node(), bn = b.node();
    return detail::make_op<R>(std::move(out), {an, bn}, [an, bn](Node<R>& self) {
        if (an->needs_grad) detail::accumulate(*an, self.grad);
        if (bn->needs_grad) detail::accumulate(*bn, self.grad);
    });
}

template <class R>
Var<R> sub(const Var<R>& a, const Var<R>& b) {
    check_same_shape(a, b, "sub");
    Mat<R> out = a.value();
    for (size_t i = 0; i < out.size(); ++i) out.d[i] -= b.value().d[i];
    auto an = a.node(), bn = b.node();
    return detail::make_op<R>(std::move(out), {an, bn}, [an, bn](Node<R>& self) {
        if (an->needs_grad) detail::accumulate(*an, self.grad);
        if (bn->needs_grad) {
            bn->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) bn->grad.d[i] -= self.grad.d[i];
        }
    });
}

template <class R>
Var<R> mul(const Var<R>& a, const Var<R>& b) {
    check_same_shape(a, b, "mul");
    Mat<R> out = a.value();
    for (size_t i = 0; i < out.size(); ++i) out.d[i] *= b.value().d[i];
    auto an = a.node(), bn = b.node();
    return detail::make_op<R>(std::move(out), {an, bn}, [an, bn](Node<R>& self) {
        if (an->needs_grad) {
            an->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) an->grad.d[i] += self.grad.d[i] * bn->val.d[i];
        }
        if (bn->needs_grad) {
            bn->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) bn->grad.d[i] += self.grad.d[i] * an->val.d[i];
        }
    });
}

// Elementwise minimum; ties route the gradient to the first argument.
template <class R>
Var<R> minimum(const Var<R>& a, const Var<R>& b) {
    check_same_shape(a, b, "minimum");
    Mat<R> out = a.value();
    for (size_t i = 0; i < out.size(); ++i) out.d[i] = std::min(out.d[i], b.value().d[i]);
    auto an = a.node(), bn = b.node();
    return detail::make_op<R>(std::move(out), {an, bn}, [an, bn](Node<R>& self) {
        if (an->needs_grad) an->ensure_grad();
        if (bn->needs_grad) bn->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) {
            const bool first = an->val.d[i] <= bn->val.d[i];
            if (first && an->needs_grad) an->grad.d[i] += self.grad.d[i];
            if (!first && bn->needs_grad) bn->grad.d[i] += self.grad.d[i];
        }
    });
}

// ---- unary ops ----

namespace detail {

template <class R, class FwdF, class GradF>
Var<R> unary(const Var<R>& x, FwdF f, GradF dfdx_from_xy) {
    Mat<R> out(x.rows(), x.cols());
    const Mat<R>& in = x.value();
    for (size_t i = 0; i < in.size(); ++i) out.d[i] = f(in.d[i]);
    auto xn = x.node();
    return make_op<R>(std::move(out), {xn}, [xn, dfdx_from_xy](Node<R>& self) {
        if (!xn->needs_grad) return;
        xn->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i)
            xn->grad.d[i] += self.grad.d[i] * dfdx_from_xy(xn->val.d[i], self.val.d[i]);
    });
}

} // namespace detail

template <class R>
Var<R> neg(const Var<R>& x) {
    return detail::unary<R>(x, [](R v) { return -v; }, [](R, R) { return R(-1); });
}

template <class R>
Var<R> exp_(const Var<R>& x) {
    return detail::unary<R>(x, [](R v) { return std::exp(v); }, [](R, R y) { return y; });
}

template <class R>
Var<R> log_(const Var<R>& x) {
    return detail::unary<R>(x, [](R v) { return std::log(v); }, [](R v, R) { return R(1) / v; });
}

template <class R>
Var<R> tanh_(const Var<R>& x) {
    return detail::unary<R>(x, [](R v) { return std::tanh(v); }, [](R, R y) { return R(1) - y * y; });
}

template <class R>
Var<R> relu(const Var<R>& x) {
    return detail::unary<R>(x, [](R v) { return v > R(0) ? v : R(0); },
                            [](R v, R) { return v > R(0) ? R(1) : R(0); });
}

template <class R>
Var<R> softplus(const Var<R>& x) {
    // log(1 + e^x), computed as max(x,0) + log1p(e^-|x|) for stability
    return detail::unary<R>(
        x, [](R v) { return std::max(v, R(0)) + std::log1p(std::exp(-std::abs(v))); },
        [](R v, R) { return R(1) / (R(1) + std::exp(-v)); });
}

template <class R>
Var<R> square(const Var<R>& x) {
    return detail::unary<R>(x, [](R v) { return v * v; }, [](R v, R) { return R(2) * v; });
}

template <class R>
Var<R> scale(const Var<R>& x, R c) {
    return detail::unary<R>(x, [c](R v) { return c * v; }, [c](R, R) { return c; });
}

template <class R>
Var<R> add_scalar(const Var<R>& x, R c) {
    return detail::unary<R>(x, [c](R v) { return v + c; }, [](R, R) { return R(1); });
}

// clamp with zero gradient outside [lo, hi]
template <class R>
Var<R> clamp(const Var<R>& x, R lo, R hi) {
    return detail::unary<R>(
        x, [lo, hi](R v) { return v < lo ? lo : (v > hi ? hi : v); },
        [lo, hi](R v, R) { return (v < lo || v > hi) ? R(0) : R(1); });
}

template <class R>
Var<R> recip(const Var<R>& x) {
    return detail::unary<R>(x, [](R v) { return R(1) / v; }, [](R v, R) { return R(-1) / (v * v); });
}

// Broadcast a column vector (m x 1) across the columns of a (m x n).
template <class R>
Var<R> mul_colvec(const Var<R>& a, const Var<R>& c) {
    if (c.cols() != 1 || c.rows() != a.rows()) throw DimensionError("mul_colvec: need m x 1 column");
    Mat<R> out = a.value();
    for (int i = 0; i < out.rows; ++i)
        for (int j = 0; j < out.cols; ++j) out(i, j) *= c.value()(i, 0);
    auto an = a.node(), cn = c.node();
    return detail::make_op<R>(std::move(out), {an, cn}, [an, cn](Node<R>& self) {
        if (an->needs_grad) {
            an->ensure_grad();
            for (int i = 0; i < self.grad.rows; ++i)
                for (int j = 0; j < self.grad.cols; ++j)
                    an->grad(i, j) += self.grad(i, j) * cn->val(i, 0);
        }
        if (cn->needs_grad) {
            cn->ensure_grad();
            for (int i = 0; i < self.grad.rows; ++i) {
                R s = 0;
                for (int j = 0; j < self.grad.cols; ++j) s += self.grad(i, j) * an->val(i, j);
                cn->grad(i, 0) += s;
            }
        }
    });
}

template <class R>
Var<R> add_colvec(const Var<R>& a, const Var<R>& c) {
    if (c.cols() != 1 || c.rows() != a.rows()) throw DimensionError("add_colvec: need m x 1 column");
    Mat<R> out = a.value();
    for (int i = 0; i < out.rows; ++i)
        for (int j = 0; j < out.cols; ++j) out(i, j) += c.value()(i, 0);
    auto an = a.node(), cn = c.node();
    return detail::make_op<R>(std::move(out), {an, cn}, [an, cn](Node<R>& self) {
        if (an->needs_grad) detail::accumulate(*an, self.grad);
        if (cn->needs_grad) {
            cn->ensure_grad();
            for (int i = 0; i < self.grad.rows; ++i)
                for (int j = 0; j < self.grad.cols; ++j) cn->grad(i, 0) += self.grad(i, j);
        }
    });
}

// ---- reductions / reshapes ----

template <class R>
Var<R> sum_all(const Var<R>& x) {
    R s = 0;
    for (const R& v : x.value().d) s += v;
    Mat<R> out(1, 1);
    out.d[0] = s;
    auto xn = x.node();
    return detail::make_op<R>(std::move(out), {xn}, [xn](Node<R>& self) {
        if (!xn->needs_grad) return;
        xn->ensure_grad();
        const R g = self.grad.d[0];
        for (auto& gi : xn->grad.d) gi += g;
    });
}

template <class R>
Var<R> mean_all(const Var<R>& x) {
    const R inv = R(1) / static_cast<R>(x.value().size());
    return scale(sum_all(x), inv);
}

// Row-wise sum: (m x n) -> (m x 1).
template <class R>
Var<R> sum_rows(const Var<R>& x) {
    Mat<R> out(x.rows(), 1);
    for (int i = 0; i < x.rows(); ++i) {
        R s = 0;
        for (int j = 0; j < x.cols(); ++j) s += x.value()(i, j);
        out(i, 0) = s;
    }
    auto xn = x.node();
    return detail::make_op<R>(std::move(out), {xn}, [xn](Node<R>& self) {
        if (!xn->needs_grad) return;
        xn->ensure_grad();
        for (int i = 0; i < xn->grad.rows; ++i) {
            const R g = self.grad(i, 0);
            for (int j = 0; j < xn->grad.cols; ++j) xn->grad(i, j) += g;
        }
    });
}

template <class R>
Var<R> concat_cols(const Var<R>& a, const Var<R>& b) {
    if (a.rows() != b.rows()) throw DimensionError("concat_cols: row counts differ");
    Mat<R> out(a.rows(), a.cols() + b.cols());
    for (int i = 0; i < a.rows(); ++i) {
        for (int j = 0; j < a.cols(); ++j) out(i, j) = a.value()(i, j);
        for (int j = 0; j < b.cols(); ++j) out(i, a.cols() + j) = b.value()(i, j);
    }
    auto an = a.node(), bn = b.node();
    const int ac = a.cols();
    return detail::make_op<R>(std::move(out), {an, bn}, [an, bn, ac](Node<R>& self) {
        if (an->needs_grad) {
            an->ensure_grad();
            for (int i = 0; i < an->grad.rows; ++i)
                for (int j = 0; j < ac; ++j) an->grad(i, j) += self.grad(i, j);
        }
        if (bn->needs_grad) {
            bn->ensure_grad();
            for (int i = 0; i < bn->grad.rows; ++i)
                for (int j = 0; j < bn->grad.cols; ++j) bn->grad(i, j) += self.grad(i, ac + j);
        }
    });
}

// Columns [c0, c1) of x.
template <class R>
Var<R> slice_cols(const Var<R>& x, int c0, int c1) {
    if (c0 < 0 || c1 > x.cols() || c0 >= c1) throw DimensionError("slice_cols: bad range");
    Mat<R> out(x.rows(), c1 - c0);
    for (int i = 0; i < x.rows(); ++i)
        for (int j = c0; j < c1; ++j) out(i, j - c0) = x.value()(i, j);
    auto xn = x.node();
    return detail::make_op<R>(std::move(out), {xn}, [xn, c0](Node<R>& self) {
        if (!xn->needs_grad) return;
        xn->ensure_grad();
        for (int i = 0; i < self.grad.rows; ++i)
            for (int j = 0; j < self.grad.cols; ++j) xn->grad(i, c0 + j) += self.grad(i, j);
    });
}

// Column order reversal (the Flip layer of the flow stack).
template <class R>
Var<R> reverse_cols(const Var<R>& x) {
    Mat<R> out(x.rows(), x.cols());
    for (int i = 0; i < x.rows(); ++i)
        for (int j = 0; j < x.cols(); ++j) out(i, j) = x.value()(i, x.cols() - 1 - j);
    auto xn = x.node();
    return detail::make_op<R>(std::move(out), {xn}, [xn](Node<R>& self) {
        if (!xn->needs_grad) return;
        xn->ensure_grad();
        const int c = xn->grad.cols;
        for (int i = 0; i < self.grad.rows; ++i)
            for (int j = 0; j < c; ++j) xn->grad(i, c - 1 - j) += self.grad(i, j);
    });
}

// Value copy severed from the graph.
template <class R>
Var<R> detach(const Var<R>& x) {
    return Var<R>::constant(x.value());
}

// ---- backward ----

template <class R>
void backward(const Var<R>& loss) {
    if (loss.rows() != 1 || loss.cols() != 1) throw ContractError("backward: loss must be a 1x1 scalar");

    if (!loss.node()->needs_grad) return; // nothing reachable requires gradients

    // topological order over the needs_grad subgraph, epoch-stamped DFS.
    // The counter is atomic because independent runs (disjoint graphs) may
    // call backward from different threads.
    static std::atomic<uint64_t> epoch_counter{0};
    const uint64_t epoch = ++epoch_counter;
    auto state_of = [epoch](Node<R>* n) -> int& {
        if (n->visit_epoch != epoch) {
            n->visit_epoch = epoch;
            n->visit_state = 0;
        }
        return n->visit_state;
    };

    std::vector<Node<R>*> order;
    struct Frame {
        Node<R>* n;
        size_t next_parent;
    };
    std::vector<Frame> frames;
    frames.push_back({loss.node().get(), 0});
    state_of(loss.node().get()) = 1;
    while (!frames.empty()) {
        Frame& f = frames.back();
        if (!f.n->leaf && f.n->consumed)
            throw ContractError("backward: graph already consumed; run the forward pass again");
        bool descended = false;
        while (f.next_parent < f.n->parents.size()) {
            Node<R>* p = f.n->parents[f.next_parent++].get();
            if (!p->needs_grad) continue;
            int& st = state_of(p);
            if (st == 0) {
                st = 1;
                frames.push_back({p, 0});
                descended = true;
                break;
            }
        }
        if (!descended && f.next_parent >= f.n->parents.size()) {
            state_of(f.n) = 2;
            order.push_back(f.n);
            frames.pop_back();
        }
    }

    loss.node()->ensure_grad();
    loss.node()->grad.d[0] = R(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<R>* n = *it;
        if (n->vjp && n->has_grad()) n->vjp(*n);
        if (!n->leaf) n->consumed = true;
    }
}

} // namespace apc::ad
