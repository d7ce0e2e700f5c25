#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "rnnlab/tensor.hpp"

namespace rnnlab {

// Reverse-mode differentiation over a recorded operation list.
//
// Usage is record-then-run: ops are recorded with shape checking, leaves are
// bound to values, forward() populates every value slot in record order, and
// backward() sweeps the nodes in strictly reverse order accumulating adjoints.
// Recording keeps the node list topologically sorted by construction (an op
// can only reference Vars that already exist), which is the invariant both
// sweeps rely on. A tape is confined to one thread; re-binding leaves and
// re-running forward() on the same tape is allowed and cheap.

struct Var {
    std::int32_t i = -1;
    bool valid() const { return i >= 0; }
};

enum class OpKind : std::uint8_t {
    Leaf,
    Const,
    Add,
    Sub,
    Mul,
    AddRow,
    MatMul,
    ConcatCols,
    StackRows,
    BroadcastRows,
    Tanh,
    Sigmoid,
    Relu,
    Softplus,
    ExpClamp,
    MinConst,
    Scale,
    AddConst,
    DivEps,
    SumAll,
    SoftmaxCE,
    Embed,
};

inline const char* op_name(OpKind k) {
    switch (k) {
        case OpKind::Leaf: return "leaf";
        case OpKind::Const: return "const";
        case OpKind::Add: return "add";
        case OpKind::Sub: return "sub";
        case OpKind::Mul: return "mul";
        case OpKind::AddRow: return "add_row";
        case OpKind::MatMul: return "matmul";
        case OpKind::ConcatCols: return "concat_cols";
        case OpKind::StackRows: return "stack_rows";
        case OpKind::BroadcastRows: return "broadcast_rows";
        case OpKind::Tanh: return "tanh";
        case OpKind::Sigmoid: return "sigmoid";
        case OpKind::Relu: return "relu";
        case OpKind::Softplus: return "softplus";
        case OpKind::ExpClamp: return "exp_clamp";
        case OpKind::MinConst: return "min_const";
        case OpKind::Scale: return "scale";
        case OpKind::AddConst: return "add_const";
        case OpKind::DivEps: return "div_eps";
        case OpKind::SumAll: return "sum_all";
        case OpKind::SoftmaxCE: return "softmax_ce";
        case OpKind::Embed: return "embed";
    }
    return "?";
}

inline double sigmoid_scalar(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline double softplus_scalar(double x) {
    if (x > 30.0) return x + std::log1p(std::exp(-x));
    return std::log1p(std::exp(x));
}

class Tape {
public:
    using EMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
    using EMapMut = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

    // ---- graph construction -------------------------------------------------

    Var leaf(const std::string& name, Shape shape) {
        if (leaves_.count(name)) fail("tape: duplicate leaf '" + name + "'");
        Var v = push(OpKind::Leaf, {}, Tensor(std::move(shape)));
        leaves_[name] = v.i;
        node(v).bound = false;
        return v;
    }

    Var constant(Tensor value) {
        if (!value.all_finite()) fail("tape: non-finite constant");
        Var v = push(OpKind::Const, {}, std::move(value));
        node(v).bound = true;
        return v;
    }

    void bind(const std::string& name, const Tensor& value) {
        auto it = leaves_.find(name);
        if (it == leaves_.end()) fail("tape: no leaf named '" + name + "'");
        bind(Var{it->second}, value);
    }

    void bind(Var v, const Tensor& value) {
        Node& n = node(v);
        if (n.kind != OpKind::Leaf) fail("tape: bind target is not a leaf");
        if (n.value.dims() != value.dims()) {
            fail("tape: bind shape mismatch for leaf, expected " + shape_str(n.value.dims()) +
                 " got " + shape_str(value.dims()));
        }
        if (!value.all_finite()) fail("tape: non-finite value bound to leaf");
        n.value = value;
        n.bound = true;
    }

    Var add(Var a, Var b) { return binary_same(OpKind::Add, a, b); }
    Var sub(Var a, Var b) { return binary_same(OpKind::Sub, a, b); }
    Var mul(Var a, Var b) { return binary_same(OpKind::Mul, a, b); }

    Var add_row(Var m, Var v) {
        check_rank(m, 2, "add_row");
        check_rank(v, 1, "add_row");
        if (val(m).cols() != val(v).dims()[0]) {
            fail(rec_err("add_row", "matrix " + shape_str(val(m).dims()) + " vs row " +
                         shape_str(val(v).dims())));
        }
        return push(OpKind::AddRow, {m.i, v.i}, Tensor(val(m).dims()));
    }

    Var matmul(Var a, Var b) {
        check_rank(a, 2, "matmul");
        check_rank(b, 2, "matmul");
        if (val(a).cols() != val(b).rows()) {
            fail(rec_err("matmul", "inner extents differ, lhs " + shape_str(val(a).dims()) +
                         " rhs " + shape_str(val(b).dims())));
        }
        return push(OpKind::MatMul, {a.i, b.i}, Tensor(Shape{val(a).rows(), val(b).cols()}));
    }

    Var concat_cols(Var a, Var b) {
        check_rank(a, 2, "concat_cols");
        check_rank(b, 2, "concat_cols");
        if (val(a).rows() != val(b).rows()) {
            fail(rec_err("concat_cols", "row counts differ, " + shape_str(val(a).dims()) + " vs " +
                         shape_str(val(b).dims())));
        }
        return push(OpKind::ConcatCols, {a.i, b.i},
                    Tensor(Shape{val(a).rows(), val(a).cols() + val(b).cols()}));
    }

    Var stack_rows(const std::vector<Var>& parts) {
        if (parts.empty()) fail(rec_err("stack_rows", "no inputs"));
        std::size_t rows = 0;
        const std::size_t cols = val(parts[0]).cols();
        std::vector<std::int32_t> ins;
        for (Var p : parts) {
            check_rank(p, 2, "stack_rows");
            if (val(p).cols() != cols) {
                fail(rec_err("stack_rows", "column counts differ, " + shape_str(val(parts[0]).dims()) +
                             " vs " + shape_str(val(p).dims())));
            }
            rows += val(p).rows();
            ins.push_back(p.i);
        }
        return push(OpKind::StackRows, std::move(ins), Tensor(Shape{rows, cols}));
    }

    Var broadcast_rows(Var v, std::size_t rows) {
        check_rank(v, 1, "broadcast_rows");
        Var out = push(OpKind::BroadcastRows, {v.i}, Tensor(Shape{rows, val(v).dims()[0]}));
        return out;
    }

    Var tanh(Var x) { return unary(OpKind::Tanh, x); }
    Var sigmoid(Var x) { return unary(OpKind::Sigmoid, x); }
    Var relu(Var x) { return unary(OpKind::Relu, x); }
    Var softplus(Var x) { return unary(OpKind::Softplus, x); }

    // exp with the preactivation clamped at `cap`; clamp events are counted
    // per forward pass so training can surface saturated attention.
    Var exp_clamp(Var x, double cap) {
        Var out = unary(OpKind::ExpClamp, x);
        node(out).s0 = cap;
        return out;
    }

    Var min_const(Var x, double cap) {
        Var out = unary(OpKind::MinConst, x);
        node(out).s0 = cap;
        return out;
    }

    Var scale(Var x, double s) {
        Var out = unary(OpKind::Scale, x);
        node(out).s0 = s;
        return out;
    }

    Var add_const(Var x, double s) {
        Var out = unary(OpKind::AddConst, x);
        node(out).s0 = s;
        return out;
    }

    // Elementwise num / (den + eps).
    Var div_eps(Var num, Var den, double eps) {
        if (!val(num).same_shape(val(den))) {
            fail(rec_err("div_eps", "shape mismatch " + shape_str(val(num).dims()) + " vs " +
                         shape_str(val(den).dims())));
        }
        Var out = push(OpKind::DivEps, {num.i, den.i}, Tensor(val(num).dims()));
        node(out).s0 = eps;
        return out;
    }

    Var sum_all(Var x) { return push(OpKind::SumAll, {x.i}, Tensor(Shape{1})); }

    // Weighted mean cross entropy of softmax(logits) against integer targets:
    //   sum_r w_r * ce_r / sum_r w_r
    Var softmax_ce(Var logits, std::vector<std::int64_t> targets, std::vector<double> weights) {
        check_rank(logits, 2, "softmax_ce");
        const std::size_t r = val(logits).rows(), c = val(logits).cols();
        if (targets.size() != r || weights.size() != r) {
            fail(rec_err("softmax_ce", "need one target and weight per row, rows=" + std::to_string(r) +
                         " targets=" + std::to_string(targets.size()) +
                         " weights=" + std::to_string(weights.size())));
        }
        double wsum = 0.0;
        for (std::size_t i = 0; i < r; ++i) {
            if (weights[i] != 0.0) {
                if (targets[i] < 0 || targets[i] >= static_cast<std::int64_t>(c)) {
                    fail(rec_err("softmax_ce", "target " + std::to_string(targets[i]) +
                                 " outside class range " + std::to_string(c)));
                }
            }
            wsum += weights[i];
        }
        if (wsum <= 0.0) fail(rec_err("softmax_ce", "mask selects no rows"));
        Var out = push(OpKind::SoftmaxCE, {logits.i}, Tensor(Shape{1}));
        Node& n = node(out);
        n.iaux = std::move(targets);
        n.daux = std::move(weights);
        n.s0 = wsum;
        n.cache = Tensor(Shape{r, c});
        return out;
    }

    // Row gather: out[r, :] = table[index_r, :]. Gradient scatters back.
    Var embed(Var table, std::vector<std::int64_t> indices) {
        check_rank(table, 2, "embed");
        const std::size_t v = val(table).rows(), e = val(table).cols();
        for (auto ix : indices) {
            if (ix < 0 || ix >= static_cast<std::int64_t>(v)) {
                fail(rec_err("embed", "index " + std::to_string(ix) + " outside table of " +
                             std::to_string(v) + " rows"));
            }
        }
        Var out = push(OpKind::Embed, {table.i}, Tensor(Shape{indices.size(), e}));
        node(out).iaux = std::move(indices);
        return out;
    }

    // Label attached to nodes recorded from here on; shows up in failures.
    void set_context(std::string ctx) {
        contexts_.push_back(std::move(ctx));
        current_ctx_ = static_cast<std::int32_t>(contexts_.size()) - 1;
    }

    // ---- execution ----------------------------------------------------------

    void forward() {
        clamp_events_ = 0;
        for (std::size_t i = 0; i < nodes_.size(); ++i) {
            Node& n = nodes_[i];
            switch (n.kind) {
                case OpKind::Leaf:
                    if (!n.bound) fail("tape forward: unbound leaf '" + leaf_name(i) + "'");
                    continue;
                case OpKind::Const:
                    continue;
                default:
                    compute(n);
            }
            if (!n.value.all_finite()) {
                fail("tape forward: non-finite value from " + std::string(op_name(n.kind)) +
                     ctx_suffix(n));
            }
        }
        forward_done_ = true;
    }

    void backward(Var out, const Tensor& seed) {
        if (!forward_done_) fail("tape backward: forward has not run");
        Node& o = node(out);
        if (!o.value.same_shape(seed)) {
            fail("tape backward: seed shape " + shape_str(seed.dims()) + " does not match output " +
                 shape_str(o.value.dims()));
        }
        for (std::int32_t i = 0; i <= out.i; ++i) {
            Node& n = nodes_[i];
            if (n.adjoint.dims() != n.value.dims()) {
                n.adjoint = Tensor(n.value.dims());
            } else {
                n.adjoint.fill(0.0);
            }
        }
        o.adjoint = seed;
        for (std::int32_t i = out.i; i >= 0; --i) {
            pull(nodes_[i]);
        }
        backward_done_ = true;
        backward_top_ = out.i;
    }

    const Tensor& value(Var v) const { return nodes_.at(v.i).value; }

    const Tensor& grad(Var v) const {
        if (!backward_done_) fail("tape grad: backward has not run");
        if (v.i > backward_top_) fail("tape grad: node not covered by last backward pass");
        return nodes_.at(v.i).adjoint;
    }

    const Tensor& grad(const std::string& leaf_name) const {
        auto it = leaves_.find(leaf_name);
        if (it == leaves_.end()) fail("tape grad: no leaf named '" + leaf_name + "'");
        return grad(Var{it->second});
    }

    std::uint64_t clamp_events() const { return clamp_events_; }
    std::size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        OpKind kind;
        std::vector<std::int32_t> ins;
        Tensor value;
        Tensor adjoint;
        double s0 = 0.0;
        std::vector<std::int64_t> iaux;
        std::vector<double> daux;
        Tensor cache;
        std::int32_t ctx = -1;
        bool bound = true;
    };

    std::vector<Node> nodes_;
    std::map<std::string, std::int32_t> leaves_;
    std::vector<std::string> contexts_;
    std::int32_t current_ctx_ = -1;
    std::uint64_t clamp_events_ = 0;
    bool forward_done_ = false;
    bool backward_done_ = false;
    std::int32_t backward_top_ = -1;

    Node& node(Var v) { return nodes_.at(v.i); }
    const Tensor& val(Var v) const { return nodes_.at(v.i).value; }

    std::string leaf_name(std::size_t idx) const {
        for (const auto& [name, i] : leaves_) {
            if (i == static_cast<std::int32_t>(idx)) return name;
        }
        return "?";
    }

    std::string ctx_suffix(const Node& n) const {
        if (n.ctx < 0) return "";
        return " (" + contexts_[n.ctx] + ")";
    }

    std::string rec_err(const char* op, const std::string& detail) const {
        std::string s = std::string("tape ") + op + ": " + detail;
        if (current_ctx_ >= 0) s += " (" + contexts_[current_ctx_] + ")";
        return s;
    }

    Var push(OpKind kind, std::vector<std::int32_t> ins, Tensor value) {
        Node n;
        n.kind = kind;
        n.ins = std::move(ins);
        n.value = std::move(value);
        n.ctx = current_ctx_;
        nodes_.push_back(std::move(n));
        forward_done_ = false;
        return Var{static_cast<std::int32_t>(nodes_.size()) - 1};
    }

    Var unary(OpKind kind, Var x) { return push(kind, {x.i}, Tensor(val(x).dims())); }

    Var binary_same(OpKind kind, Var a, Var b) {
        if (!val(a).same_shape(val(b))) {
            fail(rec_err(op_name(kind), "shape mismatch " + shape_str(val(a).dims()) + " vs " +
                         shape_str(val(b).dims())));
        }
        return push(kind, {a.i, b.i}, Tensor(val(a).dims()));
    }

    void check_rank(Var v, std::size_t r, const char* op) const {
        if (val(v).rank() != r) {
            fail(rec_err(op, "expected rank-" + std::to_string(r) + " input, got " +
                         shape_str(val(v).dims())));
        }
    }

    void compute(Node& n) {
        switch (n.kind) {
            case OpKind::Add: {
                const Tensor &a = in(n, 0), &b = in(n, 1);
                for (std::size_t i = 0; i < a.size(); ++i) n.value[i] = a[i] + b[i];
                break;
            }
            case OpKind::Sub: {
                const Tensor &a = in(n, 0), &b = in(n, 1);
                for (std::size_t i = 0; i < a.size(); ++i) n.value[i] = a[i] - b[i];
                break;
            }
            case OpKind::Mul: {
                const Tensor &a = in(n, 0), &b = in(n, 1);
                for (std::size_t i = 0; i < a.size(); ++i) n.value[i] = a[i] * b[i];
                break;
            }
            case OpKind::AddRow: {
                const Tensor &m = in(n, 0), &v = in(n, 1);
                const std::size_t r = m.rows(), c = m.cols();
                for (std::size_t i = 0; i < r; ++i) {
                    for (std::size_t j = 0; j < c; ++j) n.value.at(i, j) = m.at(i, j) + v[j];
                }
                break;
            }
            case OpKind::MatMul: {
                const Tensor &a = in(n, 0), &b = in(n, 1);
                EMapMut(n.value.data(), a.rows(), b.cols()).noalias() =
                    EMap(a.data(), a.rows(), a.cols()) * EMap(b.data(), b.rows(), b.cols());
                break;
            }
            case OpKind::ConcatCols: {
                const Tensor &a = in(n, 0), &b = in(n, 1);
                const std::size_t r = a.rows(), ca = a.cols(), cb = b.cols();
                for (std::size_t i = 0; i < r; ++i) {
                    for (std::size_t j = 0; j < ca; ++j) n.value.at(i, j) = a.at(i, j);
                    for (std::size_t j = 0; j < cb; ++j) n.value.at(i, ca + j) = b.at(i, j);
                }
                break;
            }
            case OpKind::StackRows: {
                std::size_t ro = 0;
                for (auto idx : n.ins) {
                    const Tensor& p = nodes_[idx].value;
                    for (std::size_t i = 0; i < p.size(); ++i) n.value[ro * p.cols() + i] = p[i];
                    ro += p.rows();
                }
                break;
            }
            case OpKind::BroadcastRows: {
                const Tensor& v = in(n, 0);
                const std::size_t r = n.value.rows(), c = n.value.cols();
                for (std::size_t i = 0; i < r; ++i) {
                    for (std::size_t j = 0; j < c; ++j) n.value.at(i, j) = v[j];
                }
                break;
            }
            case OpKind::Tanh: {
                const Tensor& x = in(n, 0);
                for (std::size_t i = 0; i < x.size(); ++i) n.value[i] = std::tanh(x[i]);
                break;
            }
            case OpKind::Sigmoid: {
                const Tensor& x = in(n, 0);
                for (std::size_t i = 0; i < x.size(); ++i) n.value[i] = sigmoid_scalar(x[i]);
                break;
            }
            case OpKind::Relu: {
                const Tensor& x = in(n, 0);
                for (std::size_t i = 0; i < x.size(); ++i) n.value[i] = x[i] > 0.0 ? x[i] : 0.0;
                break;
            }
            case OpKind::Softplus: {
                const Tensor& x = in(n, 0);
                for (std::size_t i = 0; i < x.size(); ++i) n.value[i] = softplus_scalar(x[i]);
                break;
            }
            case OpKind::ExpClamp: {
                const Tensor& x = in(n, 0);
                for (std::size_t i = 0; i < x.size(); ++i) {
                    if (x[i] > n.s0) {
                        ++clamp_events_;
                        n.value[i] = std::exp(n.s0);
                    } else {
                        n.value[i] = std::exp(x[i]);
                    }
                }
                break;
            }
            case OpKind::MinConst: {
                const Tensor& x = in(n, 0);
                for (std::size_t i = 0; i < x.size(); ++i) n.value[i] = std::min(x[i], n.s0);
                break;
            }
            case OpKind::Scale: {
                const Tensor& x = in(n, 0);
                for (std::size_t i = 0; i < x.size(); ++i) n.value[i] = n.s0 * x[i];
                break;
            }
            case OpKind::AddConst: {
                const Tensor& x = in(n, 0);
                for (std::size_t i = 0; i < x.size(); ++i) n.value[i] = x[i] + n.s0;
                break;
            }
            case OpKind::DivEps: {
                const Tensor &num = in(n, 0), &den = in(n, 1);
                for (std::size_t i = 0; i < num.size(); ++i) n.value[i] = num[i] / (den[i] + n.s0);
                break;
            }
            case OpKind::SumAll: {
                const Tensor& x = in(n, 0);
                double s = 0.0;
                for (std::size_t i = 0; i < x.size(); ++i) s += x[i];
                n.value[0] = s;
                break;
            }
            case OpKind::SoftmaxCE: {
                const Tensor& l = in(n, 0);
                const std::size_t r = l.rows(), c = l.cols();
                double loss = 0.0;
                for (std::size_t i = 0; i < r; ++i) {
                    double m = l.at(i, 0);
                    for (std::size_t j = 1; j < c; ++j) m = std::max(m, l.at(i, j));
                    double z = 0.0;
                    for (std::size_t j = 0; j < c; ++j) z += std::exp(l.at(i, j) - m);
                    const double lse = m + std::log(z);
                    for (std::size_t j = 0; j < c; ++j) n.cache.at(i, j) = std::exp(l.at(i, j) - lse);
                    if (n.daux[i] != 0.0) {
                        loss += n.daux[i] * (lse - l.at(i, static_cast<std::size_t>(n.iaux[i])));
                    }
                }
                n.value[0] = loss / n.s0;
                break;
            }
            case OpKind::Embed: {
                const Tensor& t = in(n, 0);
                const std::size_t e = t.cols();
                for (std::size_t i = 0; i < n.iaux.size(); ++i) {
                    const double* src = t.data() + static_cast<std::size_t>(n.iaux[i]) * e;
                    double* dst = n.value.data() + i * e;
                    for (std::size_t j = 0; j < e; ++j) dst[j] = src[j];
                }
                break;
            }
            case OpKind::Leaf:
            case OpKind::Const:
                break;
        }
    }

    const Tensor& in(const Node& n, std::size_t k) const { return nodes_[n.ins[k]].value; }
    Tensor& adj(const Node& n, std::size_t k) { return nodes_[n.ins[k]].adjoint; }

    void pull(Node& n) {
        const Tensor& g = n.adjoint;
        switch (n.kind) {
            case OpKind::Leaf:
            case OpKind::Const:
                break;
            case OpKind::Add: {
                Tensor &da = adj(n, 0), &db = adj(n, 1);
                for (std::size_t i = 0; i < g.size(); ++i) {
                    da[i] += g[i];
                    db[i] += g[i];
                }
                break;
            }
            case OpKind::Sub: {
                Tensor &da = adj(n, 0), &db = adj(n, 1);
                for (std::size_t i = 0; i < g.size(); ++i) {
                    da[i] += g[i];
                    db[i] -= g[i];
                }
                break;
            }
            case OpKind::Mul: {
                const Tensor &a = in(n, 0), &b = in(n, 1);
                Tensor &da = adj(n, 0), &db = adj(n, 1);
                for (std::size_t i = 0; i < g.size(); ++i) {
                    da[i] += g[i] * b[i];
                    db[i] += g[i] * a[i];
                }
                break;
            }
            case OpKind::AddRow: {
                Tensor &dm = adj(n, 0), &dv = adj(n, 1);
                const std::size_t r = g.rows(), c = g.cols();
                for (std::size_t i = 0; i < r; ++i) {
                    for (std::size_t j = 0; j < c; ++j) {
                        dm.at(i, j) += g.at(i, j);
                        dv[j] += g.at(i, j);
                    }
                }
                break;
            }
            case OpKind::MatMul: {
                const Tensor &a = in(n, 0), &b = in(n, 1);
                Tensor &da = adj(n, 0), &db = adj(n, 1);
                EMapMut(da.data(), a.rows(), a.cols()).noalias() +=
                    EMap(g.data(), g.rows(), g.cols()) * EMap(b.data(), b.rows(), b.cols()).transpose();
                EMapMut(db.data(), b.rows(), b.cols()).noalias() +=
                    EMap(a.data(), a.rows(), a.cols()).transpose() * EMap(g.data(), g.rows(), g.cols());
                break;
            }
            case OpKind::ConcatCols: {
                Tensor &da = adj(n, 0), &db = adj(n, 1);
                const std::size_t r = g.rows(), ca = da.cols(), cb = db.cols();
                for (std::size_t i = 0; i < r; ++i) {
                    for (std::size_t j = 0; j < ca; ++j) da.at(i, j) += g.at(i, j);
                    for (std::size_t j = 0; j < cb; ++j) db.at(i, j) += g.at(i, ca + j);
                }
                break;
            }
            case OpKind::StackRows: {
                std::size_t ro = 0;
                for (auto idx : n.ins) {
                    Tensor& dp = nodes_[idx].adjoint;
                    const std::size_t sz = dp.size();
                    const double* src = g.data() + ro * g.cols();
                    for (std::size_t i = 0; i < sz; ++i) dp[i] += src[i];
                    ro += dp.rows();
                }
                break;
            }
            case OpKind::BroadcastRows: {
                Tensor& dv = adj(n, 0);
                const std::size_t r = g.rows(), c = g.cols();
                for (std::size_t i = 0; i < r; ++i) {
                    for (std::size_t j = 0; j < c; ++j) dv[j] += g.at(i, j);
                }
                break;
            }
            case OpKind::Tanh: {
                Tensor& dx = adj(n, 0);
                for (std::size_t i = 0; i < g.size(); ++i) {
                    dx[i] += g[i] * (1.0 - n.value[i] * n.value[i]);
                }
                break;
            }
            case OpKind::Sigmoid: {
                Tensor& dx = adj(n, 0);
                for (std::size_t i = 0; i < g.size(); ++i) {
                    dx[i] += g[i] * n.value[i] * (1.0 - n.value[i]);
                }
                break;
            }
            case OpKind::Relu: {
                const Tensor& x = in(n, 0);
                Tensor& dx = adj(n, 0);
                for (std::size_t i = 0; i < g.size(); ++i) {
                    if (x[i] > 0.0) dx[i] += g[i];
                }
                break;
            }
            case OpKind::Softplus: {
                const Tensor& x = in(n, 0);
                Tensor& dx = adj(n, 0);
                for (std::size_t i = 0; i < g.size(); ++i) {
                    dx[i] += g[i] * sigmoid_scalar(x[i]);
                }
                break;
            }
            case OpKind::ExpClamp: {
                const Tensor& x = in(n, 0);
                Tensor& dx = adj(n, 0);
                for (std::size_t i = 0; i < g.size(); ++i) {
                    if (x[i] <= n.s0) dx[i] += g[i] * n.value[i];
                }
                break;
            }
            case OpKind::MinConst: {
                const Tensor& x = in(n, 0);
                Tensor& dx = adj(n, 0);
                for (std::size_t i = 0; i < g.size(); ++i) {
                    if (x[i] < n.s0) dx[i] += g[i];
                }
                break;
            }
            case OpKind::Scale: {
                Tensor& dx = adj(n, 0);
                for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * n.s0;
                break;
            }
            case OpKind::AddConst: {
                Tensor& dx = adj(n, 0);
                for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
                break;
            }
            case OpKind::DivEps: {
                const Tensor& den = in(n, 1);
                Tensor &dn = adj(n, 0), &dd = adj(n, 1);
                for (std::size_t i = 0; i < g.size(); ++i) {
                    const double inv = 1.0 / (den[i] + n.s0);
                    dn[i] += g[i] * inv;
                    dd[i] -= g[i] * n.value[i] * inv;
                }
                break;
            }
            case OpKind::SumAll: {
                Tensor& dx = adj(n, 0);
                for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g[0];
                break;
            }
            case OpKind::SoftmaxCE: {
                Tensor& dl = adj(n, 0);
                const std::size_t r = dl.rows(), c = dl.cols();
                const double s = g[0] / n.s0;
                for (std::size_t i = 0; i < r; ++i) {
                    if (n.daux[i] == 0.0) continue;
                    const double w = s * n.daux[i];
                    for (std::size_t j = 0; j < c; ++j) dl.at(i, j) += w * n.cache.at(i, j);
                    dl.at(i, static_cast<std::size_t>(n.iaux[i])) -= w;
                }
                break;
            }
            case OpKind::Embed: {
                Tensor& dt = adj(n, 0);
                const std::size_t e = dt.cols();
                for (std::size_t i = 0; i < n.iaux.size(); ++i) {
                    double* dst = dt.data() + static_cast<std::size_t>(n.iaux[i]) * e;
                    const double* src = g.data() + i * e;
                    for (std::size_t j = 0; j < e; ++j) dst[j] += src[j];
                }
                break;
            }
        }
    }
};

}  // namespace rnnlab
