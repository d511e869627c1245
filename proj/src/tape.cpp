// SPDX-License-Identifier: Apache-2.0
#include "magpred/tape.hpp"

#include <algorithm>
#include <cmath>

namespace magpred {

namespace {

void matmul_kernel(const Tensor& a, const Tensor& b, Tensor& out) {
    const int n = a.rows(), k = a.cols(), m = b.cols();
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
    for (int i = 0; i < n; ++i) {
        double* orow = po + static_cast<std::size_t>(i) * m;
        const double* arow = pa + static_cast<std::size_t>(i) * k;
        for (int kk = 0; kk < k; ++kk) {
            const double av = arow[kk];
            const double* brow = pb + static_cast<std::size_t>(kk) * m;
            for (int j = 0; j < m; ++j) orow[j] += av * brow[j];
        }
    }
}

double stable_sigmoid(double x) {
    double y;
    if (x >= 0.0) {
        y = 1.0 / (1.0 + std::exp(-x));
    } else {
        const double e = std::exp(x);
        y = e / (1.0 + e);
    }
    // keep strictly inside (0,1) so log D and log(1-D) stay finite
    return std::min(1.0 - 1e-12, std::max(1e-12, y));
}

[[noreturn]] void shape_fail(const char* op, const Tensor& a, const Tensor& b,
                             std::size_t op_index) {
    throw ShapeError(std::string(op) + ": incompatible shapes " + a.shape_str() +
                     " and " + b.shape_str() + " at op " + std::to_string(op_index));
}

[[noreturn]] void shape_fail(const char* op, const Tensor& a, std::size_t op_index) {
    throw ShapeError(std::string(op) + ": invalid shape " + a.shape_str() + " at op " +
                     std::to_string(op_index));
}

}  // namespace

void Tape::eval(Node& n) const {
    const Tensor* a = n.a >= 0 ? &nodes_[static_cast<std::size_t>(n.a)].value : nullptr;
    const Tensor* b = n.b >= 0 ? &nodes_[static_cast<std::size_t>(n.b)].value : nullptr;
    switch (n.op) {
        case Op::Leaf:
        case Op::Const:
            break;
        case Op::MatMul:
            n.value = Tensor(a->rows(), b->cols());
            matmul_kernel(*a, *b, n.value);
            break;
        case Op::Add: {
            n.value = *a;
            const double* pb = b->data();
            double* po = n.value.data();
            for (std::size_t i = 0; i < n.value.size(); ++i) po[i] += pb[i];
            break;
        }
        case Op::AddRow: {
            n.value = *a;
            const int m = a->cols();
            const double* pb = b->data();
            for (int i = 0; i < a->rows(); ++i) {
                double* row = n.value.data() + static_cast<std::size_t>(i) * m;
                for (int j = 0; j < m; ++j) row[j] += pb[j];
            }
            break;
        }
        case Op::Sub: {
            n.value = *a;
            const double* pb = b->data();
            double* po = n.value.data();
            for (std::size_t i = 0; i < n.value.size(); ++i) po[i] -= pb[i];
            break;
        }
        case Op::Mul: {
            n.value = *a;
            const double* pb = b->data();
            double* po = n.value.data();
            for (std::size_t i = 0; i < n.value.size(); ++i) po[i] *= pb[i];
            break;
        }
        case Op::Div: {
            n.value = *a;
            const double* pb = b->data();
            double* po = n.value.data();
            for (std::size_t i = 0; i < n.value.size(); ++i) po[i] /= pb[i];
            break;
        }
        case Op::Scale: {
            n.value = *a;
            for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] *= n.c;
            break;
        }
        case Op::Neg: {
            n.value = *a;
            for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] = -n.value[i];
            break;
        }
        case Op::Transpose: {
            n.value = Tensor(a->cols(), a->rows());
            for (int i = 0; i < a->rows(); ++i)
                for (int j = 0; j < a->cols(); ++j) n.value(j, i) = (*a)(i, j);
            break;
        }
        case Op::ConcatCols: {
            n.value = Tensor(a->rows(), a->cols() + b->cols());
            for (int i = 0; i < a->rows(); ++i) {
                for (int j = 0; j < a->cols(); ++j) n.value(i, j) = (*a)(i, j);
                for (int j = 0; j < b->cols(); ++j) n.value(i, a->cols() + j) = (*b)(i, j);
            }
            break;
        }
        case Op::SliceCols: {
            n.value = Tensor(a->rows(), n.i1 - n.i0);
            for (int i = 0; i < a->rows(); ++i)
                for (int j = n.i0; j < n.i1; ++j) n.value(i, j - n.i0) = (*a)(i, j);
            break;
        }
        case Op::PadCols: {
            n.value = Tensor(a->rows(), n.i1);
            for (int i = 0; i < a->rows(); ++i)
                for (int j = 0; j < a->cols(); ++j) n.value(i, n.i0 + j) = (*a)(i, j);
            break;
        }
        case Op::ClampMin: {
            n.value = *a;
            for (std::size_t i = 0; i < n.value.size(); ++i)
                n.value[i] = std::max(n.value[i], n.c);
            break;
        }
        case Op::Tanh: {
            n.value = *a;
            for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] = std::tanh(n.value[i]);
            break;
        }
        case Op::Sigmoid: {
            n.value = *a;
            for (std::size_t i = 0; i < n.value.size(); ++i)
                n.value[i] = stable_sigmoid(n.value[i]);
            break;
        }
        case Op::Relu: {
            n.value = *a;
            for (std::size_t i = 0; i < n.value.size(); ++i)
                n.value[i] = n.value[i] > 0.0 ? n.value[i] : 0.0;
            break;
        }
        case Op::Log: {
            n.value = *a;
            for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] = std::log(n.value[i]);
            break;
        }
        case Op::Exp: {
            n.value = *a;
            // 709.78 is the largest finite-exp argument in f64
            for (std::size_t i = 0; i < n.value.size(); ++i)
                n.value[i] = std::exp(std::min(n.value[i], 709.0));
            break;
        }
        case Op::Square: {
            n.value = *a;
            for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] *= n.value[i];
            break;
        }
        case Op::Sum: {
            double s = 0.0;
            for (std::size_t i = 0; i < a->size(); ++i) s += (*a)[i];
            n.value = Tensor::scalar(s);
            break;
        }
        case Op::SumRows: {
            n.value = Tensor(1, a->cols());
            for (int i = 0; i < a->rows(); ++i)
                for (int j = 0; j < a->cols(); ++j) n.value(0, j) += (*a)(i, j);
            break;
        }
        case Op::BcastRows: {
            n.value = Tensor(n.i0, a->cols());
            for (int i = 0; i < n.i0; ++i)
                for (int j = 0; j < a->cols(); ++j) n.value(i, j) = (*a)(0, j);
            break;
        }
        case Op::BcastScalar: {
            n.value = Tensor::full(n.i0, n.i1, (*a)[0]);
            break;
        }
    }
}

Var Tape::emit(Node n) {
    if (n.op != Op::Leaf && n.op != Op::Const) {
        n.grad = (n.a >= 0 && nodes_[static_cast<std::size_t>(n.a)].grad) ||
                 (n.b >= 0 && nodes_[static_cast<std::size_t>(n.b)].grad);
        eval(n);
    }
    nodes_.push_back(std::move(n));
    return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::leaf(Tensor v) {
    Node n;
    n.op = Op::Leaf;
    n.grad = true;
    n.value = std::move(v);
    return emit(std::move(n));
}

Var Tape::constant(Tensor v) {
    Node n;
    n.op = Op::Const;
    n.value = std::move(v);
    return emit(std::move(n));
}

void Tape::recompute() {
    for (Node& n : nodes_) eval(n);
}

// --- primitive constructors -------------------------------------------------

namespace {
Tape& same_tape(Var a, Var b, const char* op) {
    if (a.tape() != b.tape())
        throw std::invalid_argument(std::string(op) + ": operands belong to different tapes");
    return *a.tape();
}
Node binary(Op op, Var a, Var b) {
    Node n;
    n.op = op;
    n.a = a.id();
    n.b = b.id();
    return n;
}
Node unary(Op op, Var a) {
    Node n;
    n.op = op;
    n.a = a.id();
    return n;
}
}  // namespace

Var matmul(Var a, Var b) {
    Tape& t = same_tape(a, b, "matmul");
    if (a.value().cols() != b.value().rows())
        shape_fail("matmul", a.value(), b.value(), t.size());
    return t.emit(binary(Op::MatMul, a, b));
}

Var add(Var a, Var b) {
    Tape& t = same_tape(a, b, "add");
    if (!a.value().same_shape(b.value())) shape_fail("add", a.value(), b.value(), t.size());
    return t.emit(binary(Op::Add, a, b));
}

Var add_row(Var a, Var row) {
    Tape& t = same_tape(a, row, "add_row");
    if (row.value().rows() != 1 || row.value().cols() != a.value().cols())
        shape_fail("add_row", a.value(), row.value(), t.size());
    return t.emit(binary(Op::AddRow, a, row));
}

Var sub(Var a, Var b) {
    Tape& t = same_tape(a, b, "sub");
    if (!a.value().same_shape(b.value())) shape_fail("sub", a.value(), b.value(), t.size());
    return t.emit(binary(Op::Sub, a, b));
}

Var mul(Var a, Var b) {
    Tape& t = same_tape(a, b, "mul");
    if (!a.value().same_shape(b.value())) shape_fail("mul", a.value(), b.value(), t.size());
    return t.emit(binary(Op::Mul, a, b));
}

Var div(Var a, Var b) {
    Tape& t = same_tape(a, b, "div");
    if (!a.value().same_shape(b.value())) shape_fail("div", a.value(), b.value(), t.size());
    return t.emit(binary(Op::Div, a, b));
}

Var scale(Var a, double c) {
    Node n = unary(Op::Scale, a);
    n.c = c;
    return a.tape()->emit(std::move(n));
}

Var neg(Var a) { return a.tape()->emit(unary(Op::Neg, a)); }
Var transpose(Var a) { return a.tape()->emit(unary(Op::Transpose, a)); }

Var concat_cols(Var a, Var b) {
    Tape& t = same_tape(a, b, "concat_cols");
    if (a.value().rows() != b.value().rows())
        shape_fail("concat_cols", a.value(), b.value(), t.size());
    return t.emit(binary(Op::ConcatCols, a, b));
}

Var slice_cols(Var a, int c0, int c1) {
    Tape& t = *a.tape();
    if (c0 < 0 || c1 > a.value().cols() || c0 >= c1)
        shape_fail("slice_cols", a.value(), t.size());
    Node n = unary(Op::SliceCols, a);
    n.i0 = c0;
    n.i1 = c1;
    return t.emit(std::move(n));
}

Var pad_cols(Var a, int c0, int total_cols) {
    Tape& t = *a.tape();
    if (c0 < 0 || c0 + a.value().cols() > total_cols)
        shape_fail("pad_cols", a.value(), t.size());
    Node n = unary(Op::PadCols, a);
    n.i0 = c0;
    n.i1 = total_cols;
    return t.emit(std::move(n));
}

Var clamp_min(Var a, double floor) {
    Node n = unary(Op::ClampMin, a);
    n.c = floor;
    return a.tape()->emit(std::move(n));
}

Var tanh(Var a) { return a.tape()->emit(unary(Op::Tanh, a)); }
Var sigmoid(Var a) { return a.tape()->emit(unary(Op::Sigmoid, a)); }
Var relu(Var a) { return a.tape()->emit(unary(Op::Relu, a)); }
Var log_raw(Var a) { return a.tape()->emit(unary(Op::Log, a)); }
Var exp(Var a) { return a.tape()->emit(unary(Op::Exp, a)); }
Var square(Var a) { return a.tape()->emit(unary(Op::Square, a)); }
Var sum(Var a) { return a.tape()->emit(unary(Op::Sum, a)); }

Var sum_rows(Var a) { return a.tape()->emit(unary(Op::SumRows, a)); }

Var broadcast_rows(Var a, int rows) {
    Tape& t = *a.tape();
    if (a.value().rows() != 1) shape_fail("broadcast_rows", a.value(), t.size());
    Node n = unary(Op::BcastRows, a);
    n.i0 = rows;
    return t.emit(std::move(n));
}

Var broadcast_scalar(Var a, int rows, int cols) {
    Tape& t = *a.tape();
    if (!a.value().is_scalar()) shape_fail("broadcast_scalar", a.value(), t.size());
    Node n = unary(Op::BcastScalar, a);
    n.i0 = rows;
    n.i1 = cols;
    return t.emit(std::move(n));
}

Var mean(Var a) {
    return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

// --- backward ----------------------------------------------------------------

namespace {

// Derivative mask of max(x, c) / relu as a constant: the kink is flat below,
// slope one at and above the threshold.
Tensor threshold_mask(const Tensor& x, double floor) {
    Tensor m(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) m[i] = x[i] >= floor ? 1.0 : 0.0;
    return m;
}

struct BackwardPass {
    Tape& tape;
    std::vector<Var> adj;  // adjoint expression per node id, empty Var if none

    void accumulate(int id, Var g) {
        Var& slot = adj[static_cast<std::size_t>(id)];
        slot = slot ? add(slot, g) : g;
    }
};

}  // namespace

std::vector<Var> backward(Var loss, const std::vector<Var>& wrt) {
    Tape& t = *loss.tape();
    if (!loss.value().is_scalar())
        throw ShapeError("backward: loss must be scalar, got " + loss.value().shape_str());

    const int top = loss.id();

    // ancestors of the loss
    std::vector<char> anc(static_cast<std::size_t>(top) + 1, 0);
    anc[static_cast<std::size_t>(top)] = 1;
    for (int id = top; id >= 0; --id) {
        if (!anc[static_cast<std::size_t>(id)]) continue;
        const Node& n = t.node(id);
        if (n.a >= 0) anc[static_cast<std::size_t>(n.a)] = 1;
        if (n.b >= 0) anc[static_cast<std::size_t>(n.b)] = 1;
    }

    // nodes that can reach one of the requested parameters
    std::vector<char> reach(static_cast<std::size_t>(top) + 1, 0);
    for (const Var& w : wrt)
        if (w.id() <= top) reach[static_cast<std::size_t>(w.id())] = 1;
    for (int id = 0; id <= top; ++id) {
        const Node& n = t.node(id);
        if ((n.a >= 0 && reach[static_cast<std::size_t>(n.a)]) ||
            (n.b >= 0 && reach[static_cast<std::size_t>(n.b)]))
            reach[static_cast<std::size_t>(id)] = 1;
    }

    BackwardPass bp{t, std::vector<Var>(static_cast<std::size_t>(top) + 1)};
    bp.adj[static_cast<std::size_t>(top)] = t.constant(Tensor::scalar(1.0));

    for (int id = top; id >= 0; --id) {
        if (!anc[static_cast<std::size_t>(id)] || !reach[static_cast<std::size_t>(id)])
            continue;
        Var g = bp.adj[static_cast<std::size_t>(id)];
        if (!g) continue;
        // copy fields: emitting adjoint nodes may reallocate the node vector
        const Node n = t.node(id);
        const bool prop_a = n.a >= 0 && t.node(n.a).grad && reach[static_cast<std::size_t>(n.a)];
        const bool prop_b = n.b >= 0 && t.node(n.b).grad && reach[static_cast<std::size_t>(n.b)];
        if (!prop_a && !prop_b) continue;
        Var va(&t, n.a), vb(&t, n.b);
        Var self(&t, id);
        switch (n.op) {
            case Op::Leaf:
            case Op::Const:
                break;
            case Op::MatMul:
                if (prop_a) bp.accumulate(n.a, matmul(g, transpose(vb)));
                if (prop_b) bp.accumulate(n.b, matmul(transpose(va), g));
                break;
            case Op::Add:
                if (prop_a) bp.accumulate(n.a, g);
                if (prop_b) bp.accumulate(n.b, g);
                break;
            case Op::AddRow:
                if (prop_a) bp.accumulate(n.a, g);
                if (prop_b) bp.accumulate(n.b, sum_rows(g));
                break;
            case Op::Sub:
                if (prop_a) bp.accumulate(n.a, g);
                if (prop_b) bp.accumulate(n.b, neg(g));
                break;
            case Op::Mul:
                if (prop_a) bp.accumulate(n.a, mul(g, vb));
                if (prop_b) bp.accumulate(n.b, mul(g, va));
                break;
            case Op::Div:
                if (prop_a) bp.accumulate(n.a, div(g, vb));
                if (prop_b) bp.accumulate(n.b, neg(div(mul(g, va), square(vb))));
                break;
            case Op::Scale:
                if (prop_a) bp.accumulate(n.a, scale(g, n.c));
                break;
            case Op::Neg:
                if (prop_a) bp.accumulate(n.a, neg(g));
                break;
            case Op::Transpose:
                if (prop_a) bp.accumulate(n.a, transpose(g));
                break;
            case Op::ConcatCols: {
                const int ca = t.node(n.a).value.cols();
                const int cb = t.node(n.b).value.cols();
                if (prop_a) bp.accumulate(n.a, slice_cols(g, 0, ca));
                if (prop_b) bp.accumulate(n.b, slice_cols(g, ca, ca + cb));
                break;
            }
            case Op::SliceCols:
                if (prop_a) bp.accumulate(n.a, pad_cols(g, n.i0, t.node(n.a).value.cols()));
                break;
            case Op::PadCols:
                if (prop_a) {
                    const int w = t.node(n.a).value.cols();
                    bp.accumulate(n.a, slice_cols(g, n.i0, n.i0 + w));
                }
                break;
            case Op::ClampMin:
                if (prop_a)
                    bp.accumulate(n.a, mul(g, t.constant(threshold_mask(va.value(), n.c))));
                break;
            case Op::Tanh:
                if (prop_a) {
                    Var ones = t.constant(Tensor::full(n.value.rows(), n.value.cols(), 1.0));
                    bp.accumulate(n.a, mul(g, sub(ones, square(self))));
                }
                break;
            case Op::Sigmoid:
                if (prop_a) {
                    Var ones = t.constant(Tensor::full(n.value.rows(), n.value.cols(), 1.0));
                    bp.accumulate(n.a, mul(g, mul(self, sub(ones, self))));
                }
                break;
            case Op::Relu:
                if (prop_a)
                    bp.accumulate(n.a, mul(g, t.constant(threshold_mask(va.value(), 0.0))));
                break;
            case Op::Log:
                if (prop_a) bp.accumulate(n.a, div(g, va));
                break;
            case Op::Exp:
                if (prop_a) bp.accumulate(n.a, mul(g, self));
                break;
            case Op::Square:
                if (prop_a) bp.accumulate(n.a, mul(g, scale(va, 2.0)));
                break;
            case Op::Sum: {
                const Tensor& av = t.node(n.a).value;
                if (prop_a) bp.accumulate(n.a, broadcast_scalar(g, av.rows(), av.cols()));
                break;
            }
            case Op::SumRows:
                if (prop_a) bp.accumulate(n.a, broadcast_rows(g, t.node(n.a).value.rows()));
                break;
            case Op::BcastRows:
                if (prop_a) bp.accumulate(n.a, sum_rows(g));
                break;
            case Op::BcastScalar:
                if (prop_a) bp.accumulate(n.a, sum(g));
                break;
        }
    }

    std::vector<Var> grads;
    grads.reserve(wrt.size());
    for (const Var& w : wrt) {
        Var g = w.id() <= top ? bp.adj[static_cast<std::size_t>(w.id())] : Var();
        if (!g) g = t.constant(Tensor::zeros(w.value().rows(), w.value().cols()));
        grads.push_back(g);
    }
    return grads;
}

std::vector<Var> grad_norm_grad(const std::vector<Var>& v_parts,
                                const std::vector<Var>& params) {
    if (v_parts.empty()) throw std::invalid_argument("grad_norm_grad: empty gradient field");
    Tape& t = *v_parts.front().tape();
    Var r;
    for (const Var& p : v_parts) {
        Var s = sum(square(p));
        r = r ? add(r, s) : s;
    }
    r = scale(r, 0.5);
    (void)t;
    return backward(r, params);
}

}  // namespace magpred
