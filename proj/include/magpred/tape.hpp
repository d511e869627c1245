// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode automatic differentiation on a dynamic tape.
//
// Every primitive records a node holding its operands and eagerly computed
// value. backward() emits the adjoint computation as new tape nodes built
// from the same primitives, so gradients are themselves differentiable
// (grad-of-grad via double backpropagation). One tape is confined to a
// single thread; tapes over shared read-only parameter values may run in
// parallel.
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "magpred/tensor.hpp"

namespace magpred {

struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

enum class Op : std::uint8_t {
    Leaf,       // differentiable input (parameter)
    Const,      // non-differentiable input
    MatMul,
    Add,        // same shape
    AddRow,     // (B,m) + (1,m)
    Sub,
    Mul,        // elementwise
    Div,        // elementwise
    Scale,      // * compile-time-constant scalar
    Neg,
    Transpose,
    ConcatCols,
    SliceCols,
    PadCols,    // inverse of SliceCols: embed into zero matrix
    ClampMin,   // max(x, c) elementwise
    Tanh,
    Sigmoid,
    Relu,
    Log,        // requires positive input; use log() helper for clamping
    Exp,
    Square,
    Sum,        // -> (1,1)
    SumRows,    // (B,m) -> (1,m)
    BcastRows,  // (1,m) -> (B,m)
    BcastScalar // (1,1) -> (r,c)
};

struct Node {
    Op op = Op::Const;
    int a = -1;
    int b = -1;
    int i0 = 0;       // aux: slice start / broadcast rows
    int i1 = 0;       // aux: slice end / broadcast cols
    double c = 0.0;   // aux: scale factor / clamp floor
    bool grad = false;  // depends on at least one Leaf
    Tensor value;
};

class Tape;

// Lightweight handle to a node on a tape.
class Var {
public:
    Var() = default;
    Var(Tape* tape, int id) : tape_(tape), id_(id) {}

    const Tensor& value() const;
    int id() const { return id_; }
    Tape* tape() const { return tape_; }
    int rows() const { return value().rows(); }
    int cols() const { return value().cols(); }
    explicit operator bool() const { return tape_ != nullptr; }

private:
    Tape* tape_ = nullptr;
    int id_ = -1;
};

class Tape {
public:
    Var leaf(Tensor v);
    Var constant(Tensor v);

    std::size_t size() const { return nodes_.size(); }
    const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }

    // Re-evaluates every node from the recorded operations. With unchanged
    // leaf/const values this reproduces all node values bit-for-bit.
    void recompute();

    Var emit(Node n);

private:
    void eval(Node& n) const;
    std::vector<Node> nodes_;

    friend class Var;
};

inline const Tensor& Var::value() const { return tape_->node(id_).value; }

// --- primitives ------------------------------------------------------------

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var add_row(Var a, Var row);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var scale(Var a, double c);
Var neg(Var a);
Var transpose(Var a);
Var concat_cols(Var a, Var b);
Var slice_cols(Var a, int c0, int c1);
Var pad_cols(Var a, int c0, int total_cols);
Var clamp_min(Var a, double floor);
Var tanh(Var a);
Var sigmoid(Var a);
Var relu(Var a);
Var log_raw(Var a);  // assumes inputs > 0
Var exp(Var a);
Var square(Var a);
Var sum(Var a);
Var sum_rows(Var a);
Var broadcast_rows(Var a, int rows);
Var broadcast_scalar(Var a, int rows, int cols);

// log with the standard saturation guard: inputs clamped to >= 1e-12.
inline Var log(Var a) { return log_raw(clamp_min(a, 1e-12)); }
// mean over all entries
Var mean(Var a);

// --- reverse pass ----------------------------------------------------------

// Gradients of a scalar loss with respect to each of `wrt`, as new nodes on
// the same tape (further differentiable). Parameters unreachable from the
// loss get zero gradients. Throws ShapeError if loss is not (1,1).
std::vector<Var> backward(Var loss, const std::vector<Var>& wrt);

// Gradient of r(x) = 1/2 * sum_i ||v_parts[i]||^2 with respect to `params`,
// i.e. H(x)^T v(x) when the parts form a gradient field v built on the tape.
std::vector<Var> grad_norm_grad(const std::vector<Var>& v_parts,
                                const std::vector<Var>& params);

}  // namespace magpred
