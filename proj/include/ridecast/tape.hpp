#pragma once

#include <functional>
#include <vector>

#include "ridecast/tensor.hpp"

namespace ridecast {

class Tape;

// Handle to a tape node. Cheap to copy; only valid for the tape that made it.
struct Var {
    int id = -1;
    Tape* tape = nullptr;
    bool valid() const { return id >= 0 && tape != nullptr; }
};

// Reverse-mode autodiff over dense tensors. Nodes are recorded in evaluation
// order; backward() walks them strictly in reverse, so gradient accumulation
// order is fixed and runs are bit-reproducible for a fixed seed.
//
// Elementwise binary ops broadcast their second operand when it is shaped
// {1,m}, {n,1} or {1,1} against an {n,m} first operand.
class Tape {
public:
    Var leaf(Tensor value, bool requires_grad = false);
    Var constant(Tensor value) { return leaf(std::move(value), false); }
    Var constant(double v) { return leaf(Tensor::scalar(v), false); }

    const Tensor& value(Var v) const;
    // Gradient buffer; populated by backward(). Zero-shaped until then.
    const Tensor& grad(Var v) const;
    bool requires_grad(Var v) const;

    // Seeds the (scalar) root with 1 and accumulates gradients into every
    // node reachable from it that requires a gradient.
    void backward(Var root);

    size_t node_count() const { return nodes_.size(); }

    // ---- arithmetic -------------------------------------------------------
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var div(Var a, Var b);
    Var neg(Var a);
    Var scale(Var a, double c);
    Var add_scalar(Var a, double c);

    // ---- linear algebra ---------------------------------------------------
    Var matmul(Var a, Var b);
    Var transpose(Var a);

    // ---- elementwise functions --------------------------------------------
    Var exp(Var a);
    Var log(Var a);
    Var sqrt(Var a);
    Var tanh(Var a);
    Var relu(Var a);
    Var abs(Var a);

    // ---- reductions / normalizers -----------------------------------------
    Var softmax_rows(Var a);
    Var logsumexp_rows(Var a); // {n,m} -> {n,1}
    Var row_sums(Var a);       // {n,m} -> {n,1}
    Var mean_rows(Var a);      // {n,m} -> {1,m} (mean over the row axis)
    Var sum_all(Var a);        // -> {1,1}
    Var mean_all(Var a);       // -> {1,1}

    // ---- structure --------------------------------------------------------
    Var reshape(Var a, Shape s);
    Var gather_rows(Var a, std::vector<int> idx);
    Var slice_rows(Var a, int r0, int r1);
    Var slice_cols(Var a, int c0, int c1);
    Var concat_rows(const std::vector<Var>& parts);
    Var concat_cols(const std::vector<Var>& parts);

private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool needs_grad = false;
        std::function<void(Tape&)> back; // empty for leaves
    };

    std::vector<Node> nodes_;
    bool ran_backward_ = false;

    Var make(Tensor value, bool needs_grad, std::function<void(Tape&)> back);
    Node& node(Var v);
    const Node& node(Var v) const;
    Tensor& grad_buf(int id);
    void check_mine(Var v) const;
};

} // namespace ridecast
