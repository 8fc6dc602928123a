#ifndef TCMGAN_TAPE_HPP
#define TCMGAN_TAPE_HPP

#include <functional>
#include <vector>

#include "tcmgan/tensor.hpp"

namespace tcmgan {

// Reverse-mode autodiff on a Wengert list. Every op's backward is itself
// composed of tape ops, so gradient() returns differentiable Vars and a
// second gradient() call through them yields higher-order derivatives
// (needed for the gradient-penalty term of the critic loss).
struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

class Tape {
public:
    // vjp: given the node's accumulated output gradient, emit one gradient
    // Var per parent (invalid Var for parents without gradient).
    using Vjp = std::function<std::vector<Var>(Tape&, Var)>;

    Var leaf(Tensor value);
    Var emit(Tensor value, std::vector<int> parents, Vjp vjp);
    // for ops whose vjp closes over their own output Var
    void set_vjp(Var v, Vjp vjp) { nodes_[static_cast<size_t>(v.id)].vjp = std::move(vjp); }

    const Tensor& val(Var v) const { return nodes_[static_cast<size_t>(v.id)].value; }
    std::size_t size() const { return nodes_.size(); }

    // Gradients of a scalar output w.r.t. each of `wrt`, as new tape nodes.
    // Unreachable wrt entries get zero tensors of the matching shape.
    std::vector<Var> gradient(Var output, const std::vector<Var>& wrt);

private:
    struct Node {
        Tensor value;
        std::vector<int> parents;
        Vjp vjp;
    };
    std::vector<Node> nodes_;
};

namespace ops {

// -- elementwise / scalar ---------------------------------------------------
Var add(Tape& t, Var a, Var b);
Var sub(Tape& t, Var a, Var b);
Var mul(Tape& t, Var a, Var b);
Var div(Tape& t, Var a, Var b);
Var add_c(Tape& t, Var a, double c);
Var mul_c(Tape& t, Var a, double c);
Var neg(Tape& t, Var a);
Var abs(Tape& t, Var a);
Var sqrt(Tape& t, Var a);
Var square(Tape& t, Var a);
Var tanh(Tape& t, Var a);
Var sigmoid(Tape& t, Var a);
Var leaky_relu(Tape& t, Var a, double slope);
Var relu(Tape& t, Var a);
// multiply by a host-side constant tensor (no gradient to the constant)
Var mul_ct(Tape& t, Var a, Tensor c);
// broadcast-multiply by a scalar node (shape {1})
Var mul_s(Tape& t, Var a, Var s);

// -- reductions / broadcasts ------------------------------------------------
Var sum_all(Tape& t, Var a);                                   // -> {1}
Var mean_all(Tape& t, Var a);                                  // -> {1}
Var bcast_full(Tape& t, Var s, std::vector<int> shape);        // {1} -> shape
Var sum_per_sample(Tape& t, Var a);                            // NCHW -> {N}
Var bcast_n(Tape& t, Var v, int c, int h, int w);              // {N} -> NCHW
Var mean_hw(Tape& t, Var a);                                   // NCHW -> {N,C,1,1}
Var bcast_hw(Tape& t, Var a, int h, int w);                    // {N,C,1,1} -> NCHW
Var sum_nhw(Tape& t, Var a);                                   // NCHW -> {C}
Var bcast_cvec(Tape& t, Var c, int n, int h, int w);           // {C} -> NCHW

// -- structure --------------------------------------------------------------
Var reshape(Tape& t, Var a, std::vector<int> shape);
Var concat_c(Tape& t, Var a, Var b);
Var slice_c(Tape& t, Var a, int c0, int c1);
Var pad_c(Tape& t, Var a, int c0, int c_total);

// -- convolution family -----------------------------------------------------
// y = conv2d(x, w): x {N,Cin,H,W}, w {Cout,Cin,kh,kw}, stride s, zero pad p.
Var conv2d(Tape& t, Var x, Var w, int stride, int pad);
// gradient of conv2d w.r.t. its input; doubles as transposed convolution
Var conv2d_igrad(Tape& t, Var gy, Var w, int stride, int pad, int hx, int wx);
// gradient of conv2d w.r.t. its weights
Var conv2d_wgrad(Tape& t, Var x, Var gy, int stride, int pad, int kh, int kw);
// transposed conv layer: x {N,Cin,H,W}, w {Cin,Cout,kh,kw} in conv2d's
// (out,in) orientation, i.e. pass w shaped {Cin_as_Cout, Cout_as_Cin, kh, kw}
Var add_bias(Tape& t, Var x, Var b);                           // b {C}

// -- classification ---------------------------------------------------------
// mean softmax cross-entropy; logits {N,K}, labels in [0,K)
Var cross_entropy_mean(Tape& t, Var logits, std::vector<int> labels);

// instance norm over HW per (n, c); gamma/beta {C}; built from primitives
Var instance_norm(Tape& t, Var x, Var gamma, Var beta, double eps = 1e-5);

}  // namespace ops

}  // namespace tcmgan

#endif
