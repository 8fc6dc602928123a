#include <doctest.h>

#include <cmath>

#include "tcmgan/tape.hpp"
#include "test_util.hpp"

using namespace tcmgan;
using namespace tcmgan::ops;
namespace tu = tcmgan::testutil;

namespace {

// naive direct convolution, the oracle for the im2col path
Tensor conv2d_naive(const Tensor& x, const Tensor& w, int stride, int pad) {
    const int n = x.dim(0), cin = x.dim(1), h = x.dim(2), ww = x.dim(3);
    const int cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    const int ho = (h + 2 * pad - kh) / stride + 1;
    const int wo = (ww + 2 * pad - kw) / stride + 1;
    Tensor y({n, cout, ho, wo});
    for (int i = 0; i < n; ++i)
        for (int co = 0; co < cout; ++co)
            for (int oh = 0; oh < ho; ++oh)
                for (int ow = 0; ow < wo; ++ow) {
                    double s = 0;
                    for (int ci = 0; ci < cin; ++ci)
                        for (int a = 0; a < kh; ++a)
                            for (int b = 0; b < kw; ++b) {
                                const int ih = oh * stride + a - pad;
                                const int iw = ow * stride + b - pad;
                                if (ih < 0 || ih >= h || iw < 0 || iw >= ww) continue;
                                s += x[((static_cast<size_t>(i) * cin + ci) * h + ih) * ww + iw] *
                                     w[((static_cast<size_t>(co) * cin + ci) * kh + a) * kw + b];
                            }
                    y[((static_cast<size_t>(i) * cout + co) * ho + oh) * wo + ow] = s;
                }
    return y;
}

}  // namespace

TEST_CASE("elementwise ops and reductions") {
    Tape t;
    Var a = t.leaf(Tensor({2, 2}, {1.0, -2.0, 3.0, 0.5}));
    Var b = t.leaf(Tensor({2, 2}, {0.5, 4.0, -1.0, 2.0}));
    CHECK(t.val(add(t, a, b))[1] == doctest::Approx(2.0));
    CHECK(t.val(mul(t, a, b))[2] == doctest::Approx(-3.0));
    CHECK(t.val(sub(t, a, b))[0] == doctest::Approx(0.5));
    CHECK(t.val(abs(t, a))[1] == doctest::Approx(2.0));
    CHECK(t.val(mean_all(t, a))[0] == doctest::Approx(0.625));
    CHECK(t.val(sum_all(t, b))[0] == doctest::Approx(5.5));
}

TEST_CASE("gradient of composite scalar matches finite differences") {
    Rng rng(7);
    Tensor ta = tu::random_tensor({3, 4}, rng);
    Tensor tb = tu::random_tensor({3, 4}, rng, 0.5, 2.0);

    auto eval = [&](std::vector<Tensor>* grads) {
        Tape t;
        Var a = t.leaf(ta), b = t.leaf(tb);
        Var y = mean_all(t, mul(t, tanh(t, a), sigmoid(t, div(t, a, b))));
        if (grads) {
            auto gs = t.gradient(y, {a, b});
            grads->push_back(t.val(gs[0]).clone());
            grads->push_back(t.val(gs[1]).clone());
        }
        return t.val(y)[0];
    };
    std::vector<Tensor> grads;
    eval(&grads);
    auto f = [&]() { return eval(nullptr); };
    CHECK(tu::gradcheck_tensor(ta, grads[0], f, 12, rng) < 1e-6);
    CHECK(tu::gradcheck_tensor(tb, grads[1], f, 12, rng) < 1e-6);
}

TEST_CASE("conv2d matches naive convolution") {
    Rng rng(11);
    for (auto [stride, pad, k] : {std::tuple{1, 1, 3}, {2, 1, 4}, {1, 0, 2}}) {
        Tensor x = tu::random_tensor({2, 3, 8, 8}, rng);
        Tensor w = tu::random_tensor({4, 3, k, k}, rng);
        Tape t;
        Var y = conv2d(t, t.leaf(x), t.leaf(w), stride, pad);
        Tensor ref = conv2d_naive(x, w, stride, pad);
        REQUIRE(t.val(y).same_shape(ref));
        double diff = 0;
        for (size_t i = 0; i < ref.size(); ++i) diff = std::max(diff, std::abs(t.val(y)[i] - ref[i]));
        CHECK(diff < 1e-12);
    }
}

TEST_CASE("conv2d gradients match finite differences") {
    Rng rng(13);
    Tensor x = tu::random_tensor({2, 2, 6, 6}, rng);
    Tensor w = tu::random_tensor({3, 2, 4, 4}, rng);
    auto eval = [&](std::vector<Tensor>* grads) {
        Tape t;
        Var xv = t.leaf(x), wv = t.leaf(w);
        Var y = conv2d(t, xv, wv, 2, 1);
        Var loss = mean_all(t, mul(t, y, y));
        if (grads) {
            auto gs = t.gradient(loss, {xv, wv});
            grads->push_back(t.val(gs[0]).clone());
            grads->push_back(t.val(gs[1]).clone());
        }
        return t.val(loss)[0];
    };
    std::vector<Tensor> grads;
    eval(&grads);
    auto f = [&]() { return eval(nullptr); };
    CHECK(tu::gradcheck_tensor(x, grads[0], f, 16, rng) < 1e-6);
    CHECK(tu::gradcheck_tensor(w, grads[1], f, 16, rng) < 1e-6);
}

TEST_CASE("transposed conv (igrad as layer) gradients match finite differences") {
    Rng rng(17);
    Tensor x = tu::random_tensor({2, 3, 4, 4}, rng);
    Tensor w = tu::random_tensor({3, 2, 4, 4}, rng);  // {Cin, Cout, kh, kw}
    auto eval = [&](std::vector<Tensor>* grads) {
        Tape t;
        Var xv = t.leaf(x), wv = t.leaf(w);
        Var y = conv2d_igrad(t, xv, wv, 2, 1, 8, 8);
        Var loss = mean_all(t, mul(t, y, tanh(t, y)));
        if (grads) {
            auto gs = t.gradient(loss, {xv, wv});
            grads->push_back(t.val(gs[0]).clone());
            grads->push_back(t.val(gs[1]).clone());
        }
        return t.val(loss)[0];
    };
    std::vector<Tensor> grads;
    eval(&grads);
    auto f = [&]() { return eval(nullptr); };
    CHECK(tu::gradcheck_tensor(x, grads[0], f, 16, rng) < 1e-6);
    CHECK(tu::gradcheck_tensor(w, grads[1], f, 16, rng) < 1e-6);
}

TEST_CASE("concat/slice, bias, instance norm gradients") {
    Rng rng(19);
    Tensor a = tu::random_tensor({2, 2, 4, 4}, rng);
    Tensor b = tu::random_tensor({2, 3, 4, 4}, rng);
    Tensor bias = tu::random_tensor({5}, rng);
    Tensor gamma = tu::random_tensor({5}, rng, 0.5, 1.5);
    Tensor beta = tu::random_tensor({5}, rng);
    auto eval = [&](std::vector<Tensor>* grads) {
        Tape t;
        Var av = t.leaf(a), bv = t.leaf(b), biasv = t.leaf(bias);
        Var gv = t.leaf(gamma), bev = t.leaf(beta);
        Var y = concat_c(t, av, bv);
        y = add_bias(t, y, biasv);
        y = instance_norm(t, y, gv, bev);
        Var loss = mean_all(t, mul(t, y, y));
        if (grads) {
            for (Var g : t.gradient(loss, {av, bv, biasv, gv, bev}))
                grads->push_back(t.val(g).clone());
        }
        return t.val(loss)[0];
    };
    std::vector<Tensor> grads;
    eval(&grads);
    auto f = [&]() { return eval(nullptr); };
    // h = 1e-4: the normalized output keeps coordinate gradients small, so
    // a tiny step is roundoff-dominated
    CHECK(tu::gradcheck_tensor(a, grads[0], f, 10, rng, 1e-4) < 1e-4);
    CHECK(tu::gradcheck_tensor(b, grads[1], f, 10, rng, 1e-4) < 1e-4);
    CHECK(tu::gradcheck_tensor(bias, grads[2], f, 5, rng, 1e-4) < 1e-4);
    CHECK(tu::gradcheck_tensor(gamma, grads[3], f, 5, rng, 1e-4) < 1e-4);
    CHECK(tu::gradcheck_tensor(beta, grads[4], f, 5, rng, 1e-4) < 1e-4);
}

TEST_CASE("cross entropy value and gradient") {
    Tape t;
    // uniform logits -> ln 3
    Var logits = t.leaf(Tensor({2, 3}, 0.0));
    Var ce = cross_entropy_mean(t, logits, {0, 2});
    CHECK(t.val(ce)[0] == doctest::Approx(std::log(3.0)).epsilon(1e-12));

    Rng rng(23);
    Tensor l = tu::random_tensor({4, 3}, rng);
    std::vector<int> labels{0, 2, 1, 1};
    auto eval = [&](Tensor* grad) {
        Tape tp;
        Var lv = tp.leaf(l);
        Var loss = cross_entropy_mean(tp, lv, labels);
        if (grad) *grad = tp.val(tp.gradient(loss, {lv})[0]).clone();
        return tp.val(loss)[0];
    };
    Tensor grad;
    eval(&grad);
    auto f = [&]() { return eval(nullptr); };
    CHECK(tu::gradcheck_tensor(l, grad, f, 12, rng) < 1e-6);
}

// Double backward: second-order derivative through gradient().
TEST_CASE("second-order gradient through gradient()") {
    // f(x) = sum(x^3); g = df/dx = 3x^2; s = sum(g); ds/dx = 6x
    Tensor x0({3}, {0.5, -1.0, 2.0});
    Tape t;
    Var x = t.leaf(x0);
    Var f = sum_all(t, mul(t, mul(t, x, x), x));
    Var g = t.gradient(f, {x})[0];
    for (int i = 0; i < 3; ++i)
        CHECK(t.val(g)[static_cast<size_t>(i)] == doctest::Approx(3 * x0[static_cast<size_t>(i)] * x0[static_cast<size_t>(i)]));
    Var s = sum_all(t, g);
    Var g2 = t.gradient(s, {x})[0];
    for (int i = 0; i < 3; ++i)
        CHECK(t.val(g2)[static_cast<size_t>(i)] == doctest::Approx(6 * x0[static_cast<size_t>(i)]));
}

TEST_CASE("second-order gradient through a conv critic (gradient-penalty pattern)") {
    // critic(xhat) = mean(conv(xhat, w)); penalty = mean_i (||d critic_i/d xhat_i|| - 1)^2
    // checks d penalty / d w against finite differences
    Rng rng(29);
    Tensor xhat = tu::random_tensor({2, 1, 6, 6}, rng);
    Tensor w = tu::random_tensor({1, 1, 3, 3}, rng);

    auto eval = [&](Tensor* gw_out) {
        Tape t;
        Var xv = t.leaf(xhat);
        Var wv = t.leaf(w);
        Var patch = conv2d(t, xv, wv, 1, 1);
        Var per_sample = reshape(t, mean_hw(t, patch), {2});
        Var s = sum_all(t, per_sample);
        Var g = t.gradient(s, {xv})[0];
        Var norms = sqrt(t, sum_per_sample(t, mul(t, g, g)));
        Var pen = mean_all(t, square(t, add_c(t, norms, -1.0)));
        if (gw_out) *gw_out = t.val(t.gradient(pen, {wv})[0]).clone();
        return t.val(pen)[0];
    };
    Tensor gw;
    eval(&gw);
    auto f = [&]() { return eval(nullptr); };
    CHECK(tu::gradcheck_tensor(w, gw, f, 9, rng) < 1e-6);
}
