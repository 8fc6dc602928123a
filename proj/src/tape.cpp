#include "tcmgan/tape.hpp"

#include <Eigen/Core>
#include <cmath>
#include <utility>

namespace tcmgan {

Var Tape::leaf(Tensor value) {
    nodes_.push_back(Node{std::move(value), {}, nullptr});
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::emit(Tensor value, std::vector<int> parents, Vjp vjp) {
    nodes_.push_back(Node{std::move(value), std::move(parents), std::move(vjp)});
    return Var{static_cast<int>(nodes_.size()) - 1};
}

std::vector<Var> Tape::gradient(Var output, const std::vector<Var>& wrt) {
    if (!output.valid() || val(output).size() != 1)
        throw ShapeError("gradient: output must be a scalar node");
    const int top = output.id;
    std::vector<int> gmap(static_cast<size_t>(top) + 1, -1);
    gmap[static_cast<size_t>(top)] = leaf(Tensor::scalar(1.0)).id;

    for (int i = top; i >= 0; --i) {
        const int gid = gmap[static_cast<size_t>(i)];
        if (gid < 0) continue;
        // copy: the vjp call below may reallocate nodes_
        auto parents = nodes_[static_cast<size_t>(i)].parents;
        auto vjp = nodes_[static_cast<size_t>(i)].vjp;
        if (!vjp) continue;
        auto pgrads = vjp(*this, Var{gid});
        for (size_t k = 0; k < parents.size(); ++k) {
            if (!pgrads[k].valid()) continue;
            int& slot = gmap[static_cast<size_t>(parents[k])];
            slot = (slot < 0) ? pgrads[k].id : ops::add(*this, Var{slot}, pgrads[k]).id;
        }
    }

    std::vector<Var> result;
    result.reserve(wrt.size());
    for (Var v : wrt) {
        if (v.id <= top && gmap[static_cast<size_t>(v.id)] >= 0)
            result.push_back(Var{gmap[static_cast<size_t>(v.id)]});
        else
            result.push_back(leaf(Tensor::zeros(val(v).shape())));
    }
    return result;
}

namespace ops {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

void check_same_shape(const Tensor& a, const Tensor& b, const char* who) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(who) + ": shape mismatch " + a.shape_str() + " vs " +
                         b.shape_str());
}

void check_4d(const Tensor& a, const char* who) {
    if (a.ndim() != 4) throw ShapeError(std::string(who) + ": expected 4-d tensor");
}

// column buffer layout: rows = Cin*kh*kw, cols = Ho*Wo, row-major
void im2col(const double* x, int cin, int h, int w, int kh, int kw, int stride, int pad,
            int ho, int wo, double* col) {
    const int q = ho * wo;
    for (int c = 0; c < cin; ++c) {
        const double* xc = x + static_cast<size_t>(c) * h * w;
        for (int i = 0; i < kh; ++i) {
            for (int j = 0; j < kw; ++j) {
                double* row = col + (static_cast<size_t>(c) * kh * kw + i * kw + j) * q;
                for (int oh = 0; oh < ho; ++oh) {
                    const int ih = oh * stride + i - pad;
                    if (ih < 0 || ih >= h) {
                        for (int ow = 0; ow < wo; ++ow) row[oh * wo + ow] = 0.0;
                        continue;
                    }
                    for (int ow = 0; ow < wo; ++ow) {
                        const int iw = ow * stride + j - pad;
                        row[oh * wo + ow] = (iw < 0 || iw >= w) ? 0.0 : xc[ih * w + iw];
                    }
                }
            }
        }
    }
}

void col2im(const double* col, int cin, int h, int w, int kh, int kw, int stride, int pad,
            int ho, int wo, double* x) {
    const int q = ho * wo;
    for (int c = 0; c < cin; ++c) {
        double* xc = x + static_cast<size_t>(c) * h * w;
        for (int i = 0; i < kh; ++i) {
            for (int j = 0; j < kw; ++j) {
                const double* row = col + (static_cast<size_t>(c) * kh * kw + i * kw + j) * q;
                for (int oh = 0; oh < ho; ++oh) {
                    const int ih = oh * stride + i - pad;
                    if (ih < 0 || ih >= h) continue;
                    for (int ow = 0; ow < wo; ++ow) {
                        const int iw = ow * stride + j - pad;
                        if (iw >= 0 && iw < w) xc[ih * w + iw] += row[oh * wo + ow];
                    }
                }
            }
        }
    }
}

int conv_out(int in, int k, int stride, int pad) {
    const int o = (in + 2 * pad - k) / stride + 1;
    if (o <= 0) throw ShapeError("conv2d: non-positive output size");
    return o;
}

Tensor unary_map(const Tensor& a, double (*f)(double)) {
    Tensor y(a.shape());
    for (size_t i = 0; i < a.size(); ++i) y[i] = f(a[i]);
    return y;
}

}  // namespace

Var add(Tape& t, Var a, Var b) {
    Tensor ta = t.val(a), tb = t.val(b);
    check_same_shape(ta, tb, "add");
    Tensor y(ta.shape());
    for (size_t i = 0; i < y.size(); ++i) y[i] = ta[i] + tb[i];
    return t.emit(std::move(y), {a.id, b.id},
                  [](Tape& tp, Var g) { return std::vector<Var>{g, g}; });
}

Var sub(Tape& t, Var a, Var b) {
    Tensor ta = t.val(a), tb = t.val(b);
    check_same_shape(ta, tb, "sub");
    Tensor y(ta.shape());
    for (size_t i = 0; i < y.size(); ++i) y[i] = ta[i] - tb[i];
    return t.emit(std::move(y), {a.id, b.id},
                  [](Tape& tp, Var g) { return std::vector<Var>{g, neg(tp, g)}; });
}

Var mul(Tape& t, Var a, Var b) {
    Tensor ta = t.val(a), tb = t.val(b);
    check_same_shape(ta, tb, "mul");
    Tensor y(ta.shape());
    for (size_t i = 0; i < y.size(); ++i) y[i] = ta[i] * tb[i];
    return t.emit(std::move(y), {a.id, b.id}, [a, b](Tape& tp, Var g) {
        return std::vector<Var>{mul(tp, g, b), mul(tp, g, a)};
    });
}

Var div(Tape& t, Var a, Var b) {
    Tensor ta = t.val(a), tb = t.val(b);
    check_same_shape(ta, tb, "div");
    Tensor y(ta.shape());
    for (size_t i = 0; i < y.size(); ++i) y[i] = ta[i] / tb[i];
    return t.emit(std::move(y), {a.id, b.id}, [a, b](Tape& tp, Var g) {
        Var gb = neg(tp, div(tp, mul(tp, g, div(tp, a, b)), b));  // -g*a/b^2
        return std::vector<Var>{div(tp, g, b), gb};
    });
}

Var add_c(Tape& t, Var a, double c) {
    Tensor ta = t.val(a);
    Tensor y(ta.shape());
    for (size_t i = 0; i < y.size(); ++i) y[i] = ta[i] + c;
    return t.emit(std::move(y), {a.id}, [](Tape&, Var g) { return std::vector<Var>{g}; });
}

Var mul_c(Tape& t, Var a, double c) {
    Tensor ta = t.val(a);
    Tensor y(ta.shape());
    for (size_t i = 0; i < y.size(); ++i) y[i] = ta[i] * c;
    return t.emit(std::move(y), {a.id},
                  [c](Tape& tp, Var g) { return std::vector<Var>{mul_c(tp, g, c)}; });
}

Var neg(Tape& t, Var a) { return mul_c(t, a, -1.0); }

Var abs(Tape& t, Var a) {
    Tensor ta = t.val(a);
    Tensor y(ta.shape());
    Tensor sign(ta.shape());
    for (size_t i = 0; i < y.size(); ++i) {
        y[i] = std::abs(ta[i]);
        sign[i] = ta[i] > 0 ? 1.0 : (ta[i] < 0 ? -1.0 : 0.0);
    }
    return t.emit(std::move(y), {a.id}, [sign](Tape& tp, Var g) {
        return std::vector<Var>{mul_ct(tp, g, sign)};
    });
}

Var sqrt(Tape& t, Var a) {
    Var y = t.emit(unary_map(t.val(a), [](double v) { return std::sqrt(v); }), {a.id}, nullptr);
    t.set_vjp(y, [y](Tape& tp, Var g) {
        return std::vector<Var>{mul_c(tp, div(tp, g, y), 0.5)};
    });
    return y;
}

Var square(Tape& t, Var a) { return mul(t, a, a); }

Var tanh(Tape& t, Var a) {
    Var y = t.emit(unary_map(t.val(a), [](double v) { return std::tanh(v); }), {a.id}, nullptr);
    t.set_vjp(y, [y](Tape& tp, Var g) {
        Var one_minus_y2 = add_c(tp, neg(tp, mul(tp, y, y)), 1.0);
        return std::vector<Var>{mul(tp, g, one_minus_y2)};
    });
    return y;
}

Var sigmoid(Tape& t, Var a) {
    Var y = t.emit(unary_map(t.val(a), [](double v) { return 1.0 / (1.0 + std::exp(-v)); }),
                   {a.id}, nullptr);
    t.set_vjp(y, [y](Tape& tp, Var g) {
        Var dy = mul(tp, y, add_c(tp, neg(tp, y), 1.0));
        return std::vector<Var>{mul(tp, g, dy)};
    });
    return y;
}

Var leaky_relu(Tape& t, Var a, double slope) {
    Tensor ta = t.val(a);
    Tensor y(ta.shape());
    Tensor mask(ta.shape());
    for (size_t i = 0; i < y.size(); ++i) {
        const bool pos = ta[i] > 0;
        y[i] = pos ? ta[i] : slope * ta[i];
        mask[i] = pos ? 1.0 : slope;
    }
    return t.emit(std::move(y), {a.id}, [mask](Tape& tp, Var g) {
        return std::vector<Var>{mul_ct(tp, g, mask)};
    });
}

Var relu(Tape& t, Var a) { return leaky_relu(t, a, 0.0); }

Var mul_ct(Tape& t, Var a, Tensor c) {
    Tensor ta = t.val(a);
    check_same_shape(ta, c, "mul_ct");
    Tensor y(ta.shape());
    for (size_t i = 0; i < y.size(); ++i) y[i] = ta[i] * c[i];
    return t.emit(std::move(y), {a.id}, [c](Tape& tp, Var g) {
        return std::vector<Var>{mul_ct(tp, g, c)};
    });
}

Var mul_s(Tape& t, Var a, Var s) {
    Tensor ta = t.val(a), ts = t.val(s);
    if (ts.size() != 1) throw ShapeError("mul_s: scalar operand must have size 1");
    Tensor y(ta.shape());
    for (size_t i = 0; i < y.size(); ++i) y[i] = ta[i] * ts[0];
    return t.emit(std::move(y), {a.id, s.id}, [a, s](Tape& tp, Var g) {
        return std::vector<Var>{mul_s(tp, g, s), sum_all(tp, mul(tp, g, a))};
    });
}

Var sum_all(Tape& t, Var a) {
    Tensor ta = t.val(a);
    std::vector<int> in_shape = ta.shape();
    return t.emit(Tensor::scalar(ta.sum()), {a.id}, [in_shape](Tape& tp, Var g) {
        return std::vector<Var>{bcast_full(tp, g, in_shape)};
    });
}

Var mean_all(Tape& t, Var a) {
    return mul_c(t, sum_all(t, a), 1.0 / static_cast<double>(t.val(a).size()));
}

Var bcast_full(Tape& t, Var s, std::vector<int> shape) {
    Tensor ts = t.val(s);
    if (ts.size() != 1) throw ShapeError("bcast_full: input must be scalar");
    return t.emit(Tensor::full(shape, ts[0]), {s.id}, [](Tape& tp, Var g) {
        return std::vector<Var>{sum_all(tp, g)};
    });
}

Var sum_per_sample(Tape& t, Var a) {
    Tensor ta = t.val(a);
    check_4d(ta, "sum_per_sample");
    const int n = ta.dim(0);
    const size_t per = ta.size() / static_cast<size_t>(n);
    Tensor y({n});
    for (int i = 0; i < n; ++i) {
        double s = 0;
        const double* p = ta.data() + static_cast<size_t>(i) * per;
        for (size_t k = 0; k < per; ++k) s += p[k];
        y[static_cast<size_t>(i)] = s;
    }
    const int c = ta.dim(1), h = ta.dim(2), w = ta.dim(3);
    return t.emit(std::move(y), {a.id}, [c, h, w](Tape& tp, Var g) {
        return std::vector<Var>{bcast_n(tp, g, c, h, w)};
    });
}

Var bcast_n(Tape& t, Var v, int c, int h, int w) {
    Tensor tv = t.val(v);
    if (tv.ndim() != 1) throw ShapeError("bcast_n: input must be 1-d");
    const int n = tv.dim(0);
    Tensor y({n, c, h, w});
    const size_t per = static_cast<size_t>(c) * h * w;
    for (int i = 0; i < n; ++i) {
        double* p = y.data() + static_cast<size_t>(i) * per;
        for (size_t k = 0; k < per; ++k) p[k] = tv[static_cast<size_t>(i)];
    }
    return t.emit(std::move(y), {v.id}, [](Tape& tp, Var g) {
        return std::vector<Var>{sum_per_sample(tp, g)};
    });
}

Var mean_hw(Tape& t, Var a) {
    Tensor ta = t.val(a);
    check_4d(ta, "mean_hw");
    const int n = ta.dim(0), c = ta.dim(1), h = ta.dim(2), w = ta.dim(3);
    Tensor y({n, c, 1, 1});
    const size_t hw = static_cast<size_t>(h) * w;
    for (int i = 0; i < n * c; ++i) {
        double s = 0;
        const double* p = ta.data() + static_cast<size_t>(i) * hw;
        for (size_t k = 0; k < hw; ++k) s += p[k];
        y[static_cast<size_t>(i)] = s / static_cast<double>(hw);
    }
    return t.emit(std::move(y), {a.id}, [h, w](Tape& tp, Var g) {
        return std::vector<Var>{mul_c(tp, bcast_hw(tp, g, h, w), 1.0 / (h * w))};
    });
}

Var bcast_hw(Tape& t, Var a, int h, int w) {
    Tensor ta = t.val(a);
    check_4d(ta, "bcast_hw");
    if (ta.dim(2) != 1 || ta.dim(3) != 1) throw ShapeError("bcast_hw: spatial dims must be 1");
    const int n = ta.dim(0), c = ta.dim(1);
    Tensor y({n, c, h, w});
    const size_t hw = static_cast<size_t>(h) * w;
    for (int i = 0; i < n * c; ++i) {
        double* p = y.data() + static_cast<size_t>(i) * hw;
        for (size_t k = 0; k < hw; ++k) p[k] = ta[static_cast<size_t>(i)];
    }
    return t.emit(std::move(y), {a.id}, [h, w](Tape& tp, Var g) {
        // sum over HW back to {N,C,1,1}
        return std::vector<Var>{mul_c(tp, mean_hw(tp, g), static_cast<double>(h) * w)};
    });
}

Var sum_nhw(Tape& t, Var a) {
    Tensor ta = t.val(a);
    check_4d(ta, "sum_nhw");
    const int n = ta.dim(0), c = ta.dim(1), h = ta.dim(2), w = ta.dim(3);
    Tensor y({c});
    const size_t hw = static_cast<size_t>(h) * w;
    for (int i = 0; i < n; ++i)
        for (int ch = 0; ch < c; ++ch) {
            const double* p = ta.data() + (static_cast<size_t>(i) * c + ch) * hw;
            double s = 0;
            for (size_t k = 0; k < hw; ++k) s += p[k];
            y[static_cast<size_t>(ch)] += s;
        }
    return t.emit(std::move(y), {a.id}, [n, h, w](Tape& tp, Var g) {
        return std::vector<Var>{bcast_cvec(tp, g, n, h, w)};
    });
}

Var bcast_cvec(Tape& t, Var c, int n, int h, int w) {
    Tensor tc = t.val(c);
    if (tc.ndim() != 1) throw ShapeError("bcast_cvec: input must be 1-d");
    const int cc = tc.dim(0);
    Tensor y({n, cc, h, w});
    const size_t hw = static_cast<size_t>(h) * w;
    for (int i = 0; i < n; ++i)
        for (int ch = 0; ch < cc; ++ch) {
            double* p = y.data() + (static_cast<size_t>(i) * cc + ch) * hw;
            for (size_t k = 0; k < hw; ++k) p[k] = tc[static_cast<size_t>(ch)];
        }
    return t.emit(std::move(y), {c.id}, [](Tape& tp, Var g) {
        return std::vector<Var>{sum_nhw(tp, g)};
    });
}

Var reshape(Tape& t, Var a, std::vector<int> shape) {
    Tensor ta = t.val(a);
    std::vector<int> old_shape = ta.shape();
    return t.emit(ta.reshaped(std::move(shape)), {a.id}, [old_shape](Tape& tp, Var g) {
        return std::vector<Var>{reshape(tp, g, old_shape)};
    });
}

Var concat_c(Tape& t, Var a, Var b) {
    Tensor ta = t.val(a), tb = t.val(b);
    check_4d(ta, "concat_c");
    check_4d(tb, "concat_c");
    if (ta.dim(0) != tb.dim(0) || ta.dim(2) != tb.dim(2) || ta.dim(3) != tb.dim(3))
        throw ShapeError("concat_c: non-channel dims differ");
    const int n = ta.dim(0), ca = ta.dim(1), cb = tb.dim(1), h = ta.dim(2), w = ta.dim(3);
    Tensor y({n, ca + cb, h, w});
    const size_t hw = static_cast<size_t>(h) * w;
    for (int i = 0; i < n; ++i) {
        std::copy_n(ta.data() + static_cast<size_t>(i) * ca * hw, ca * hw,
                    y.data() + static_cast<size_t>(i) * (ca + cb) * hw);
        std::copy_n(tb.data() + static_cast<size_t>(i) * cb * hw, cb * hw,
                    y.data() + static_cast<size_t>(i) * (ca + cb) * hw + ca * hw);
    }
    return t.emit(std::move(y), {a.id, b.id}, [ca, cb](Tape& tp, Var g) {
        return std::vector<Var>{slice_c(tp, g, 0, ca), slice_c(tp, g, ca, ca + cb)};
    });
}

Var slice_c(Tape& t, Var a, int c0, int c1) {
    Tensor ta = t.val(a);
    check_4d(ta, "slice_c");
    const int n = ta.dim(0), c = ta.dim(1), h = ta.dim(2), w = ta.dim(3);
    if (c0 < 0 || c1 > c || c0 >= c1) throw ShapeError("slice_c: bad channel range");
    Tensor y({n, c1 - c0, h, w});
    const size_t hw = static_cast<size_t>(h) * w;
    for (int i = 0; i < n; ++i)
        std::copy_n(ta.data() + (static_cast<size_t>(i) * c + c0) * hw,
                    static_cast<size_t>(c1 - c0) * hw,
                    y.data() + static_cast<size_t>(i) * (c1 - c0) * hw);
    return t.emit(std::move(y), {a.id}, [c0, c](Tape& tp, Var g) {
        return std::vector<Var>{pad_c(tp, g, c0, c)};
    });
}

Var pad_c(Tape& t, Var a, int c0, int c_total) {
    Tensor ta = t.val(a);
    check_4d(ta, "pad_c");
    const int n = ta.dim(0), ca = ta.dim(1), h = ta.dim(2), w = ta.dim(3);
    if (c0 < 0 || c0 + ca > c_total) throw ShapeError("pad_c: bad channel placement");
    Tensor y({n, c_total, h, w});
    const size_t hw = static_cast<size_t>(h) * w;
    for (int i = 0; i < n; ++i)
        std::copy_n(ta.data() + static_cast<size_t>(i) * ca * hw, static_cast<size_t>(ca) * hw,
                    y.data() + (static_cast<size_t>(i) * c_total + c0) * hw);
    return t.emit(std::move(y), {a.id}, [c0, ca](Tape& tp, Var g) {
        return std::vector<Var>{slice_c(tp, g, c0, c0 + ca)};
    });
}

Var conv2d(Tape& t, Var x, Var w, int stride, int pad) {
    Tensor tx = t.val(x), tw = t.val(w);
    check_4d(tx, "conv2d");
    check_4d(tw, "conv2d");
    if (tx.dim(1) != tw.dim(1)) throw ShapeError("conv2d: channel mismatch");
    const int n = tx.dim(0), cin = tx.dim(1), h = tx.dim(2), ww = tx.dim(3);
    const int cout = tw.dim(0), kh = tw.dim(2), kw = tw.dim(3);
    const int ho = conv_out(h, kh, stride, pad), wo = conv_out(ww, kw, stride, pad);

    Tensor y({n, cout, ho, wo});
    const int r = cin * kh * kw, q = ho * wo;
    std::vector<double> col(static_cast<size_t>(r) * q);
    CMapMat wm(tw.data(), cout, r);
    for (int i = 0; i < n; ++i) {
        im2col(tx.data() + static_cast<size_t>(i) * cin * h * ww, cin, h, ww, kh, kw, stride,
               pad, ho, wo, col.data());
        CMapMat cm(col.data(), r, q);
        MapMat ym(y.data() + static_cast<size_t>(i) * cout * q, cout, q);
        ym.noalias() = wm * cm;
    }
    return t.emit(std::move(y), {x.id, w.id}, [x, w, stride, pad, h, ww, kh, kw](Tape& tp, Var g) {
        Var gx = conv2d_igrad(tp, g, w, stride, pad, h, ww);
        Var gw = conv2d_wgrad(tp, x, g, stride, pad, kh, kw);
        return std::vector<Var>{gx, gw};
    });
}

Var conv2d_igrad(Tape& t, Var gy, Var w, int stride, int pad, int hx, int wx) {
    Tensor tg = t.val(gy), tw = t.val(w);
    check_4d(tg, "conv2d_igrad");
    check_4d(tw, "conv2d_igrad");
    if (tg.dim(1) != tw.dim(0)) throw ShapeError("conv2d_igrad: channel mismatch");
    const int n = tg.dim(0), cout = tg.dim(1), ho = tg.dim(2), wo = tg.dim(3);
    const int cin = tw.dim(1), kh = tw.dim(2), kw = tw.dim(3);
    if (conv_out(hx, kh, stride, pad) != ho || conv_out(wx, kw, stride, pad) != wo)
        throw ShapeError("conv2d_igrad: output size inconsistent with stride/pad");

    Tensor y({n, cin, hx, wx});
    const int r = cin * kh * kw, q = ho * wo;
    std::vector<double> col(static_cast<size_t>(r) * q);
    CMapMat wm(tw.data(), cout, r);
    for (int i = 0; i < n; ++i) {
        CMapMat gm(tg.data() + static_cast<size_t>(i) * cout * q, cout, q);
        MapMat cm(col.data(), r, q);
        cm.noalias() = wm.transpose() * gm;
        col2im(col.data(), cin, hx, wx, kh, kw, stride, pad, ho, wo,
               y.data() + static_cast<size_t>(i) * cin * hx * wx);
    }
    return t.emit(std::move(y), {gy.id, w.id}, [gy, w, stride, pad, kh, kw](Tape& tp, Var u) {
        Var d_gy = conv2d(tp, u, w, stride, pad);
        Var d_w = conv2d_wgrad(tp, u, gy, stride, pad, kh, kw);
        return std::vector<Var>{d_gy, d_w};
    });
}

Var conv2d_wgrad(Tape& t, Var x, Var gy, int stride, int pad, int kh, int kw) {
    Tensor tx = t.val(x), tg = t.val(gy);
    check_4d(tx, "conv2d_wgrad");
    check_4d(tg, "conv2d_wgrad");
    if (tx.dim(0) != tg.dim(0)) throw ShapeError("conv2d_wgrad: batch mismatch");
    const int n = tx.dim(0), cin = tx.dim(1), h = tx.dim(2), w = tx.dim(3);
    const int cout = tg.dim(1), ho = tg.dim(2), wo = tg.dim(3);
    if (conv_out(h, kh, stride, pad) != ho || conv_out(w, kw, stride, pad) != wo)
        throw ShapeError("conv2d_wgrad: grad size inconsistent with stride/pad");

    Tensor y({cout, cin, kh, kw});
    const int r = cin * kh * kw, q = ho * wo;
    std::vector<double> col(static_cast<size_t>(r) * q);
    MapMat ym(y.data(), cout, r);
    for (int i = 0; i < n; ++i) {
        im2col(tx.data() + static_cast<size_t>(i) * cin * h * w, cin, h, w, kh, kw, stride, pad,
               ho, wo, col.data());
        CMapMat cm(col.data(), r, q);
        CMapMat gm(tg.data() + static_cast<size_t>(i) * cout * q, cout, q);
        ym.noalias() += gm * cm.transpose();
    }
    const int hx = h, wx = w;
    return t.emit(std::move(y), {x.id, gy.id}, [x, gy, stride, pad, hx, wx](Tape& tp, Var v) {
        Var d_x = conv2d_igrad(tp, gy, v, stride, pad, hx, wx);
        Var d_gy = conv2d(tp, x, v, stride, pad);
        return std::vector<Var>{d_x, d_gy};
    });
}

Var add_bias(Tape& t, Var x, Var b) {
    Tensor tx = t.val(x), tb = t.val(b);
    check_4d(tx, "add_bias");
    if (tb.ndim() != 1 || tb.dim(0) != tx.dim(1))
        throw ShapeError("add_bias: bias must be a {C} vector");
    const int n = tx.dim(0), c = tx.dim(1), h = tx.dim(2), w = tx.dim(3);
    Tensor y(tx.shape());
    const size_t hw = static_cast<size_t>(h) * w;
    for (int i = 0; i < n; ++i)
        for (int ch = 0; ch < c; ++ch) {
            const double bv = tb[static_cast<size_t>(ch)];
            const size_t off = (static_cast<size_t>(i) * c + ch) * hw;
            for (size_t k = 0; k < hw; ++k) y[off + k] = tx[off + k] + bv;
        }
    return t.emit(std::move(y), {x.id, b.id}, [](Tape& tp, Var g) {
        return std::vector<Var>{g, sum_nhw(tp, g)};
    });
}

Var cross_entropy_mean(Tape& t, Var logits, std::vector<int> labels) {
    Tensor tl = t.val(logits);
    if (tl.ndim() != 2) throw ShapeError("cross_entropy_mean: logits must be {N,K}");
    const int n = tl.dim(0), k = tl.dim(1);
    if (static_cast<int>(labels.size()) != n)
        throw ShapeError("cross_entropy_mean: label count mismatch");
    double loss = 0.0;
    Tensor dlogits({n, k});
    for (int i = 0; i < n; ++i) {
        const double* row = tl.data() + static_cast<size_t>(i) * k;
        const int y = labels[static_cast<size_t>(i)];
        if (y < 0 || y >= k) throw ValueError("cross_entropy_mean: label out of range");
        double m = row[0];
        for (int j = 1; j < k; ++j) m = std::max(m, row[j]);
        double z = 0.0;
        for (int j = 0; j < k; ++j) z += std::exp(row[j] - m);
        loss += (m + std::log(z)) - row[y];
        for (int j = 0; j < k; ++j) {
            const double p = std::exp(row[j] - m) / z;
            dlogits[static_cast<size_t>(i) * k + j] = (p - (j == y ? 1.0 : 0.0)) / n;
        }
    }
    return t.emit(Tensor::scalar(loss / n), {logits.id}, [dlogits](Tape& tp, Var g) {
        return std::vector<Var>{mul_s(tp, tp.leaf(dlogits), g)};
    });
}

Var instance_norm(Tape& t, Var x, Var gamma, Var beta, double eps) {
    Tensor tx = t.val(x);
    check_4d(tx, "instance_norm");
    const int n = tx.dim(0), c = tx.dim(1), h = tx.dim(2), w = tx.dim(3);
    Var mu = mean_hw(t, x);
    Var xc = sub(t, x, bcast_hw(t, mu, h, w));
    Var var = mean_hw(t, mul(t, xc, xc));
    Var std_ = sqrt(t, add_c(t, var, eps));
    Var inv = div(t, t.leaf(Tensor::full({n, c, 1, 1}, 1.0)), std_);
    Var xn = mul(t, xc, bcast_hw(t, inv, h, w));
    return add(t, mul(t, xn, bcast_cvec(t, gamma, n, h, w)), bcast_cvec(t, beta, n, h, w));
}

}  // namespace ops

}  // namespace tcmgan
