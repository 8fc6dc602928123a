#include "tcmgan/losses.hpp"

namespace tcmgan {

namespace op = tcmgan::ops;

Mode parse_mode(const std::string& name) {
    if (name == "pix2pix") return Mode::Pix2pix;
    if (name == "mgan") return Mode::Mgan;
    if (name == "tcmgan") return Mode::TcMgan;
    if (name == "tcmgan-bw") return Mode::TcMganBw;
    throw ConfigError("unknown mode: " + name);
}

std::string mode_name(Mode mode) {
    switch (mode) {
        case Mode::Pix2pix: return "pix2pix";
        case Mode::Mgan: return "mgan";
        case Mode::TcMgan: return "tcmgan";
        case Mode::TcMganBw: return "tcmgan-bw";
    }
    throw ConfigError("unknown mode value");
}

bool mode_uses_cls(Mode mode) { return mode != Mode::Pix2pix; }

bool mode_uses_seg(Mode mode) { return mode == Mode::TcMgan || mode == Mode::TcMganBw; }

void LossWeights::validate() const {
    if (l1 < 0 || cls < 0 || seg < 0 || gp < 0)
        throw ConfigError("loss weights must be non-negative");
}

Var l1_loss(Tape& t, Var y_hat, Var y) {
    if (!t.val(y_hat).same_shape(t.val(y)))
        throw ShapeError("l1_loss: shape mismatch");
    return op::mean_all(t, op::abs(t, op::sub(t, y_hat, y)));
}

Var cls_loss_real(Tape& t, const Discriminator& d, const std::vector<Var>& dvars, Var x, Var y,
                  const std::vector<int>& labels) {
    auto heads = d.forward(t, dvars, x, y);
    return op::cross_entropy_mean(t, heads.cls, labels);
}

Var cls_loss_fake(Tape& t, const Discriminator& d, const std::vector<Var>& dvars, Var x,
                  Var y_fake, const std::vector<int>& labels) {
    return cls_loss_real(t, d, dvars, x, y_fake, labels);
}

Var dice_loss(Tape& t, Var prob, Var gt, double smooth) {
    if (!t.val(prob).same_shape(t.val(gt)))
        throw ShapeError("dice_loss: shape mismatch");
    Var inter = op::sum_per_sample(t, op::mul(t, prob, gt));
    Var psum = op::sum_per_sample(t, prob);
    Var gsum = op::sum_per_sample(t, gt);
    Var num = op::add_c(t, op::mul_c(t, inter, 2.0), smooth);
    Var den = op::add_c(t, op::add(t, psum, gsum), smooth);
    Var dice = op::div(t, num, den);
    return op::add_c(t, op::neg(t, op::mean_all(t, dice)), 1.0);
}

Var tumor_consistency_loss(Tape& t, const Segmentor& s, const std::vector<Var>& svars,
                           Var g_output, const std::vector<int>& labels, Var gt, double smooth) {
    Var prob = s.forward_labeled(t, svars, g_output, labels);
    return dice_loss(t, prob, gt, smooth);
}

Tensor make_interpolant(const Tensor& y_real, const Tensor& y_fake, Rng& rng) {
    if (!y_real.same_shape(y_fake))
        throw ShapeError("make_interpolant: shape mismatch");
    const int n = y_real.dim(0);
    const size_t per = y_real.size() / static_cast<size_t>(n);
    Tensor xhat(y_real.shape());
    for (int i = 0; i < n; ++i) {
        const double eps = rng.uniform();
        const size_t off = static_cast<size_t>(i) * per;
        for (size_t k = 0; k < per; ++k)
            xhat[off + k] = eps * y_real[off + k] + (1.0 - eps) * y_fake[off + k];
    }
    return xhat;
}

Var gradient_penalty_core(Tape& t, const CriticFn& critic, const Tensor& y_real,
                          const Tensor& y_fake, Rng& rng) {
    Var xhat = t.leaf(make_interpolant(y_real, y_fake, rng));
    Var patch = critic(t, xhat);
    const int n = t.val(patch).dim(0);
    // per-sample patch mean, summed over the batch so each sample's gradient
    // comes out unscaled
    Var score = op::sum_all(t, op::reshape(t, op::mean_hw(t, patch), {n}));
    Var grad = t.gradient(score, {xhat})[0];
    Var norms = op::sqrt(t, op::sum_per_sample(t, op::mul(t, grad, grad)));
    return op::mean_all(t, op::square(t, op::add_c(t, norms, -1.0)));
}

Var gradient_penalty(Tape& t, const Discriminator& d, const std::vector<Var>& dvars,
                     const Tensor& x, const Tensor& y_real, const Tensor& y_fake, Rng& rng) {
    Var xv = t.leaf(x);
    CriticFn critic = [&d, &dvars, xv](Tape& tp, Var xhat) {
        return d.forward(tp, dvars, xv, xhat).src;
    };
    return gradient_penalty_core(t, critic, y_real, y_fake, rng);
}

Var d_total(Tape& t, const Discriminator& d, const std::vector<Var>& dvars, const Generator& g,
            const Batch& batch, const LossWeights& w, Mode mode, Rng& rng, DLossTerms* terms) {
    Tensor fake = g.synthesize(batch.x, batch.labels);  // out-of-graph: G stays fixed

    Var x = t.leaf(batch.x);
    Var y_real = t.leaf(batch.y);
    Var y_fake = t.leaf(fake);

    auto real_heads = d.forward(t, dvars, x, y_real);
    auto fake_heads = d.forward(t, dvars, x, y_fake);

    Var adv_real = op::neg(t, op::mean_all(t, real_heads.src));
    Var adv_fake = op::mean_all(t, fake_heads.src);
    Var total = op::add(t, adv_real, adv_fake);

    Var cls{};
    if (mode_uses_cls(mode)) {
        cls = op::cross_entropy_mean(t, real_heads.cls, batch.labels);
        total = op::add(t, total, op::mul_c(t, cls, w.cls));
    }
    Var gp = gradient_penalty(t, d, dvars, batch.x, batch.y, fake, rng);
    total = op::add(t, total, op::mul_c(t, gp, w.gp));

    if (terms) {
        terms->adv_real = t.val(adv_real)[0];
        terms->adv_fake = t.val(adv_fake)[0];
        terms->cls = cls.valid() ? t.val(cls)[0] : 0.0;
        terms->gp = t.val(gp)[0];
        terms->total = t.val(total)[0];
    }
    return total;
}

Var g_total(Tape& t, const Discriminator& d, const std::vector<Var>& dvars, const Generator& g,
            const std::vector<Var>& gvars, const Segmentor* s, const std::vector<Var>& svars,
            const Batch& batch, const LossWeights& w, Mode mode, GLossTerms* terms,
            Var* fake_out) {
    if (mode_uses_seg(mode) && s == nullptr)
        throw ConfigError("g_total: " + mode_name(mode) + " requires a segmentor");

    Var x = t.leaf(batch.x);
    Var y_real = t.leaf(batch.y);
    Var fake = g.forward(t, gvars, x, batch.labels);
    if (fake_out) *fake_out = fake;

    auto fake_heads = d.forward(t, dvars, x, fake);
    Var adv = op::neg(t, op::mean_all(t, fake_heads.src));
    Var l1 = l1_loss(t, fake, y_real);
    Var total = op::add(t, adv, op::mul_c(t, l1, w.l1));

    Var cls{};
    if (mode_uses_cls(mode)) {
        cls = op::cross_entropy_mean(t, fake_heads.cls, batch.labels);
        total = op::add(t, total, op::mul_c(t, cls, w.cls));
    }
    Var seg{};
    if (mode_uses_seg(mode)) {
        Var gt = t.leaf(batch.gt);
        seg = tumor_consistency_loss(t, *s, svars, fake, batch.labels, gt);
        total = op::add(t, total, op::mul_c(t, seg, w.seg));
    }

    if (terms) {
        terms->adv = t.val(adv)[0];
        terms->cls = cls.valid() ? t.val(cls)[0] : 0.0;
        terms->l1 = t.val(l1)[0];
        terms->seg = seg.valid() ? t.val(seg)[0] : 0.0;
        terms->total = t.val(total)[0];
    }
    return total;
}

}  // namespace tcmgan
