#ifndef TCMGAN_LOSSES_HPP
#define TCMGAN_LOSSES_HPP

#include <functional>
#include <string>
#include <vector>

#include "tcmgan/nets.hpp"
#include "tcmgan/rng.hpp"
#include "tcmgan/tape.hpp"

namespace tcmgan {

// Training variants. pix2pix keeps only the adversarial + L1 terms, mgan adds
// the modality-classification terms, the tcmgan variants add the
// tumor-consistency term (bw also backpropagates into the segmentor).
enum class Mode { Pix2pix, Mgan, TcMgan, TcMganBw };

Mode parse_mode(const std::string& name);  // "pix2pix" | "mgan" | "tcmgan" | "tcmgan-bw"
std::string mode_name(Mode mode);
bool mode_uses_cls(Mode mode);
bool mode_uses_seg(Mode mode);

struct LossWeights {
    double l1 = 0.1;
    double cls = 10.0;
    double seg = 50.0;
    double gp = 100.0;
    void validate() const;  // all non-negative
};

// One training batch: source slices, per-sample target slices matching
// `labels`, and the whole-tumor masks.
struct Batch {
    Tensor x;    // {N,1,s,s} source modality in [-1,1]
    Tensor y;    // {N,1,s,s} target modality in [-1,1]
    Tensor gt;   // {N,1,s,s} binary
    std::vector<int> labels;
    int size() const { return x.defined() ? x.dim(0) : 0; }
};

Var l1_loss(Tape& t, Var y_hat, Var y);

// cross-entropy of the cls head on a (source, candidate) pair
Var cls_loss_real(Tape& t, const Discriminator& d, const std::vector<Var>& dvars, Var x, Var y,
                  const std::vector<int>& labels);
Var cls_loss_fake(Tape& t, const Discriminator& d, const std::vector<Var>& dvars, Var x,
                  Var y_fake, const std::vector<int>& labels);

// soft dice, per sample, averaged over the batch
Var dice_loss(Tape& t, Var prob, Var gt, double smooth = 1.0);

Var tumor_consistency_loss(Tape& t, const Segmentor& s, const std::vector<Var>& svars,
                           Var g_output, const std::vector<int>& labels, Var gt,
                           double smooth = 1.0);

// x_hat = eps * y_real + (1 - eps) * y_fake, eps uniform per sample
Tensor make_interpolant(const Tensor& y_real, const Tensor& y_fake, Rng& rng);

// A critic maps the interpolant batch to a patch map {N,1,hp,wp}; the
// per-sample score is the patch mean. The penalty differentiates the score
// w.r.t. the interpolant only and pushes its per-sample gradient 2-norm to 1.
using CriticFn = std::function<Var(Tape&, Var xhat)>;
Var gradient_penalty_core(Tape& t, const CriticFn& critic, const Tensor& y_real,
                          const Tensor& y_fake, Rng& rng);

Var gradient_penalty(Tape& t, const Discriminator& d, const std::vector<Var>& dvars,
                     const Tensor& x, const Tensor& y_real, const Tensor& y_fake, Rng& rng);

struct DLossTerms {
    double adv_real = 0, adv_fake = 0, cls = 0, gp = 0, total = 0;
};

// Critic objective: -E[src(x,y)] + E[src(x,G(x,c))] + cls and gradient-penalty
// terms. The generator is evaluated out-of-graph, so no gradient reaches it.
Var d_total(Tape& t, const Discriminator& d, const std::vector<Var>& dvars, const Generator& g,
            const Batch& batch, const LossWeights& w, Mode mode, Rng& rng,
            DLossTerms* terms = nullptr);

struct GLossTerms {
    double adv = 0, cls = 0, l1 = 0, seg = 0, total = 0;
};

// Generator objective: -E[src(x,G(x,c))] + weighted cls / L1 / seg terms,
// gated by mode. dvars are bound but never stepped; svars may be stepped only
// in bw mode (the caller decides by requesting gradients).
Var g_total(Tape& t, const Discriminator& d, const std::vector<Var>& dvars, const Generator& g,
            const std::vector<Var>& gvars, const Segmentor* s, const std::vector<Var>& svars,
            const Batch& batch, const LossWeights& w, Mode mode, GLossTerms* terms = nullptr,
            Var* fake_out = nullptr);

}  // namespace tcmgan

#endif
