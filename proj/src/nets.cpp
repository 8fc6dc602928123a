#include "tcmgan/nets.hpp"

#include <algorithm>
#include <cmath>

namespace tcmgan {

namespace {

constexpr double kInitStd = 0.02;
constexpr double kLeakySlope = 0.2;
constexpr int kMaxWidthMultiple = 8;

std::uint64_t kind_seed(std::uint64_t seed, NetKind kind) {
    const std::uint64_t tag = kind == NetKind::Generator       ? 0x47
                              : kind == NetKind::Discriminator ? 0x44
                                                               : 0x53;
    return seed ^ (tag * 0x9E3779B97F4A7C15ull);
}

void check_spatial(const Tensor& x, int depth, const char* who) {
    const int s = 1 << depth;
    if (x.dim(2) % s != 0 || x.dim(3) % s != 0)
        throw ShapeError(std::string(who) + ": spatial size " + x.shape_str() +
                         " not divisible by 2^depth");
}

}  // namespace

int target_modality_index(const std::string& name) {
    for (int i = 0; i < kNumTargetModalities; ++i)
        if (name == kTargetModalities[static_cast<size_t>(i)]) return i;
    throw ValueError("unknown target modality: " + name);
}

Tensor encode_modality_label(int c, int size) {
    return modality_planes({c}, size).reshaped({kNumTargetModalities, size, size});
}

Tensor modality_planes(const std::vector<int>& labels, int size) {
    const int n = static_cast<int>(labels.size());
    Tensor planes({n, kNumTargetModalities, size, size});
    const size_t hw = static_cast<size_t>(size) * size;
    for (int i = 0; i < n; ++i) {
        ModalityLabel label(labels[static_cast<size_t>(i)]);  // validates range
        double* p = planes.data() +
                    (static_cast<size_t>(i) * kNumTargetModalities + label.index) * hw;
        std::fill_n(p, hw, 1.0);
    }
    return planes;
}

void ArchConfig::validate() const {
    if (depth < 1) throw ConfigError("arch depth must be >= 1");
    if (base_width < 4) throw ConfigError("arch base_width must be >= 4");
}

Tensor& ParamSet::add(std::string name, std::vector<int> shape) {
    names.push_back(std::move(name));
    tensors.emplace_back(std::move(shape));
    return tensors.back();
}

std::size_t ParamSet::scalar_count() const {
    std::size_t n = 0;
    for (const auto& t : tensors) n += t.size();
    return n;
}

std::vector<Var> ParamSet::bind(Tape& t) const {
    std::vector<Var> vars;
    vars.reserve(tensors.size());
    for (const auto& p : tensors) vars.push_back(t.leaf(p));
    return vars;
}

std::uint64_t ParamSet::checksum() const {
    std::uint64_t h = 14695981039346656037ull;
    for (const auto& t : tensors) {
        h ^= tensor_checksum(t);
        h *= 1099511628211ull;
    }
    return h;
}

// ---------------------------------------------------------------------------
// UNet

UNet::UNet(ArchConfig arch, int in_ch, int out_ch, FinalAct act, Rng& init_rng)
    : arch_(arch), in_ch_(in_ch), out_ch_(out_ch), act_(act) {
    arch_.validate();
    const int d = arch_.depth;
    auto width = [&](int level) {
        return std::min(arch_.base_width << level, arch_.base_width * kMaxWidthMultiple);
    };

    auto add_conv = [&](const std::string& name, int cin, int cout, bool norm, bool transposed) {
        Conv c;
        // transposed conv weights are stored {Cin, Cout, kh, kw}
        std::vector<int> wshape = transposed ? std::vector<int>{cin, cout, 4, 4}
                                             : std::vector<int>{cout, cin, 4, 4};
        Tensor& w = params_.add(name + ".weight", wshape);
        init_rng.fill_normal(w.data(), w.size(), 0.0, kInitStd);
        c.w = static_cast<int>(params_.tensors.size()) - 1;
        params_.add(name + ".bias", {cout});
        c.b = static_cast<int>(params_.tensors.size()) - 1;
        if (norm) {
            Tensor& gamma = params_.add(name + ".norm.gamma", {cout});
            std::fill_n(gamma.data(), gamma.size(), 1.0);
            c.norm_gamma = static_cast<int>(params_.tensors.size()) - 1;
            params_.add(name + ".norm.beta", {cout});
            c.norm_beta = static_cast<int>(params_.tensors.size()) - 1;
        }
        return c;
    };

    int prev = in_ch;
    for (int i = 0; i < d; ++i) {
        enc_.push_back(add_conv("enc" + std::to_string(i), prev, width(i), i > 0, false));
        prev = width(i);
    }
    for (int i = d - 1; i >= 1; --i) {
        const int cin = (i == d - 1) ? width(i) : 2 * width(i);
        dec_.push_back(add_conv("dec" + std::to_string(i), cin, width(i - 1), true, true));
    }
    const int final_in = (d == 1) ? width(0) : 2 * width(0);
    dec_.push_back(add_conv("out", final_in, out_ch, false, true));
}

Var UNet::conv_block(Tape& t, const std::vector<Var>& p, Var x, const Conv& c, bool transposed,
                     bool final_layer) const {
    Var y;
    if (transposed) {
        const int h = t.val(x).dim(2), w = t.val(x).dim(3);
        y = ops::conv2d_igrad(t, x, p[static_cast<size_t>(c.w)], 2, 1, 2 * h, 2 * w);
    } else {
        y = ops::conv2d(t, x, p[static_cast<size_t>(c.w)], 2, 1);
    }
    y = ops::add_bias(t, y, p[static_cast<size_t>(c.b)]);
    if (final_layer)
        return act_ == FinalAct::Tanh ? ops::tanh(t, y) : ops::sigmoid(t, y);
    if (c.norm_gamma >= 0)
        y = ops::instance_norm(t, y, p[static_cast<size_t>(c.norm_gamma)],
                               p[static_cast<size_t>(c.norm_beta)]);
    return transposed ? ops::relu(t, y) : ops::leaky_relu(t, y, kLeakySlope);
}

Var UNet::forward(Tape& t, const std::vector<Var>& p, Var x) const {
    const Tensor& tx = t.val(x);
    if (tx.ndim() != 4 || tx.dim(1) != in_ch_)
        throw ShapeError("unet: expected {N," + std::to_string(in_ch_) + ",H,W}, got " +
                         tx.shape_str());
    check_spatial(tx, arch_.depth, "unet");

    std::vector<Var> skips;
    Var h = x;
    for (size_t i = 0; i < enc_.size(); ++i) {
        h = conv_block(t, p, h, enc_[i], false, false);
        skips.push_back(h);
    }
    const int d = arch_.depth;
    for (int i = d - 1; i >= 1; --i) {
        h = conv_block(t, p, h, dec_[static_cast<size_t>(d - 1 - i)], true, false);
        h = ops::concat_c(t, h, skips[static_cast<size_t>(i - 1)]);
    }
    return conv_block(t, p, h, dec_.back(), true, true);
}

// ---------------------------------------------------------------------------
// Generator

Generator::Generator(ArchConfig arch)
    : unet_([&] {
          Rng rng(kind_seed(arch.seed, NetKind::Generator));
          return UNet(arch, 1 + kNumTargetModalities, 1, UNet::FinalAct::Tanh, rng);
      }()) {}

Var Generator::forward(Tape& t, const std::vector<Var>& p, Var x,
                       const std::vector<int>& labels) const {
    const Tensor& tx = t.val(x);
    if (tx.ndim() != 4 || tx.dim(1) != 1)
        throw ShapeError("generator: expected {N,1,H,W} input, got " + tx.shape_str());
    if (static_cast<int>(labels.size()) != tx.dim(0))
        throw ShapeError("generator: label count does not match batch");
    ++forward_count_;
    Var planes = t.leaf(modality_planes(labels, tx.dim(2)));
    return unet_.forward(t, p, ops::concat_c(t, x, planes));
}

Tensor Generator::synthesize(const Tensor& x, const std::vector<int>& labels) const {
    Tape t;
    auto p = params().bind(t);
    Var y = forward(t, p, t.leaf(x), labels);
    return t.val(y).clone();
}

// ---------------------------------------------------------------------------
// Segmentor

Segmentor::Segmentor(ArchConfig arch, int in_ch)
    : unet_([&] {
          Rng rng(kind_seed(arch.seed, NetKind::Segmentor));
          return UNet(arch, in_ch, 1, UNet::FinalAct::Sigmoid, rng);
      }()) {}

Var Segmentor::forward(Tape& t, const std::vector<Var>& p, Var input) const {
    return unet_.forward(t, p, input);
}

Var Segmentor::forward_labeled(Tape& t, const std::vector<Var>& p, Var y,
                               const std::vector<int>& labels) const {
    const Tensor& ty = t.val(y);
    if (ty.ndim() != 4 || ty.dim(1) != 1)
        throw ShapeError("segmentor: expected {N,1,H,W} image, got " + ty.shape_str());
    Var planes = t.leaf(modality_planes(labels, ty.dim(2)));
    return unet_.forward(t, p, ops::concat_c(t, y, planes));
}

Tensor Segmentor::predict(const Tensor& input) const {
    Tape t;
    auto p = params().bind(t);
    Var y = forward(t, p, t.leaf(input));
    return t.val(y).clone();
}

// ---------------------------------------------------------------------------
// Discriminator

Discriminator::Discriminator(ArchConfig arch) : arch_(arch) {
    arch_.validate();
    Rng rng(kind_seed(arch.seed, NetKind::Discriminator));
    auto width = [&](int level) {
        return std::min(arch_.base_width << level, arch_.base_width * kMaxWidthMultiple);
    };
    auto add_conv = [&](const std::string& name, int cin, int cout, int k) {
        Conv c;
        Tensor& w = params_.add(name + ".weight", {cout, cin, k, k});
        rng.fill_normal(w.data(), w.size(), 0.0, kInitStd);
        c.w = static_cast<int>(params_.tensors.size()) - 1;
        params_.add(name + ".bias", {cout});
        c.b = static_cast<int>(params_.tensors.size()) - 1;
        return c;
    };
    int prev = 2;  // source and candidate concatenated
    for (int i = 0; i < arch_.depth; ++i) {
        trunk_.push_back(add_conv("trunk" + std::to_string(i), prev, width(i), 4));
        prev = width(i);
    }
    src_head_ = add_conv("src", prev, 1, 3);
    cls_head_ = add_conv("cls", prev, kNumTargetModalities, 1);
}

Discriminator::Heads Discriminator::forward(Tape& t, const std::vector<Var>& p, Var x,
                                            Var y) const {
    Tensor tx = t.val(x), ty = t.val(y);
    if (!tx.same_shape(ty))
        throw ShapeError("discriminator: x/y shape mismatch " + tx.shape_str() + " vs " +
                         ty.shape_str());
    if (tx.ndim() != 4 || tx.dim(1) != 1)
        throw ShapeError("discriminator: expected {N,1,H,W} inputs");
    check_spatial(tx, arch_.depth, "discriminator");

    Var h = ops::concat_c(t, x, y);
    for (const auto& c : trunk_) {
        h = ops::conv2d(t, h, p[static_cast<size_t>(c.w)], 2, 1);
        h = ops::add_bias(t, h, p[static_cast<size_t>(c.b)]);
        h = ops::leaky_relu(t, h, kLeakySlope);
    }
    Var src = ops::conv2d(t, h, p[static_cast<size_t>(src_head_.w)], 1, 1);
    src = ops::add_bias(t, src, p[static_cast<size_t>(src_head_.b)]);

    Var pooled = ops::mean_hw(t, h);
    Var cls = ops::conv2d(t, pooled, p[static_cast<size_t>(cls_head_.w)], 1, 0);
    cls = ops::add_bias(t, cls, p[static_cast<size_t>(cls_head_.b)]);
    const int n = tx.dim(0);
    return Heads{src, ops::reshape(t, cls, {n, kNumTargetModalities})};
}

ParamSet init_params(const ArchConfig& arch, NetKind kind) {
    switch (kind) {
        case NetKind::Generator:
            return Generator(arch).params();
        case NetKind::Discriminator:
            return Discriminator(arch).params();
        case NetKind::Segmentor:
            return Segmentor(arch).params();
    }
    throw ConfigError("unknown net kind");
}

}  // namespace tcmgan
