#ifndef TCMGAN_NETS_HPP
#define TCMGAN_NETS_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "tcmgan/modality.hpp"
#include "tcmgan/rng.hpp"
#include "tcmgan/tape.hpp"
#include "tcmgan/tensor.hpp"

namespace tcmgan {

struct ArchConfig {
    int base_width = 64;  // phantom runs use 16
    int depth = 4;        // phantom runs use 3
    std::uint64_t seed = 0;
    void validate() const;
};

enum class NetKind { Generator, Discriminator, Segmentor };

// Flat named parameter list; creation order is the serialization order.
struct ParamSet {
    std::vector<std::string> names;
    std::vector<Tensor> tensors;

    Tensor& add(std::string name, std::vector<int> shape);
    std::size_t scalar_count() const;
    std::vector<Var> bind(Tape& t) const;
    std::uint64_t checksum() const;
};

// Encoder-decoder with skip connections. Stride-2 4x4 convs down, transposed
// convs up, instance norm everywhere except the first encoder and the output
// layer. The critic does not use this (no norm under a gradient penalty).
class UNet {
public:
    enum class FinalAct { Tanh, Sigmoid };

    UNet(ArchConfig arch, int in_ch, int out_ch, FinalAct act, Rng& init_rng);

    Var forward(Tape& t, const std::vector<Var>& p, Var x) const;

    ParamSet& params() { return params_; }
    const ParamSet& params() const { return params_; }
    int depth() const { return arch_.depth; }
    int in_channels() const { return in_ch_; }

private:
    struct Conv {
        int w = -1, b = -1;  // indices into params_
        int norm_gamma = -1, norm_beta = -1;
    };
    ArchConfig arch_;
    int in_ch_, out_ch_;
    FinalAct act_;
    std::vector<Conv> enc_, dec_;  // dec_ runs deepest-first; last entry is the output layer

    Var conv_block(Tape& t, const std::vector<Var>& p, Var x, const Conv& c, bool transposed,
                   bool final_layer) const;
};

// Label-conditioned source->target translator. Input is the source slice
// concatenated with the one-hot label planes; output is tanh-bounded.
class Generator {
public:
    explicit Generator(ArchConfig arch);

    Var forward(Tape& t, const std::vector<Var>& p, Var x,
                const std::vector<int>& labels) const;
    // inference on a scratch tape
    Tensor synthesize(const Tensor& x, const std::vector<int>& labels) const;

    ParamSet& params() { return unet_.params(); }
    const ParamSet& params() const { return unet_.params(); }
    int depth() const { return unet_.depth(); }
    std::uint64_t forward_count() const { return forward_count_; }

private:
    UNet unet_;
    mutable std::uint64_t forward_count_ = 0;
};

// Tumor segmentor: sigmoid U-Net. in_ch = 1 + 3 for the label-conditioned
// variant, 4 for the boost pipeline (all modalities stacked), 1 for the
// single-channel baseline.
class Segmentor {
public:
    Segmentor(ArchConfig arch, int in_ch = 1 + kNumTargetModalities);

    Var forward(Tape& t, const std::vector<Var>& p, Var input) const;
    // concatenates label planes to a 1-channel image before the forward
    Var forward_labeled(Tape& t, const std::vector<Var>& p, Var y,
                        const std::vector<int>& labels) const;
    Tensor predict(const Tensor& input) const;

    ParamSet& params() { return unet_.params(); }
    const ParamSet& params() const { return unet_.params(); }
    int in_channels() const { return unet_.in_channels(); }
    int depth() const { return unet_.depth(); }

private:
    UNet unet_;
};

// Two-headed conditional critic over the (source, candidate) pair. Shared
// strided trunk without normalization; src head is a patch map of unbounded
// scores, cls head is a global-average-pooled 3-way classifier.
class Discriminator {
public:
    explicit Discriminator(ArchConfig arch);

    struct Heads {
        Var src;  // {N, 1, s/2^depth, s/2^depth}
        Var cls;  // {N, 3}
    };
    Heads forward(Tape& t, const std::vector<Var>& p, Var x, Var y) const;

    ParamSet& params() { return params_; }
    const ParamSet& params() const { return params_; }
    int depth() const { return arch_.depth; }

private:
    ArchConfig arch_;
    ParamSet params_;
    struct Conv {
        int w = -1, b = -1;
    };
    std::vector<Conv> trunk_;
    Conv src_head_, cls_head_;
};

// Fresh parameters for a network kind; weights N(0, 0.02), biases zero.
ParamSet init_params(const ArchConfig& arch, NetKind kind);

}  // namespace tcmgan

#endif
