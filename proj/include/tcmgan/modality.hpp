#ifndef TCMGAN_MODALITY_HPP
#define TCMGAN_MODALITY_HPP

#include <array>
#include <string>
#include <vector>

#include "tcmgan/tensor.hpp"

namespace tcmgan {

// Fixed target-domain mapping: 0 -> FLAIR, 1 -> T1, 2 -> T1ce. T2 is the
// source modality and never appears as a target label.
inline constexpr int kNumTargetModalities = 3;
inline constexpr const char* kSourceModality = "T2";
inline constexpr std::array<const char*, 3> kTargetModalities{"FLAIR", "T1", "T1ce"};

struct ModalityLabel {
    explicit ModalityLabel(int i) : index(i) {
        if (i < 0 || i >= kNumTargetModalities)
            throw ValueError("modality label index out of range: " + std::to_string(i));
    }
    int index;
    const char* name() const { return kTargetModalities[static_cast<size_t>(index)]; }
};

int target_modality_index(const std::string& name);  // throws ValueError on unknown name

// One-hot spatial encoding: channel c is all ones, others zero. {3, size, size}
Tensor encode_modality_label(int c, int size);

// Batched version used as network input: {N, 3, size, size}
Tensor modality_planes(const std::vector<int>& labels, int size);

}  // namespace tcmgan

#endif
