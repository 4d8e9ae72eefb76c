#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hdan/tensor.hpp"

namespace hdan {

// Co-registered multi-modal intensity volume, data layout [M,D,H,W].
struct MultiModalVolume {
    Tensor data;
    std::array<double, 3> spacing_mm{1.0, 1.0, 1.0};
    std::string subject_id;

    int64_t modalities() const { return data.rank() == 4 ? data.dim(0) : 0; }
    std::array<int64_t, 3> dims() const {
        return {data.dim(1), data.dim(2), data.dim(3)};
    }
};

// Per-voxel tissue classes, row-major [D,H,W], values in [0, num_classes).
struct LabelMap {
    std::vector<uint8_t> labels;
    std::array<int64_t, 3> dims{0, 0, 0};
    std::vector<std::string> class_names;
    std::array<double, 3> spacing_mm{1.0, 1.0, 1.0};

    int64_t numel() const { return dims[0] * dims[1] * dims[2]; }
    uint8_t at(int64_t z, int64_t y, int64_t x) const {
        return labels[static_cast<size_t>((z * dims[1] + y) * dims[2] + x)];
    }
    uint8_t& at(int64_t z, int64_t y, int64_t x) {
        return labels[static_cast<size_t>((z * dims[1] + y) * dims[2] + x)];
    }
};

// Per-voxel class distributions, probs layout [C,D,H,W].
struct ProbabilityMap {
    Tensor probs;
    std::array<double, 3> spacing_mm{1.0, 1.0, 1.0};
};

struct PhantomSpec {
    std::array<int64_t, 3> size{64, 64, 64};
    double contrast_delta = 0.5;
    double noise_sigma = 0.05;
    uint64_t seed = 1;
};

const std::vector<std::string>& default_class_names();  // BG, CSF, GM, WM

// Per-modality z-score over the nonzero-intensity mask; background stays 0.
MultiModalVolume normalize(const MultiModalVolume& vol);

// Concentric-ellipsoid brain surrogate: WM core, GM shell, CSF shell,
// background. contrast_delta sets the WM/GM mean separation in both
// modalities; geometry is mildly seed-jittered.
std::pair<MultiModalVolume, LabelMap> generate_phantom(const PhantomSpec& spec);

// Stacks two single-modality volumes into the network input layout.
MultiModalVolume pair_modalities(const MultiModalVolume& t1,
                                 const MultiModalVolume& t2);

}  // namespace hdan
