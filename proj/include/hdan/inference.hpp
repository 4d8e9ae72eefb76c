#pragma once

#include <optional>

#include "hdan/network.hpp"
#include "hdan/patching.hpp"
#include "hdan/volume.hpp"

namespace hdan {

struct InferenceConfig {
    PatchSpec patch_spec;
    bool trace_attention = false;
    int attention_stage = 1;  // 0 refines extractor features, 1..4 the blocks
};

struct Prediction {
    LabelMap labels;
    ProbabilityMap probs;
    // Scalar [1,D,H,W] volume fused from per-patch spatial attention maps.
    std::optional<MultiModalVolume> attention;
};

// Per-voxel argmax over the class axis; ties go to the lowest class index.
LabelMap argmax_labels(const ProbabilityMap& probs);

// Integer-factor nearest-neighbor upsample of [C,d,h,w] to the target dims.
Tensor upsample_nearest(const Tensor& t, const std::array<int64_t, 3>& target);

// Sliding-window prediction: plan windows, forward each patch without a
// graph, fuse the distributions, then argmax.
Prediction predict_volume(Network& net, const MultiModalVolume& vol,
                          const InferenceConfig& cfg);

}  // namespace hdan
