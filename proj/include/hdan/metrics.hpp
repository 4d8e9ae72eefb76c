#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "hdan/volume.hpp"

namespace hdan {

// One tissue class as a foreground mask over the label grid.
struct BinaryMask {
    std::vector<uint8_t> voxels;
    std::array<int64_t, 3> dims{0, 0, 0};
    std::array<double, 3> spacing_mm{1.0, 1.0, 1.0};

    int64_t numel() const { return dims[0] * dims[1] * dims[2]; }
};

// Surface voxel centers in physical mm.
struct BoundarySet {
    std::vector<std::array<double, 3>> points;
};

// Per-class segmentation quality. A flag marks a metric whose definition is
// vacuous for the given masks (empty sets) rather than a computed value.
struct ClassMetrics {
    double dice = 0.0;
    double mhd = 0.0;
    bool dice_missing = false;
    bool mhd_missing = false;
};

BinaryMask binarize(const LabelMap& labels, uint8_t cls);

// 2|A n G| / (|A| + |G|) on voxel counts.
double dice(const BinaryMask& a, const BinaryMask& g);

// Foreground voxels with at least one 6-face-neighbor outside the mask;
// out-of-volume counts as outside. Coordinates are voxel index * spacing.
BoundarySet extract_boundary(const BinaryMask& mask);

// max of the two directed mean nearest-neighbor distances between the sets.
double mhd(const BoundarySet& a, const BoundarySet& g);

// Dice and modified Hausdorff for every foreground class, background
// excluded. Empty-mask conditions set the per-class flags instead of
// aborting the subject.
std::vector<ClassMetrics> evaluate_subject(const LabelMap& pred,
                                           const LabelMap& truth,
                                           int64_t num_classes = 4);

}  // namespace hdan
