#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "hdan/tensor.hpp"
#include "hdan/volume.hpp"

namespace hdan {

// Sliding-window geometry. Strides may not exceed the patch extent, so
// consecutive windows always overlap or touch.
struct PatchSpec {
    std::array<int64_t, 3> patch_size{64, 64, 64};
    std::array<int64_t, 3> stride{32, 32, 32};
};

// Planned window corners over one volume. Origins are ordered
// lexicographically (z, then y, then x).
struct PatchGrid {
    std::vector<std::array<int64_t, 3>> origins;
    std::array<int64_t, 3> volume_dims{0, 0, 0};
    PatchSpec spec;
};

// Regular per-axis progression 0, s, 2s, ... with the last origin clamped to
// dims - patch_size, so the union of windows covers every voxel.
PatchGrid plan_patches(const std::array<int64_t, 3>& dims, const PatchSpec& spec);

// Copy one window; modality axis is preserved. The window must lie fully
// inside the volume.
Tensor extract(const MultiModalVolume& vol, const std::array<int64_t, 3>& origin,
               const PatchSpec& spec);
LabelMap extract(const LabelMap& labels, const std::array<int64_t, 3>& origin,
                 const PatchSpec& spec);

// Count-weighted average of per-patch class distributions back onto the full
// grid. Accumulation visits patches in lexicographic origin order, so the
// result is independent of the caller's patch ordering.
ProbabilityMap fuse(const PatchGrid& grid, const std::vector<Tensor>& patch_probs,
                    const std::array<double, 3>& spacing_mm = {1.0, 1.0, 1.0});

}  // namespace hdan
