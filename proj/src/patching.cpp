#include "hdan/patching.hpp"

#include <algorithm>
#include <numeric>

#include "hdan/errors.hpp"

namespace hdan {

namespace {

std::vector<int64_t> axis_origins(int64_t dim, int64_t patch, int64_t stride) {
    std::vector<int64_t> out;
    const int64_t last = dim - patch;
    for (int64_t o = 0; o < last; o += stride) out.push_back(o);
    out.push_back(last);
    return out;
}

void check_spec(const PatchSpec& spec) {
    for (int a = 0; a < 3; ++a) {
        if (spec.patch_size[static_cast<size_t>(a)] < 1)
            throw InvalidConfig("patch size must be positive");
        if (spec.stride[static_cast<size_t>(a)] < 1 ||
            spec.stride[static_cast<size_t>(a)] > spec.patch_size[static_cast<size_t>(a)])
            throw InvalidConfig("stride must lie in [1, patch_size]");
    }
}

void check_origin(const std::array<int64_t, 3>& origin,
                  const std::array<int64_t, 3>& dims, const PatchSpec& spec) {
    for (size_t a = 0; a < 3; ++a)
        if (origin[a] < 0 || origin[a] + spec.patch_size[a] > dims[a])
            throw OriginOutOfBounds("patch window exceeds the volume extent");
}

}  // namespace

PatchGrid plan_patches(const std::array<int64_t, 3>& dims, const PatchSpec& spec) {
    check_spec(spec);
    for (size_t a = 0; a < 3; ++a)
        if (dims[a] < spec.patch_size[a])
            throw PatchLargerThanVolume("volume smaller than the patch size");

    std::array<std::vector<int64_t>, 3> axes;
    for (size_t a = 0; a < 3; ++a)
        axes[a] = axis_origins(dims[a], spec.patch_size[a], spec.stride[a]);

    PatchGrid grid;
    grid.volume_dims = dims;
    grid.spec = spec;
    grid.origins.reserve(axes[0].size() * axes[1].size() * axes[2].size());
    for (int64_t z : axes[0])
        for (int64_t y : axes[1])
            for (int64_t x : axes[2]) grid.origins.push_back({z, y, x});
    return grid;
}

Tensor extract(const MultiModalVolume& vol, const std::array<int64_t, 3>& origin,
               const PatchSpec& spec) {
    check_spec(spec);
    check_origin(origin, vol.dims(), spec);
    const auto& p = spec.patch_size;
    const int64_t M = vol.modalities();
    const auto d = vol.dims();
    Tensor out({M, p[0], p[1], p[2]});
    for (int64_t m = 0; m < M; ++m)
        for (int64_t z = 0; z < p[0]; ++z)
            for (int64_t y = 0; y < p[1]; ++y) {
                const double* src =
                    vol.data.data() +
                    ((m * d[0] + origin[0] + z) * d[1] + origin[1] + y) * d[2] +
                    origin[2];
                double* dst = out.data() + ((m * p[0] + z) * p[1] + y) * p[2];
                std::copy(src, src + p[2], dst);
            }
    return out;
}

LabelMap extract(const LabelMap& labels, const std::array<int64_t, 3>& origin,
                 const PatchSpec& spec) {
    check_spec(spec);
    check_origin(origin, labels.dims, spec);
    const auto& p = spec.patch_size;
    LabelMap out;
    out.dims = p;
    out.class_names = labels.class_names;
    out.spacing_mm = labels.spacing_mm;
    out.labels.resize(static_cast<size_t>(out.numel()));
    for (int64_t z = 0; z < p[0]; ++z)
        for (int64_t y = 0; y < p[1]; ++y) {
            const uint8_t* src =
                labels.labels.data() +
                ((origin[0] + z) * labels.dims[1] + origin[1] + y) * labels.dims[2] +
                origin[2];
            uint8_t* dst = out.labels.data() + (z * p[1] + y) * p[2];
            std::copy(src, src + p[2], dst);
        }
    return out;
}

ProbabilityMap fuse(const PatchGrid& grid, const std::vector<Tensor>& patch_probs,
                    const std::array<double, 3>& spacing_mm) {
    if (patch_probs.size() != grid.origins.size())
        throw GridMismatch("patch count does not match the grid");
    if (patch_probs.empty()) throw GridMismatch("empty grid");

    const auto& p = grid.spec.patch_size;
    const int64_t C = patch_probs.front().dim(0);
    for (const Tensor& t : patch_probs)
        if (t.rank() != 4 || t.dim(0) != C || t.dim(1) != p[0] || t.dim(2) != p[1] ||
            t.dim(3) != p[2])
            throw GridMismatch("patch tensor shape does not match the grid spec");

    std::vector<size_t> order(grid.origins.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        return grid.origins[a] < grid.origins[b];
    });

    const auto& d = grid.volume_dims;
    const int64_t N = d[0] * d[1] * d[2];
    ProbabilityMap out;
    out.spacing_mm = spacing_mm;
    out.probs = Tensor({C, d[0], d[1], d[2]});

    // Shifted accumulation: the lexicographically first covering patch sets a
    // per-voxel reference and later patches add deltas against it, so equal
    // contributions average back to the reference bit-exactly.
    std::vector<int32_t> counts(static_cast<size_t>(N), 0);
    std::vector<double> deltas(static_cast<size_t>(C * N), 0.0);

    for (size_t oi : order) {
        const auto& origin = grid.origins[oi];
        const Tensor& t = patch_probs[oi];
        for (int64_t z = 0; z < p[0]; ++z)
            for (int64_t y = 0; y < p[1]; ++y) {
                const int64_t row =
                    ((origin[0] + z) * d[1] + origin[1] + y) * d[2] + origin[2];
                const int64_t patch_row = (z * p[1] + y) * p[2];
                const int64_t patch_stride = p[0] * p[1] * p[2];
                for (int64_t x = 0; x < p[2]; ++x) {
                    const int64_t vox = row + x;
                    const bool first = counts[static_cast<size_t>(vox)]++ == 0;
                    for (int64_t c = 0; c < C; ++c) {
                        const double v = t[c * patch_stride + patch_row + x];
                        if (first)
                            out.probs[c * N + vox] = v;
                        else
                            deltas[static_cast<size_t>(c * N + vox)] +=
                                v - out.probs[c * N + vox];
                    }
                }
            }
    }

    for (int64_t i = 0; i < N; ++i)
        if (counts[static_cast<size_t>(i)] == 0)
            throw GridMismatch("grid leaves voxels uncovered");
    for (int64_t c = 0; c < C; ++c)
        for (int64_t i = 0; i < N; ++i)
            out.probs[c * N + i] += deltas[static_cast<size_t>(c * N + i)] /
                                    counts[static_cast<size_t>(i)];
    return out;
}

}  // namespace hdan
