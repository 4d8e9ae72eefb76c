#include "hdan/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "hdan/errors.hpp"

namespace hdan {

namespace {

// Mean over 'from' of the distance to the nearest point in 'to', with the
// candidate scan pruned by sorted z gaps.
double directed_mean_distance(const std::vector<std::array<double, 3>>& from,
                              std::vector<std::array<double, 3>> to) {
    std::sort(to.begin(), to.end());
    double total = 0.0;
    for (const auto& a : from) {
        double best = std::numeric_limits<double>::infinity();
        const auto mid = std::lower_bound(
            to.begin(), to.end(), a,
            [](const auto& p, const auto& q) { return p[0] < q[0]; });
        auto up = mid;
        auto down = mid;
        while (up != to.end() || down != to.begin()) {
            if (up != to.end()) {
                const double dz = (*up)[0] - a[0];
                if (dz * dz >= best) {
                    up = to.end();
                } else {
                    const double dy = (*up)[1] - a[1], dx = (*up)[2] - a[2];
                    best = std::min(best, dz * dz + dy * dy + dx * dx);
                    ++up;
                }
            }
            if (down != to.begin()) {
                const auto& p = *(down - 1);
                const double dz = p[0] - a[0];
                if (dz * dz >= best) {
                    down = to.begin();
                } else {
                    const double dy = p[1] - a[1], dx = p[2] - a[2];
                    best = std::min(best, dz * dz + dy * dy + dx * dx);
                    --down;
                }
            }
        }
        total += std::sqrt(best);
    }
    return total / static_cast<double>(from.size());
}

}  // namespace

BinaryMask binarize(const LabelMap& labels, uint8_t cls) {
    BinaryMask m;
    m.dims = labels.dims;
    m.spacing_mm = labels.spacing_mm;
    m.voxels.resize(labels.labels.size());
    for (size_t i = 0; i < labels.labels.size(); ++i)
        m.voxels[i] = labels.labels[i] == cls ? 1 : 0;
    return m;
}

double dice(const BinaryMask& a, const BinaryMask& g) {
    if (a.dims != g.dims) throw ShapeMismatch("mask dims disagree");
    int64_t na = 0, ng = 0, both = 0;
    for (size_t i = 0; i < a.voxels.size(); ++i) {
        na += a.voxels[i] ? 1 : 0;
        ng += g.voxels[i] ? 1 : 0;
        both += (a.voxels[i] && g.voxels[i]) ? 1 : 0;
    }
    if (na + ng == 0) throw BothEmpty("dice is undefined for two empty masks");
    return 2.0 * static_cast<double>(both) / static_cast<double>(na + ng);
}

BoundarySet extract_boundary(const BinaryMask& mask) {
    const auto& d = mask.dims;
    auto inside = [&](int64_t z, int64_t y, int64_t x) {
        if (z < 0 || y < 0 || x < 0 || z >= d[0] || y >= d[1] || x >= d[2])
            return false;
        return mask.voxels[static_cast<size_t>((z * d[1] + y) * d[2] + x)] != 0;
    };

    BoundarySet out;
    for (int64_t z = 0; z < d[0]; ++z)
        for (int64_t y = 0; y < d[1]; ++y)
            for (int64_t x = 0; x < d[2]; ++x) {
                if (!inside(z, y, x)) continue;
                const bool surface = !inside(z - 1, y, x) || !inside(z + 1, y, x) ||
                                     !inside(z, y - 1, x) || !inside(z, y + 1, x) ||
                                     !inside(z, y, x - 1) || !inside(z, y, x + 1);
                if (surface)
                    out.points.push_back({static_cast<double>(z) * mask.spacing_mm[0],
                                          static_cast<double>(y) * mask.spacing_mm[1],
                                          static_cast<double>(x) * mask.spacing_mm[2]});
            }
    if (out.points.empty()) throw EmptyMask("boundary of an empty mask");
    return out;
}

double mhd(const BoundarySet& a, const BoundarySet& g) {
    if (a.points.empty() || g.points.empty())
        throw EmptySet("modified Hausdorff needs two nonempty sets");
    return std::max(directed_mean_distance(a.points, g.points),
                    directed_mean_distance(g.points, a.points));
}

std::vector<ClassMetrics> evaluate_subject(const LabelMap& pred,
                                           const LabelMap& truth,
                                           int64_t num_classes) {
    if (pred.dims != truth.dims) throw ShapeMismatch("label map dims disagree");
    if (pred.spacing_mm != truth.spacing_mm)
        throw ShapeMismatch("label map spacings disagree");

    std::vector<ClassMetrics> out;
    for (int64_t cls = 1; cls < num_classes; ++cls) {
        ClassMetrics m;
        const auto pm = binarize(pred, static_cast<uint8_t>(cls));
        const auto tm = binarize(truth, static_cast<uint8_t>(cls));
        try {
            m.dice = dice(pm, tm);
        } catch (const BothEmpty&) {
            m.dice_missing = true;
        }
        try {
            m.mhd = mhd(extract_boundary(pm), extract_boundary(tm));
        } catch (const EmptyMask&) {
            m.mhd_missing = true;
        }
        out.push_back(m);
    }
    return out;
}

}  // namespace hdan
