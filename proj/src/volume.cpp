#include "hdan/volume.hpp"

#include <cmath>

#include "hdan/errors.hpp"
#include "hdan/rng.hpp"

namespace hdan {

const std::vector<std::string>& default_class_names() {
    static const std::vector<std::string> names{"BG", "CSF", "GM", "WM"};
    return names;
}

MultiModalVolume normalize(const MultiModalVolume& vol) {
    const Tensor& d = vol.data;
    if (d.rank() != 4)
        throw BadInputShape("normalize expects [M,D,H,W], got " + shape_str(d.shape));
    MultiModalVolume out = vol;
    const int64_t M = d.dim(0), N = d.dim(1) * d.dim(2) * d.dim(3);
    for (int64_t m = 0; m < M; ++m) {
        const double* src = d.data() + m * N;
        double* dst = out.data.data() + m * N;
        double sum = 0.0;
        int64_t count = 0;
        for (int64_t i = 0; i < N; ++i)
            if (src[i] != 0.0) {
                sum += src[i];
                ++count;
            }
        if (count == 0)
            throw DegenerateIntensity("modality " + std::to_string(m) +
                                      " has no nonzero voxels");
        const double mean = sum / static_cast<double>(count);
        double var = 0.0;
        for (int64_t i = 0; i < N; ++i)
            if (src[i] != 0.0) {
                const double dv = src[i] - mean;
                var += dv * dv;
            }
        const double sigma = std::sqrt(var / static_cast<double>(count));
        if (sigma < 1e-12)
            throw DegenerateIntensity("modality " + std::to_string(m) +
                                      " foreground is constant");
        for (int64_t i = 0; i < N; ++i)
            dst[i] = src[i] == 0.0 ? 0.0 : (src[i] - mean) / sigma;
    }
    return out;
}

std::pair<MultiModalVolume, LabelMap> generate_phantom(const PhantomSpec& spec) {
    for (int64_t s : spec.size)
        if (s < 32 || s % 16 != 0)
            throw GeometryUnderflow(
                "phantom size must be >= 32 and divisible by 16, got " +
                std::to_string(s));
    if (spec.contrast_delta < 0.0 || spec.contrast_delta > 1.0)
        throw InvalidConfig("contrast_delta must lie in [0,1]");
    if (spec.noise_sigma < 0.0) throw InvalidConfig("noise_sigma must be >= 0");

    const int64_t D = spec.size[0], H = spec.size[1], W = spec.size[2];
    Rng rng(mix_seed(spec.seed, 0x70686aULL));  // stream tag for phantom geometry

    // Mild jitter keeps every shell inside the volume for any seed.
    std::array<double, 3> center, semi;
    const std::array<int64_t, 3> dims{D, H, W};
    for (int a = 0; a < 3; ++a) {
        const double half = static_cast<double>(dims[a]) / 2.0;
        center[a] = (static_cast<double>(dims[a]) - 1.0) / 2.0 +
                    rng.uniform(-0.02, 0.02) * static_cast<double>(dims[a]);
        semi[a] = 0.92 * half * (1.0 + rng.uniform(-0.03, 0.03));
    }
    constexpr double kWmRadius = 0.40, kGmRadius = 0.62, kCsfRadius = 0.78;

    // WM/GM means straddle 0.5 by contrast_delta in both modalities, with
    // the roles swapped; CSF is dark in T1 and bright in T2.
    const double wm_t1 = 0.5 + spec.contrast_delta / 2.0;
    const double gm_t1 = 0.5 - spec.contrast_delta / 2.0;
    const double csf_t1 = 0.15;
    const double wm_t2 = 0.5 - spec.contrast_delta / 2.0;
    const double gm_t2 = 0.5 + spec.contrast_delta / 2.0;
    const double csf_t2 = 0.9;

    LabelMap lm;
    lm.dims = {D, H, W};
    lm.class_names = default_class_names();
    lm.labels.assign(static_cast<size_t>(D * H * W), 0);

    MultiModalVolume vol;
    vol.data = Tensor({2, D, H, W});
    vol.subject_id = "phantom-" + std::to_string(spec.seed);

    const int64_t N = D * H * W;
    std::array<int64_t, 4> histogram{0, 0, 0, 0};
    for (int64_t z = 0; z < D; ++z)
        for (int64_t y = 0; y < H; ++y)
            for (int64_t x = 0; x < W; ++x) {
                const double dz = (static_cast<double>(z) - center[0]) / semi[0];
                const double dy = (static_cast<double>(y) - center[1]) / semi[1];
                const double dx = (static_cast<double>(x) - center[2]) / semi[2];
                const double radius = std::sqrt(dz * dz + dy * dy + dx * dx);
                uint8_t cls = 0;
                double t1 = 0.0, t2 = 0.0;
                if (radius < kWmRadius) {
                    cls = 3;
                    t1 = wm_t1;
                    t2 = wm_t2;
                } else if (radius < kGmRadius) {
                    cls = 2;
                    t1 = gm_t1;
                    t2 = gm_t2;
                } else if (radius < kCsfRadius) {
                    cls = 1;
                    t1 = csf_t1;
                    t2 = csf_t2;
                }
                const int64_t i = (z * H + y) * W + x;
                lm.labels[static_cast<size_t>(i)] = cls;
                ++histogram[cls];
                if (cls != 0 && spec.noise_sigma > 0.0) {
                    t1 += spec.noise_sigma * rng.normal();
                    t2 += spec.noise_sigma * rng.normal();
                }
                vol.data[i] = t1;
                vol.data[N + i] = t2;
            }

    for (int c = 0; c < 4; ++c)
        if (histogram[static_cast<size_t>(c)] * 100 < N)
            throw GeometryUnderflow("phantom class " + default_class_names()[static_cast<size_t>(c)] +
                                    " covers less than 1% of voxels");
    return {std::move(vol), std::move(lm)};
}

MultiModalVolume pair_modalities(const MultiModalVolume& t1,
                                 const MultiModalVolume& t2) {
    if (t1.data.rank() != 4 || t2.data.rank() != 4 || t1.modalities() != 1 ||
        t2.modalities() != 1)
        throw BadInputShape("pair_modalities expects two single-modality volumes");
    if (t1.dims() != t2.dims())
        throw GridMismatch("modality dims disagree: " + shape_str(t1.data.shape) +
                           " vs " + shape_str(t2.data.shape));
    if (t1.spacing_mm != t2.spacing_mm)
        throw GridMismatch("modality spacings disagree");
    MultiModalVolume out;
    const auto d = t1.dims();
    out.data = Tensor({2, d[0], d[1], d[2]});
    const int64_t N = d[0] * d[1] * d[2];
    for (int64_t i = 0; i < N; ++i) {
        out.data[i] = t1.data[i];
        out.data[N + i] = t2.data[i];
    }
    out.spacing_mm = t1.spacing_mm;
    out.subject_id = t1.subject_id;
    return out;
}

}  // namespace hdan
