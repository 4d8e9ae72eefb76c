#include "hdan/inference.hpp"

#include <string>

#include "hdan/autograd.hpp"
#include "hdan/errors.hpp"

namespace hdan {

LabelMap argmax_labels(const ProbabilityMap& probs) {
    const Tensor& p = probs.probs;
    if (p.rank() != 4)
        throw BadInputShape("argmax expects [C,D,H,W], got " + shape_str(p.shape));
    const int64_t C = p.dim(0);
    const int64_t n = p.dim(1) * p.dim(2) * p.dim(3);

    LabelMap lm;
    lm.dims = {p.dim(1), p.dim(2), p.dim(3)};
    lm.spacing_mm = probs.spacing_mm;
    if (C == static_cast<int64_t>(default_class_names().size())) {
        lm.class_names = default_class_names();
    } else {
        for (int64_t c = 0; c < C; ++c)
            lm.class_names.push_back("class" + std::to_string(c));
    }
    lm.labels.resize(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        int64_t best = 0;
        double best_p = p[i];
        for (int64_t c = 1; c < C; ++c)
            if (p[c * n + i] > best_p) {
                best_p = p[c * n + i];
                best = c;
            }
        lm.labels[static_cast<size_t>(i)] = static_cast<uint8_t>(best);
    }
    return lm;
}

Tensor upsample_nearest(const Tensor& t, const std::array<int64_t, 3>& target) {
    if (t.rank() != 4)
        throw BadInputShape("upsample expects [C,d,h,w], got " + shape_str(t.shape));
    const int64_t C = t.dim(0), d = t.dim(1), h = t.dim(2), w = t.dim(3);
    std::array<int64_t, 3> factor{};
    for (int a = 0; a < 3; ++a) {
        const int64_t src = t.dim(a + 1);
        if (src < 1 || target[static_cast<size_t>(a)] % src != 0)
            throw BadInputShape("upsample target " + shape_str({target[0], target[1], target[2]}) +
                                " is not an integer multiple of " + shape_str(t.shape));
        factor[static_cast<size_t>(a)] = target[static_cast<size_t>(a)] / src;
    }

    Tensor out({C, target[0], target[1], target[2]});
    for (int64_t c = 0; c < C; ++c)
        for (int64_t z = 0; z < target[0]; ++z)
            for (int64_t y = 0; y < target[1]; ++y) {
                const double* src_row =
                    t.data() + ((c * d + z / factor[0]) * h + y / factor[1]) * w;
                double* dst_row =
                    out.data() + ((c * target[0] + z) * target[1] + y) * target[2];
                for (int64_t x = 0; x < target[2]; ++x)
                    dst_row[x] = src_row[x / factor[2]];
            }
    return out;
}

Prediction predict_volume(Network& net, const MultiModalVolume& vol,
                          const InferenceConfig& cfg) {
    if (vol.data.rank() != 4 || vol.modalities() != net.config().in_modalities)
        throw BadInputShape("expected a volume with " +
                            std::to_string(net.config().in_modalities) +
                            " modalities, got " + shape_str(vol.data.shape));
    for (int64_t p : cfg.patch_spec.patch_size)
        if (p < 16 || p % 16 != 0)
            throw InvalidConfig("patch size must be >= 16 and divisible by 16, got " +
                                std::to_string(p));
    if (cfg.trace_attention) {
        if (!net.config().enable_sa)
            throw InvalidConfig("attention tracing needs spatial attention enabled");
        if (cfg.attention_stage < 0 || cfg.attention_stage > 4)
            throw InvalidConfig("attention stage must lie in 0..4, got " +
                                std::to_string(cfg.attention_stage));
    }

    const PatchGrid grid = plan_patches(vol.dims(), cfg.patch_spec);

    NoGradGuard guard;
    const bool was_training = net.training();
    net.set_training(false);

    std::vector<Tensor> patch_probs;
    std::vector<Tensor> patch_attention;
    patch_probs.reserve(grid.origins.size());
    for (const auto& origin : grid.origins) {
        MultiModalVolume patch;
        patch.data = extract(vol, origin, cfg.patch_spec);
        patch.spacing_mm = vol.spacing_mm;
        patch.subject_id = vol.subject_id;
        auto [probs, trace] = net.forward(patch);
        patch_probs.push_back(std::move(probs.probs));
        if (cfg.trace_attention)
            patch_attention.push_back(
                upsample_nearest(trace.spatial_maps[static_cast<size_t>(cfg.attention_stage)],
                                 cfg.patch_spec.patch_size));
    }
    net.set_training(was_training);

    Prediction out;
    out.probs = fuse(grid, patch_probs, vol.spacing_mm);
    out.labels = argmax_labels(out.probs);
    if (cfg.trace_attention) {
        MultiModalVolume att;
        att.data = fuse(grid, patch_attention, vol.spacing_mm).probs;
        att.spacing_mm = vol.spacing_mm;
        att.subject_id = vol.subject_id;
        out.attention = std::move(att);
    }
    return out;
}

}  // namespace hdan
