#include "hdan/loss.hpp"

#include <cmath>

#include "hdan/errors.hpp"
#include "hdan/ops.hpp"

namespace hdan {

ClassWeights compute_class_weights(const std::vector<int64_t>& hist) {
    int64_t total = 0, present = 0;
    for (int64_t n : hist) {
        if (n < 0) throw EmptyHistogram("histogram counts must be nonnegative");
        total += n;
        if (n > 0) ++present;
    }
    if (total == 0) throw EmptyHistogram("histogram has no voxels");

    ClassWeights cw;
    cw.source_histogram = hist;
    cw.w.resize(hist.size(), 0.0);
    for (size_t c = 0; c < hist.size(); ++c)
        if (hist[c] > 0)
            cw.w[c] = static_cast<double>(total) /
                      (static_cast<double>(present) * static_cast<double>(hist[c]));
    return cw;
}

std::vector<int64_t> label_histogram(const LabelMap& labels, int64_t num_classes) {
    std::vector<int64_t> hist(static_cast<size_t>(num_classes), 0);
    for (uint8_t v : labels.labels) {
        if (v >= num_classes)
            throw ShapeMismatch("label value outside the class range");
        ++hist[v];
    }
    return hist;
}

NodePtr weighted_cross_entropy(const NodePtr& probs, const Tensor& labels,
                               const ClassWeights& cw) {
    Tensor w({static_cast<int64_t>(cw.w.size())});
    for (size_t c = 0; c < cw.w.size(); ++c) w[static_cast<int64_t>(c)] = cw.w[c];
    return wce_loss(probs, labels, w);
}

double weighted_cross_entropy(const ProbabilityMap& probs, const LabelMap& labels,
                              const ClassWeights& cw) {
    const Tensor& p = probs.probs;
    if (p.rank() != 4 || p.dim(0) != static_cast<int64_t>(cw.w.size()))
        throw ShapeMismatch("probability map does not match the weight vector");
    if (p.dim(1) != labels.dims[0] || p.dim(2) != labels.dims[1] ||
        p.dim(3) != labels.dims[2])
        throw ShapeMismatch("probability map and label map disagree on dims");

    const int64_t N = labels.numel();
    double acc = 0.0;
    for (int64_t i = 0; i < N; ++i) {
        const uint8_t y = labels.labels[static_cast<size_t>(i)];
        if (y >= p.dim(0)) throw ShapeMismatch("label value outside the class range");
        const double py = std::max(p[y * N + i], 1e-12);
        acc += cw.w[y] * -std::log(py);
    }
    return acc / static_cast<double>(N);
}

}  // namespace hdan
