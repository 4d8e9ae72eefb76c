#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "hdan/errors.hpp"
#include "hdan/loss.hpp"
#include "hdan/ops.hpp"
#include "hdan/rng.hpp"

using namespace hdan;

namespace {

LabelMap random_labels(std::array<int64_t, 3> dims, int64_t classes, uint64_t seed) {
    LabelMap lm;
    lm.dims = dims;
    lm.labels.resize(static_cast<size_t>(lm.numel()));
    Rng rng(seed);
    for (auto& v : lm.labels) v = static_cast<uint8_t>(rng.uniform_int(classes));
    return lm;
}

ProbabilityMap uniform_probs(std::array<int64_t, 3> dims, int64_t classes) {
    ProbabilityMap pm;
    pm.probs = Tensor({classes, dims[0], dims[1], dims[2]},
                      1.0 / static_cast<double>(classes));
    return pm;
}

}  // namespace

TEST_CASE("class weights follow inverse frequency with mean one when balanced") {
    auto balanced = compute_class_weights({250, 250, 250, 250});
    for (double w : balanced.w) CHECK(w == 1.0);

    auto skewed = compute_class_weights({700, 100, 100, 100});
    CHECK(skewed.w[0] == doctest::Approx(0.357142857).epsilon(1e-6));
    CHECK(skewed.w[1] == doctest::Approx(2.5));
    CHECK(skewed.w[2] == doctest::Approx(2.5));
    CHECK(skewed.w[3] == doctest::Approx(2.5));

    auto degenerate = compute_class_weights({1000, 0, 0, 0});
    CHECK(degenerate.w == std::vector<double>{1.0, 0.0, 0.0, 0.0});

    CHECK_THROWS_AS(compute_class_weights({0, 0, 0}), EmptyHistogram);
    CHECK_THROWS_AS(compute_class_weights({10, -1, 0}), EmptyHistogram);
}

TEST_CASE("zero weight exactly when the class is absent") {
    Rng rng(51);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<int64_t> hist(4);
        for (auto& h : hist) h = rng.uniform_int(3) == 0 ? 0 : rng.uniform_int(500);
        int64_t total = hist[0] + hist[1] + hist[2] + hist[3];
        if (total == 0) continue;
        auto cw = compute_class_weights(hist);
        for (size_t c = 0; c < 4; ++c) {
            CHECK((cw.w[c] == 0.0) == (hist[c] == 0));
            CHECK(std::isfinite(cw.w[c]));
        }
    }
}

TEST_CASE("uniform predictions cost ln C and perfect predictions cost nothing") {
    const std::array<int64_t, 3> dims{6, 5, 4};
    auto labels = random_labels(dims, 4, 52);
    ClassWeights unit;
    unit.w = {1.0, 1.0, 1.0, 1.0};
    unit.source_histogram = {1, 1, 1, 1};

    CHECK(weighted_cross_entropy(uniform_probs(dims, 4), labels, unit) ==
          doctest::Approx(std::log(4.0)).epsilon(1e-12));

    ProbabilityMap perfect;
    perfect.probs = Tensor({4, dims[0], dims[1], dims[2]});
    const int64_t N = labels.numel();
    for (int64_t i = 0; i < N; ++i)
        perfect.probs[labels.labels[static_cast<size_t>(i)] * N + i] = 1.0 - 1e-12;
    CHECK(weighted_cross_entropy(perfect, labels, unit) <= 1e-11);
    CHECK(weighted_cross_entropy(perfect, labels, unit) >= 0.0);
}

TEST_CASE("a single half-confident voxel with weight two costs two ln two") {
    LabelMap lm;
    lm.dims = {1, 1, 1};
    lm.labels = {1};
    ProbabilityMap pm;
    pm.probs = Tensor({2, 1, 1, 1});
    pm.probs[0] = 0.5;
    pm.probs[1] = 0.5;
    ClassWeights cw;
    cw.w = {1.0, 2.0};
    cw.source_histogram = {1, 1};
    CHECK(weighted_cross_entropy(pm, lm, cw) ==
          doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("shape disagreements are rejected") {
    auto labels = random_labels({4, 4, 4}, 4, 53);
    ClassWeights cw;
    cw.w = {1.0, 1.0, 1.0, 1.0};
    CHECK_THROWS_AS(weighted_cross_entropy(uniform_probs({4, 4, 5}, 4), labels, cw),
                    ShapeMismatch);
    CHECK_THROWS_AS(weighted_cross_entropy(uniform_probs({4, 4, 4}, 3), labels, cw),
                    ShapeMismatch);
}

TEST_CASE("shrinking true-class probability never decreases the loss") {
    const std::array<int64_t, 3> dims{4, 4, 4};
    auto labels = random_labels(dims, 4, 54);
    ClassWeights cw = compute_class_weights({400, 100, 200, 300});

    Rng rng(55);
    ProbabilityMap pm;
    pm.probs = Tensor({4, dims[0], dims[1], dims[2]});
    const int64_t N = labels.numel();
    for (int64_t i = 0; i < N; ++i) {
        double parts[4], sum = 0.0;
        for (auto& p : parts) {
            p = rng.uniform(0.05, 1.0);
            sum += p;
        }
        for (int64_t c = 0; c < 4; ++c) pm.probs[c * N + i] = parts[c] / sum;
    }

    double prev = weighted_cross_entropy(pm, labels, cw);
    for (double shrink : {0.8, 0.5, 0.2}) {
        ProbabilityMap worse = pm;
        for (int64_t i = 0; i < N; ++i) {
            const uint8_t y = labels.labels[static_cast<size_t>(i)];
            double mass = worse.probs[y * N + i] * (1.0 - shrink);
            worse.probs[y * N + i] *= shrink;
            double rest = 1.0 - worse.probs[y * N + i] - mass;
            for (int64_t c = 0; c < 4; ++c)
                if (c != y)
                    worse.probs[c * N + i] +=
                        mass * (worse.probs[c * N + i] / rest);
        }
        const double cur = weighted_cross_entropy(worse, labels, cw);
        CHECK(cur >= prev);
    }
}

TEST_CASE("logit gradients match finite differences on random patches") {
    const std::array<int64_t, 3> dims{4, 4, 4};
    Rng rng(56);
    for (int trial = 0; trial < 3; ++trial) {
        auto labels = random_labels(dims, 4, 57 + static_cast<uint64_t>(trial));
        Tensor y({dims[0], dims[1], dims[2]});
        for (int64_t i = 0; i < y.numel(); ++i)
            y[i] = labels.labels[static_cast<size_t>(i)];
        ClassWeights cw = compute_class_weights({500, 125, 250, 125});

        Tensor logits({4, dims[0], dims[1], dims[2]});
        for (int64_t i = 0; i < logits.numel(); ++i)
            logits[i] = rng.uniform(-2.0, 2.0);

        auto loss_of = [&](const Tensor& l) {
            auto node = make_param(l);
            return std::pair{weighted_cross_entropy(softmax_channels(node), y, cw),
                             node};
        };
        auto [loss, node] = loss_of(logits);
        backward(loss);

        Rng pick(60 + static_cast<uint64_t>(trial));
        for (int k = 0; k < 12; ++k) {
            const int64_t idx = pick.uniform_int(logits.numel());
            const double h = 1e-5;
            Tensor up = logits, down = logits;
            up[idx] += h;
            down[idx] -= h;
            const double numeric =
                (loss_of(up).first->value[0] - loss_of(down).first->value[0]) /
                (2.0 * h);
            const double analytic = node->grad[idx];
            const double denom =
                std::max({std::fabs(numeric), std::fabs(analytic), 1e-10});
            CHECK(std::fabs(numeric - analytic) / denom < 1e-4);
        }
    }
}

TEST_CASE("logit gradient scales linearly with the class weight") {
    LabelMap lm;
    lm.dims = {1, 1, 1};
    lm.labels = {2};
    Tensor y({1, 1, 1});
    y[0] = 2.0;
    Tensor logits({4, 1, 1, 1});
    logits[0] = 0.3;
    logits[1] = -0.2;
    logits[2] = 0.5;
    logits[3] = -0.7;

    std::array<double, 3> grads{};
    int slot = 0;
    for (double wc : {1.0, 2.0, 4.0}) {
        ClassWeights cw;
        cw.w = {1.0, 1.0, wc, 1.0};
        cw.source_histogram = {1, 1, 1, 1};
        auto node = make_param(logits);
        backward(weighted_cross_entropy(softmax_channels(node), y, cw));
        grads[static_cast<size_t>(slot++)] = node->grad[2];
    }
    CHECK(grads[1] == doctest::Approx(2.0 * grads[0]).epsilon(1e-12));
    CHECK(grads[2] == doctest::Approx(4.0 * grads[0]).epsilon(1e-12));
}

TEST_CASE("scalar and graph losses agree") {
    const std::array<int64_t, 3> dims{5, 4, 3};
    auto labels = random_labels(dims, 4, 61);
    Tensor y({dims[0], dims[1], dims[2]});
    for (int64_t i = 0; i < y.numel(); ++i)
        y[i] = labels.labels[static_cast<size_t>(i)];
    ClassWeights cw = compute_class_weights({100, 300, 200, 400});

    Rng rng(62);
    ProbabilityMap pm;
    pm.probs = Tensor({4, dims[0], dims[1], dims[2]});
    const int64_t N = labels.numel();
    for (int64_t i = 0; i < N; ++i) {
        double parts[4], sum = 0.0;
        for (auto& p : parts) {
            p = rng.uniform(0.01, 1.0);
            sum += p;
        }
        for (int64_t c = 0; c < 4; ++c) pm.probs[c * N + i] = parts[c] / sum;
    }

    auto node = weighted_cross_entropy(make_constant(pm.probs), y, cw);
    CHECK(node->value[0] == weighted_cross_entropy(pm, labels, cw));
}

TEST_CASE("histogram counts labels and rejects out-of-range values") {
    auto labels = random_labels({6, 6, 6}, 4, 63);
    auto hist = label_histogram(labels, 4);
    int64_t total = 0;
    for (int64_t h : hist) total += h;
    CHECK(total == labels.numel());

    labels.labels[0] = 9;
    CHECK_THROWS_AS(label_histogram(labels, 4), ShapeMismatch);
}
