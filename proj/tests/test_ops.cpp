#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>

#include "hdan/errors.hpp"
#include "hdan/ops.hpp"
#include "hdan/parallel.hpp"
#include "hdan/rng.hpp"

using namespace hdan;

namespace {

Tensor random_tensor(std::vector<int64_t> shape, Rng& rng, double lo = -1.0,
                     double hi = 1.0) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

void zero_grads(const std::vector<NodePtr>& params) {
    for (const auto& p : params) p->grad = Tensor();
}

// Central-difference check of every parameter entry against the analytic
// gradient from one backward pass. build must re-run the full forward.
void check_gradients(const std::function<NodePtr()>& build,
                     const std::vector<NodePtr>& params, double h = 1e-5,
                     double tol = 1e-5) {
    zero_grads(params);
    backward(build());
    for (const auto& p : params) {
        Tensor analytic = p->grad.empty() ? Tensor(p->value.shape) : p->grad;
        for (int64_t i = 0; i < p->value.numel(); ++i) {
            const double saved = p->value[i];
            p->value[i] = saved + h;
            const double up = build()->value[0];
            p->value[i] = saved - h;
            const double down = build()->value[0];
            p->value[i] = saved;
            const double numeric = (up - down) / (2.0 * h);
            const double denom = std::max({std::fabs(numeric), std::fabs(analytic[i]), 1e-8});
            CAPTURE(i);
            CHECK(std::fabs(numeric - analytic[i]) / denom < tol);
        }
    }
}

NodePtr sum_all(const NodePtr& x, const Tensor& coeffs) {
    return weighted_sum(x, coeffs);
}

}  // namespace

TEST_CASE("conv3d shapes and padding arithmetic") {
    Rng rng(11);
    auto x = make_constant(random_tensor({2, 6, 6, 6}, rng));
    auto w = make_constant(random_tensor({3, 2, 3, 3, 3}, rng));
    auto b = make_constant(random_tensor({3}, rng));
    auto same = conv3d(x, w, b, 1, 1);
    CHECK(same->value.shape == std::vector<int64_t>{3, 6, 6, 6});
    auto valid = conv3d(x, w, b, 1, 0);
    CHECK(valid->value.shape == std::vector<int64_t>{3, 4, 4, 4});

    auto w2 = make_constant(random_tensor({3, 2, 2, 2, 2}, rng));
    auto down = conv3d(x, w2, b, 2, 0);
    CHECK(down->value.shape == std::vector<int64_t>{3, 3, 3, 3});
}

TEST_CASE("conv3d matches a hand computation on a 1x1 kernel") {
    Tensor xt({1, 2, 2, 2});
    for (int64_t i = 0; i < 8; ++i) xt[i] = static_cast<double>(i + 1);
    Tensor wt({2, 1, 1, 1, 1});
    wt[0] = 2.0;
    wt[1] = -1.0;
    Tensor bt({2});
    bt[0] = 0.5;
    bt[1] = 0.0;
    auto y = conv3d(make_constant(xt), make_constant(wt), make_constant(bt), 1, 0);
    for (int64_t i = 0; i < 8; ++i) {
        CHECK(y->value[i] == doctest::Approx(2.0 * (i + 1) + 0.5));
        CHECK(y->value[8 + i] == doctest::Approx(-(i + 1.0)));
    }
}

TEST_CASE("conv3d gradients match finite differences") {
    Rng rng(42);
    auto x = make_param(random_tensor({2, 4, 4, 4}, rng));
    auto w = make_param(random_tensor({2, 2, 3, 3, 3}, rng, -0.5, 0.5));
    auto b = make_param(random_tensor({2}, rng));
    const Tensor coeffs = random_tensor({2, 4, 4, 4}, rng);
    auto build = [&] { return sum_all(conv3d(x, w, b, 1, 1), coeffs); };
    check_gradients(build, {x, w, b});
}

TEST_CASE("strided conv3d gradients match finite differences") {
    Rng rng(43);
    auto x = make_param(random_tensor({2, 4, 4, 4}, rng));
    auto w = make_param(random_tensor({3, 2, 2, 2, 2}, rng, -0.5, 0.5));
    auto b = make_param(random_tensor({3}, rng));
    const Tensor coeffs = random_tensor({3, 2, 2, 2}, rng);
    auto build = [&] { return sum_all(conv3d(x, w, b, 2, 0), coeffs); };
    check_gradients(build, {x, w, b});
}

TEST_CASE("conv_transpose3d paints disjoint blocks and upsamples") {
    Tensor xt({1, 1, 1, 2});
    xt[0] = 1.0;
    xt[1] = 10.0;
    Tensor wt({1, 1, 2, 2, 2});
    for (int64_t i = 0; i < 8; ++i) wt[i] = static_cast<double>(i);
    auto y = conv_transpose3d(make_constant(xt), make_constant(wt),
                              make_constant(Tensor({1})), 2);
    REQUIRE(y->value.shape == std::vector<int64_t>{1, 2, 2, 4});
    // out[z,y,x] = w[z%2, y%2, x%2] * x[x/2]
    for (int64_t z = 0; z < 2; ++z)
        for (int64_t yy = 0; yy < 2; ++yy)
            for (int64_t xx = 0; xx < 4; ++xx) {
                const double wv = wt[(z * 2 + yy) * 2 + xx % 2];
                const double xv = xx < 2 ? 1.0 : 10.0;
                CHECK(y->value[(z * 2 + yy) * 4 + xx] == doctest::Approx(wv * xv));
            }
}

TEST_CASE("conv_transpose3d gradients match finite differences") {
    Rng rng(44);
    auto x = make_param(random_tensor({2, 2, 2, 2}, rng));
    auto w = make_param(random_tensor({2, 3, 2, 2, 2}, rng, -0.5, 0.5));
    auto b = make_param(random_tensor({3}, rng));
    const Tensor coeffs = random_tensor({3, 4, 4, 4}, rng);
    auto build = [&] { return sum_all(conv_transpose3d(x, w, b, 2), coeffs); };
    check_gradients(build, {x, w, b});
}

TEST_CASE("batch_norm normalizes with batch statistics") {
    Rng rng(7);
    auto x = make_constant(random_tensor({3, 4, 4, 4}, rng, -2.0, 5.0));
    auto gamma = make_constant(Tensor({3}, 1.0));
    auto beta = make_constant(Tensor({3}));
    Tensor rm({3}), rv({3}, 1.0);
    auto y = batch_norm(x, gamma, beta, rm, rv, true, false, 0.1, 1e-5);
    const int64_t N = 64;
    for (int64_t c = 0; c < 3; ++c) {
        double mean = 0.0, var = 0.0;
        for (int64_t i = 0; i < N; ++i) mean += y->value[c * N + i];
        mean /= N;
        for (int64_t i = 0; i < N; ++i) {
            const double d = y->value[c * N + i] - mean;
            var += d * d;
        }
        var /= N;
        CHECK(mean == doctest::Approx(0.0).epsilon(1e-9));
        CHECK(var == doctest::Approx(1.0).epsilon(1e-3));
    }
    CHECK(rm[0] == 0.0);  // update_running was off
    CHECK(rv[0] == 1.0);
}

TEST_CASE("batch_norm running statistics follow the EMA update") {
    Rng rng(8);
    Tensor xt = random_tensor({1, 2, 2, 2}, rng, 0.0, 4.0);
    double mean = 0.0, var = 0.0;
    for (int64_t i = 0; i < 8; ++i) mean += xt[i];
    mean /= 8.0;
    for (int64_t i = 0; i < 8; ++i) var += (xt[i] - mean) * (xt[i] - mean);
    var /= 8.0;

    auto gamma = make_constant(Tensor({1}, 1.0));
    auto beta = make_constant(Tensor({1}));
    Tensor rm({1}), rv({1}, 1.0);
    batch_norm(make_constant(xt), gamma, beta, rm, rv, true, true, 0.1, 1e-5);
    CHECK(rm[0] == doctest::Approx(0.1 * mean));
    CHECK(rv[0] == doctest::Approx(0.9 + 0.1 * var));

    // Evaluation mode must use the running buffers, not batch statistics.
    auto y = batch_norm(make_constant(xt), gamma, beta, rm, rv, false, false, 0.1,
                        1e-5);
    CHECK(y->value[0] ==
          doctest::Approx((xt[0] - rm[0]) / std::sqrt(rv[0] + 1e-5)));
}

TEST_CASE("batch_norm gradients match finite differences") {
    Rng rng(45);
    auto x = make_param(random_tensor({2, 3, 3, 3}, rng));
    auto gamma = make_param(random_tensor({2}, rng, 0.5, 1.5));
    auto beta = make_param(random_tensor({2}, rng));
    Tensor rm({2}), rv({2}, 1.0);
    const Tensor coeffs = random_tensor({2, 3, 3, 3}, rng);
    auto build = [&] {
        return sum_all(batch_norm(x, gamma, beta, rm, rv, true, false, 0.1, 1e-5),
                       coeffs);
    };
    check_gradients(build, {x, gamma, beta}, 1e-5, 1e-4);

    auto build_eval = [&] {
        return sum_all(batch_norm(x, gamma, beta, rm, rv, false, false, 0.1, 1e-5),
                       coeffs);
    };
    check_gradients(build_eval, {x, gamma, beta});
}

TEST_CASE("pointwise op gradients match finite differences") {
    Rng rng(46);
    auto x = make_param(random_tensor({2, 2, 2, 2}, rng));
    auto y = make_param(random_tensor({2, 2, 2, 2}, rng));
    const Tensor coeffs = random_tensor({2, 2, 2, 2}, rng);

    check_gradients([&] { return sum_all(sigmoid(x), coeffs); }, {x});
    check_gradients([&] { return sum_all(add(x, y), coeffs); }, {x, y});
    check_gradients([&] { return sum_all(scale(x, -2.5), coeffs); }, {x});
    // ReLU is checked away from the kink.
    auto xp = make_param(random_tensor({2, 2, 2, 2}, rng, 0.5, 1.5));
    check_gradients([&] { return sum_all(relu(xp), coeffs); }, {xp});
}

TEST_CASE("broadcast multiply gradients match finite differences") {
    Rng rng(47);
    auto x = make_param(random_tensor({3, 2, 2, 2}, rng));
    auto mc = make_param(random_tensor({3}, rng));
    auto ms = make_param(random_tensor({1, 2, 2, 2}, rng));
    const Tensor coeffs = random_tensor({3, 2, 2, 2}, rng);
    check_gradients([&] { return sum_all(mul_channel(x, mc), coeffs); }, {x, mc});
    check_gradients([&] { return sum_all(mul_spatial(x, ms), coeffs); }, {x, ms});
}

TEST_CASE("concat, pooling, and reduction gradients match finite differences") {
    Rng rng(48);
    auto a = make_param(random_tensor({2, 2, 2, 2}, rng));
    auto b = make_param(random_tensor({3, 2, 2, 2}, rng));
    const Tensor coeffs = random_tensor({5, 2, 2, 2}, rng);
    check_gradients([&] { return sum_all(concat_channels({a, b}), coeffs); }, {a, b});

    const Tensor cc = random_tensor({2}, rng);
    check_gradients([&] { return weighted_sum(global_avg_pool(a), cc); }, {a});

    const Tensor cs = random_tensor({1, 2, 2, 2}, rng);
    check_gradients([&] { return sum_all(channel_mean(b), cs); }, {b});
    check_gradients([&] { return sum_all(channel_max(b), cs); }, {b});
}

TEST_CASE("channel_max picks the lowest channel on ties") {
    Tensor xt({2, 1, 1, 2});
    xt[0] = 3.0;
    xt[1] = 1.0;
    xt[2] = 3.0;
    xt[3] = 2.0;
    auto x = make_param(xt);
    auto y = channel_max(x);
    CHECK(y->value[0] == 3.0);
    CHECK(y->value[1] == 2.0);
    Tensor coeffs({1, 1, 1, 2}, 1.0);
    backward(weighted_sum(y, coeffs));
    CHECK(x->grad[0] == 1.0);  // tie routed to channel 0
    CHECK(x->grad[2] == 0.0);
    CHECK(x->grad[3] == 1.0);
}

TEST_CASE("linear gradients match finite differences") {
    Rng rng(49);
    auto x = make_param(random_tensor({4}, rng));
    auto w = make_param(random_tensor({3, 4}, rng));
    auto b = make_param(random_tensor({3}, rng));
    const Tensor coeffs = random_tensor({3}, rng);
    check_gradients([&] { return weighted_sum(linear(x, w, b), coeffs); }, {x, w, b});
}

TEST_CASE("softmax_channels normalizes and backpropagates") {
    Rng rng(50);
    auto x = make_param(random_tensor({4, 2, 2, 2}, rng, -3.0, 3.0));
    auto p = softmax_channels(x);
    for (int64_t i = 0; i < 8; ++i) {
        double s = 0.0;
        for (int64_t c = 0; c < 4; ++c) s += p->value[c * 8 + i];
        CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
    const Tensor coeffs = random_tensor({4, 2, 2, 2}, rng);
    check_gradients([&] { return sum_all(softmax_channels(x), coeffs); }, {x});
}

TEST_CASE("wce_loss evaluates the weighted log-likelihood") {
    Tensor probs({4, 1, 1, 2}, 0.25);
    Tensor labels({1, 1, 2});
    labels[0] = 0.0;
    labels[1] = 3.0;
    Tensor w({4}, 1.0);
    auto loss = wce_loss(make_constant(probs), labels, w);
    CHECK(loss->value[0] == doctest::Approx(std::log(4.0)).epsilon(1e-12));

    Tensor single({2, 1, 1, 1});
    single[0] = 0.5;
    single[1] = 0.5;
    Tensor lab1({1, 1, 1});
    lab1[0] = 1.0;
    Tensor w2({2});
    w2[0] = 1.0;
    w2[1] = 2.0;
    auto loss2 = wce_loss(make_constant(single), lab1, w2);
    CHECK(loss2->value[0] == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("wce_loss gradients through softmax match finite differences") {
    Rng rng(51);
    auto logits = make_param(random_tensor({3, 2, 2, 2}, rng, -2.0, 2.0));
    Tensor labels({2, 2, 2});
    for (int64_t i = 0; i < 8; ++i) labels[i] = static_cast<double>(i % 3);
    Tensor w({3});
    w[0] = 0.5;
    w[1] = 2.0;
    w[2] = 1.0;
    auto build = [&] { return wce_loss(softmax_channels(logits), labels, w); };
    check_gradients(build, {logits}, 1e-5, 1e-6);
}

TEST_CASE("wce_loss rejects labels outside the class range") {
    Tensor probs({2, 1, 1, 1}, 0.5);
    Tensor labels({1, 1, 1});
    labels[0] = 5.0;
    CHECK_THROWS_AS(wce_loss(make_constant(probs), labels, Tensor({2}, 1.0)),
                    ShapeMismatch);
}

TEST_CASE("results are identical for any thread count") {
    Rng rng(52);
    const Tensor xt = random_tensor({4, 8, 8, 8}, rng);
    const Tensor wt = random_tensor({6, 4, 3, 3, 3}, rng);
    const Tensor bt = random_tensor({6}, rng);

    set_max_threads(1);
    auto y1 = conv3d(make_constant(xt), make_constant(wt), make_constant(bt), 1, 1);
    set_max_threads(5);
    auto y5 = conv3d(make_constant(xt), make_constant(wt), make_constant(bt), 1, 1);
    set_max_threads(1);
    REQUIRE(y1->value.numel() == y5->value.numel());
    for (int64_t i = 0; i < y1->value.numel(); ++i)
        CHECK(y1->value[i] == y5->value[i]);
}

TEST_CASE("no-grad mode skips graph construction") {
    Rng rng(53);
    auto x = make_param(random_tensor({2, 2, 2, 2}, rng));
    NoGradGuard guard;
    auto y = relu(x);
    CHECK_FALSE(y->requires_grad);
    CHECK(y->parents.empty());
}

TEST_CASE("gradients accumulate across backward calls") {
    auto x = make_param(Tensor({1}, 3.0));
    Tensor c({1}, 2.0);
    backward(weighted_sum(x, c));
    backward(weighted_sum(x, c));
    CHECK(x->grad[0] == 4.0);
}
