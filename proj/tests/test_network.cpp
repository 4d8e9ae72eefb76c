#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "hdan/errors.hpp"
#include "hdan/network.hpp"
#include "hdan/rng.hpp"

using namespace hdan;

namespace {

NetworkConfig tiny_config() {
    NetworkConfig cfg;
    cfg.extractor_channels = 8;
    cfg.growth_rate = 4;
    cfg.transition_channels = 16;
    cfg.upsample_channels = 8;
    cfg.ca_reduction = 4;
    return cfg;
}

Tensor random_input(std::vector<int64_t> shape, uint64_t seed) {
    Rng rng(seed);
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-1.0, 1.0);
    return t;
}

}  // namespace

TEST_CASE("default parameter count matches the closed form and the audit") {
    NetworkConfig cfg;
    CHECK(cfg.param_count() == 10372531);
    Network net(cfg, 3);
    CHECK(net.registry().total_params() == cfg.param_count());

    NetworkConfig tiny = tiny_config();
    Network tnet(tiny, 3);
    CHECK(tnet.registry().total_params() == tiny.param_count());
}

TEST_CASE("builds are deterministic and follow the initialization scheme") {
    NetworkConfig cfg = tiny_config();
    Network a(cfg, 3), b(cfg, 3), c(cfg, 4);
    bool all_equal = true, any_diff_seed = false;
    for (size_t i = 0; i < a.registry().params.size(); ++i) {
        const Tensor& ta = a.registry().params[i].second->value;
        const Tensor& tb = b.registry().params[i].second->value;
        const Tensor& tc = c.registry().params[i].second->value;
        for (int64_t j = 0; j < ta.numel(); ++j) {
            if (ta[j] != tb[j]) all_equal = false;
            if (ta[j] != tc[j]) any_diff_seed = true;
        }
    }
    CHECK(all_equal);
    CHECK(any_diff_seed);

    for (const auto& [name, p] : a.registry().params) {
        if (name.ends_with(".b") || name.ends_with(".beta")) {
            for (int64_t j = 0; j < p->value.numel(); ++j) CHECK(p->value[j] == 0.0);
        }
        if (name.ends_with(".gamma")) {
            for (int64_t j = 0; j < p->value.numel(); ++j) CHECK(p->value[j] == 1.0);
        }
    }

    // 3x3x3 conv from 2 modalities to 8 channels: fan_in = 2*27.
    auto w = a.registry().find_param("fe.conv1.w");
    REQUIRE(w != nullptr);
    const double bound = std::sqrt(6.0 / 54.0);
    double max_abs = 0.0;
    for (int64_t j = 0; j < w->value.numel(); ++j)
        max_abs = std::max(max_abs, std::fabs(w->value[j]));
    CHECK(max_abs <= bound);
    CHECK(max_abs > 0.5 * bound);
}

TEST_CASE("forward shapes, normalization, and trace on a 16-cube input") {
    Network net(tiny_config(), 7);
    const Tensor input = random_input({2, 16, 16, 16}, 5);
    auto nodes = net.forward_nodes(input);

    REQUIRE(nodes.probs->value.shape == std::vector<int64_t>{4, 16, 16, 16});
    const int64_t N = 16 * 16 * 16;
    for (int64_t i = 0; i < N; ++i) {
        double s = 0.0;
        for (int64_t c = 0; c < 4; ++c) s += nodes.probs->value[c * N + i];
        CHECK(std::fabs(s - 1.0) < 1e-5);
    }

    CHECK(nodes.phi0->value.shape == std::vector<int64_t>{8, 16, 16, 16});
    // Halving chain bottoms out at a single voxel for a 16-cube.
    REQUIRE(nodes.t.size() == 4);
    CHECK(nodes.t[0]->value.shape == std::vector<int64_t>{16, 8, 8, 8});
    CHECK(nodes.t.back()->value.shape == std::vector<int64_t>{16, 1, 1, 1});
    REQUIRE(nodes.x_hat.size() == 4);
    CHECK(nodes.x_hat[0]->value.shape == std::vector<int64_t>{32, 8, 8, 8});
    CHECK(nodes.x_hat[3]->value.shape == std::vector<int64_t>{32, 1, 1, 1});
    for (const auto& u : nodes.u) {
        REQUIRE(u != nullptr);
        CHECK(u->value.shape == std::vector<int64_t>{8, 16, 16, 16});
    }
    CHECK(nodes.r->value.shape == std::vector<int64_t>{8 + 4 * 8, 16, 16, 16});

    REQUIRE(nodes.channel_maps.size() == 5);
    REQUIRE(nodes.spatial_maps.size() == 5);
    for (const auto& m : nodes.channel_maps)
        for (int64_t j = 0; j < m->value.numel(); ++j) {
            CHECK(m->value[j] > 0.0);
            CHECK(m->value[j] < 1.0);
        }
    CHECK(nodes.spatial_maps[0]->value.shape == std::vector<int64_t>{1, 16, 16, 16});
    CHECK(nodes.spatial_maps[4]->value.shape == std::vector<int64_t>{1, 1, 1, 1});
    for (const auto& m : nodes.spatial_maps)
        for (int64_t j = 0; j < m->value.numel(); ++j) {
            CHECK(m->value[j] > 0.0);
            CHECK(m->value[j] < 1.0);
        }
}

TEST_CASE("a 32-cube input reaches the full five-transition chain") {
    Network net(tiny_config(), 7);
    auto nodes = net.forward_nodes(random_input({2, 32, 32, 32}, 6));
    REQUIRE(nodes.t.size() == 5);
    CHECK(nodes.t[0]->value.shape == std::vector<int64_t>{16, 16, 16, 16});
    CHECK(nodes.t[4]->value.shape == std::vector<int64_t>{16, 1, 1, 1});
    CHECK(nodes.probs->value.shape == std::vector<int64_t>{4, 32, 32, 32});
}

TEST_CASE("malformed inputs are rejected") {
    Network net(tiny_config(), 7);
    CHECK_THROWS_AS(net.forward_nodes(random_input({2, 15, 15, 15}, 1)),
                    BadInputShape);
    CHECK_THROWS_AS(net.forward_nodes(random_input({3, 16, 16, 16}, 1)),
                    BadInputShape);
    CHECK_THROWS_AS(net.forward_nodes(random_input({2, 16, 16, 8}, 1)),
                    BadInputShape);

    auto odd = make_constant(random_input({16, 5, 5, 5}, 2));
    CHECK_THROWS_AS(net.transition(1, odd), OddDims);

    NetworkConfig bad = tiny_config();
    bad.ca_reduction = 3;
    CHECK_THROWS_AS(Network(bad, 1), InvalidConfig);
    bad = tiny_config();
    bad.sa_kernel = 4;
    CHECK_THROWS_AS(Network(bad, 1), InvalidConfig);
}

TEST_CASE("forward is deterministic on repeated calls") {
    Network net(tiny_config(), 9);
    const Tensor input = random_input({2, 16, 16, 16}, 10);
    auto a = net.forward_nodes(input);
    auto b = net.forward_nodes(input);
    for (int64_t i = 0; i < a.probs->value.numel(); ++i)
        CHECK(a.probs->value[i] == b.probs->value[i]);
}

TEST_CASE("channel attention is bit-identical under spatial permutation") {
    Network net(tiny_config(), 11);
    const int64_t C = tiny_config().block_out_channels();
    const Tensor f = random_input({C, 4, 4, 4}, 12);
    const int64_t N = 64;

    Rng rng(13);
    std::vector<int64_t> perm(N);
    for (int64_t i = 0; i < N; ++i) perm[static_cast<size_t>(i)] = i;
    rng.shuffle(perm);
    Tensor fp(f.shape);
    for (int64_t c = 0; c < C; ++c)
        for (int64_t i = 0; i < N; ++i)
            fp[c * N + perm[static_cast<size_t>(i)]] = f[c * N + i];

    auto mc = net.channel_attention(1, make_constant(f));
    auto mcp = net.channel_attention(1, make_constant(fp));
    for (int64_t c = 0; c < C; ++c) CHECK(mc->value[c] == mcp->value[c]);
}

TEST_CASE("spatial attention is bit-identical under channel permutation") {
    Network net(tiny_config(), 14);
    const int64_t C = tiny_config().block_out_channels();
    const Tensor f = random_input({C, 4, 4, 4}, 15);
    const int64_t N = 64;

    Rng rng(16);
    std::vector<int64_t> perm(C);
    for (int64_t c = 0; c < C; ++c) perm[static_cast<size_t>(c)] = c;
    rng.shuffle(perm);
    Tensor fp(f.shape);
    for (int64_t c = 0; c < C; ++c)
        for (int64_t i = 0; i < N; ++i)
            fp[perm[static_cast<size_t>(c)] * N + i] = f[c * N + i];

    auto ms = net.spatial_attention(1, make_constant(f));
    auto msp = net.spatial_attention(1, make_constant(fp));
    for (int64_t i = 0; i < N; ++i) CHECK(ms->value[i] == msp->value[i]);
}

TEST_CASE("attention refinement follows the sequential gating form") {
    Network net(tiny_config(), 17);
    const int64_t C = tiny_config().block_out_channels();
    const Tensor f = random_input({C, 4, 4, 4}, 18);
    auto fn = make_constant(f);

    NodePtr mc, ms;
    auto refined = net.attention_refine(1, fn, &mc, &ms);

    // Straight-line recomputation of the two broadcast products.
    const int64_t N = 64;
    Tensor fc({C, 4, 4, 4});
    for (int64_t c = 0; c < C; ++c)
        for (int64_t i = 0; i < N; ++i) fc[c * N + i] = f[c * N + i] * mc->value[c];
    auto ms_check = net.spatial_attention(1, make_constant(fc));
    double max_diff = 0.0;
    for (int64_t c = 0; c < C; ++c)
        for (int64_t i = 0; i < N; ++i) {
            const double expect = fc[c * N + i] * ms_check->value[i];
            max_diff = std::max(max_diff,
                                std::fabs(expect - refined->value[c * N + i]));
        }
    CHECK(max_diff < 1e-6);

    // Zero input stays zero through multiplicative gating.
    auto zero = make_constant(Tensor({C, 4, 4, 4}));
    auto rz = net.attention_refine(1, zero);
    for (int64_t i = 0; i < rz->value.numel(); ++i) CHECK(rz->value[i] == 0.0);
}

TEST_CASE("disabled attention reduces to the identity and ignores its weights") {
    NetworkConfig cfg = tiny_config();
    cfg.enable_ca = false;
    cfg.enable_sa = false;
    Network net(cfg, 19);

    const Tensor f = random_input({16, 4, 4, 4}, 20);
    auto fn = make_constant(f);
    auto refined = net.attention_refine(1, fn);
    CHECK(refined.get() == fn.get());

    const Tensor input = random_input({2, 16, 16, 16}, 21);
    auto before = net.forward_nodes(input).probs->value;
    CHECK(before.numel() > 0);
    Rng rng(22);
    for (auto& [name, p] : net.registry().params)
        if (name.find("att") == 0 || name.find(".fc") != std::string::npos ||
            name.find(".sa") != std::string::npos)
            for (int64_t i = 0; i < p->value.numel(); ++i)
                p->value[i] = rng.uniform(-1.0, 1.0);
    auto after = net.forward_nodes(input).probs->value;
    for (int64_t i = 0; i < before.numel(); ++i) CHECK(before[i] == after[i]);
    CHECK(net.forward_nodes(input).channel_maps.empty());
    CHECK(net.forward_nodes(input).spatial_maps.empty());
}

TEST_CASE("identity-forced channel attention on zero input gates at one half") {
    NetworkConfig cfg = tiny_config();
    cfg.ca_reduction = 1;
    Network net(cfg, 23);
    auto fc1w = net.registry().find_param("att1.fc1.w");
    auto fc1b = net.registry().find_param("att1.fc1.b");
    auto fc2w = net.registry().find_param("att1.fc2.w");
    auto fc2b = net.registry().find_param("att1.fc2.b");
    REQUIRE(fc1w != nullptr);
    const int64_t C = 32;
    REQUIRE(fc1w->value.shape == std::vector<int64_t>{C, C});
    fc1w->value.fill(0.0);
    fc2w->value.fill(0.0);
    fc1b->value.fill(0.0);
    fc2b->value.fill(0.0);
    for (int64_t i = 0; i < C; ++i) {
        fc1w->value[i * C + i] = 1.0;
        fc2w->value[i * C + i] = 1.0;
    }
    auto mc = net.channel_attention(1, make_constant(Tensor({C, 4, 4, 4})));
    for (int64_t c = 0; c < C; ++c) CHECK(mc->value[c] == doctest::Approx(0.5));
}

TEST_CASE("zeroed spatial attention conv gates at one half") {
    Network net(tiny_config(), 24);
    net.registry().find_param("att1.sa.w")->value.fill(0.0);
    net.registry().find_param("att1.sa.b")->value.fill(0.0);
    auto ms = net.spatial_attention(1, make_constant(random_input({32, 4, 4, 4}, 25)));
    for (int64_t i = 0; i < ms->value.numel(); ++i)
        CHECK(ms->value[i] == doctest::Approx(0.5));
}

TEST_CASE("dense block grows channels by units times growth rate") {
    Network net(tiny_config(), 26);
    auto t_prev = make_constant(random_input({16, 8, 8, 8}, 27));
    auto x = net.conv_block(1, t_prev);
    CHECK(x->value.shape == std::vector<int64_t>{16 + 4 * 4, 8, 8, 8});

    // Gradient reaches the first unit's weights.
    auto w1 = net.registry().find_param("stage1.unit1.conv.w");
    w1->grad = Tensor();
    net.set_training(false);
    Tensor coeffs(x->value.shape, 1.0);
    auto xb = net.conv_block(1, t_prev);
    backward(weighted_sum(xb, coeffs));
    REQUIRE_FALSE(w1->grad.empty());
    double norm = 0.0;
    for (int64_t i = 0; i < w1->grad.numel(); ++i) norm += std::fabs(w1->grad[i]);
    CHECK(norm > 0.0);
}

TEST_CASE("transition and upsample shape contracts") {
    NetworkConfig cfg;  // default widths
    Network net(cfg, 28);
    auto phi0 = make_constant(random_input({32, 16, 16, 16}, 29));
    auto t0 = net.transition(0, phi0);
    CHECK(t0->value.shape == std::vector<int64_t>{64, 8, 8, 8});

    auto xhat = make_constant(random_input({128, 8, 8, 8}, 30));
    auto t1 = net.transition(1, xhat);
    CHECK(t1->value.shape == std::vector<int64_t>{64, 4, 4, 4});

    auto u1 = net.upsample_stage(1, xhat);
    CHECK(u1->value.shape == std::vector<int64_t>{16, 16, 16, 16});
    auto deep = make_constant(random_input({128, 1, 1, 1}, 31));
    auto u4 = net.upsample_stage(4, deep);
    CHECK(u4->value.shape == std::vector<int64_t>{16, 16, 16, 16});
}

TEST_CASE("without dense upsampling only the deepest branch is fused") {
    NetworkConfig cfg = tiny_config();
    cfg.enable_dense_up = false;
    Network net(cfg, 32);
    auto nodes = net.forward_nodes(random_input({2, 16, 16, 16}, 33));
    CHECK(nodes.u[0] == nullptr);
    CHECK(nodes.u[1] == nullptr);
    CHECK(nodes.u[2] == nullptr);
    REQUIRE(nodes.u[3] != nullptr);
    CHECK(nodes.r->value.dim(0) == cfg.fused_channels());
    CHECK(nodes.probs->value.shape == std::vector<int64_t>{4, 16, 16, 16});
}

TEST_CASE("analytic network gradients match finite differences") {
    Network net(tiny_config(), 34);
    net.set_training(true);
    net.freeze_running_stats(true);
    const Tensor input = random_input({2, 16, 16, 16}, 35);
    Tensor coeffs({4, 16, 16, 16});
    coeffs.fill(1.0 / static_cast<double>(coeffs.numel()));

    auto mean_logit = [&] {
        auto nodes = net.forward_nodes(input);
        return weighted_sum(nodes.logits, coeffs);
    };

    for (auto& [name, p] : net.registry().params) p->grad = Tensor();
    backward(mean_logit());
    const double base = mean_logit()->value[0];

    // A central difference only estimates the derivative when the objective is
    // smooth across [x-h, x+h].  Crossing a ReLU kink biases it by half the
    // forward/backward disagreement, and high third derivatives bias it by the
    // gap to the half-step quotient, so probes failing either self-consistency
    // check are discarded and redrawn.
    Rng pick(37);
    auto& params = net.registry().params;
    const double h = 1e-3;
    auto probe_at = [&](Node& p, int64_t idx, double saved, double step) {
        p.value[idx] = saved + step;
        const double up = mean_logit()->value[0];
        p.value[idx] = saved - step;
        const double down = mean_logit()->value[0];
        p.value[idx] = saved;
        return std::pair{(up - down) / (2.0 * step), up};
    };
    int accepted = 0, nonzero = 0, draws = 0;
    while ((accepted < 20 || nonzero < 10) && draws < 800) {
        ++draws;
        auto& [name, p] =
            params[static_cast<size_t>(pick.uniform_int(static_cast<int64_t>(params.size())))];
        const int64_t idx = pick.uniform_int(p->value.numel());
        const double analytic = p->grad.empty() ? 0.0 : p->grad[idx];
        const double saved = p->value[idx];
        const auto [numeric, up] = probe_at(*p, idx, saved, h);
        const double scale = std::max(std::fabs(numeric), std::fabs(analytic));
        if (scale < 1e-9) {
            ++accepted;
            continue;
        }
        const double down = up - 2.0 * h * numeric;
        const double disagreement = std::fabs((up - base) / h - (base - down) / h);
        if (disagreement > 1e-3 * scale) continue;
        const auto [half, up_half] = probe_at(*p, idx, saved, h / 2.0);
        if (std::fabs(half - numeric) > 2.5e-4 * scale) continue;
        CAPTURE(name);
        CAPTURE(idx);
        CHECK(std::fabs(numeric - analytic) / scale < 1e-3);
        ++accepted;
        ++nonzero;
        (void)up_half;
    }
    CHECK(accepted >= 20);
    CHECK(nonzero >= 10);
}
