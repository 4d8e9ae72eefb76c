#include "hdan/network.hpp"

#include <string>

#include "hdan/errors.hpp"

namespace hdan {

namespace {

int64_t conv_params(int64_t ci, int64_t co, int64_t k) { return ci * co * k * k * k + co; }
int64_t bn_params(int64_t c) { return 2 * c; }

std::string stage_name(const char* base, int stage) {
    return std::string(base) + std::to_string(stage);
}

}  // namespace

void NetworkConfig::validate() const {
    if (in_modalities < 1) throw InvalidConfig("in_modalities must be >= 1");
    if (num_classes < 2) throw InvalidConfig("num_classes must be >= 2");
    if (extractor_channels < 1 || growth_rate < 1 || transition_channels < 1 ||
        upsample_channels < 1 || units_per_block < 1)
        throw InvalidConfig("channel counts and unit count must be positive");
    if (ca_reduction < 1) throw InvalidConfig("ca_reduction must be >= 1");
    if (sa_kernel < 1 || sa_kernel % 2 == 0)
        throw InvalidConfig("sa_kernel must be odd and positive");
    if (extractor_channels % ca_reduction != 0)
        throw InvalidConfig("ca_reduction must divide extractor_channels");
    if (block_out_channels() % ca_reduction != 0)
        throw InvalidConfig("ca_reduction must divide the block output width");
}

int64_t NetworkConfig::param_count() const {
    const int64_t M = in_modalities, E = extractor_channels, g = growth_rate;
    const int64_t T = transition_channels, U = upsample_channels;
    const int64_t B = block_out_channels(), r = ca_reduction, K = sa_kernel;

    const int64_t fe = conv_params(M, E, 3) + bn_params(E) + conv_params(E, E, 3) +
                       bn_params(E) + conv_params(M, E, 1) + bn_params(E);
    auto attention = [&](int64_t c) {
        return (c * (c / r) + c / r) + ((c / r) * c + c) + conv_params(2, 1, K);
    };
    auto transition = [&](int64_t ci) {
        return conv_params(ci, T, 1) + bn_params(T) + conv_params(T, T, 2) +
               bn_params(T);
    };
    int64_t block = 0;
    for (int64_t i = 0; i < units_per_block; ++i)
        block += conv_params(T + g * i, 4 * g, 1) + bn_params(4 * g) +
                 conv_params(4 * g, g, 3) + bn_params(g);
    int64_t ups = 0;
    for (int k = 1; k <= 4; ++k) {
        const int64_t kernel = int64_t{1} << k;
        ups += B * U * kernel * kernel * kernel + U + bn_params(U);
    }
    const int64_t head = conv_params(fused_channels(), num_classes, 1);
    return fe + attention(E) + transition(E) +
           4 * (block + attention(B) + transition(B)) + ups + head;
}

Network::Network(NetworkConfig cfg, uint64_t seed) : cfg_(std::move(cfg)) {
    cfg_.validate();
    Rng rng(seed);
    const int64_t M = cfg_.in_modalities, E = cfg_.extractor_channels;
    const int64_t g = cfg_.growth_rate, T = cfg_.transition_channels;
    const int64_t U = cfg_.upsample_channels, B = cfg_.block_out_channels();
    const int sa_pad = (cfg_.sa_kernel - 1) / 2;

    fe_.c1.conv = Conv3d(M, E, 3, 1, 1, rng);
    fe_.c1.bn = BatchNorm3d(E);
    fe_.c2.conv = Conv3d(E, E, 3, 1, 1, rng);
    fe_.c2.bn = BatchNorm3d(E);
    fe_.skip = Conv3d(M, E, 1, 1, 0, rng);
    fe_.skip_bn = BatchNorm3d(E);

    auto build_attention = [&](int64_t c) {
        AttentionModule a;
        a.fc1 = LinearLayer(c, c / cfg_.ca_reduction, rng);
        a.fc2 = LinearLayer(c / cfg_.ca_reduction, c, rng);
        a.sa_conv = Conv3d(2, 1, cfg_.sa_kernel, 1, sa_pad, rng);
        return a;
    };
    auto build_transition = [&](int64_t ci) {
        TransitionModule t;
        t.proj.conv = Conv3d(ci, T, 1, 1, 0, rng);
        t.proj.bn = BatchNorm3d(T);
        t.down.conv = Conv3d(T, T, 2, 2, 0, rng);
        t.down.bn = BatchNorm3d(T);
        return t;
    };

    att_[0] = build_attention(E);
    trans_[0] = build_transition(E);
    for (int k = 1; k <= 4; ++k) {
        auto& units = blocks_[static_cast<size_t>(k - 1)];
        units.resize(static_cast<size_t>(cfg_.units_per_block));
        for (int64_t i = 0; i < cfg_.units_per_block; ++i) {
            auto& u = units[static_cast<size_t>(i)];
            u.bottleneck.conv = Conv3d(T + g * i, 4 * g, 1, 1, 0, rng);
            u.bottleneck.bn = BatchNorm3d(4 * g);
            u.conv.conv = Conv3d(4 * g, g, 3, 1, 1, rng);
            u.conv.bn = BatchNorm3d(g);
        }
        att_[static_cast<size_t>(k)] = build_attention(B);
        trans_[static_cast<size_t>(k)] = build_transition(B);
        auto& up = ups_[static_cast<size_t>(k - 1)];
        up.up = ConvTranspose3d(B, U, 1 << k, rng);
        up.bn = BatchNorm3d(U);
    }
    head_ = Conv3d(cfg_.fused_channels(), cfg_.num_classes, 1, 1, 0, rng);

    fe_.c1.conv.register_into(reg_, "fe.conv1");
    fe_.c1.bn.register_into(reg_, "fe.bn1");
    fe_.c2.conv.register_into(reg_, "fe.conv2");
    fe_.c2.bn.register_into(reg_, "fe.bn2");
    fe_.skip.register_into(reg_, "fe.skip");
    fe_.skip_bn.register_into(reg_, "fe.skip_bn");
    auto register_attention = [&](AttentionModule& a, const std::string& p) {
        a.fc1.register_into(reg_, p + ".fc1");
        a.fc2.register_into(reg_, p + ".fc2");
        a.sa_conv.register_into(reg_, p + ".sa");
    };
    auto register_transition = [&](TransitionModule& t, const std::string& p) {
        t.proj.conv.register_into(reg_, p + ".proj");
        t.proj.bn.register_into(reg_, p + ".proj_bn");
        t.down.conv.register_into(reg_, p + ".down");
        t.down.bn.register_into(reg_, p + ".down_bn");
    };
    register_attention(att_[0], "att0");
    register_transition(trans_[0], "trans0");
    for (int k = 1; k <= 4; ++k) {
        const std::string sp = stage_name("stage", k);
        auto& units = blocks_[static_cast<size_t>(k - 1)];
        for (size_t i = 0; i < units.size(); ++i) {
            const std::string up = sp + ".unit" + std::to_string(i + 1);
            units[i].bottleneck.conv.register_into(reg_, up + ".bottleneck");
            units[i].bottleneck.bn.register_into(reg_, up + ".bottleneck_bn");
            units[i].conv.conv.register_into(reg_, up + ".conv");
            units[i].conv.bn.register_into(reg_, up + ".conv_bn");
        }
        register_attention(att_[static_cast<size_t>(k)], stage_name("att", k));
        register_transition(trans_[static_cast<size_t>(k)], stage_name("trans", k));
        auto& up = ups_[static_cast<size_t>(k - 1)];
        up.up.register_into(reg_, stage_name("up", k) + ".deconv");
        up.bn.register_into(reg_, stage_name("up", k) + ".bn");
    }
    head_.register_into(reg_, "head");
}

NodePtr Network::cna(Cna& m, const NodePtr& x) {
    return relu(m.bn(m.conv(x), use_batch_stats(), update_running()));
}

NodePtr Network::feature_extract(const NodePtr& x) {
    const Tensor& v = x->value;
    if (v.rank() != 4 || v.dim(0) != cfg_.in_modalities)
        throw BadInputShape("expected " + std::to_string(cfg_.in_modalities) +
                            " input modalities, got " + shape_str(v.shape));
    for (int a = 1; a <= 3; ++a)
        if (v.dim(a) < 16 || v.dim(a) % 16 != 0)
            throw BadInputShape("spatial dims must be multiples of 16 and >= 16, got " +
                                shape_str(v.shape));
    auto h = cna(fe_.c1, x);
    h = cna(fe_.c2, h);
    auto skip = fe_.skip_bn(fe_.skip(x), use_batch_stats(), update_running());
    return relu(add(h, skip));
}

NodePtr Network::conv_block(int stage, const NodePtr& t_prev) {
    if (stage < 1 || stage > 4) throw InvalidConfig("conv_block stage must be 1..4");
    if (t_prev->value.dim(0) != cfg_.transition_channels)
        throw ShapeMismatch("conv_block expects " +
                            std::to_string(cfg_.transition_channels) +
                            " input channels, got " + shape_str(t_prev->value.shape));
    auto& units = blocks_[static_cast<size_t>(stage - 1)];
    std::vector<NodePtr> feats{t_prev};
    for (auto& u : units) {
        NodePtr in = feats.size() == 1 ? feats[0] : concat_channels(feats);
        auto h = cna(u.bottleneck, in);
        feats.push_back(cna(u.conv, h));
    }
    return concat_channels(feats);
}

NodePtr Network::channel_attention(int stage, const NodePtr& f) {
    if (stage < 0 || stage > 4) throw InvalidConfig("attention stage must be 0..4");
    auto& a = att_[static_cast<size_t>(stage)];
    if (f->value.dim(0) % cfg_.ca_reduction != 0)
        throw ReductionMismatch("channel count " + std::to_string(f->value.dim(0)) +
                                " not divisible by reduction " +
                                std::to_string(cfg_.ca_reduction));
    auto h = relu(a.fc1(global_avg_pool(f)));
    return sigmoid(a.fc2(h));
}

NodePtr Network::spatial_attention(int stage, const NodePtr& f) {
    if (stage < 0 || stage > 4) throw InvalidConfig("attention stage must be 0..4");
    auto& a = att_[static_cast<size_t>(stage)];
    auto descriptors = concat_channels({channel_max(f), channel_mean(f)});
    return sigmoid(a.sa_conv(descriptors));
}

NodePtr Network::attention_refine(int stage, const NodePtr& f, NodePtr* mc_out,
                                  NodePtr* ms_out) {
    NodePtr cur = f;
    if (cfg_.enable_ca) {
        auto mc = channel_attention(stage, f);
        if (mc_out) *mc_out = mc;
        cur = mul_channel(cur, mc);
    }
    if (cfg_.enable_sa) {
        auto ms = spatial_attention(stage, cur);
        if (ms_out) *ms_out = ms;
        cur = mul_spatial(cur, ms);
    }
    return cur;
}

NodePtr Network::transition(int stage, const NodePtr& x) {
    if (stage < 0 || stage > 4) throw InvalidConfig("transition stage must be 0..4");
    for (int a = 1; a <= 3; ++a)
        if (x->value.dim(a) % 2 != 0)
            throw OddDims("transition needs even spatial dims, got " +
                          shape_str(x->value.shape));
    auto& t = trans_[static_cast<size_t>(stage)];
    auto h = cna(t.proj, x);
    return cna(t.down, h);
}

NodePtr Network::upsample_stage(int stage, const NodePtr& x) {
    if (stage < 1 || stage > 4) throw InvalidConfig("upsample stage must be 1..4");
    auto& u = ups_[static_cast<size_t>(stage - 1)];
    return relu(u.bn(u.up(x), use_batch_stats(), update_running()));
}

ForwardNodes Network::forward_nodes(const Tensor& input) {
    ForwardNodes out;
    if (cfg_.enable_ca) out.channel_maps.resize(5);
    if (cfg_.enable_sa) out.spatial_maps.resize(5);
    out.x_hat.resize(4);
    out.u.resize(4);

    auto x = make_constant(input);
    out.phi0 = feature_extract(x);

    NodePtr mc, ms;
    auto a0 = attention_refine(0, out.phi0, &mc, &ms);
    if (cfg_.enable_ca) out.channel_maps[0] = mc;
    if (cfg_.enable_sa) out.spatial_maps[0] = ms;

    auto t_prev = transition(0, out.phi0);
    out.t.push_back(t_prev);

    std::vector<NodePtr> fused{a0};
    for (int k = 1; k <= 4; ++k) {
        auto xk = conv_block(k, t_prev);
        NodePtr mck, msk;
        auto xhat = attention_refine(k, xk, &mck, &msk);
        out.x_hat[static_cast<size_t>(k - 1)] = xhat;
        if (cfg_.enable_ca) out.channel_maps[static_cast<size_t>(k)] = mck;
        if (cfg_.enable_sa) out.spatial_maps[static_cast<size_t>(k)] = msk;
        if (cfg_.enable_dense_up || k == 4) {
            auto u = upsample_stage(k, xhat);
            out.u[static_cast<size_t>(k - 1)] = u;
            fused.push_back(u);
        }
        const bool even = xhat->value.dim(1) % 2 == 0 && xhat->value.dim(2) % 2 == 0 &&
                          xhat->value.dim(3) % 2 == 0;
        if (k < 4 || even) {
            t_prev = transition(k, xhat);
            out.t.push_back(t_prev);
        }
    }

    out.r = concat_channels(fused);
    out.logits = head_(out.r);
    out.probs = softmax_channels(out.logits);
    return out;
}

std::pair<ProbabilityMap, ForwardTrace> Network::forward(
    const MultiModalVolume& patch) {
    NoGradGuard guard;
    ForwardNodes nodes = forward_nodes(patch.data);

    ProbabilityMap pm;
    pm.probs = nodes.probs->value;
    pm.spacing_mm = patch.spacing_mm;

    ForwardTrace trace;
    trace.phi0 = nodes.phi0->value;
    for (const auto& n : nodes.t) trace.t.push_back(n->value);
    for (const auto& n : nodes.x_hat) trace.x_hat.push_back(n->value);
    for (const auto& n : nodes.u) trace.u.push_back(n ? n->value : Tensor());
    trace.r = nodes.r->value;
    for (const auto& n : nodes.channel_maps) trace.channel_maps.push_back(n->value);
    for (const auto& n : nodes.spatial_maps) trace.spatial_maps.push_back(n->value);
    return {std::move(pm), std::move(trace)};
}

}  // namespace hdan
