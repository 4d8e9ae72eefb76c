#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "hdan/nn.hpp"
#include "hdan/volume.hpp"

namespace hdan {

struct NetworkConfig {
    int64_t in_modalities = 2;
    int64_t num_classes = 4;  // BG, CSF, GM, WM
    int64_t extractor_channels = 32;
    int64_t growth_rate = 16;
    int64_t units_per_block = 4;
    int64_t transition_channels = 64;
    int64_t upsample_channels = 16;
    int64_t ca_reduction = 8;
    int sa_kernel = 7;
    bool enable_dense_up = true;
    bool enable_ca = true;
    bool enable_sa = true;

    void validate() const;  // InvalidConfig
    int64_t block_out_channels() const {
        return transition_channels + units_per_block * growth_rate;
    }
    // Channels entering the prediction head: refined extractor features plus
    // either all four upsample branches or, without dense upsampling, only
    // the deepest one.
    int64_t fused_channels() const {
        return extractor_channels + (enable_dense_up ? 4 : 1) * upsample_channels;
    }
    int64_t param_count() const;  // closed form, matches the built registry
};

// Intermediate features captured during one forward pass. t holds the
// transition outputs (deepest omitted when its input dims are odd); x_hat
// the attention-refined block outputs of stages 1..4; u the full-resolution
// upsample branches (entries for stages omitted from fusion stay empty).
// Attention maps are indexed by stage, 0 being the extractor-feature module;
// the vectors are empty when the corresponding flag is off.
struct ForwardTrace {
    Tensor phi0;
    std::vector<Tensor> t;
    std::vector<Tensor> x_hat;
    std::vector<Tensor> u;
    Tensor r;
    std::vector<Tensor> channel_maps;
    std::vector<Tensor> spatial_maps;
};

// Same structure at the graph level, for training and gradient tests.
struct ForwardNodes {
    NodePtr phi0;
    std::vector<NodePtr> t;
    std::vector<NodePtr> x_hat;
    std::vector<NodePtr> u;
    NodePtr r;
    NodePtr logits;
    NodePtr probs;
    std::vector<NodePtr> channel_maps;
    std::vector<NodePtr> spatial_maps;
};

class Network {
public:
    Network(NetworkConfig cfg, uint64_t seed);
    Network(const Network&) = delete;
    Network& operator=(const Network&) = delete;

    const NetworkConfig& config() const { return cfg_; }
    ParamRegistry& registry() { return reg_; }
    const ParamRegistry& registry() const { return reg_; }

    // Training mode switches normalization to batch statistics and updates
    // the running buffers; freezing stops the updates while keeping batch
    // statistics, which makes training-mode forwards repeatable.
    void set_training(bool on) { training_ = on; }
    bool training() const { return training_; }
    void freeze_running_stats(bool on) { stats_frozen_ = on; }

    // input [in_modalities, D, H, W], dims divisible by 16.
    ForwardNodes forward_nodes(const Tensor& input);
    std::pair<ProbabilityMap, ForwardTrace> forward(const MultiModalVolume& patch);

    NodePtr feature_extract(const NodePtr& x);
    NodePtr conv_block(int stage, const NodePtr& t_prev);       // stage 1..4
    NodePtr channel_attention(int stage, const NodePtr& f);     // stage 0..4
    NodePtr spatial_attention(int stage, const NodePtr& f);
    NodePtr attention_refine(int stage, const NodePtr& f,
                             NodePtr* mc_out = nullptr, NodePtr* ms_out = nullptr);
    NodePtr transition(int stage, const NodePtr& x);  // stage 0 acts on phi0
    NodePtr upsample_stage(int stage, const NodePtr& x);  // stage 1..4

private:
    struct Cna {
        Conv3d conv;
        BatchNorm3d bn;
    };
    struct Extractor {
        Cna c1, c2;
        Conv3d skip;
        BatchNorm3d skip_bn;
    };
    struct AttentionModule {
        LinearLayer fc1, fc2;
        Conv3d sa_conv;
    };
    struct DenseUnit {
        Cna bottleneck, conv;
    };
    struct TransitionModule {
        Cna proj, down;
    };
    struct UpsampleModule {
        ConvTranspose3d up;
        BatchNorm3d bn;
    };

    NodePtr cna(Cna& m, const NodePtr& x);
    bool use_batch_stats() const { return training_; }
    bool update_running() const { return training_ && !stats_frozen_; }

    NetworkConfig cfg_;
    Extractor fe_;
    std::array<AttentionModule, 5> att_;        // index = stage, 0 on phi0
    std::array<TransitionModule, 5> trans_;     // index 0 = initial transition
    std::array<std::vector<DenseUnit>, 4> blocks_;
    std::array<UpsampleModule, 4> ups_;
    Conv3d head_;
    ParamRegistry reg_;
    bool training_ = false;
    bool stats_frozen_ = false;
};

}  // namespace hdan
