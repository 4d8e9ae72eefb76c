#pragma once

#include <string>
#include <utility>
#include <vector>

#include "hdan/ops.hpp"
#include "hdan/rng.hpp"

namespace hdan {

// Insertion-ordered named parameters and buffers. Insertion order doubles as
// the RNG draw order at build time and the serialization order, so names and
// ordering are part of the checkpoint format.
struct ParamRegistry {
    std::vector<std::pair<std::string, NodePtr>> params;
    std::vector<std::pair<std::string, Tensor*>> buffers;

    void add_param(const std::string& name, const NodePtr& p);
    void add_buffer(const std::string& name, Tensor* t);
    NodePtr find_param(const std::string& name) const;
    int64_t total_params() const;
};

class Conv3d {
public:
    Conv3d() = default;
    Conv3d(int64_t in_ch, int64_t out_ch, int kernel, int stride, int pad,
           Rng& rng);
    NodePtr operator()(const NodePtr& x) const { return conv3d(x, w, b, stride_, pad_); }
    void register_into(ParamRegistry& reg, const std::string& prefix) const;

    NodePtr w, b;

private:
    int stride_ = 1;
    int pad_ = 0;
};

class ConvTranspose3d {
public:
    ConvTranspose3d() = default;
    ConvTranspose3d(int64_t in_ch, int64_t out_ch, int kernel, Rng& rng);
    NodePtr operator()(const NodePtr& x) const { return conv_transpose3d(x, w, b, k_); }
    void register_into(ParamRegistry& reg, const std::string& prefix) const;

    NodePtr w, b;

private:
    int k_ = 1;
};

class BatchNorm3d {
public:
    BatchNorm3d() = default;
    explicit BatchNorm3d(int64_t channels);
    NodePtr operator()(const NodePtr& x, bool use_batch_stats,
                       bool update_running) {
        return batch_norm(x, gamma, beta, running_mean, running_var,
                          use_batch_stats, update_running, momentum, eps);
    }
    void register_into(ParamRegistry& reg, const std::string& prefix);

    NodePtr gamma, beta;
    Tensor running_mean, running_var;
    double momentum = 0.1;
    double eps = 1e-5;
};

class LinearLayer {
public:
    LinearLayer() = default;
    LinearLayer(int64_t in, int64_t out, Rng& rng);
    NodePtr operator()(const NodePtr& x) const { return linear(x, w, b); }
    void register_into(ParamRegistry& reg, const std::string& prefix) const;

    NodePtr w, b;
};

}  // namespace hdan
