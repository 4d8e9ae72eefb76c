#include "hdan/nn.hpp"

#include <cmath>

#include "hdan/errors.hpp"

namespace hdan {

namespace {

// Kaiming-uniform for ReLU: entries in ±sqrt(6/fan_in), drawn in row-major
// index order so builds are reproducible for a fixed seed.
Tensor kaiming_uniform(std::vector<int64_t> shape, int64_t fan_in, Rng& rng) {
    Tensor t(std::move(shape));
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    const int64_t n = t.numel();
    for (int64_t i = 0; i < n; ++i) t[i] = rng.uniform(-bound, bound);
    return t;
}

}  // namespace

void ParamRegistry::add_param(const std::string& name, const NodePtr& p) {
    for (const auto& [existing, node] : params)
        if (existing == name)
            throw InvalidConfig("duplicate parameter name " + name);
    params.emplace_back(name, p);
}

void ParamRegistry::add_buffer(const std::string& name, Tensor* t) {
    for (const auto& [existing, buf] : buffers)
        if (existing == name)
            throw InvalidConfig("duplicate buffer name " + name);
    buffers.emplace_back(name, t);
}

NodePtr ParamRegistry::find_param(const std::string& name) const {
    for (const auto& [n, p] : params)
        if (n == name) return p;
    return nullptr;
}

int64_t ParamRegistry::total_params() const {
    int64_t n = 0;
    for (const auto& [name, p] : params) n += p->value.numel();
    return n;
}

Conv3d::Conv3d(int64_t in_ch, int64_t out_ch, int kernel, int stride, int pad,
               Rng& rng)
    : stride_(stride), pad_(pad) {
    const int64_t k3 = static_cast<int64_t>(kernel) * kernel * kernel;
    w = make_param(
        kaiming_uniform({out_ch, in_ch, kernel, kernel, kernel}, in_ch * k3, rng));
    b = make_param(Tensor({out_ch}));
}

void Conv3d::register_into(ParamRegistry& reg, const std::string& prefix) const {
    reg.add_param(prefix + ".w", w);
    reg.add_param(prefix + ".b", b);
}

ConvTranspose3d::ConvTranspose3d(int64_t in_ch, int64_t out_ch, int kernel,
                                 Rng& rng)
    : k_(kernel) {
    const int64_t k3 = static_cast<int64_t>(kernel) * kernel * kernel;
    w = make_param(
        kaiming_uniform({in_ch, out_ch, kernel, kernel, kernel}, out_ch * k3, rng));
    b = make_param(Tensor({out_ch}));
}

void ConvTranspose3d::register_into(ParamRegistry& reg,
                                    const std::string& prefix) const {
    reg.add_param(prefix + ".w", w);
    reg.add_param(prefix + ".b", b);
}

BatchNorm3d::BatchNorm3d(int64_t channels)
    : gamma(make_param(Tensor({channels}, 1.0))),
      beta(make_param(Tensor({channels}))),
      running_mean({channels}),
      running_var({channels}, 1.0) {}

void BatchNorm3d::register_into(ParamRegistry& reg, const std::string& prefix) {
    reg.add_param(prefix + ".gamma", gamma);
    reg.add_param(prefix + ".beta", beta);
    reg.add_buffer(prefix + ".running_mean", &running_mean);
    reg.add_buffer(prefix + ".running_var", &running_var);
}

LinearLayer::LinearLayer(int64_t in, int64_t out, Rng& rng) {
    w = make_param(kaiming_uniform({out, in}, in, rng));
    b = make_param(Tensor({out}));
}

void LinearLayer::register_into(ParamRegistry& reg,
                                const std::string& prefix) const {
    reg.add_param(prefix + ".w", w);
    reg.add_param(prefix + ".b", b);
}

}  // namespace hdan
