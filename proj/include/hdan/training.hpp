#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hdan/loss.hpp"
#include "hdan/network.hpp"
#include "hdan/patching.hpp"
#include "hdan/volume.hpp"

namespace hdan {

enum class Optimizer { adam, sgd_momentum };

struct TrainConfig {
    double initial_lr = 1e-3;
    int64_t lr_drop_interval = 50;
    double lr_drop_factor = 10.0;
    double weight_decay = 1e-4;
    int64_t max_epochs = 10;
    int64_t batch_size = 2;
    int64_t patches_per_volume_per_epoch = 8;
    uint64_t seed = 1;
    Optimizer optimizer = Optimizer::adam;
    std::array<int64_t, 3> patch_size{64, 64, 64};
    std::array<int64_t, 3> patch_stride{32, 32, 32};
    int64_t checkpoint_every = 1;
    // Destination for numbered checkpoints, last.ckpt, and log.csv; empty
    // keeps training entirely in memory.
    std::string out_dir;
};

// Step decay: initial_lr / factor^(epoch / interval), integer division.
double lr_at(const TrainConfig& cfg, int64_t epoch);

struct EpochStats {
    int64_t epoch = 0;
    double lr = 0.0;
    double mean_loss = 0.0;
    double wall_seconds = 0.0;
};

// First-moment/second-moment (adam) or velocity (sgd) slots, parallel to the
// network's parameter registry order.
struct OptimizerState {
    int64_t step = 0;
    std::vector<Tensor> m;
    std::vector<Tensor> v;
};

// Everything needed to reproduce and resume a run: configs, completed-epoch
// counter, loss history, parameter and normalization tensors, optimizer
// slots.
struct Checkpoint {
    NetworkConfig net_config;
    TrainConfig train_config;
    int64_t epoch = 0;
    std::vector<EpochStats> history;
    std::vector<std::pair<std::string, Tensor>> params;
    std::vector<std::pair<std::string, Tensor>> buffers;
    OptimizerState opt;
};

Checkpoint snapshot(const Network& net, const TrainConfig& cfg,
                    const OptimizerState& opt, int64_t epoch,
                    const std::vector<EpochStats>& history);

// Self-describing binary container: magic, format version, JSON description,
// raw little-endian f64 payload. Tensor names are the stable registry names.
void write_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::string& path);

// Copies checkpoint tensors into the network; names and shapes must match
// the registry exactly.
void restore(Network& net, const Checkpoint& ckpt);

// One in-place update from the accumulated leaf gradients. Both optimizers
// scale their entire update, weight decay included, by lr.
void apply_optimizer_step(Network& net, OptimizerState& opt,
                          const TrainConfig& cfg, double lr);

using Dataset = std::vector<std::pair<MultiModalVolume, LabelMap>>;

struct TrainResult {
    std::vector<EpochStats> history;
    OptimizerState opt;
    int64_t epochs_completed = 0;
};

// Patch-sampled weighted-CE optimization with per-epoch step decay.
// Volumes are used as given; z-scoring is the caller's responsibility.
// Resuming from a checkpoint continues its history and optimizer state at
// the recorded epoch. Per-sample gradients are scaled by the batch size and
// accumulated, so results are independent of threading and identical across
// runs with one seed.
TrainResult train(Network& net, const Dataset& data, const TrainConfig& cfg,
                  const Checkpoint* resume = nullptr);

}  // namespace hdan
