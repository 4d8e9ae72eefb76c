#include "hdan/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <json.hpp>

#include "hdan/errors.hpp"
#include "hdan/rng.hpp"

namespace hdan {

namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'H', 'D', 'A', 'N', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;

json config_to_json(const NetworkConfig& c) {
    return json{{"in_modalities", c.in_modalities},
                {"num_classes", c.num_classes},
                {"extractor_channels", c.extractor_channels},
                {"growth_rate", c.growth_rate},
                {"units_per_block", c.units_per_block},
                {"transition_channels", c.transition_channels},
                {"upsample_channels", c.upsample_channels},
                {"ca_reduction", c.ca_reduction},
                {"sa_kernel", c.sa_kernel},
                {"enable_dense_up", c.enable_dense_up},
                {"enable_ca", c.enable_ca},
                {"enable_sa", c.enable_sa}};
}

NetworkConfig config_from_json(const json& j) {
    NetworkConfig c;
    c.in_modalities = j.at("in_modalities");
    c.num_classes = j.at("num_classes");
    c.extractor_channels = j.at("extractor_channels");
    c.growth_rate = j.at("growth_rate");
    c.units_per_block = j.at("units_per_block");
    c.transition_channels = j.at("transition_channels");
    c.upsample_channels = j.at("upsample_channels");
    c.ca_reduction = j.at("ca_reduction");
    c.sa_kernel = j.at("sa_kernel");
    c.enable_dense_up = j.at("enable_dense_up");
    c.enable_ca = j.at("enable_ca");
    c.enable_sa = j.at("enable_sa");
    return c;
}

json train_config_to_json(const TrainConfig& c) {
    return json{{"initial_lr", c.initial_lr},
                {"lr_drop_interval", c.lr_drop_interval},
                {"lr_drop_factor", c.lr_drop_factor},
                {"weight_decay", c.weight_decay},
                {"max_epochs", c.max_epochs},
                {"batch_size", c.batch_size},
                {"patches_per_volume_per_epoch", c.patches_per_volume_per_epoch},
                {"seed", c.seed},
                {"optimizer", c.optimizer == Optimizer::adam ? "adam" : "sgd_momentum"},
                {"patch_size", c.patch_size},
                {"patch_stride", c.patch_stride},
                {"checkpoint_every", c.checkpoint_every}};
}

TrainConfig train_config_from_json(const json& j) {
    TrainConfig c;
    c.initial_lr = j.at("initial_lr");
    c.lr_drop_interval = j.at("lr_drop_interval");
    c.lr_drop_factor = j.at("lr_drop_factor");
    c.weight_decay = j.at("weight_decay");
    c.max_epochs = j.at("max_epochs");
    c.batch_size = j.at("batch_size");
    c.patches_per_volume_per_epoch = j.at("patches_per_volume_per_epoch");
    c.seed = j.at("seed");
    c.optimizer = j.at("optimizer") == "adam" ? Optimizer::adam
                                              : Optimizer::sgd_momentum;
    c.patch_size = j.at("patch_size");
    c.patch_stride = j.at("patch_stride");
    c.checkpoint_every = j.at("checkpoint_every");
    return c;
}

void append_tensor_list(json& names, std::vector<const Tensor*>& payload,
                        const std::vector<std::pair<std::string, Tensor>>& list,
                        const char* kind) {
    for (const auto& [name, t] : list) {
        names.push_back(json{{"name", name}, {"kind", kind}, {"shape", t.shape}});
        payload.push_back(&t);
    }
}

void write_raw(std::ofstream& out, const Tensor& t) {
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(sizeof(double) *
                                           static_cast<size_t>(t.numel())));
}

}  // namespace

double lr_at(const TrainConfig& cfg, int64_t epoch) {
    if (cfg.initial_lr <= 0.0) throw InvalidConfig("initial_lr must be positive");
    if (cfg.lr_drop_factor <= 1.0)
        throw InvalidConfig("lr_drop_factor must exceed 1");
    if (cfg.lr_drop_interval < 1)
        throw InvalidConfig("lr_drop_interval must be positive");
    if (epoch < 0) throw InvalidConfig("epoch must be nonnegative");
    const auto drops = static_cast<double>(epoch / cfg.lr_drop_interval);
    return cfg.initial_lr / std::pow(cfg.lr_drop_factor, drops);
}

Checkpoint snapshot(const Network& net, const TrainConfig& cfg,
                    const OptimizerState& opt, int64_t epoch,
                    const std::vector<EpochStats>& history) {
    Checkpoint ckpt;
    ckpt.net_config = net.config();
    ckpt.train_config = cfg;
    ckpt.epoch = epoch;
    ckpt.history = history;
    ckpt.opt = opt;
    for (const auto& [name, p] : net.registry().params)
        ckpt.params.emplace_back(name, p->value);
    for (const auto& [name, t] : net.registry().buffers)
        ckpt.buffers.emplace_back(name, *t);
    return ckpt;
}

void write_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    json header;
    header["epoch"] = ckpt.epoch;
    header["config"] = config_to_json(ckpt.net_config);
    header["train_config"] = train_config_to_json(ckpt.train_config);
    header["opt_step"] = ckpt.opt.step;
    json hist = json::array();
    for (const auto& e : ckpt.history)
        hist.push_back(json{{"epoch", e.epoch},
                            {"lr", e.lr},
                            {"mean_loss", e.mean_loss},
                            {"wall_seconds", e.wall_seconds}});
    header["history"] = hist;

    json tensors = json::array();
    std::vector<const Tensor*> payload;
    append_tensor_list(tensors, payload, ckpt.params, "param");
    append_tensor_list(tensors, payload, ckpt.buffers, "buffer");
    for (size_t i = 0; i < ckpt.opt.m.size(); ++i) {
        tensors.push_back(json{{"name", ckpt.params[i].first},
                               {"kind", "opt_m"},
                               {"shape", ckpt.opt.m[i].shape}});
        payload.push_back(&ckpt.opt.m[i]);
    }
    for (size_t i = 0; i < ckpt.opt.v.size(); ++i) {
        tensors.push_back(json{{"name", ckpt.params[i].first},
                               {"kind", "opt_v"},
                               {"shape", ckpt.opt.v[i].shape}});
        payload.push_back(&ckpt.opt.v[i]);
    }
    header["tensors"] = tensors;

    const std::string head = header.dump();
    const std::string tmp = path + ".tmp";
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IOFailure("cannot open checkpoint for writing: " + path);
    out.write(kMagic, sizeof(kMagic));
    const uint32_t version = kVersion;
    const auto head_len = static_cast<uint32_t>(head.size());
    out.write(reinterpret_cast<const char*>(&version), sizeof(version));
    out.write(reinterpret_cast<const char*>(&head_len), sizeof(head_len));
    out.write(head.data(), static_cast<std::streamsize>(head.size()));
    for (const Tensor* t : payload) write_raw(out, *t);
    out.close();
    if (!out) throw IOFailure("checkpoint write failed: " + path);
    std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IOFailure("cannot open checkpoint: " + path);
    char magic[8];
    uint32_t version = 0, head_len = 0;
    in.read(magic, sizeof(magic));
    in.read(reinterpret_cast<char*>(&version), sizeof(version));
    in.read(reinterpret_cast<char*>(&head_len), sizeof(head_len));
    if (!in || std::memcmp(magic, kMagic, sizeof(magic)) != 0)
        throw UnreadableFormat("not a checkpoint file: " + path);
    if (version != kVersion)
        throw UnreadableFormat("unsupported checkpoint version");
    std::string head(head_len, '\0');
    in.read(head.data(), head_len);
    if (!in) throw UnreadableFormat("truncated checkpoint header");

    json header = json::parse(head, nullptr, false);
    if (header.is_discarded())
        throw UnreadableFormat("corrupt checkpoint header");

    Checkpoint ckpt;
    ckpt.epoch = header.at("epoch");
    ckpt.net_config = config_from_json(header.at("config"));
    ckpt.train_config = train_config_from_json(header.at("train_config"));
    ckpt.opt.step = header.at("opt_step");
    for (const auto& e : header.at("history")) {
        EpochStats s;
        s.epoch = e.at("epoch");
        s.lr = e.at("lr");
        s.mean_loss = e.at("mean_loss");
        s.wall_seconds = e.at("wall_seconds");
        ckpt.history.push_back(s);
    }

    for (const auto& meta : header.at("tensors")) {
        Tensor t(meta.at("shape").get<std::vector<int64_t>>());
        in.read(reinterpret_cast<char*>(t.data()),
                static_cast<std::streamsize>(sizeof(double) *
                                             static_cast<size_t>(t.numel())));
        if (!in) throw UnreadableFormat("truncated checkpoint payload");
        const std::string kind = meta.at("kind");
        const std::string name = meta.at("name");
        if (kind == "param")
            ckpt.params.emplace_back(name, std::move(t));
        else if (kind == "buffer")
            ckpt.buffers.emplace_back(name, std::move(t));
        else if (kind == "opt_m")
            ckpt.opt.m.push_back(std::move(t));
        else if (kind == "opt_v")
            ckpt.opt.v.push_back(std::move(t));
        else
            throw UnreadableFormat("unknown tensor kind: " + kind);
    }
    return ckpt;
}

void restore(Network& net, const Checkpoint& ckpt) {
    auto& reg = net.registry();
    if (ckpt.params.size() != reg.params.size() ||
        ckpt.buffers.size() != reg.buffers.size())
        throw UnreadableFormat("checkpoint tensor set does not match the network");
    for (size_t i = 0; i < reg.params.size(); ++i) {
        const auto& [name, stored] = ckpt.params[i];
        auto& [reg_name, p] = reg.params[i];
        if (name != reg_name || stored.shape != p->value.shape)
            throw UnreadableFormat("checkpoint parameter mismatch: " + name);
        p->value = stored;
    }
    for (size_t i = 0; i < reg.buffers.size(); ++i) {
        const auto& [name, stored] = ckpt.buffers[i];
        auto& [reg_name, t] = reg.buffers[i];
        if (name != reg_name || stored.shape != t->shape)
            throw UnreadableFormat("checkpoint buffer mismatch: " + name);
        *t = stored;
    }
}

void apply_optimizer_step(Network& net, OptimizerState& opt,
                          const TrainConfig& cfg, double lr) {
    auto& params = net.registry().params;
    const bool adam = cfg.optimizer == Optimizer::adam;
    if (opt.m.size() != params.size() ||
        (adam && opt.v.size() != params.size())) {
        opt.m.clear();
        opt.v.clear();
        for (const auto& [name, p] : params) {
            opt.m.emplace_back(p->value.shape);
            if (adam) opt.v.emplace_back(p->value.shape);
        }
    }
    opt.step += 1;

    if (adam) {
        const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
        const double bc1 = 1.0 - std::pow(b1, static_cast<double>(opt.step));
        const double bc2 = 1.0 - std::pow(b2, static_cast<double>(opt.step));
        for (size_t i = 0; i < params.size(); ++i) {
            auto& p = params[i].second;
            if (p->grad.empty()) continue;
            for (int64_t k = 0; k < p->value.numel(); ++k) {
                const double g = p->grad[k];
                opt.m[i][k] = b1 * opt.m[i][k] + (1.0 - b1) * g;
                opt.v[i][k] = b2 * opt.v[i][k] + (1.0 - b2) * g * g;
                const double mhat = opt.m[i][k] / bc1;
                const double vhat = opt.v[i][k] / bc2;
                p->value[k] -= lr * (mhat / (std::sqrt(vhat) + eps) +
                                     cfg.weight_decay * p->value[k]);
            }
        }
    } else {
        const double mu = 0.9;
        for (size_t i = 0; i < params.size(); ++i) {
            auto& p = params[i].second;
            if (p->grad.empty()) continue;
            for (int64_t k = 0; k < p->value.numel(); ++k) {
                opt.m[i][k] = mu * opt.m[i][k] + p->grad[k];
                p->value[k] -= lr * (opt.m[i][k] + cfg.weight_decay * p->value[k]);
            }
        }
    }
}

namespace {

void zero_grads(Network& net) {
    for (auto& [name, p] : net.registry().params) p->grad = Tensor();
}

Tensor labels_to_tensor(const LabelMap& lm) {
    Tensor t({lm.dims[0], lm.dims[1], lm.dims[2]});
    for (int64_t i = 0; i < t.numel(); ++i)
        t[i] = static_cast<double>(lm.labels[static_cast<size_t>(i)]);
    return t;
}

}  // namespace

TrainResult train(Network& net, const Dataset& data, const TrainConfig& cfg,
                  const Checkpoint* resume) {
    if (data.empty()) throw InvalidConfig("training set is empty");
    if (cfg.batch_size < 1 || cfg.patches_per_volume_per_epoch < 1 ||
        cfg.max_epochs < 0 || cfg.checkpoint_every < 1)
        throw InvalidConfig("batch, patch, epoch, and checkpoint counts must be positive");
    lr_at(cfg, 0);

    PatchSpec spec;
    spec.patch_size = cfg.patch_size;
    spec.stride = cfg.patch_stride;
    std::vector<PatchGrid> grids;
    for (const auto& [vol, labels] : data) {
        if (vol.dims() != labels.dims)
            throw GridMismatch("volume and label dims disagree");
        grids.push_back(plan_patches(vol.dims(), spec));
    }

    std::vector<int64_t> hist(static_cast<size_t>(net.config().num_classes), 0);
    for (const auto& [vol, labels] : data) {
        auto h = label_histogram(labels, net.config().num_classes);
        for (size_t c = 0; c < hist.size(); ++c) hist[c] += h[c];
    }
    const ClassWeights weights = compute_class_weights(hist);

    TrainResult result;
    int64_t start_epoch = 0;
    if (resume) {
        restore(net, *resume);
        result.history = resume->history;
        result.opt = resume->opt;
        start_epoch = resume->epoch;
    }

    const bool to_disk = !cfg.out_dir.empty();
    std::filesystem::path dir(cfg.out_dir);
    if (to_disk) std::filesystem::create_directories(dir);
    auto log_path = dir / "log.csv";
    if (to_disk && !std::filesystem::exists(log_path)) {
        std::ofstream log(log_path);
        log << "epoch,lr,mean_loss,wall_seconds\n";
    }

    net.set_training(true);

    for (int64_t epoch = start_epoch; epoch < cfg.max_epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        const double lr = lr_at(cfg, epoch);
        Rng rng(mix_seed(cfg.seed, static_cast<uint64_t>(epoch)));

        // Epoch plan: per volume, a seeded shuffle of its grid, cycled when
        // more patches are requested than the grid holds.
        std::vector<std::pair<size_t, std::array<int64_t, 3>>> plan;
        for (size_t vi = 0; vi < data.size(); ++vi) {
            const auto& origins = grids[vi].origins;
            std::vector<int64_t> order(origins.size());
            int64_t taken = 0;
            while (taken < cfg.patches_per_volume_per_epoch) {
                for (size_t i = 0; i < order.size(); ++i)
                    order[i] = static_cast<int64_t>(i);
                rng.shuffle(order);
                for (size_t i = 0;
                     i < order.size() && taken < cfg.patches_per_volume_per_epoch;
                     ++i, ++taken)
                    plan.emplace_back(vi, origins[static_cast<size_t>(order[i])]);
            }
        }
        rng.shuffle(plan);

        double loss_sum = 0.0;
        int64_t batches = 0;
        for (size_t start = 0; start < plan.size(); start += static_cast<size_t>(cfg.batch_size)) {
            const size_t stop =
                std::min(plan.size(), start + static_cast<size_t>(cfg.batch_size));
            const auto count = static_cast<double>(stop - start);
            zero_grads(net);
            double batch_loss = 0.0;
            for (size_t s = start; s < stop; ++s) {
                const auto& [vi, origin] = plan[s];
                Tensor patch = extract(data[vi].first, origin, spec);
                Tensor labels = labels_to_tensor(extract(data[vi].second, origin, spec));
                auto nodes = net.forward_nodes(patch);
                auto loss = weighted_cross_entropy(nodes.probs, labels, weights);
                batch_loss += loss->value[0];
                backward(scale(loss, 1.0 / count));
            }
            batch_loss /= count;
            if (!std::isfinite(batch_loss))
                throw DivergenceDetected("non-finite loss at epoch " +
                                         std::to_string(epoch));
            apply_optimizer_step(net, result.opt, cfg, lr);
            loss_sum += batch_loss;
            ++batches;
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.lr = lr;
        stats.mean_loss = loss_sum / static_cast<double>(batches);
        stats.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                .count();
        result.history.push_back(stats);
        result.epochs_completed = epoch + 1;

        if (to_disk) {
            std::ofstream log(log_path, std::ios::app);
            log << stats.epoch << ',' << stats.lr << ',' << stats.mean_loss << ','
                << stats.wall_seconds << '\n';
            if ((epoch + 1) % cfg.checkpoint_every == 0 ||
                epoch + 1 == cfg.max_epochs) {
                auto ckpt = snapshot(net, cfg, result.opt, epoch + 1, result.history);
                char name[32];
                std::snprintf(name, sizeof(name), "epoch_%04lld.ckpt",
                              static_cast<long long>(epoch + 1));
                write_checkpoint((dir / name).string(), ckpt);
                write_checkpoint((dir / "last.ckpt").string(), ckpt);
            }
        }
    }
    return result;
}

}  // namespace hdan
