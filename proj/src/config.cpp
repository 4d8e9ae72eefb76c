#include "hdan/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "hdan/errors.hpp"

namespace hdan {

namespace {

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_line(const std::string& path, int line, const std::string& what) {
    throw InvalidConfig(path + ":" + std::to_string(line) + ": " + what);
}

int64_t parse_i64(const std::string& path, int line, const std::string& v) {
    try {
        size_t idx = 0;
        int64_t out = std::stoll(v, &idx);
        if (idx != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        bad_line(path, line, "expected an integer, got '" + v + "'");
    }
}

double parse_f64(const std::string& path, int line, const std::string& v) {
    try {
        size_t idx = 0;
        double out = std::stod(v, &idx);
        if (idx != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        bad_line(path, line, "expected a number, got '" + v + "'");
    }
}

bool parse_bool(const std::string& path, int line, const std::string& v) {
    if (v == "true" || v == "1" || v == "on") return true;
    if (v == "false" || v == "0" || v == "off") return false;
    bad_line(path, line, "expected true/false, got '" + v + "'");
}

// Accepts either one integer (cubic) or a comma-separated d,h,w triple.
std::array<int64_t, 3> parse_triple(const std::string& path, int line,
                                    const std::string& v) {
    std::array<int64_t, 3> out{};
    std::vector<std::string> parts;
    std::stringstream ss(v);
    std::string piece;
    while (std::getline(ss, piece, ',')) parts.push_back(trim(piece));
    if (parts.size() == 1) {
        int64_t n = parse_i64(path, line, parts[0]);
        return {n, n, n};
    }
    if (parts.size() != 3)
        bad_line(path, line, "expected one integer or a d,h,w triple, got '" + v + "'");
    for (int i = 0; i < 3; ++i) out[i] = parse_i64(path, line, parts[i]);
    return out;
}

Optimizer parse_optimizer(const std::string& path, int line, const std::string& v) {
    if (v == "adam") return Optimizer::adam;
    if (v == "sgd_momentum") return Optimizer::sgd_momentum;
    bad_line(path, line, "expected adam or sgd_momentum, got '" + v + "'");
}

void apply_network_key(const std::string& path, int line, NetworkConfig& net,
                       const std::string& key, const std::string& v) {
    if (key == "in_modalities") net.in_modalities = parse_i64(path, line, v);
    else if (key == "num_classes") net.num_classes = parse_i64(path, line, v);
    else if (key == "extractor_channels") net.extractor_channels = parse_i64(path, line, v);
    else if (key == "growth_rate") net.growth_rate = parse_i64(path, line, v);
    else if (key == "units_per_block") net.units_per_block = parse_i64(path, line, v);
    else if (key == "transition_channels") net.transition_channels = parse_i64(path, line, v);
    else if (key == "upsample_channels") net.upsample_channels = parse_i64(path, line, v);
    else if (key == "ca_reduction") net.ca_reduction = parse_i64(path, line, v);
    else if (key == "sa_kernel") net.sa_kernel = static_cast<int>(parse_i64(path, line, v));
    else if (key == "enable_dense_up") net.enable_dense_up = parse_bool(path, line, v);
    else if (key == "enable_ca") net.enable_ca = parse_bool(path, line, v);
    else if (key == "enable_sa") net.enable_sa = parse_bool(path, line, v);
    else bad_line(path, line, "unknown [network] key '" + key + "'");
}

void apply_training_key(const std::string& path, int line, TrainConfig& tr,
                        const std::string& key, const std::string& v) {
    if (key == "initial_lr") tr.initial_lr = parse_f64(path, line, v);
    else if (key == "lr_drop_interval") tr.lr_drop_interval = parse_i64(path, line, v);
    else if (key == "lr_drop_factor") tr.lr_drop_factor = parse_f64(path, line, v);
    else if (key == "weight_decay") tr.weight_decay = parse_f64(path, line, v);
    else if (key == "max_epochs") tr.max_epochs = parse_i64(path, line, v);
    else if (key == "batch_size") tr.batch_size = parse_i64(path, line, v);
    else if (key == "patches_per_volume_per_epoch")
        tr.patches_per_volume_per_epoch = parse_i64(path, line, v);
    else if (key == "seed") tr.seed = static_cast<uint64_t>(parse_i64(path, line, v));
    else if (key == "optimizer") tr.optimizer = parse_optimizer(path, line, v);
    else if (key == "patch_size") tr.patch_size = parse_triple(path, line, v);
    else if (key == "patch_stride") tr.patch_stride = parse_triple(path, line, v);
    else if (key == "checkpoint_every") tr.checkpoint_every = parse_i64(path, line, v);
    else bad_line(path, line, "unknown [training] key '" + key + "'");
}

}  // namespace

ConfigFile read_config_file(const std::string& path,
                            const NetworkConfig& net_defaults,
                            const TrainConfig& train_defaults) {
    std::ifstream in(path);
    if (!in) throw UsageError("config file not found: " + path);

    ConfigFile cfg{net_defaults, train_defaults};
    std::string section;
    std::string raw;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        std::string s = trim(raw);
        if (s.empty() || s[0] == '#' || s[0] == ';') continue;
        if (s.front() == '[') {
            if (s.back() != ']') bad_line(path, line, "unterminated section header");
            section = trim(s.substr(1, s.size() - 2));
            if (section != "network" && section != "training")
                bad_line(path, line, "unknown section [" + section + "]");
            continue;
        }
        size_t eq = s.find('=');
        if (eq == std::string::npos) bad_line(path, line, "expected key = value");
        std::string key = trim(s.substr(0, eq));
        std::string value = trim(s.substr(eq + 1));
        if (key.empty()) bad_line(path, line, "empty key");
        if (section.empty())
            bad_line(path, line, "key '" + key + "' outside any section");
        if (section == "network") apply_network_key(path, line, cfg.network, key, value);
        else apply_training_key(path, line, cfg.training, key, value);
    }
    return cfg;
}

namespace {

std::string fmt_f64(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return buf;
}

std::string fmt_triple(const std::array<int64_t, 3>& a) {
    return std::to_string(a[0]) + "," + std::to_string(a[1]) + "," +
           std::to_string(a[2]);
}

}  // namespace

std::string render_config(const NetworkConfig& net, const TrainConfig& train) {
    std::ostringstream out;
    out << "[network]\n";
    out << "in_modalities = " << net.in_modalities << "\n";
    out << "num_classes = " << net.num_classes << "\n";
    out << "extractor_channels = " << net.extractor_channels << "\n";
    out << "growth_rate = " << net.growth_rate << "\n";
    out << "units_per_block = " << net.units_per_block << "\n";
    out << "transition_channels = " << net.transition_channels << "\n";
    out << "upsample_channels = " << net.upsample_channels << "\n";
    out << "ca_reduction = " << net.ca_reduction << "\n";
    out << "sa_kernel = " << net.sa_kernel << "\n";
    out << "enable_dense_up = " << (net.enable_dense_up ? "true" : "false") << "\n";
    out << "enable_ca = " << (net.enable_ca ? "true" : "false") << "\n";
    out << "enable_sa = " << (net.enable_sa ? "true" : "false") << "\n";
    out << "[training]\n";
    out << "initial_lr = " << fmt_f64(train.initial_lr) << "\n";
    out << "lr_drop_interval = " << train.lr_drop_interval << "\n";
    out << "lr_drop_factor = " << fmt_f64(train.lr_drop_factor) << "\n";
    out << "weight_decay = " << fmt_f64(train.weight_decay) << "\n";
    out << "max_epochs = " << train.max_epochs << "\n";
    out << "batch_size = " << train.batch_size << "\n";
    out << "patches_per_volume_per_epoch = " << train.patches_per_volume_per_epoch << "\n";
    out << "seed = " << train.seed << "\n";
    out << "optimizer = " << (train.optimizer == Optimizer::adam ? "adam" : "sgd_momentum") << "\n";
    out << "patch_size = " << fmt_triple(train.patch_size) << "\n";
    out << "patch_stride = " << fmt_triple(train.patch_stride) << "\n";
    out << "checkpoint_every = " << train.checkpoint_every << "\n";
    return out.str();
}

}  // namespace hdan
