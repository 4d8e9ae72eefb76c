#include <CLI11.hpp>

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "hdan/assessment.hpp"
#include "hdan/config.hpp"
#include "hdan/errors.hpp"
#include "hdan/image_export.hpp"
#include "hdan/inference.hpp"
#include "hdan/metrics.hpp"
#include "hdan/network.hpp"
#include "hdan/parallel.hpp"
#include "hdan/training.hpp"
#include "hdan/volume.hpp"
#include "hdan/volume_io.hpp"

namespace fs = std::filesystem;
using namespace hdan;

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) {
        size_t b = field.find_first_not_of(" \t\r");
        size_t e = field.find_last_not_of(" \t\r");
        out.push_back(b == std::string::npos ? "" : field.substr(b, e - b + 1));
    }
    if (!line.empty() && line.back() == ',') out.push_back("");
    return out;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& path,
                                               const std::vector<std::string>& header) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open manifest: " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw UsageError("empty manifest: " + path.string());
    if (split_csv_line(line) != header) {
        std::string want;
        for (const auto& h : header) want += (want.empty() ? "" : ",") + h;
        throw UsageError(path.string() + ": first line must be '" + want + "'");
    }
    std::vector<std::vector<std::string>> rows;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        auto fields = split_csv_line(line);
        if (fields.size() != header.size())
            throw UsageError(path.string() + ":" + std::to_string(line_no) +
                             ": expected " + std::to_string(header.size()) + " fields");
        rows.push_back(std::move(fields));
    }
    return rows;
}

fs::path resolve_against(const std::string& p, const fs::path& base) {
    fs::path candidate(p);
    return candidate.is_absolute() ? candidate : base / candidate;
}

// Filename stem without compression/format extensions or a pipeline role
// suffix, so predictions pair with truth files across naming conventions.
std::string subject_key(const fs::path& file) {
    fs::path p = file.filename();
    if (p.extension() == ".gz") p = p.stem();
    std::string stem = p.stem().string();
    for (const char* suffix : {"_labels", "_label", "_pred", "_truth", "_seg"}) {
        size_t n = std::string(suffix).size();
        if (stem.size() > n && stem.compare(stem.size() - n, n, suffix) == 0)
            return stem.substr(0, stem.size() - n);
    }
    return stem;
}

bool is_volume_file(const fs::path& p) {
    std::string name = p.filename().string();
    auto ends_with = [&](const char* s) {
        size_t n = std::string(s).size();
        return name.size() > n && name.compare(name.size() - n, n, s) == 0;
    };
    if (ends_with(".json") || ends_with(".csv") || ends_with(".img") ||
        ends_with(".png") || ends_with(".txt") || ends_with(".ckpt"))
        return false;
    return ends_with(".raw") || ends_with(".nii") || ends_with(".nii.gz") ||
           ends_with(".hdr");
}

struct FormatChoice {
    VolumeFormat format;
    const char* extension;
};

FormatChoice format_from_name(const std::string& name) {
    if (name == "raw") return {VolumeFormat::raw, ".raw"};
    if (name == "nii") return {VolumeFormat::nifti, ".nii"};
    if (name == "nii.gz") return {VolumeFormat::nifti_gz, ".nii.gz"};
    if (name == "hdr") return {VolumeFormat::analyze, ".hdr"};
    throw UsageError("unknown format '" + name + "' (raw, nii, nii.gz, hdr)");
}

// ---------------------------------------------------------------- phantom --

struct PhantomArgs {
    std::string out;
    int64_t count = 1;
    int64_t size = 64;
    double delta = 0.1;
    double sigma = 0.05;
    uint64_t seed = 1;
};

void run_phantom(const PhantomArgs& a) {
    if (a.size < 16 || a.size % 16 != 0)
        throw UsageError("--size must be a positive multiple of 16 (four 2x "
                         "downsampling stages), got " + std::to_string(a.size));
    if (a.count < 1) throw UsageError("--count must be at least 1");
    fs::create_directories(a.out);

    std::ostringstream manifest;
    manifest << "subject_id,t1,t2,labels\n";
    for (int64_t i = 0; i < a.count; ++i) {
        PhantomSpec spec;
        spec.size = {a.size, a.size, a.size};
        spec.contrast_delta = a.delta;
        spec.noise_sigma = a.sigma;
        spec.seed = a.seed + static_cast<uint64_t>(i);
        auto [vol, labels] = generate_phantom(spec);

        char id[32];
        std::snprintf(id, sizeof(id), "phantom_%03lld", static_cast<long long>(i));
        vol.subject_id = id;
        std::string t1 = std::string(id) + "_t1.raw";
        std::string t2 = std::string(id) + "_t2.raw";
        std::string lab = std::string(id) + "_labels.raw";
        save_volume(vol, 0, (fs::path(a.out) / t1).string(), VolumeFormat::raw);
        save_volume(vol, 1, (fs::path(a.out) / t2).string(), VolumeFormat::raw);
        save_labelmap(labels, (fs::path(a.out) / lab).string(), VolumeFormat::raw);
        manifest << id << "," << t1 << "," << t2 << "," << lab << "\n";
        std::cout << "wrote " << id << " (" << a.size << "^3, delta=" << a.delta
                  << ", sigma=" << a.sigma << ", seed=" << spec.seed << ")\n";
    }
    fs::path mpath = fs::path(a.out) / "manifest.csv";
    std::ofstream mf(mpath);
    if (!mf) throw IOFailure("cannot write manifest: " + mpath.string());
    mf << manifest.str();
    std::cout << "manifest: " << mpath.string() << " (" << a.count << " pairs)\n";
}

// ------------------------------------------------------------------ train --

struct TrainArgs {
    std::string config;
    std::string data;
    std::string out;
    std::string resume;
    std::vector<std::string> ablate;
};

Dataset load_dataset(const fs::path& manifest_path) {
    fs::path base = manifest_path.parent_path();
    auto rows = read_csv(manifest_path, {"subject_id", "t1", "t2", "labels"});
    if (rows.empty()) throw UsageError("manifest lists no subjects: " + manifest_path.string());
    Dataset data;
    for (const auto& row : rows) {
        MultiModalVolume t1 = load_volume(resolve_against(row[1], base).string());
        MultiModalVolume t2 = load_volume(resolve_against(row[2], base).string());
        MultiModalVolume vol = normalize(pair_modalities(t1, t2));
        vol.subject_id = row[0];
        LabelMap labels = load_labelmap(resolve_against(row[3], base).string());
        data.emplace_back(std::move(vol), std::move(labels));
    }
    return data;
}

void run_train(const TrainArgs& a, const ConfigFile& cfg) {
    NetworkConfig ncfg = cfg.network;
    TrainConfig tcfg = cfg.training;
    for (const auto& flag : a.ablate) {
        if (flag == "dense_up") ncfg.enable_dense_up = false;
        else if (flag == "ca") ncfg.enable_ca = false;
        else if (flag == "sa") ncfg.enable_sa = false;
        else throw UsageError("--ablate accepts dense_up, ca, sa; got '" + flag + "'");
    }
    tcfg.out_dir = a.out;
    fs::create_directories(a.out);

    std::cout << "effective configuration:\n" << render_config(ncfg, tcfg);

    Dataset data = load_dataset(a.data);
    std::cout << "loaded " << data.size() << " training subjects from " << a.data << "\n";

    Network net(ncfg, tcfg.seed);
    std::cout << "network parameters: " << ncfg.param_count() << "\n";

    std::optional<Checkpoint> resume;
    if (!a.resume.empty()) {
        resume = read_checkpoint(a.resume);
        if (resume->net_config.param_count() != ncfg.param_count())
            throw UsageError("resume checkpoint was trained with a different "
                             "network configuration");
        std::cout << "resuming from " << a.resume << " at epoch " << resume->epoch << "\n";
    }

    TrainResult result = train(net, data, tcfg, resume ? &*resume : nullptr);
    for (const auto& s : result.history)
        std::cout << "epoch " << s.epoch << ": lr=" << s.lr
                  << " mean_loss=" << s.mean_loss << " (" << s.wall_seconds << "s)\n";
    std::cout << "finished " << result.epochs_completed << " epochs; checkpoints in "
              << a.out << "\n";
}

// ---------------------------------------------------------------- predict --

struct PredictArgs {
    std::string checkpoint;
    std::vector<std::string> inputs;
    std::string out;
    std::string subject;
    std::string format_name = "raw";
    bool attention = false;
    int attention_stage = 1;
    std::vector<std::string> slices;
    int64_t patch = 64;
    int64_t stride = 32;
};

struct SlicePlane {
    int axis;  // 0=z (depth), 1=y (height), 2=x (width)
    int64_t index;
};

SlicePlane parse_slice(const std::string& s) {
    size_t colon = s.find(':');
    if (colon == std::string::npos)
        throw UsageError("--slice expects axis:index (e.g. z:32), got '" + s + "'");
    std::string axis = s.substr(0, colon);
    SlicePlane plane{};
    if (axis == "z" || axis == "0") plane.axis = 0;
    else if (axis == "y" || axis == "1") plane.axis = 1;
    else if (axis == "x" || axis == "2") plane.axis = 2;
    else throw UsageError("--slice axis must be z, y, or x; got '" + axis + "'");
    try {
        size_t idx = 0;
        plane.index = std::stoll(s.substr(colon + 1), &idx);
        if (idx != s.size() - colon - 1) throw std::invalid_argument(s);
    } catch (const std::exception&) {
        throw UsageError("--slice index must be an integer, got '" + s + "'");
    }
    return plane;
}

void export_slice_png(const MultiModalVolume& att, const SlicePlane& plane,
                      const fs::path& path) {
    auto dims = att.dims();
    if (plane.index < 0 || plane.index >= dims[plane.axis])
        throw UsageError("--slice index " + std::to_string(plane.index) +
                         " outside axis extent " + std::to_string(dims[plane.axis]));
    const int64_t D = dims[0], H = dims[1], W = dims[2];
    auto value = [&](int64_t z, int64_t y, int64_t x) {
        return att.data[(z * H + y) * W + x];
    };
    int64_t width = 0, height = 0;
    std::vector<double> img;
    if (plane.axis == 0) {
        width = W, height = H;
        for (int64_t y = 0; y < H; ++y)
            for (int64_t x = 0; x < W; ++x) img.push_back(value(plane.index, y, x));
    } else if (plane.axis == 1) {
        width = W, height = D;
        for (int64_t z = 0; z < D; ++z)
            for (int64_t x = 0; x < W; ++x) img.push_back(value(z, plane.index, x));
    } else {
        width = H, height = D;
        for (int64_t z = 0; z < D; ++z)
            for (int64_t y = 0; y < H; ++y) img.push_back(value(z, y, plane.index));
    }
    write_colormap_png(path.string(), img, width, height, 0.0, 1.0);
}

void run_predict(const PredictArgs& a) {
    if (!a.slices.empty() && !a.attention)
        throw UsageError("--slice requires --attention");
    FormatChoice fmt = format_from_name(a.format_name);

    Checkpoint ckpt = read_checkpoint(a.checkpoint);
    if (static_cast<int64_t>(a.inputs.size()) != ckpt.net_config.in_modalities)
        throw UsageError("checkpoint expects " +
                         std::to_string(ckpt.net_config.in_modalities) +
                         " input modalities, got " + std::to_string(a.inputs.size()));
    if (a.inputs.size() > 2)
        throw UsageError("at most 2 input modalities are supported");

    Network net(ckpt.net_config, 0);
    restore(net, ckpt);

    MultiModalVolume vol;
    if (a.inputs.size() == 1) {
        vol = load_volume(a.inputs[0]);
    } else {
        vol = pair_modalities(load_volume(a.inputs[0]), load_volume(a.inputs[1]));
    }
    vol = normalize(vol);

    std::string subject = a.subject;
    if (subject.empty()) {
        subject = subject_key(a.inputs[0]);
        for (const char* suffix : {"_t1", "_t2"}) {
            size_t n = 3;
            if (subject.size() > n &&
                subject.compare(subject.size() - n, n, suffix) == 0)
                subject = subject.substr(0, subject.size() - n);
        }
    }

    InferenceConfig icfg;
    icfg.patch_spec.patch_size = {a.patch, a.patch, a.patch};
    icfg.patch_spec.stride = {a.stride, a.stride, a.stride};
    icfg.trace_attention = a.attention;
    icfg.attention_stage = a.attention_stage;
    std::cout << "predicting " << subject << " with patch=" << a.patch
              << " stride=" << a.stride << " (epoch " << ckpt.epoch
              << " checkpoint)\n";

    Prediction pred = predict_volume(net, vol, icfg);

    fs::create_directories(a.out);
    fs::path label_path = fs::path(a.out) / (subject + fmt.extension);
    std::optional<LabelMapping> mapping;
    if (ckpt.net_config.num_classes == 4) mapping = default_label_mapping();
    save_labelmap(pred.labels, label_path.string(), fmt.format, mapping);
    std::cout << "labels: " << label_path.string() << "\n";

    if (a.attention) {
        fs::path att_path = fs::path(a.out) / (subject + "_attention" + fmt.extension);
        save_volume(*pred.attention, 0, att_path.string(), fmt.format);
        std::cout << "attention volume: " << att_path.string() << "\n";
        for (const auto& spec : a.slices) {
            SlicePlane plane = parse_slice(spec);
            char tail[48];
            std::snprintf(tail, sizeof(tail), "_attention_%c%03lld.png",
                          "zyx"[plane.axis], static_cast<long long>(plane.index));
            fs::path png_path = fs::path(a.out) / (subject + tail);
            export_slice_png(*pred.attention, plane, png_path);
            std::cout << "attention slice: " << png_path.string() << "\n";
        }
    }
}

// --------------------------------------------------------------- evaluate --

struct EvaluateArgs {
    std::string pred;
    std::string truth;
    std::string out;
    int64_t num_classes = 4;
};

std::map<std::string, fs::path> index_label_files(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw UsageError("not a directory: " + dir.string());
    std::map<std::string, fs::path> by_subject;
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && is_volume_file(entry.path()))
            files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
        std::string stem = subject_key(f);
        // Intensity volumes sharing the directory are not candidate labels.
        if (stem.size() > 3 && (stem.compare(stem.size() - 3, 3, "_t1") == 0 ||
                                stem.compare(stem.size() - 3, 3, "_t2") == 0))
            continue;
        by_subject.emplace(stem, f);  // first wins on duplicate stems
    }
    return by_subject;
}

void run_evaluate(const EvaluateArgs& a) {
    auto pred_files = index_label_files(a.pred);
    auto truth_files = index_label_files(a.truth);
    if (truth_files.empty()) throw UsageError("no label volumes in " + a.truth);

    const auto& names = default_class_names();
    auto class_name = [&](int64_t c) {
        return a.num_classes == static_cast<int64_t>(names.size())
                   ? names[static_cast<size_t>(c)]
                   : "class" + std::to_string(c);
    };

    std::ostringstream csv;
    csv << "subject_id,class,dice,mhd\n";
    std::vector<double> dice_sum(static_cast<size_t>(a.num_classes), 0.0);
    std::vector<double> mhd_sum(static_cast<size_t>(a.num_classes), 0.0);
    std::vector<int64_t> dice_n(static_cast<size_t>(a.num_classes), 0);
    std::vector<int64_t> mhd_n(static_cast<size_t>(a.num_classes), 0);
    int64_t evaluated = 0;
    int64_t warnings = 0;

    for (const auto& [subject, truth_path] : truth_files) {
        auto it = pred_files.find(subject);
        if (it == pred_files.end()) {
            std::cerr << "warning: no prediction for " << subject << "\n";
            ++warnings;
            continue;
        }
        try {
            LabelMap truth = load_labelmap(truth_path.string());
            LabelMap pred = load_labelmap(it->second.string());
            auto metrics = evaluate_subject(pred, truth, a.num_classes);
            for (int64_t c = 1; c < a.num_classes; ++c) {
                const auto& m = metrics[static_cast<size_t>(c - 1)];
                csv << subject << "," << class_name(c) << ",";
                if (m.dice_missing) csv << "NA";
                else {
                    char buf[32];
                    std::snprintf(buf, sizeof(buf), "%.6f", m.dice);
                    csv << buf;
                    dice_sum[static_cast<size_t>(c)] += m.dice;
                    ++dice_n[static_cast<size_t>(c)];
                }
                csv << ",";
                if (m.mhd_missing) csv << "NA";
                else {
                    char buf[32];
                    std::snprintf(buf, sizeof(buf), "%.6f", m.mhd);
                    csv << buf;
                    mhd_sum[static_cast<size_t>(c)] += m.mhd;
                    ++mhd_n[static_cast<size_t>(c)];
                }
                csv << "\n";
            }
            ++evaluated;
        } catch (const std::exception& e) {
            std::cerr << "warning: skipping " << subject << ": " << e.what() << "\n";
            ++warnings;
        }
    }
    if (evaluated == 0) throw UsageError("no subject could be evaluated");

    std::ofstream out(a.out);
    if (!out) throw IOFailure("cannot write report: " + a.out);
    out << csv.str();

    std::cout << "evaluated " << evaluated << " subjects -> " << a.out << "\n";
    for (int64_t c = 1; c < a.num_classes; ++c) {
        size_t i = static_cast<size_t>(c);
        std::cout << class_name(c) << ": mean dice ";
        if (dice_n[i] > 0) {
            char buf[32];
            std::snprintf(buf, sizeof(buf), "%.6f", dice_sum[i] / dice_n[i]);
            std::cout << buf;
        } else {
            std::cout << "NA";
        }
        std::cout << "  mean mhd ";
        if (mhd_n[i] > 0) {
            char buf[32];
            std::snprintf(buf, sizeof(buf), "%.6f", mhd_sum[i] / mhd_n[i]);
            std::cout << buf;
        } else {
            std::cout << "NA";
        }
        std::cout << "\n";
    }
    std::cout << "warnings: " << warnings << "\n";
}

// ----------------------------------------------------------------- assess --

struct AssessArgs {
    std::string manifest;
    std::string pred;
    std::string out;
    std::string csv;
};

void run_assess(const AssessArgs& a) {
    fs::path manifest_path(a.manifest);
    fs::path base = a.pred.empty() ? manifest_path.parent_path() : fs::path(a.pred);
    auto rows = read_csv(manifest_path, {"subject_id", "group", "path"});

    std::vector<SubjectVolumes> subjects;
    for (const auto& row : rows) {
        Group group = parse_group(row[1]);
        LabelMap labels = load_labelmap(resolve_against(row[2], base).string());
        SubjectVolumes sv = tissue_volumes(labels);
        sv.subject_id = row[0];
        sv.group = group;
        subjects.push_back(sv);
    }

    CohortSummary summary = cohort_compare(subjects);
    std::string table = render_table(summary);
    std::cout << table;
    std::ofstream tf(a.out);
    if (!tf) throw IOFailure("cannot write table: " + a.out);
    tf << table;

    fs::path csv_path = a.csv.empty()
                            ? fs::path(a.out).replace_extension(".csv")
                            : fs::path(a.csv);
    std::ofstream cf(csv_path);
    if (!cf) throw IOFailure("cannot write csv: " + csv_path.string());
    cf << "subject_id,group,wm_mm3,gm_mm3,csf_mm3,brain_mm3,wm_ratio\n";
    auto row_of = [&cf](const std::string& id, const std::string& group, double wm,
                        double gm, double csf, double brain, double ratio,
                        bool ratio_ok) {
        char buf[256];
        std::snprintf(buf, sizeof(buf), "%s,%s,%.3f,%.3f,%.3f,%.3f,", id.c_str(),
                      group.c_str(), wm, gm, csf, brain);
        cf << buf;
        if (ratio_ok) {
            std::snprintf(buf, sizeof(buf), "%.6f", ratio);
            cf << buf;
        } else {
            cf << "NA";
        }
        cf << "\n";
    };
    for (const auto& s : subjects)
        row_of(s.subject_id, group_name(s.group), s.wm_mm3, s.gm_mm3, s.csf_mm3,
               s.brain_mm3, s.wm_ratio, s.ratio_defined);
    row_of("mean_preterm", "preterm", summary.preterm_mean[0], summary.preterm_mean[1],
           summary.preterm_mean[2], summary.preterm_mean[3], summary.preterm_mean[4], true);
    row_of("mean_term", "term", summary.term_mean[0], summary.term_mean[1],
           summary.term_mean[2], summary.term_mean[3], summary.term_mean[4], true);

    std::cout << "table: " << a.out << "\n";
    std::cout << "per-subject csv: " << csv_path.string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"hdan: hierarchical attention network for infant brain MRI "
                 "tissue segmentation and volumetric assessment"};
    app.require_subcommand(1);
    int threads = 0;
    app.add_option("--threads", threads,
                   "cap on worker threads; 0 keeps the library default")
        ->envname("HDAN_THREADS")
        ->check(CLI::NonNegativeNumber);

    PhantomArgs pa;
    auto* phantom = app.add_subcommand(
        "phantom", "generate synthetic multi-modal volumes with known labels");
    phantom->add_option("--out", pa.out, "output directory")->required();
    phantom->add_option("--count", pa.count, "number of subjects to generate");
    phantom->add_option("--size", pa.size, "cubic edge length in voxels (multiple of 16)");
    phantom->add_option("--delta", pa.delta, "WM/GM mean intensity separation");
    phantom->add_option("--sigma", pa.sigma, "additive foreground noise level");
    phantom->add_option("--seed", pa.seed, "base seed; subject i uses seed+i");

    TrainArgs ta;
    NetworkConfig flag_net;
    TrainConfig flag_train;
    auto* train_cmd = app.add_subcommand("train", "train a network on a manifest of volumes");
    train_cmd->add_option("--config", ta.config, "INI file with [network] and [training] sections");
    train_cmd->add_option("--data", ta.data, "training manifest csv (subject_id,t1,t2,labels)")
        ->required();
    train_cmd->add_option("--out", ta.out, "checkpoint/log output directory")->required();
    train_cmd->add_option("--ablate", ta.ablate,
                          "disable components: dense_up, ca, sa (repeatable)");
    train_cmd->add_option("--resume", ta.resume, "checkpoint to continue from");
    auto* f_epochs = train_cmd->add_option("--epochs", flag_train.max_epochs, "training epochs");
    auto* f_lr = train_cmd->add_option("--lr", flag_train.initial_lr, "initial learning rate");
    auto* f_batch = train_cmd->add_option("--batch-size", flag_train.batch_size, "patches per step");
    auto* f_seed = train_cmd->add_option("--seed", flag_train.seed, "training seed");
    auto* f_patch = train_cmd->add_option("--patch-size", flag_train.patch_size[0],
                                          "cubic training patch edge");
    auto* f_stride = train_cmd->add_option("--patch-stride", flag_train.patch_stride[0],
                                           "cubic sampling stride");
    auto* f_ppv = train_cmd->add_option("--patches-per-volume",
                                        flag_train.patches_per_volume_per_epoch,
                                        "sampled patches per volume per epoch");
    std::string opt_name;
    auto* f_opt = train_cmd->add_option("--optimizer", opt_name, "adam or sgd_momentum")
                      ->check(CLI::IsMember({"adam", "sgd_momentum"}));
    auto* f_extractor = train_cmd->add_option("--extractor-channels",
                                              flag_net.extractor_channels,
                                              "feature extractor output channels");
    auto* f_growth = train_cmd->add_option("--growth-rate", flag_net.growth_rate,
                                           "dense block growth rate");

    PredictArgs pr;
    auto* predict = app.add_subcommand("predict", "segment a volume with a trained checkpoint");
    predict->add_option("--checkpoint", pr.checkpoint, "trained checkpoint file")->required();
    predict->add_option("--in", pr.inputs, "input volume(s), comma separated (t1[,t2])")
        ->required()
        ->delimiter(',');
    predict->add_option("--out", pr.out, "output directory")->required();
    predict->add_option("--subject", pr.subject, "output basename (default: from input name)");
    predict->add_option("--format", pr.format_name, "output format: raw, nii, nii.gz, hdr")
        ->check(CLI::IsMember({"raw", "nii", "nii.gz", "hdr"}));
    predict->add_flag("--attention", pr.attention, "also export the fused spatial attention map");
    predict->add_option("--attention-stage", pr.attention_stage,
                        "attention stage to trace (0-4)");
    predict->add_option("--slice", pr.slices,
                        "attention slice image as axis:index (e.g. z:32, repeatable)");
    predict->add_option("--patch", pr.patch, "cubic inference patch edge");
    predict->add_option("--stride", pr.stride, "cubic inference stride");

    EvaluateArgs ev;
    auto* evaluate = app.add_subcommand("evaluate", "score predictions against truth labels");
    evaluate->add_option("--pred", ev.pred, "directory of predicted label volumes")->required();
    evaluate->add_option("--truth", ev.truth, "directory of ground-truth label volumes")
        ->required();
    evaluate->add_option("--out", ev.out, "per-subject per-class csv report path")->required();
    evaluate->add_option("--classes", ev.num_classes, "number of classes including background");

    AssessArgs as;
    auto* assess = app.add_subcommand(
        "assess", "tissue volumes and preterm/term group statistics from label volumes");
    assess->add_option("--manifest", as.manifest, "cohort csv (subject_id,group,path)")
        ->required();
    assess->add_option("--pred", as.pred,
                       "directory manifest paths are relative to (default: manifest dir)");
    assess->add_option("--out", as.out, "output text table path")->required();
    assess->add_option("--csv", as.csv, "per-subject csv path (default: table path with .csv)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (threads > 0) set_max_threads(threads);
        if (app.got_subcommand(phantom)) {
            run_phantom(pa);
        } else if (app.got_subcommand(train_cmd)) {
            ConfigFile cfg;
            if (!ta.config.empty()) cfg = read_config_file(ta.config);
            if (*f_epochs) cfg.training.max_epochs = flag_train.max_epochs;
            if (*f_lr) cfg.training.initial_lr = flag_train.initial_lr;
            if (*f_batch) cfg.training.batch_size = flag_train.batch_size;
            if (*f_seed) cfg.training.seed = flag_train.seed;
            if (*f_patch) {
                int64_t p = flag_train.patch_size[0];
                cfg.training.patch_size = {p, p, p};
            }
            if (*f_stride) {
                int64_t s = flag_train.patch_stride[0];
                cfg.training.patch_stride = {s, s, s};
            }
            if (*f_ppv)
                cfg.training.patches_per_volume_per_epoch =
                    flag_train.patches_per_volume_per_epoch;
            if (*f_opt)
                cfg.training.optimizer =
                    opt_name == "adam" ? Optimizer::adam : Optimizer::sgd_momentum;
            if (*f_extractor) cfg.network.extractor_channels = flag_net.extractor_channels;
            if (*f_growth) cfg.network.growth_rate = flag_net.growth_rate;
            run_train(ta, cfg);
        } else if (app.got_subcommand(predict)) {
            run_predict(pr);
        } else if (app.got_subcommand(evaluate)) {
            run_evaluate(ev);
        } else if (app.got_subcommand(assess)) {
            run_assess(as);
        }
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const RuntimeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
