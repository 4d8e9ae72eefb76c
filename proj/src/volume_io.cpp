#include "hdan/volume_io.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <limits>

#include "hdan/errors.hpp"

namespace hdan {

namespace {

using nlohmann::json;

// NIfTI-1 and Analyze-7.5 headers are both 348 bytes and agree on the
// offsets of every field read here; NIfTI additionally carries a magic
// string in what Analyze leaves as history padding.
constexpr size_t kHeaderBytes = 348;
constexpr size_t kOffDim = 40;
constexpr size_t kOffDatatype = 70;
constexpr size_t kOffBitpix = 72;
constexpr size_t kOffPixdim = 76;
constexpr size_t kOffVoxOffset = 108;
constexpr size_t kOffSclSlope = 112;
constexpr size_t kOffSclInter = 116;
constexpr size_t kOffMagic = 344;

constexpr int16_t kDtypeU8 = 2;
constexpr int16_t kDtypeI16 = 4;
constexpr int16_t kDtypeF32 = 16;

template <typename T>
T read_at(const std::vector<unsigned char>& buf, size_t offset) {
    T v;
    std::memcpy(&v, buf.data() + offset, sizeof(T));
    return v;
}

template <typename T>
void write_at(std::vector<unsigned char>& buf, size_t offset, T v) {
    std::memcpy(buf.data() + offset, &v, sizeof(T));
}

int dtype_bytes(int16_t code) {
    switch (code) {
        case kDtypeU8: return 1;
        case kDtypeI16: return 2;
        case kDtypeF32: return 4;
        default:
            throw UnreadableFormat("unsupported voxel datatype code " +
                                   std::to_string(code));
    }
}

int16_t dtype_from_name(const std::string& name) {
    if (name == "u8") return kDtypeU8;
    if (name == "i16") return kDtypeI16;
    if (name == "f32") return kDtypeF32;
    throw UnreadableFormat("unsupported sidecar dtype \"" + name + "\"");
}

std::string dtype_name(int16_t code) {
    switch (code) {
        case kDtypeU8: return "u8";
        case kDtypeI16: return "i16";
        default: return "f32";
    }
}

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() &&
           s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

// gzread is transparent for plain files, so one reader covers .nii and
// .nii.gz alike.
std::vector<unsigned char> read_file_gz(const std::string& path) {
    if (!std::filesystem::exists(path))
        throw IOFailure("no such file: " + path);
    gzFile f = gzopen(path.c_str(), "rb");
    if (f == nullptr) throw IOFailure("cannot open " + path);
    std::vector<unsigned char> out;
    std::vector<unsigned char> chunk(1 << 16);
    int n = 0;
    while ((n = gzread(f, chunk.data(), static_cast<unsigned>(chunk.size()))) >
           0)
        out.insert(out.end(), chunk.begin(), chunk.begin() + n);
    const bool bad = n < 0;
    gzclose(f);
    if (bad) throw UnreadableFormat("corrupt compressed stream in " + path);
    return out;
}

std::vector<unsigned char> read_file_plain(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IOFailure("cannot open " + path);
    std::vector<unsigned char> out((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
    if (in.bad()) throw IOFailure("read error on " + path);
    return out;
}

void write_file_plain(const std::string& path,
                      const std::vector<unsigned char>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IOFailure("cannot create " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IOFailure("write error on " + path);
}

void write_file_gz(const std::string& path,
                   const std::vector<unsigned char>& bytes) {
    if (bytes.size() > static_cast<size_t>(std::numeric_limits<int>::max()))
        throw IOFailure("volume too large for compressed write: " + path);
    gzFile f = gzopen(path.c_str(), "wb");
    if (f == nullptr) throw IOFailure("cannot create " + path);
    const int len = static_cast<int>(bytes.size());
    const bool ok = gzwrite(f, bytes.data(), static_cast<unsigned>(len)) == len;
    const bool closed = gzclose(f) == Z_OK;
    if (!ok || !closed) throw IOFailure("write error on " + path);
}

struct ParsedHeader {
    std::array<int64_t, 3> dims{};        // D, H, W
    std::array<double, 3> spacing_mm{};   // matching dims order
    int16_t datatype = 0;
    double scl_slope = 0.0;
    double scl_inter = 0.0;
    size_t vox_offset = 0;
    bool pair = false;  // voxels live in a companion .img
};

ParsedHeader parse_header(const std::vector<unsigned char>& buf,
                          const std::string& path, bool from_hdr_file) {
    if (buf.size() < kHeaderBytes)
        throw UnreadableFormat(path + ": shorter than a 348-byte header");
    if (read_at<int32_t>(buf, 0) != 348)
        throw UnreadableFormat(path + ": header size field is not 348");

    const char m0 = static_cast<char>(buf[kOffMagic]);
    const char m1 = static_cast<char>(buf[kOffMagic + 1]);
    const char m2 = static_cast<char>(buf[kOffMagic + 2]);
    const char m3 = static_cast<char>(buf[kOffMagic + 3]);
    bool single = false;
    bool analyze = false;
    if (m0 == 'n' && m1 == '+' && m2 == '1' && m3 == '\0') {
        single = true;
    } else if (m0 == 'n' && m1 == 'i' && m2 == '1' && m3 == '\0') {
        single = false;
    } else if (m0 == 0 && m1 == 0 && m2 == 0 && m3 == 0 && from_hdr_file) {
        analyze = true;
    } else {
        throw UnreadableFormat(path + ": magic bytes match neither NIfTI-1 nor Analyze-7.5");
    }

    const int16_t nd = read_at<int16_t>(buf, kOffDim);
    if (nd < 3 || nd > 7)
        throw UnreadableFormat(path + ": dim[0] = " + std::to_string(nd) +
                               ", expected a 3-D volume");
    std::array<int16_t, 7> dim;
    for (int i = 0; i < 7; ++i)
        dim[static_cast<size_t>(i)] =
            read_at<int16_t>(buf, kOffDim + 2 * static_cast<size_t>(i + 1));
    for (int i = 0; i < 3; ++i)
        if (dim[static_cast<size_t>(i)] < 1)
            throw UnreadableFormat(path + ": non-positive spatial dimension");
    for (int i = 3; i < nd; ++i)
        if (dim[static_cast<size_t>(i)] > 1)
            throw UnreadableFormat(path + ": multi-frame volumes are not supported");

    ParsedHeader h;
    h.dims = {dim[2], dim[1], dim[0]};  // file order is x-fastest
    h.datatype = read_at<int16_t>(buf, kOffDatatype);
    const int16_t bitpix = read_at<int16_t>(buf, kOffBitpix);
    if (bitpix != 8 * dtype_bytes(h.datatype))
        throw UnreadableFormat(path + ": bitpix disagrees with datatype");

    for (int i = 0; i < 3; ++i) {
        const float p =
            read_at<float>(buf, kOffPixdim + 4 * static_cast<size_t>(i + 1));
        if (!(p > 0.0f) || !std::isfinite(p))
            throw SpacingMissing(path + ": header has no positive voxel size");
        h.spacing_mm[static_cast<size_t>(2 - i)] = static_cast<double>(p);
    }

    if (!analyze) {
        h.scl_slope = static_cast<double>(read_at<float>(buf, kOffSclSlope));
        h.scl_inter = static_cast<double>(read_at<float>(buf, kOffSclInter));
    }
    const float vox = read_at<float>(buf, kOffVoxOffset);
    h.pair = !single;
    if (single) {
        if (!(vox >= 348.0f))
            throw UnreadableFormat(path + ": voxel offset points into the header");
        h.vox_offset = static_cast<size_t>(vox);
    } else {
        h.vox_offset = vox > 0.0f ? static_cast<size_t>(vox) : 0;
    }
    return h;
}

std::vector<double> decode_voxels(const std::vector<unsigned char>& bytes,
                                  size_t offset, const ParsedHeader& h,
                                  const std::string& path) {
    const int64_t n = h.dims[0] * h.dims[1] * h.dims[2];
    const size_t want =
        static_cast<size_t>(n) * static_cast<size_t>(dtype_bytes(h.datatype));
    if (bytes.size() < offset || bytes.size() - offset < want)
        throw UnreadableFormat(path + ": voxel block is truncated");

    std::vector<double> out(static_cast<size_t>(n));
    const unsigned char* src = bytes.data() + offset;
    switch (h.datatype) {
        case kDtypeU8:
            for (int64_t i = 0; i < n; ++i)
                out[static_cast<size_t>(i)] = static_cast<double>(src[i]);
            break;
        case kDtypeI16:
            for (int64_t i = 0; i < n; ++i) {
                int16_t v;
                std::memcpy(&v, src + 2 * i, 2);
                out[static_cast<size_t>(i)] = static_cast<double>(v);
            }
            break;
        default:
            for (int64_t i = 0; i < n; ++i) {
                float v;
                std::memcpy(&v, src + 4 * i, 4);
                out[static_cast<size_t>(i)] = static_cast<double>(v);
            }
            break;
    }
    if (h.scl_slope != 0.0 && !(h.scl_slope == 1.0 && h.scl_inter == 0.0))
        for (double& v : out) v = v * h.scl_slope + h.scl_inter;
    return out;
}

std::string strip_extensions(const std::string& path) {
    std::string name = std::filesystem::path(path).filename().string();
    if (ends_with(name, ".gz")) name.resize(name.size() - 3);
    const size_t dot = name.rfind('.');
    if (dot != std::string::npos && dot > 0) name.resize(dot);
    return name;
}

std::string pair_base(const std::string& path) {
    return path.substr(0, path.size() - 4);
}

struct RawVolume {
    std::array<int64_t, 3> dims;
    std::array<double, 3> spacing_mm;
    std::vector<double> values;
    std::optional<LabelMapping> sidecar_mapping;
};

// Header-format files: .nii, .nii.gz, and .hdr/.img pairs.
RawVolume load_header_format(const std::string& path) {
    std::string header_path = path;
    if (ends_with(path, ".img")) header_path = pair_base(path) + ".hdr";
    const bool from_hdr = ends_with(header_path, ".hdr");
    const std::vector<unsigned char> head_bytes =
        from_hdr ? read_file_plain(header_path) : read_file_gz(header_path);
    const ParsedHeader h = parse_header(head_bytes, header_path, from_hdr);

    RawVolume rv;
    rv.dims = h.dims;
    rv.spacing_mm = h.spacing_mm;
    if (h.pair || from_hdr) {
        const std::string img_path = pair_base(header_path) + ".img";
        const std::vector<unsigned char> img = read_file_plain(img_path);
        rv.values = decode_voxels(img, h.vox_offset, h, img_path);
    } else {
        rv.values = decode_voxels(head_bytes, h.vox_offset, h, header_path);
    }
    return rv;
}

json parse_sidecar(const std::string& sidecar_path) {
    const std::vector<unsigned char> bytes = read_file_plain(sidecar_path);
    json j = json::parse(bytes.begin(), bytes.end(), nullptr, false);
    if (j.is_discarded())
        throw UnreadableFormat(sidecar_path + ": sidecar is not valid JSON");
    return j;
}

RawVolume load_raw_format(const std::string& path) {
    const std::string sidecar_path = path + ".json";
    const json j = parse_sidecar(sidecar_path);
    if (!j.contains("dims") || !j["dims"].is_array() || j["dims"].size() != 3)
        throw UnreadableFormat(sidecar_path + ": missing 3-element dims");
    if (!j.contains("dtype") || !j["dtype"].is_string())
        throw UnreadableFormat(sidecar_path + ": missing dtype");
    if (!j.contains("spacing_mm") || !j["spacing_mm"].is_array() ||
        j["spacing_mm"].size() != 3)
        throw SpacingMissing(sidecar_path + ": missing spacing_mm");

    ParsedHeader h;
    try {
        for (size_t i = 0; i < 3; ++i) {
            const int64_t d = j["dims"][i].get<int64_t>();
            if (d < 1)
                throw UnreadableFormat(sidecar_path + ": non-positive dimension");
            h.dims[i] = d;
            const double s = j["spacing_mm"][i].get<double>();
            if (!(s > 0.0) || !std::isfinite(s))
                throw SpacingMissing(sidecar_path + ": non-positive spacing");
            h.spacing_mm[i] = s;
        }
        h.datatype = dtype_from_name(j["dtype"].get<std::string>());
    } catch (const json::exception& e) {
        throw UnreadableFormat(sidecar_path + ": " + e.what());
    }

    RawVolume rv;
    rv.dims = h.dims;
    rv.spacing_mm = h.spacing_mm;
    const std::vector<unsigned char> bytes = read_file_plain(path);
    const size_t want = static_cast<size_t>(h.dims[0] * h.dims[1] * h.dims[2]) *
                        static_cast<size_t>(dtype_bytes(h.datatype));
    if (bytes.size() != want)
        throw UnreadableFormat(path + ": raw block is " +
                               std::to_string(bytes.size()) + " bytes, expected " +
                               std::to_string(want));
    rv.values = decode_voxels(bytes, 0, h, path);

    if (j.contains("labels")) {
        if (!j["labels"].is_object())
            throw UnreadableFormat(sidecar_path + ": labels must be an object");
        LabelMapping m;
        for (const auto& [key, value] : j["labels"].items()) {
            int64_t intensity = 0;
            try {
                size_t pos = 0;
                intensity = std::stoll(key, &pos);
                if (pos != key.size()) throw std::invalid_argument(key);
                m.table[intensity] = value.get<uint8_t>();
            } catch (const std::exception&) {
                throw UnreadableFormat(sidecar_path +
                                       ": bad label mapping entry \"" + key +
                                       "\"");
            }
        }
        m.class_names = default_label_mapping().class_names;
        if (m.num_classes() != static_cast<int64_t>(m.class_names.size())) {
            m.class_names.clear();
            for (int64_t c = 0; c < m.num_classes(); ++c)
                m.class_names.push_back("class" + std::to_string(c));
        }
        rv.sidecar_mapping = std::move(m);
    }
    return rv;
}

RawVolume load_any(const std::string& path) {
    switch (detect_format(path)) {
        case VolumeFormat::raw: return load_raw_format(path);
        default: return load_header_format(path);
    }
}

std::vector<unsigned char> encode_voxels(const std::vector<double>& values,
                                         int16_t datatype) {
    const size_t n = values.size();
    std::vector<unsigned char> out(n *
                                   static_cast<size_t>(dtype_bytes(datatype)));
    switch (datatype) {
        case kDtypeU8:
            for (size_t i = 0; i < n; ++i)
                out[i] = static_cast<unsigned char>(std::llround(values[i]));
            break;
        case kDtypeI16:
            for (size_t i = 0; i < n; ++i) {
                const int16_t v = static_cast<int16_t>(std::llround(values[i]));
                std::memcpy(out.data() + 2 * i, &v, 2);
            }
            break;
        default:
            for (size_t i = 0; i < n; ++i) {
                const float v = static_cast<float>(values[i]);
                std::memcpy(out.data() + 4 * i, &v, 4);
            }
            break;
    }
    return out;
}

std::vector<unsigned char> build_header(const std::array<int64_t, 3>& dims,
                                        const std::array<double, 3>& spacing,
                                        int16_t datatype, VolumeFormat format) {
    std::vector<unsigned char> buf(kHeaderBytes, 0);
    write_at<int32_t>(buf, 0, 348);
    buf[38] = 'r';  // the Analyze "regular" flag, carried along by NIfTI
    write_at<int16_t>(buf, kOffDim, 3);
    write_at<int16_t>(buf, kOffDim + 2, static_cast<int16_t>(dims[2]));
    write_at<int16_t>(buf, kOffDim + 4, static_cast<int16_t>(dims[1]));
    write_at<int16_t>(buf, kOffDim + 6, static_cast<int16_t>(dims[0]));
    for (size_t i = 4; i <= 7; ++i)
        write_at<int16_t>(buf, kOffDim + 2 * i, 1);
    write_at<int16_t>(buf, kOffDatatype, datatype);
    write_at<int16_t>(buf, kOffBitpix,
                      static_cast<int16_t>(8 * dtype_bytes(datatype)));
    write_at<float>(buf, kOffPixdim, 1.0f);
    write_at<float>(buf, kOffPixdim + 4, static_cast<float>(spacing[2]));
    write_at<float>(buf, kOffPixdim + 8, static_cast<float>(spacing[1]));
    write_at<float>(buf, kOffPixdim + 12, static_cast<float>(spacing[0]));

    if (format == VolumeFormat::analyze) {
        write_at<float>(buf, kOffVoxOffset, 0.0f);
    } else {
        write_at<float>(buf, kOffVoxOffset, 352.0f);
        write_at<float>(buf, kOffSclSlope, 1.0f);
        write_at<float>(buf, kOffSclInter, 0.0f);
        buf[123] = 2;  // spatial units: millimetres
        buf[kOffMagic] = 'n';
        buf[kOffMagic + 1] = '+';
        buf[kOffMagic + 2] = '1';
        buf[kOffMagic + 3] = '\0';
    }
    return buf;
}

void check_writable_dims(const std::array<int64_t, 3>& dims) {
    for (int64_t d : dims)
        if (d < 1 || d > std::numeric_limits<int16_t>::max())
            throw BadInputShape("dimension " + std::to_string(d) +
                                " does not fit a 16-bit header field");
}

void check_spacing(const std::array<double, 3>& spacing) {
    for (double s : spacing)
        if (!(s > 0.0) || !std::isfinite(s))
            throw InvalidConfig("voxel spacing must be positive");
}

void save_any(const std::array<int64_t, 3>& dims,
              const std::array<double, 3>& spacing,
              const std::vector<double>& values, int16_t datatype,
              const std::string& path, VolumeFormat format,
              const std::optional<LabelMapping>& sidecar_labels) {
    check_spacing(spacing);
    if (format != VolumeFormat::raw) check_writable_dims(dims);
    const std::vector<unsigned char> payload = encode_voxels(values, datatype);

    switch (format) {
        case VolumeFormat::nifti:
        case VolumeFormat::nifti_gz: {
            std::vector<unsigned char> bytes =
                build_header(dims, spacing, datatype, format);
            bytes.resize(352, 0);  // empty extension marker
            bytes.insert(bytes.end(), payload.begin(), payload.end());
            if (format == VolumeFormat::nifti_gz)
                write_file_gz(path, bytes);
            else
                write_file_plain(path, bytes);
            return;
        }
        case VolumeFormat::analyze: {
            std::string base = path;
            if (ends_with(base, ".hdr") || ends_with(base, ".img"))
                base = pair_base(base);
            write_file_plain(base + ".hdr",
                             build_header(dims, spacing, datatype, format));
            write_file_plain(base + ".img", payload);
            return;
        }
        case VolumeFormat::raw: {
            write_file_plain(path, payload);
            json j;
            j["dims"] = dims;
            j["spacing_mm"] = spacing;
            j["dtype"] = dtype_name(datatype);
            if (sidecar_labels.has_value()) {
                json table = json::object();
                for (const auto& [intensity, cls] : sidecar_labels->table)
                    table[std::to_string(intensity)] = cls;
                j["labels"] = std::move(table);
            }
            const std::string text = j.dump(2) + "\n";
            write_file_plain(path + ".json",
                             std::vector<unsigned char>(text.begin(), text.end()));
            return;
        }
    }
    throw InvalidConfig("unknown volume format");
}

}  // namespace

int64_t LabelMapping::num_classes() const {
    int64_t max_class = -1;
    for (const auto& [intensity, cls] : table)
        max_class = std::max<int64_t>(max_class, cls);
    return max_class + 1;
}

const LabelMapping& default_label_mapping() {
    static const LabelMapping m{
        {{0, 0}, {10, 1}, {150, 2}, {250, 3}}, default_class_names()};
    return m;
}

VolumeFormat detect_format(const std::string& path) {
    if (ends_with(path, ".nii.gz")) return VolumeFormat::nifti_gz;
    if (ends_with(path, ".nii")) return VolumeFormat::nifti;
    if (ends_with(path, ".hdr") || ends_with(path, ".img"))
        return VolumeFormat::analyze;
    if (ends_with(path, ".raw")) return VolumeFormat::raw;
    throw UnreadableFormat("unrecognized volume extension: " + path);
}

MultiModalVolume load_volume(const std::string& path) {
    const RawVolume rv = load_any(path);
    MultiModalVolume vol;
    vol.data = Tensor({1, rv.dims[0], rv.dims[1], rv.dims[2]});
    std::copy(rv.values.begin(), rv.values.end(), vol.data.data());
    vol.spacing_mm = rv.spacing_mm;
    vol.subject_id = strip_extensions(path);
    return vol;
}

LabelMap load_labelmap(const std::string& path,
                       const std::optional<LabelMapping>& mapping) {
    const RawVolume rv = load_any(path);
    const LabelMapping& m = mapping.has_value()     ? *mapping
                            : rv.sidecar_mapping    ? *rv.sidecar_mapping
                                                    : default_label_mapping();
    LabelMap lm;
    lm.dims = rv.dims;
    lm.spacing_mm = rv.spacing_mm;
    lm.class_names = m.class_names;
    lm.labels.resize(rv.values.size());
    for (size_t i = 0; i < rv.values.size(); ++i) {
        const double v = rv.values[i];
        if (!std::isfinite(v))
            throw UnmappedLabelValue(path + ": non-finite label voxel");
        const int64_t intensity = std::llround(v);
        const auto it = m.table.find(intensity);
        if (it == m.table.end())
            throw UnmappedLabelValue(path + ": label intensity " +
                                     std::to_string(intensity) +
                                     " is not in the mapping");
        lm.labels[i] = it->second;
    }
    return lm;
}

void save_volume(const MultiModalVolume& vol, int64_t modality_index,
                 const std::string& path, VolumeFormat format) {
    if (vol.data.rank() != 4)
        throw BadInputShape("save_volume expects [M,D,H,W], got " +
                            shape_str(vol.data.shape));
    if (modality_index < 0 || modality_index >= vol.modalities())
        throw BadInputShape("modality index " + std::to_string(modality_index) +
                            " out of range for " +
                            std::to_string(vol.modalities()) + " modalities");
    const auto dims = vol.dims();
    const int64_t n = dims[0] * dims[1] * dims[2];
    std::vector<double> values(
        vol.data.data() + modality_index * n,
        vol.data.data() + (modality_index + 1) * n);
    save_any(dims, vol.spacing_mm, values, kDtypeF32, path, format,
             std::nullopt);
}

void save_labelmap(const LabelMap& lm, const std::string& path,
                   VolumeFormat format,
                   const std::optional<LabelMapping>& mapping) {
    if (lm.numel() <= 0 ||
        lm.labels.size() != static_cast<size_t>(lm.numel()))
        throw BadInputShape("label map voxel count disagrees with its dims");

    std::vector<double> values(lm.labels.size());
    LabelMapping sidecar;
    sidecar.class_names = lm.class_names;
    int64_t max_intensity = 0;
    if (mapping.has_value()) {
        std::map<uint8_t, int64_t> inverse;
        for (const auto& [intensity, cls] : mapping->table)
            inverse.emplace(cls, intensity);
        for (size_t i = 0; i < lm.labels.size(); ++i) {
            const auto it = inverse.find(lm.labels[i]);
            if (it == inverse.end())
                throw UnmappedLabelValue(
                    "class " + std::to_string(lm.labels[i]) +
                    " has no intensity in the label mapping");
            values[i] = static_cast<double>(it->second);
            max_intensity = std::max(max_intensity, it->second);
            if (it->second < 0)
                throw UnmappedLabelValue("negative label intensities are not writable");
        }
        sidecar.table = mapping->table;
    } else {
        uint8_t max_class = 0;
        for (size_t i = 0; i < lm.labels.size(); ++i) {
            values[i] = static_cast<double>(lm.labels[i]);
            max_class = std::max(max_class, lm.labels[i]);
        }
        max_intensity = max_class;
        for (int64_t c = 0; c <= max_class; ++c)
            sidecar.table[c] = static_cast<uint8_t>(c);
    }
    if (max_intensity > std::numeric_limits<int16_t>::max())
        throw UnmappedLabelValue("label intensity " +
                                 std::to_string(max_intensity) +
                                 " does not fit a 16-bit voxel");
    const int16_t datatype = max_intensity <= 255 ? kDtypeU8 : kDtypeI16;
    save_any(lm.dims, lm.spacing_mm, values, datatype, path, format, sidecar);
}

}  // namespace hdan
