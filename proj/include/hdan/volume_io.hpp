#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hdan/volume.hpp"

namespace hdan {

enum class VolumeFormat { nifti, nifti_gz, analyze, raw };

// On-disk label intensity -> class index table.
struct LabelMapping {
    std::map<int64_t, uint8_t> table;
    std::vector<std::string> class_names;

    int64_t num_classes() const;
};

// {0:BG, 10:CSF, 150:GM, 250:WM}, a common infant-MRI label intensity convention.
const LabelMapping& default_label_mapping();

// Chooses by extension: .nii, .nii.gz, .hdr/.img, .raw (+ .raw.json sidecar).
VolumeFormat detect_format(const std::string& path);

// Reads one scalar volume as a single-modality [1,D,H,W] tensor with spacing
// taken from the header. Pair T1/T2 files with pair_modalities afterwards.
MultiModalVolume load_volume(const std::string& path);

// Reads a label volume and maps voxel intensities to class indices. Mapping
// precedence: explicit argument, then the raw sidecar's table, then default.
LabelMap load_labelmap(
    const std::string& path,
    const std::optional<LabelMapping>& mapping = std::nullopt);

// Writes one modality as 32-bit float voxels.
void save_volume(const MultiModalVolume& vol, int64_t modality_index,
                 const std::string& path, VolumeFormat format);

// Without a mapping writes class indices; with one writes the mapped
// intensities (8-bit when they fit, otherwise 16-bit).
void save_labelmap(const LabelMap& lm, const std::string& path,
                   VolumeFormat format,
                   const std::optional<LabelMapping>& mapping = std::nullopt);

}  // namespace hdan
