#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "hdan/volume.hpp"

namespace hdan {

enum class Group { preterm, term };

Group parse_group(const std::string& name);  // "preterm" | "term"
std::string group_name(Group g);

// Per-subject tissue volumes in cubic millimetres. Brain volume is WM plus
// GM, excluding CSF, and the WM ratio divides by it; a subject without brain
// voxels has no defined ratio.
struct SubjectVolumes {
    std::string subject_id;
    Group group = Group::preterm;
    double wm_mm3 = 0.0;
    double gm_mm3 = 0.0;
    double csf_mm3 = 0.0;
    double brain_mm3 = 0.0;
    double wm_ratio = 0.0;
    bool ratio_defined = false;
};

// Measure order used by every per-measure array below.
inline constexpr std::array<const char*, 5> kMeasureNames{
    "WM", "GM", "CSF", "Brain volume", "WM ratio"};

struct CohortSummary {
    std::array<double, 5> preterm_mean{};
    std::array<double, 5> term_mean{};
    std::array<double, 5> t_stats{};
    std::array<double, 5> p_values{};
    int64_t n_preterm = 0;
    int64_t n_term = 0;
    // Subjects dropped from the ratio column because brain_mm3 was zero;
    // they still count toward the volume measures.
    int64_t undefined_ratios = 0;
};

// Voxel counts scaled by the voxel volume. Classes follow BG/CSF/GM/WM
// order; other indices contribute nothing.
SubjectVolumes tissue_volumes(const LabelMap& lm);

// Group means plus Welch's unequal-variance two-sided t-test per measure.
// The group mean WM ratio averages the individual subject ratios, never the
// ratio of the group means.
CohortSummary cohort_compare(const std::vector<SubjectVolumes>& subjects);

// Two-sided p-value for Welch's t-test given per-group sample moments.
double welch_p_value(double mean_a, double var_a, int64_t n_a, double mean_b,
                     double var_b, int64_t n_b, double* t_out = nullptr);

// Fixed-width text table: one row per group with thousands-separated
// volumes and percent ratios, a thresholded p-value row, and the raw
// p-values alongside.
std::string render_table(const CohortSummary& summary);

}  // namespace hdan
