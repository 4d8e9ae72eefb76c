#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "hdan/assessment.hpp"
#include "hdan/errors.hpp"
#include "hdan/rng.hpp"

using namespace hdan;

namespace {

LabelMap uniform_labels(std::array<int64_t, 3> dims,
                        const std::array<int64_t, 4>& counts,
                        std::array<double, 3> spacing) {
    LabelMap lm;
    lm.dims = dims;
    lm.spacing_mm = spacing;
    lm.class_names = default_class_names();
    REQUIRE(counts[0] + counts[1] + counts[2] + counts[3] == lm.numel());
    for (int cls = 0; cls < 4; ++cls)
        lm.labels.insert(lm.labels.end(), static_cast<size_t>(counts[static_cast<size_t>(cls)]),
                         static_cast<uint8_t>(cls));
    return lm;
}

SubjectVolumes subject(Group g, double wm, double gm, double csf = 5.0) {
    SubjectVolumes s;
    s.group = g;
    s.wm_mm3 = wm;
    s.gm_mm3 = gm;
    s.csf_mm3 = csf;
    s.brain_mm3 = wm + gm;
    s.ratio_defined = s.brain_mm3 > 0.0;
    s.wm_ratio = s.ratio_defined ? wm / s.brain_mm3 : 0.0;
    return s;
}

double t_density(double x, double df) {
    const double c = std::lgamma((df + 1.0) / 2.0) - std::lgamma(df / 2.0) -
                     0.5 * std::log(df * std::numbers::pi);
    return std::exp(c - (df + 1.0) / 2.0 * std::log1p(x * x / df));
}

// Simpson integration of the t density, an independent route to the CDF.
double simpson_two_sided_p(double t, double df) {
    const double b = std::fabs(t);
    const int n = 40000;
    const double h = b / n;
    double sum = t_density(0.0, df) + t_density(b, df);
    for (int i = 1; i < n; ++i)
        sum += t_density(h * static_cast<double>(i), df) * (i % 2 != 0 ? 4.0 : 2.0);
    return 1.0 - 2.0 * (sum * h / 3.0);
}

std::pair<double, double> moments(const std::vector<double>& xs) {
    double sum = 0.0;
    for (double x : xs) sum += x;
    const double mean = sum / static_cast<double>(xs.size());
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    return {mean, ss / static_cast<double>(xs.size() - 1)};
}

}  // namespace

TEST_CASE("tissue volumes scale voxel counts by the voxel volume") {
    LabelMap lm = uniform_labels({1, 2, 10}, {5, 2, 3, 10}, {1.0, 1.0, 1.0});
    SubjectVolumes s = tissue_volumes(lm);
    CHECK(s.wm_mm3 == 10.0);
    CHECK(s.gm_mm3 == 3.0);
    CHECK(s.csf_mm3 == 2.0);
    CHECK(s.brain_mm3 == 13.0);
    CHECK(s.ratio_defined);

    lm.spacing_mm = {2.0, 2.0, 2.0};
    SubjectVolumes coarse = tissue_volumes(lm);
    CHECK(coarse.wm_mm3 == 80.0);
    CHECK(coarse.brain_mm3 == 104.0);
    CHECK(coarse.wm_ratio == s.wm_ratio);
}

TEST_CASE("volumes are additive over all classes including background") {
    LabelMap lm =
        uniform_labels({4, 5, 5}, {37, 20, 23, 20}, {0.7, 1.1, 1.3});
    const SubjectVolumes s = tissue_volumes(lm);
    const double voxel = 0.7 * 1.1 * 1.3;
    const double bg = 37.0 * voxel;
    CHECK(std::fabs(bg + s.csf_mm3 + s.gm_mm3 + s.wm_mm3 -
                    100.0 * voxel) <= 1e-9);
}

TEST_CASE("table five voxel counts reproduce the published brain volume") {
    const int64_t wm = 649152, gm = 695123, csf = 474353;
    const int64_t total = 128 * 128 * 128;
    LabelMap lm = uniform_labels({128, 128, 128},
                                 {total - wm - gm - csf, csf, gm, wm},
                                 {1.0, 1.0, 1.0});
    const SubjectVolumes s = tissue_volumes(lm);
    CHECK(s.wm_mm3 == 649152.0);
    CHECK(s.gm_mm3 == 695123.0);
    CHECK(s.csf_mm3 == 474353.0);
    CHECK(s.brain_mm3 == 1344275.0);
}

TEST_CASE("a subject without brain voxels has no defined ratio") {
    LabelMap lm = uniform_labels({1, 1, 8}, {6, 2, 0, 0}, {1.0, 1.0, 1.0});
    const SubjectVolumes s = tissue_volumes(lm);
    CHECK(s.brain_mm3 == 0.0);
    CHECK(!s.ratio_defined);
}

TEST_CASE("group ratio is the mean of subject ratios, not the ratio of means") {
    std::vector<SubjectVolumes> cohort{
        subject(Group::preterm, 1.0, 3.0), subject(Group::preterm, 1.0, 1.0),
        subject(Group::term, 2.0, 3.0), subject(Group::term, 4.0, 3.0)};
    const CohortSummary summary = cohort_compare(cohort);
    CHECK(summary.preterm_mean[4] == 0.375);
    const double ratio_of_means =
        summary.preterm_mean[0] / summary.preterm_mean[3];
    CHECK(std::fabs(ratio_of_means - 1.0 / 3.0) <= 1e-12);
    CHECK(summary.preterm_mean[4] != ratio_of_means);

    std::vector<SubjectVolumes> symmetric{
        subject(Group::preterm, 1.0, 3.0), subject(Group::preterm, 3.0, 1.0),
        subject(Group::term, 2.0, 3.0), subject(Group::term, 4.0, 3.0)};
    CHECK(cohort_compare(symmetric).preterm_mean[4] == 0.5);
}

TEST_CASE("identical groups give unit p-values and zero t statistics") {
    std::vector<SubjectVolumes> cohort{
        subject(Group::preterm, 10.0, 20.0, 5.0),
        subject(Group::preterm, 12.0, 22.0, 6.0),
        subject(Group::term, 10.0, 20.0, 5.0),
        subject(Group::term, 12.0, 22.0, 6.0)};
    const CohortSummary summary = cohort_compare(cohort);
    for (size_t m = 0; m < 5; ++m) {
        CHECK(summary.p_values[m] == 1.0);
        CHECK(summary.t_stats[m] == 0.0);
    }

    std::vector<SubjectVolumes> constant{
        subject(Group::preterm, 7.0, 7.0), subject(Group::preterm, 7.0, 7.0),
        subject(Group::term, 7.0, 7.0), subject(Group::term, 7.0, 7.0)};
    const CohortSummary degenerate = cohort_compare(constant);
    for (size_t m = 0; m < 5; ++m) CHECK(degenerate.p_values[m] == 1.0);
}

TEST_CASE("well-separated groups are overwhelmingly significant") {
    std::vector<SubjectVolumes> cohort;
    for (int i = 0; i < 10; ++i) {
        const double jitter = 0.1 * (static_cast<double>(i) / 9.0 - 0.5);
        cohort.push_back(subject(Group::preterm, 10.0 + jitter,
                                 10.0 + 2.0 * jitter, 3.0 + jitter));
        cohort.push_back(subject(Group::term, 20.0 + jitter,
                                 20.0 + 2.0 * jitter, 6.0 + jitter));
    }
    const CohortSummary summary = cohort_compare(cohort);
    for (size_t m = 0; m < 4; ++m) CHECK(summary.p_values[m] < 1e-6);
    CHECK(summary.p_values[4] > 0.05);  // both groups centred on ratio 0.5
}

TEST_CASE("welch p-values match numerical integration of the t density") {
    Rng rng(907);
    int checked = 0;
    for (int trial = 0; trial < 10; ++trial) {
        const size_t n_a = 4 + static_cast<size_t>(rng.uniform_int(5));
        const size_t n_b = 4 + static_cast<size_t>(rng.uniform_int(5));
        std::vector<double> a, b;
        for (size_t i = 0; i < n_a; ++i) a.push_back(rng.uniform(9.0, 11.0));
        for (size_t i = 0; i < n_b; ++i)
            b.push_back(rng.uniform(9.5, 11.5));

        const auto [mean_a, var_a] = moments(a);
        const auto [mean_b, var_b] = moments(b);
        double t = 0.0;
        const double p =
            welch_p_value(mean_a, var_a, static_cast<int64_t>(n_a), mean_b,
                          var_b, static_cast<int64_t>(n_b), &t);

        const double sa = var_a / static_cast<double>(n_a);
        const double sb = var_b / static_cast<double>(n_b);
        const double df =
            (sa + sb) * (sa + sb) /
            (sa * sa / static_cast<double>(n_a - 1) +
             sb * sb / static_cast<double>(n_b - 1));
        CHECK(std::fabs(p - simpson_two_sided_p(t, df)) <= 1e-9);
        ++checked;
    }
    CHECK(checked == 10);
}

TEST_CASE("swapping group labels negates t and preserves p") {
    Rng rng(908);
    std::vector<SubjectVolumes> cohort;
    for (int i = 0; i < 6; ++i) {
        cohort.push_back(subject(Group::preterm, rng.uniform(8.0, 12.0),
                                 rng.uniform(15.0, 25.0), rng.uniform(2.0, 4.0)));
        cohort.push_back(subject(Group::term, rng.uniform(10.0, 14.0),
                                 rng.uniform(18.0, 28.0), rng.uniform(2.0, 4.0)));
    }
    const CohortSummary forward = cohort_compare(cohort);
    for (auto& s : cohort)
        s.group = s.group == Group::preterm ? Group::term : Group::preterm;
    const CohortSummary swapped = cohort_compare(cohort);
    for (size_t m = 0; m < 5; ++m) {
        CHECK(swapped.t_stats[m] == -forward.t_stats[m]);
        CHECK(swapped.p_values[m] == forward.p_values[m]);
    }
}

TEST_CASE("undefined ratios are excluded from the ratio mean only") {
    std::vector<SubjectVolumes> cohort{
        subject(Group::preterm, 1.0, 1.0), subject(Group::preterm, 1.0, 3.0),
        subject(Group::preterm, 0.0, 0.0, 9.0), subject(Group::term, 2.0, 2.0),
        subject(Group::term, 2.0, 6.0)};
    const CohortSummary summary = cohort_compare(cohort);
    CHECK(summary.undefined_ratios == 1);
    CHECK(summary.n_preterm == 3);
    CHECK(summary.preterm_mean[4] == 0.375);       // over the two defined
    CHECK(summary.preterm_mean[0] ==
          doctest::Approx(2.0 / 3.0).epsilon(1e-12));  // over all three
}

TEST_CASE("cohorts below two subjects per group are rejected") {
    std::vector<SubjectVolumes> one_sided{subject(Group::preterm, 1.0, 1.0),
                                          subject(Group::preterm, 2.0, 2.0)};
    CHECK_THROWS_AS(cohort_compare(one_sided), GroupTooSmall);

    std::vector<SubjectVolumes> lone{
        subject(Group::preterm, 1.0, 1.0), subject(Group::preterm, 2.0, 2.0),
        subject(Group::term, 1.0, 1.0)};
    CHECK_THROWS_AS(cohort_compare(lone), GroupTooSmall);

    std::vector<SubjectVolumes> ratios_gone{
        subject(Group::preterm, 1.0, 1.0), subject(Group::preterm, 0.0, 0.0, 1.0),
        subject(Group::term, 1.0, 1.0), subject(Group::term, 2.0, 2.0)};
    CHECK_THROWS_AS(cohort_compare(ratios_gone), GroupTooSmall);

    CHECK_THROWS_AS(welch_p_value(1.0, 1.0, 1, 2.0, 1.0, 5), GroupTooSmall);
}

TEST_CASE("the rendered table reproduces the published digits") {
    CohortSummary summary;
    summary.preterm_mean = {649152.0, 695123.0, 474353.0, 1344275.0, 0.4815};
    summary.term_mean = {672657.0, 742677.0, 425307.0, 1415334.0, 0.4742};
    summary.p_values = {0.031, 0.004, 0.02, 0.045, 0.2};
    summary.n_preterm = 18;
    summary.n_term = 27;

    const std::string table = render_table(summary);
    CHECK(table.find("Preterm") != std::string::npos);
    CHECK(table.find("649,152") != std::string::npos);
    CHECK(table.find("695,123") != std::string::npos);
    CHECK(table.find("474,353") != std::string::npos);
    CHECK(table.find("1,344,275") != std::string::npos);
    CHECK(table.find("48.15%") != std::string::npos);
    CHECK(table.find("672,657") != std::string::npos);
    CHECK(table.find("1,415,334") != std::string::npos);
    CHECK(table.find("47.42%") != std::string::npos);
    CHECK(table.find("< 0.05") != std::string::npos);
    CHECK(table.find("< 0.01") != std::string::npos);
    CHECK(table.find("> 0.05") != std::string::npos);
    CHECK(table.find("0.004") != std::string::npos);
    CHECK(table.find("N: preterm=18 term=27") != std::string::npos);

    summary.p_values[1] = 0.003;
    const std::string relabeled = render_table(summary);
    CHECK(relabeled.find("< 0.01") != std::string::npos);
    CHECK(relabeled.find("0.003") != std::string::npos);
}

TEST_CASE("group names parse both ways") {
    CHECK(parse_group("preterm") == Group::preterm);
    CHECK(parse_group("term") == Group::term);
    CHECK(group_name(Group::term) == "term");
    CHECK_THROWS_AS(parse_group("adult"), UsageError);
}
