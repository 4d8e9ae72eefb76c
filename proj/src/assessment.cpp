#include "hdan/assessment.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

#include "hdan/errors.hpp"

namespace hdan {

namespace {

double log_beta(double a, double b) {
    return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
}

// Modified Lentz evaluation of the incomplete beta continued fraction.
double beta_cf(double a, double b, double x) {
    constexpr double eps = 1e-15, tiny = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 300; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::fabs(delta - 1.0) < eps) break;
    }
    return h;
}

double reg_inc_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double bt =
        std::exp(a * std::log(x) + b * std::log1p(-x) - log_beta(a, b));
    if (x < (a + 1.0) / (a + b + 2.0)) return bt * beta_cf(a, b, x) / a;
    return 1.0 - bt * beta_cf(b, a, 1.0 - x) / b;
}

std::pair<double, double> mean_and_var(const std::vector<double>& xs) {
    const double n = static_cast<double>(xs.size());
    double sum = 0.0;
    for (double x : xs) sum += x;
    const double mean = sum / n;
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    return {mean, ss / (n - 1.0)};
}

std::string thousands(double v) {
    const long long n = std::llround(v);
    std::string digits = std::to_string(n < 0 ? -n : n);
    std::string out;
    out.reserve(digits.size() + digits.size() / 3 + 1);
    if (n < 0) out.push_back('-');
    const size_t lead = digits.size() % 3 == 0 ? 3 : digits.size() % 3;
    for (size_t i = 0; i < digits.size(); ++i) {
        if (i != 0 && i >= lead && (i - lead) % 3 == 0) out.push_back(',');
        out.push_back(digits[i]);
    }
    return out;
}

std::string percent(double ratio) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f%%", ratio * 100.0);
    return buf;
}

std::string p_threshold(double p) {
    if (p < 0.01) return "< 0.01";
    if (p < 0.05) return "< 0.05";
    return "> 0.05";
}

std::string p_raw(double p) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", p);
    return buf;
}

void append_row(std::string& out, const std::string& head,
                const std::array<std::string, 5>& cells) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%-10s", head.c_str());
    out += buf;
    for (const auto& cell : cells) {
        std::snprintf(buf, sizeof buf, "  %12s", cell.c_str());
        out += buf;
    }
    out += '\n';
}

}  // namespace

Group parse_group(const std::string& name) {
    if (name == "preterm") return Group::preterm;
    if (name == "term") return Group::term;
    throw UsageError("unknown group \"" + name + "\", expected preterm or term");
}

std::string group_name(Group g) {
    return g == Group::preterm ? "preterm" : "term";
}

SubjectVolumes tissue_volumes(const LabelMap& lm) {
    const double voxel_mm3 =
        lm.spacing_mm[0] * lm.spacing_mm[1] * lm.spacing_mm[2];
    std::array<int64_t, 4> counts{0, 0, 0, 0};
    for (uint8_t v : lm.labels)
        if (v < 4) ++counts[v];

    SubjectVolumes s;
    s.csf_mm3 = static_cast<double>(counts[1]) * voxel_mm3;
    s.gm_mm3 = static_cast<double>(counts[2]) * voxel_mm3;
    s.wm_mm3 = static_cast<double>(counts[3]) * voxel_mm3;
    s.brain_mm3 = s.wm_mm3 + s.gm_mm3;
    s.ratio_defined = s.brain_mm3 > 0.0;
    s.wm_ratio = s.ratio_defined ? s.wm_mm3 / s.brain_mm3 : 0.0;
    return s;
}

double welch_p_value(double mean_a, double var_a, int64_t n_a, double mean_b,
                     double var_b, int64_t n_b, double* t_out) {
    if (n_a < 2 || n_b < 2)
        throw GroupTooSmall("Welch's test needs two subjects per group, got " +
                            std::to_string(n_a) + " and " + std::to_string(n_b));
    const double sa = var_a / static_cast<double>(n_a);
    const double sb = var_b / static_cast<double>(n_b);
    const double se2 = sa + sb;
    const double diff = mean_a - mean_b;
    if (se2 <= 0.0) {
        // Degenerate samples: identical constants per group.
        if (t_out)
            *t_out = diff == 0.0 ? 0.0
                     : diff > 0.0 ? std::numeric_limits<double>::infinity()
                                  : -std::numeric_limits<double>::infinity();
        return diff == 0.0 ? 1.0 : 0.0;
    }
    const double t = diff / std::sqrt(se2);
    if (t_out) *t_out = t;
    const double df =
        se2 * se2 / (sa * sa / static_cast<double>(n_a - 1) +
                     sb * sb / static_cast<double>(n_b - 1));
    return reg_inc_beta(df / 2.0, 0.5, df / (df + t * t));
}

CohortSummary cohort_compare(const std::vector<SubjectVolumes>& subjects) {
    std::array<std::array<std::vector<double>, 5>, 2> values;
    CohortSummary out;
    for (const SubjectVolumes& s : subjects) {
        auto& group = values[s.group == Group::preterm ? 0 : 1];
        group[0].push_back(s.wm_mm3);
        group[1].push_back(s.gm_mm3);
        group[2].push_back(s.csf_mm3);
        group[3].push_back(s.brain_mm3);
        if (s.ratio_defined)
            group[4].push_back(s.wm_ratio);
        else
            ++out.undefined_ratios;
    }
    out.n_preterm = static_cast<int64_t>(values[0][0].size());
    out.n_term = static_cast<int64_t>(values[1][0].size());
    if (out.n_preterm < 2 || out.n_term < 2)
        throw GroupTooSmall("cohort comparison needs two subjects per group, got " +
                            std::to_string(out.n_preterm) + " preterm and " +
                            std::to_string(out.n_term) + " term");
    if (values[0][4].size() < 2 || values[1][4].size() < 2)
        throw GroupTooSmall("fewer than two subjects per group have a defined WM ratio");

    for (size_t m = 0; m < 5; ++m) {
        const auto [mean_p, var_p] = mean_and_var(values[0][m]);
        const auto [mean_t, var_t] = mean_and_var(values[1][m]);
        out.preterm_mean[m] = mean_p;
        out.term_mean[m] = mean_t;
        out.p_values[m] = welch_p_value(
            mean_p, var_p, static_cast<int64_t>(values[0][m].size()), mean_t,
            var_t, static_cast<int64_t>(values[1][m].size()), &out.t_stats[m]);
    }
    return out;
}

std::string render_table(const CohortSummary& summary) {
    std::string out;
    append_row(out, "Group",
               {kMeasureNames[0], kMeasureNames[1], kMeasureNames[2],
                kMeasureNames[3], kMeasureNames[4]});
    for (int g = 0; g < 2; ++g) {
        const auto& mean = g == 0 ? summary.preterm_mean : summary.term_mean;
        append_row(out, g == 0 ? "Preterm" : "Term",
                   {thousands(mean[0]), thousands(mean[1]), thousands(mean[2]),
                    thousands(mean[3]), percent(mean[4])});
    }
    std::array<std::string, 5> thresholds, raw;
    for (size_t m = 0; m < 5; ++m) {
        thresholds[m] = p_threshold(summary.p_values[m]);
        raw[m] = p_raw(summary.p_values[m]);
    }
    append_row(out, "p-value", thresholds);
    append_row(out, "p-raw", raw);

    char tail[128];
    std::snprintf(tail, sizeof tail, "N: preterm=%lld term=%lld",
                  static_cast<long long>(summary.n_preterm),
                  static_cast<long long>(summary.n_term));
    out += tail;
    if (summary.undefined_ratios > 0) {
        std::snprintf(tail, sizeof tail,
                      " (WM ratio undefined for %lld subject%s, excluded)",
                      static_cast<long long>(summary.undefined_ratios),
                      summary.undefined_ratios == 1 ? "" : "s");
        out += tail;
    }
    out += '\n';
    return out;
}

}  // namespace hdan
