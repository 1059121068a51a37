#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace pcad::metrics {

inline const std::vector<double> kDefaultLimits = {0.3, 0.2, 0.1, 0.07, 0.05, 0.03, 0.01};

// Probability that a random positive outranks a random negative, ties
// counting one half; computed exactly from average ranks (Mann-Whitney).
inline double auroc(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels) {
    if (scores.size() != labels.size()) throw std::invalid_argument("score/label size mismatch");
    std::size_t n_pos = 0, n_neg = 0;
    for (auto l : labels) (l ? n_pos : n_neg) += 1;
    if (n_pos == 0 || n_neg == 0) throw std::runtime_error("undefined AUROC: single class");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return scores[a] != scores[b] ? scores[a] < scores[b] : a < b;
    });
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
        double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (std::size_t k = i; k < j; ++k)
            if (labels[order[k]]) rank_sum_pos += avg_rank;
        i = j;
    }
    double u = rank_sum_pos -
               static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0) / 2.0;
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

// (fpr, tpr) pairs from a descending threshold sweep, anchored at (0,0) and
// (1,1); both coordinates are non-decreasing along the curve.
struct RocCurve {
    std::vector<std::pair<double, double>> points;
};

inline RocCurve roc_curve(const std::vector<double>& scores,
                          const std::vector<std::uint8_t>& labels) {
    if (scores.size() != labels.size()) throw std::invalid_argument("score/label size mismatch");
    std::size_t n_pos = 0, n_neg = 0;
    for (auto l : labels) (l ? n_pos : n_neg) += 1;
    if (n_pos == 0 || n_neg == 0) throw std::runtime_error("undefined ROC: single class");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return scores[a] != scores[b] ? scores[a] > scores[b] : a < b;
    });
    RocCurve curve;
    curve.points.emplace_back(0.0, 0.0);
    std::size_t tp = 0, fp = 0, i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
        for (std::size_t k = i; k < j; ++k) (labels[order[k]] ? tp : fp) += 1;
        curve.points.emplace_back(static_cast<double>(fp) / static_cast<double>(n_neg),
                                  static_cast<double>(tp) / static_cast<double>(n_pos));
        i = j;
    }
    return curve;
}

// (fpr, mean per-region overlap) pairs from a descending threshold sweep.
struct ProCurve {
    std::vector<std::pair<double, double>> points;
};

// regions must partition the label-1 points (see geometry::radius_components).
inline ProCurve pro_curve(const std::vector<double>& scores,
                          const std::vector<std::uint8_t>& labels,
                          const std::vector<std::vector<int>>& regions) {
    if (scores.size() != labels.size()) throw std::invalid_argument("score/label size mismatch");
    if (regions.empty()) throw std::runtime_error("pro_curve needs at least one region");
    std::size_t n_pos = 0, n_neg = 0;
    for (auto l : labels) (l ? n_pos : n_neg) += 1;
    if (n_pos == 0 || n_neg == 0) throw std::runtime_error("undefined PRO: single class");

    std::vector<int> region_of(scores.size(), -1);
    std::size_t covered = 0;
    for (std::size_t r = 0; r < regions.size(); ++r) {
        if (regions[r].empty()) throw std::invalid_argument("empty region");
        for (int idx : regions[r]) {
            auto u = static_cast<std::size_t>(idx);
            if (u >= scores.size() || !labels[u] || region_of[u] != -1)
                throw std::invalid_argument("regions must partition the label-1 points");
            region_of[u] = static_cast<int>(r);
            ++covered;
        }
    }
    if (covered != n_pos)
        throw std::invalid_argument("regions must partition the label-1 points");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return scores[a] != scores[b] ? scores[a] > scores[b] : a < b;
    });

    std::vector<std::size_t> region_hits(regions.size(), 0);
    ProCurve curve;
    curve.points.emplace_back(0.0, 0.0);
    std::size_t fp = 0, i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
        for (std::size_t k = i; k < j; ++k) {
            std::size_t idx = order[k];
            if (labels[idx])
                ++region_hits[static_cast<std::size_t>(region_of[idx])];
            else
                ++fp;
        }
        double pro = 0.0;
        for (std::size_t r = 0; r < regions.size(); ++r)
            pro += static_cast<double>(region_hits[r]) / static_cast<double>(regions[r].size());
        pro /= static_cast<double>(regions.size());
        curve.points.emplace_back(static_cast<double>(fp) / static_cast<double>(n_neg), pro);
        i = j;
    }
    return curve;
}

// Normalized trapezoidal integral of PRO over FPR in [0, limit]; the curve is
// interpolated linearly at the limit boundary.
inline double aupro_at(const ProCurve& curve, double limit) {
    if (!(limit > 0.0) || limit > 1.0) throw std::invalid_argument("limit must be in (0, 1]");
    if (curve.points.empty()) throw std::invalid_argument("empty curve");
    double area = 0.0;
    for (std::size_t i = 1; i < curve.points.size(); ++i) {
        auto [x0, y0] = curve.points[i - 1];
        auto [x1, y1] = curve.points[i];
        if (x0 >= limit) break;
        if (x1 <= x0) continue;  // vertical jump: zero width
        double hi = std::min(x1, limit);
        double y_hi = y0 + (y1 - y0) * (hi - x0) / (x1 - x0);
        area += (hi - x0) * (y0 + y_hi) / 2.0;
    }
    return area / limit;
}

// ---------------------------------------------------------------------------
// Whole-test-set evaluation
// ---------------------------------------------------------------------------

struct SampleEval {
    std::string id;
    std::vector<double> point_scores;
    std::vector<std::uint8_t> point_labels;
    double object_score = 0.0;
    std::uint8_t object_label = 0;
    std::vector<std::vector<int>> regions;  // empty for defect-free samples
};

struct EvalReport {
    std::string category = "default";
    std::size_t sample_count = 0;
    std::optional<double> o_auroc;
    std::optional<double> p_auroc;
    std::vector<double> limits = kDefaultLimits;
    std::map<double, double, std::greater<>> aupro;  // limit -> mean over samples
    std::vector<std::string> errors;

    bool ok() const { return errors.empty(); }
};

// P-AUROC pools every point of every sample; O-AUROC ranks object scores;
// AUPRO is computed per defect sample from its ground-truth regions and then
// averaged, per limit.
inline EvalReport evaluate_all(const std::vector<SampleEval>& samples,
                               const std::vector<double>& limits = kDefaultLimits) {
    EvalReport report;
    report.limits = limits;
    report.sample_count = samples.size();
    if (samples.empty()) {
        report.errors.push_back("no samples");
        return report;
    }

    std::vector<double> object_scores;
    std::vector<std::uint8_t> object_labels;
    std::vector<double> pooled_scores;
    std::vector<std::uint8_t> pooled_labels;
    for (const auto& s : samples) {
        object_scores.push_back(s.object_score);
        object_labels.push_back(s.object_label);
        pooled_scores.insert(pooled_scores.end(), s.point_scores.begin(), s.point_scores.end());
        pooled_labels.insert(pooled_labels.end(), s.point_labels.begin(), s.point_labels.end());
    }
    try {
        report.o_auroc = auroc(object_scores, object_labels);
    } catch (const std::exception& e) {
        report.errors.push_back(std::string("o_auroc: ") + e.what());
    }
    try {
        report.p_auroc = auroc(pooled_scores, pooled_labels);
    } catch (const std::exception& e) {
        report.errors.push_back(std::string("p_auroc: ") + e.what());
    }

    std::map<double, std::vector<double>, std::greater<>> per_limit;
    for (const auto& s : samples) {
        if (s.regions.empty()) continue;  // defect-free: no regions to overlap
        try {
            auto curve = pro_curve(s.point_scores, s.point_labels, s.regions);
            for (double limit : limits) per_limit[limit].push_back(aupro_at(curve, limit));
        } catch (const std::exception& e) {
            report.errors.push_back("aupro[" + s.id + "]: " + e.what());
        }
    }
    if (per_limit.empty()) {
        report.errors.push_back("aupro: no sample with ground-truth regions");
    } else {
        for (const auto& [limit, values] : per_limit) {
            double mean = 0.0;
            for (double v : values) mean += v;
            report.aupro[limit] = mean / static_cast<double>(values.size());
        }
    }
    return report;
}

// ---------------------------------------------------------------------------
// Report files: CSV row per category plus a JSON mirror.
// ---------------------------------------------------------------------------

inline std::string aupro_column_name(double limit) {
    int pct = static_cast<int>(std::lround(limit * 100.0));
    std::string s = std::to_string(pct);
    if (s.size() < 2) s = "0" + s;
    return "aupro_" + s;
}

inline std::string report_csv_header(const std::vector<double>& limits = kDefaultLimits) {
    std::string h = "category,sample_count,o_auroc,p_auroc";
    for (double limit : limits) h += "," + aupro_column_name(limit);
    return h;
}

inline std::string report_csv_row(const EvalReport& r) {
    std::ostringstream out;
    out.precision(6);
    out << std::fixed;
    out << r.category << "," << r.sample_count << ",";
    auto cell = [&](const std::optional<double>& v) {
        if (v)
            out << *v;
        else
            out << "error";
    };
    cell(r.o_auroc);
    out << ",";
    cell(r.p_auroc);
    for (double limit : r.limits) {
        out << ",";
        auto it = r.aupro.find(limit);
        if (it != r.aupro.end())
            out << it->second;
        else
            out << "error";
    }
    return out.str();
}

inline nlohmann::json report_to_json(const EvalReport& r) {
    nlohmann::json j;
    j["category"] = r.category;
    j["sample_count"] = r.sample_count;
    if (r.o_auroc) j["o_auroc"] = *r.o_auroc;
    if (r.p_auroc) j["p_auroc"] = *r.p_auroc;
    nlohmann::json aupro = nlohmann::json::object();
    for (const auto& [limit, value] : r.aupro) aupro[aupro_column_name(limit)] = value;
    j["aupro"] = aupro;
    j["limits"] = r.limits;
    if (!r.errors.empty()) j["errors"] = r.errors;
    return j;
}

}  // namespace pcad::metrics
