#include "tenderisk/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

namespace tenderisk {

using nlohmann::json;

OvrConfusion ovr_confusion(std::span<const int> y_true, std::span<const int> y_pred, int klass) {
    if (y_true.size() != y_pred.size())
        throw InvalidInput("ovr_confusion: label vector length mismatch");
    OvrConfusion c;
    for (size_t i = 0; i < y_true.size(); ++i) {
        const bool t = y_true[i] == klass;
        const bool p = y_pred[i] == klass;
        if (t && p) c.tp++;
        else if (!t && p) c.fp++;
        else if (t && !p) c.fn++;
        else c.tn++;
    }
    return c;
}

Prf1 prf1(const OvrConfusion& c) {
    Prf1 out;
    if (c.tp + c.fp == 0) {
        out.precision = 0;
        out.degenerate = true;
    } else {
        out.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
    }
    if (c.tp + c.fn == 0) {
        out.recall = 0;
        out.degenerate = true;
    } else {
        out.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
    }
    if (out.precision + out.recall == 0) {
        out.f1 = 0;
        out.degenerate = true;
    } else {
        out.f1 = 2.0 * out.precision * out.recall / (out.precision + out.recall);
    }
    return out;
}

double weighted_average(std::span<const double> values, std::span<const int64_t> supports) {
    if (values.size() != supports.size())
        throw InvalidInput("weighted_average: size mismatch");
    double num = 0;
    int64_t denom = 0;
    for (size_t i = 0; i < values.size(); ++i) {
        num += values[i] * static_cast<double>(supports[i]);
        denom += supports[i];
    }
    if (denom == 0) throw InvalidInput("weighted_average: zero total support");
    return num / static_cast<double>(denom);
}

std::optional<double> roc_auc(std::span<const double> scores, std::span<const uint8_t> is_positive) {
    if (scores.size() != is_positive.size()) throw InvalidInput("roc_auc: size mismatch");
    const size_t n = scores.size();
    int64_t pos = 0;
    for (auto p : is_positive) pos += p ? 1 : 0;
    const int64_t neg = static_cast<int64_t>(n) - pos;
    if (pos == 0 || neg == 0) return std::nullopt;

    // average ranks with tie correction
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return scores[a] < scores[b]; });

    double rank_sum_pos = 0;
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
        for (size_t k = i; k <= j; ++k)
            if (is_positive[order[k]]) rank_sum_pos += avg_rank;
        i = j + 1;
    }
    const double u = rank_sum_pos - static_cast<double>(pos) * (static_cast<double>(pos) + 1.0) / 2.0;
    return u / (static_cast<double>(pos) * static_cast<double>(neg));
}

double macro_average_present(const std::array<std::optional<double>, kNumClasses>& values) {
    double sum = 0;
    int n = 0;
    for (const auto& v : values) {
        if (v) {
            sum += *v;
            ++n;
        }
    }
    return n ? sum / n : 0.0;
}

MetricReport full_report(std::span<const int> y_true,
                         const std::vector<std::array<double, kNumClasses>>& probabilities) {
    if (y_true.size() != probabilities.size())
        throw InvalidInput("full_report: labels/probabilities size mismatch");
    if (y_true.empty()) throw InvalidInput("full_report: empty input");
    for (const auto& row : probabilities) {
        double total = 0;
        for (double p : row) total += p;
        if (std::abs(total - 1.0) > 1e-6)
            throw InvalidInput("full_report: probability row does not sum to 1");
    }

    const size_t n = y_true.size();
    std::vector<int> y_pred(n);
    for (size_t i = 0; i < n; ++i) {
        const auto& row = probabilities[i];
        y_pred[i] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    }

    MetricReport report;
    int64_t correct = 0;
    for (size_t i = 0; i < n; ++i)
        if (y_true[i] == y_pred[i]) ++correct;
    report.accuracy = static_cast<double>(correct) / static_cast<double>(n);

    std::array<double, kNumClasses> precisions, recalls, f1s;
    for (int k = 0; k < kNumClasses; ++k) {
        const auto ks = static_cast<size_t>(k);
        const auto c = ovr_confusion(y_true, y_pred, k);
        const auto m = prf1(c);
        precisions[ks] = m.precision;
        recalls[ks] = m.recall;
        f1s[ks] = m.f1;
        report.class_precision[ks] = m.precision;
        report.class_recall[ks] = m.recall;
        report.class_f1[ks] = m.f1;
        report.support[ks] = c.tp + c.fn;
        if (m.degenerate) report.degenerate_ratio_flag = true;

        std::vector<double> scores(n);
        std::vector<uint8_t> truth(n);
        for (size_t i = 0; i < n; ++i) {
            scores[i] = probabilities[i][ks];
            truth[i] = y_true[i] == k ? 1 : 0;
        }
        report.class_auc[ks] = roc_auc(scores, truth);
        if (!report.class_auc[ks]) report.absent_class_flag = true;
    }

    report.weighted_precision = weighted_average(precisions, report.support);
    report.weighted_recall = weighted_average(recalls, report.support);
    report.weighted_f1 = weighted_average(f1s, report.support);
    report.macro_auc = macro_average_present(report.class_auc);
    return report;
}

// ============================================================================
// JSON
// ============================================================================

std::string MetricReport::to_json_text() const {
    json j;
    j["accuracy"] = accuracy;
    j["weighted_precision"] = weighted_precision;
    j["weighted_recall"] = weighted_recall;
    j["weighted_f1"] = weighted_f1;
    j["macro_auc"] = macro_auc;
    j["class_auc"] = json::array();
    for (const auto& a : class_auc)
        j["class_auc"].push_back(a ? json(*a) : json(nullptr));
    j["support"] = support;
    j["class_precision"] = class_precision;
    j["class_recall"] = class_recall;
    j["class_f1"] = class_f1;
    j["absent_class_flag"] = absent_class_flag;
    j["degenerate_ratio_flag"] = degenerate_ratio_flag;
    return j.dump();
}

MetricReport MetricReport::from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw InvalidInput(std::string("metric report JSON: ") + e.what());
    }
    MetricReport r;
    r.accuracy = j.at("accuracy").get<double>();
    r.weighted_precision = j.at("weighted_precision").get<double>();
    r.weighted_recall = j.at("weighted_recall").get<double>();
    r.weighted_f1 = j.at("weighted_f1").get<double>();
    r.macro_auc = j.at("macro_auc").get<double>();
    for (int k = 0; k < kNumClasses; ++k) {
        const auto& a = j.at("class_auc").at(static_cast<size_t>(k));
        if (!a.is_null()) r.class_auc[static_cast<size_t>(k)] = a.get<double>();
    }
    r.support = j.at("support").get<std::array<int64_t, kNumClasses>>();
    r.class_precision = j.at("class_precision").get<std::array<double, kNumClasses>>();
    r.class_recall = j.at("class_recall").get<std::array<double, kNumClasses>>();
    r.class_f1 = j.at("class_f1").get<std::array<double, kNumClasses>>();
    r.absent_class_flag = j.at("absent_class_flag").get<bool>();
    r.degenerate_ratio_flag = j.at("degenerate_ratio_flag").get<bool>();
    return r;
}

} // namespace tenderisk
