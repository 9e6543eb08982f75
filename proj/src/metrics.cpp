#include "smile/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>

#include "smile/errors.hpp"

namespace smile {

std::string_view to_string(Averaging averaging)
{
    return averaging == Averaging::macro ? "macro" : "weighted";
}

Averaging parse_averaging(std::string_view text)
{
    if (text == "macro") {
        return Averaging::macro;
    }
    if (text == "weighted") {
        return Averaging::weighted;
    }
    throw ConfigError("unknown averaging '" + std::string(text) + "' (macro|weighted)");
}

double auc(std::span<const double> scores, std::span<const int> labels)
{
    if (scores.size() != labels.size()) {
        throw Error("auc: " + std::to_string(scores.size()) + " scores for " + std::to_string(labels.size())
                    + " labels");
    }
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Sum of (1-based, tie-averaged) ranks of the positives, kept in half units
    // so the result is exact.
    double positive_rank_sum = 0.0;
    std::size_t positives = 0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) {
            ++j;
        }
        const double average_rank = 0.5 * static_cast<double>(i + 1 + j + 1);
        for (std::size_t k = i; k <= j; ++k) {
            if (labels[order[k]] == 1) {
                positive_rank_sum += average_rank;
                ++positives;
            }
        }
        i = j + 1;
    }
    const std::size_t negatives = n - positives;
    if (positives == 0 || negatives == 0) {
        throw Error("auc: both classes must be present");
    }
    const double p = static_cast<double>(positives);
    const double u = positive_rank_sum - p * (p + 1.0) / 2.0;
    return u / (p * static_cast<double>(negatives));
}

std::array<ClassScores, 2> per_class_scores(std::span<const int> predictions, std::span<const int> labels)
{
    if (predictions.size() != labels.size()) {
        throw Error("confusion_metrics: " + std::to_string(predictions.size()) + " predictions for "
                    + std::to_string(labels.size()) + " labels");
    }
    // counts[truth][predicted]
    std::size_t counts[2][2] = {{0, 0}, {0, 0}};
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if ((labels[i] != 0 && labels[i] != 1) || (predictions[i] != 0 && predictions[i] != 1)) {
            throw Error("confusion_metrics: labels and predictions must be 0 or 1");
        }
        ++counts[labels[i]][predictions[i]];
    }
    std::array<ClassScores, 2> out;
    for (int c = 0; c < 2; ++c) {
        const auto tp = static_cast<double>(counts[c][c]);
        const auto predicted = static_cast<double>(counts[0][c] + counts[1][c]);
        const auto actual = static_cast<double>(counts[c][0] + counts[c][1]);
        ClassScores& s = out[c];
        s.support = counts[c][0] + counts[c][1];
        s.precision = predicted > 0.0 ? tp / predicted : 0.0;
        s.recall = actual > 0.0 ? tp / actual : 0.0;
        s.f1 = s.precision + s.recall > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
    }
    return out;
}

MetricsReport confusion_metrics(std::span<const int> predictions, std::span<const int> labels, Averaging averaging)
{
    const auto classes = per_class_scores(predictions, labels);
    MetricsReport r;
    r.n_samples = labels.size();
    r.averaging = averaging;
    if (labels.empty()) {
        return r;
    }
    std::size_t correct = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        correct += predictions[i] == labels[i] ? 1 : 0;
    }
    r.accuracy = static_cast<double>(correct) / static_cast<double>(labels.size());

    for (const ClassScores& s : classes) {
        const double weight = averaging == Averaging::macro
                                  ? 0.5
                                  : static_cast<double>(s.support) / static_cast<double>(labels.size());
        r.precision += weight * s.precision;
        r.recall += weight * s.recall;
        r.f1 += weight * s.f1;
    }
    return r;
}

MetricsReport evaluate_predictions(std::span<const double> probabilities, std::span<const int> labels,
                                   Averaging averaging)
{
    std::vector<int> predictions(probabilities.size());
    for (std::size_t i = 0; i < probabilities.size(); ++i) {
        predictions[i] = probabilities[i] >= kDecisionThreshold ? 1 : 0;
    }
    MetricsReport r = confusion_metrics(predictions, labels, averaging);
    const bool both = std::find(labels.begin(), labels.end(), 0) != labels.end()
                      && std::find(labels.begin(), labels.end(), 1) != labels.end();
    r.auc = both ? auc(probabilities, labels) : 0.5;
    return r;
}

MetricsReport aggregate_cv(std::span<const MetricsReport> reports)
{
    if (reports.empty()) {
        throw Error("aggregate_cv: no reports to aggregate");
    }
    MetricsReport mean;
    mean.averaging = reports.front().averaging;
    for (const MetricsReport& r : reports) {
        if (r.averaging != mean.averaging) {
            throw Error("aggregate_cv: reports use different averaging modes");
        }
        mean.accuracy += r.accuracy;
        mean.auc += r.auc;
        mean.f1 += r.f1;
        mean.recall += r.recall;
        mean.precision += r.precision;
        mean.n_samples += r.n_samples;
    }
    const auto k = static_cast<double>(reports.size());
    mean.accuracy /= k;
    mean.auc /= k;
    mean.f1 /= k;
    mean.recall /= k;
    mean.precision /= k;
    return mean;
}

nlohmann::json to_json(const MetricsReport& r)
{
    return {
        {"accuracy", r.accuracy}, {"auc", r.auc},
        {"f1", r.f1},             {"recall", r.recall},
        {"precision", r.precision}, {"n_samples", r.n_samples},
        {"averaging", to_string(r.averaging)},
    };
}

MetricsReport report_from_json(const nlohmann::json& j)
{
    MetricsReport r;
    r.accuracy = j.at("accuracy").get<double>();
    r.auc = j.at("auc").get<double>();
    r.f1 = j.at("f1").get<double>();
    r.recall = j.at("recall").get<double>();
    r.precision = j.at("precision").get<double>();
    r.n_samples = j.at("n_samples").get<std::size_t>();
    r.averaging = parse_averaging(j.at("averaging").get<std::string>());
    return r;
}

std::string metrics_csv_header()
{
    return "ACC,AUC,F1,Recall,Precision";
}

std::string metrics_csv_row(const MetricsReport& r)
{
    char buf[160];
    std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.6f,%.6f,%.6f", r.accuracy, r.auc, r.f1, r.recall, r.precision);
    return buf;
}

}  // namespace smile
