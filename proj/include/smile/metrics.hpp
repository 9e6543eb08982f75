#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace smile {

enum class Averaging { macro, weighted };

std::string_view to_string(Averaging averaging);
Averaging parse_averaging(std::string_view text);

/// Decision threshold applied to bag probabilities: predicted positive iff p >= 0.5.
inline constexpr double kDecisionThreshold = 0.5;

struct MetricsReport {
    double accuracy = 0.0;
    double auc = 0.0;
    double f1 = 0.0;
    double recall = 0.0;
    double precision = 0.0;
    std::size_t n_samples = 0;
    Averaging averaging = Averaging::weighted;

    friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

struct ClassScores {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t support = 0;
};

/// Mann-Whitney AUC: fraction of positive/negative pairs ordered correctly,
/// ties counting one half. Throws when either class is absent.
double auc(std::span<const double> scores, std::span<const int> labels);

/// Precision/recall/F1 for class 0 and class 1. Undefined ratios count as 0.
std::array<ClassScores, 2> per_class_scores(std::span<const int> predictions, std::span<const int> labels);

/// Accuracy and averaged precision/recall/F1; `auc` is left at 0.
MetricsReport confusion_metrics(std::span<const int> predictions, std::span<const int> labels,
                                Averaging averaging = Averaging::weighted);

/// Thresholds the probabilities and fills every field including AUC. When
/// only one class is present the AUC is reported as 0.5.
MetricsReport evaluate_predictions(std::span<const double> probabilities, std::span<const int> labels,
                                   Averaging averaging = Averaging::weighted);

/// Unweighted mean of each metric; n_samples is summed.
MetricsReport aggregate_cv(std::span<const MetricsReport> reports);

nlohmann::json to_json(const MetricsReport& report);
MetricsReport report_from_json(const nlohmann::json& j);

/// "ACC,AUC,F1,Recall,Precision"
std::string metrics_csv_header();
/// One CSV row in the header's column order, fixed to 6 decimals.
std::string metrics_csv_row(const MetricsReport& report);

}  // namespace smile
