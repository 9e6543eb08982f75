#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "smile/data.hpp"
#include "smile/metrics.hpp"
#include "smile/training.hpp"

namespace smile {

/// Entry point of the `smile` tool. Returns the process exit code: 0 on
/// success, 2 for usage or configuration errors, 1 for runtime failures.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// A `.milb` file, or a directory holding a feature manifest.
BagDataset load_any_dataset(const std::filesystem::path& path);

/// Deterministic run directory name derived from the configuration.
std::string run_directory_name(const TrainConfig& cfg, std::string_view dataset_stem);

/// Writes fold checkpoints, per-fold metrics, mean metrics and the metrics CSV.
void write_run_directory(const std::filesystem::path& dir, const CvResult& result, const TrainConfig& cfg,
                         std::size_t feature_dim);

struct AblationGridSpec {
    std::vector<double> thresholds = {0.5, 0.6, 0.8};
    std::vector<double> factors = {0.3, 0.4, 0.5, 0.6, 0.7, 0.8};
    bool include_baseline_row = true;

    void validate() const;
};

struct AblationRow {
    bool baseline = false;  // the w/o row
    double threshold = 0.0;
    double factor = 1.0;
    std::vector<MetricsReport> per_dataset;
};

struct NamedDataset {
    std::string name;
    BagDataset data;
};

/// Runs cross-validation for every grid cell on every dataset. The w/o row
/// comes first and uses factor 1. Every cell reuses the base seed, so cells
/// differ only in their scale configuration. With a non-empty `cell_root`,
/// each cell writes its own metrics under cell_root/<cell>/<dataset>.
std::vector<AblationRow> run_ablation(std::span<const NamedDataset> datasets, const AblationGridSpec& grid,
                                      const TrainConfig& base, std::size_t jobs,
                                      const std::filesystem::path& cell_root = {});

std::string ablation_csv(std::span<const AblationRow> rows, std::span<const NamedDataset> datasets);
std::string ablation_markdown(std::span<const AblationRow> rows, std::span<const NamedDataset> datasets);

}  // namespace smile
