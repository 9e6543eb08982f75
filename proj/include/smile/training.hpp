#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "smile/data.hpp"
#include "smile/metrics.hpp"
#include "smile/model.hpp"

namespace smile {

/// Binary cross-entropy with the prediction clamped to [1e-12, 1 - 1e-12].
double cross_entropy(double prediction, int label);

enum class OptimizerKind { adam, ranger };

std::string_view to_string(OptimizerKind kind);
OptimizerKind parse_optimizer_kind(std::string_view text);

struct OptimizerConfig {
    double learning_rate = 2e-4;
    double weight_decay = 1e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    // Lookahead, ranger only.
    std::size_t sync_period = 6;
    double slow_step = 0.5;
};

/// A tensor the optimizer updates in place. Decoupled weight decay applies
/// only where `decay` is set.
struct ParamSlot {
    DenseMatrix* value = nullptr;
    bool decay = true;
};

struct OptimizerState {
    std::vector<DenseMatrix> first_moment;
    std::vector<DenseMatrix> second_moment;
    std::vector<DenseMatrix> slow_weights;
    std::uint64_t step = 0;
};

/// Bias-corrected Adam with decoupled weight decay.
void adam_step(std::span<const ParamSlot> params, std::span<const DenseMatrix> grads, OptimizerState& state,
               const OptimizerConfig& cfg);

/// Rectified Adam wrapped in Lookahead. While the variance rectification is
/// undefined (rho_t <= 4) the step uses the bias-corrected momentum alone.
/// Every `sync_period` steps the slow weights move `slow_step` of the way to
/// the fast weights and the fast weights are reset onto them.
void ranger_step(std::span<const ParamSlot> params, std::span<const DenseMatrix> grads, OptimizerState& state,
                 const OptimizerConfig& cfg);

struct TrainConfig {
    double learning_rate = 2e-4;
    double weight_decay = 1e-5;
    std::size_t epochs = 100;
    std::size_t batch_size = 12;
    std::size_t folds = 5;
    std::uint64_t seed = 0;
    OptimizerKind optimizer = OptimizerKind::ranger;
    ScaleConfig scale;
    ModelKind model = ModelKind::smile;
    std::size_t hidden_dim = 256;
    std::size_t attn_dim = 64;
    Averaging averaging = Averaging::weighted;

    void validate() const;
    OptimizerConfig optimizer_config() const;
};

struct FoldSplit {
    std::size_t fold_index = 0;
    std::vector<std::string> train_ids;
    std::vector<std::string> val_ids;
};

/// Stratified k-fold partition: each class is shuffled with `seed` and dealt
/// round-robin across the folds.
std::vector<FoldSplit> kfold_split(std::span<const std::pair<std::string, int>> ids_with_labels, std::size_t k,
                                   std::uint64_t seed);
std::vector<FoldSplit> kfold_split(const BagDataset& dataset, std::size_t k, std::uint64_t seed);

/// Keeps glibc from returning mid-sized training buffers to the OS on every
/// free. Called by train_fold; a no-op elsewhere.
void tune_allocator();

/// Seed for one fold's parameter initialization and shuffling.
std::uint64_t fold_seed(std::uint64_t base_seed, std::size_t fold_index);

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    double validation_loss = 0.0;
    MetricsReport validation;
};

struct FoldResult {
    std::size_t fold_index = 0;
    SmileParams initial_params;
    SmileParams final_params;
    SmileParams best_params;
    std::size_t best_epoch = 0;
    MetricsReport best_report;
    std::vector<EpochRecord> history;
};

/// Eval-mode predictions and metrics over `bags`.
MetricsReport evaluate_bags(std::span<const FeatureBag* const> bags, const SmileParams& params, ModelKind kind,
                            const ScaleConfig& scale, Averaging averaging, std::vector<double>* probabilities = nullptr);

/// Trains one fold. Each step runs the bags of a batch one at a time,
/// averages their gradients and takes one optimizer step; the validation fold
/// is scored after every epoch and the parameters of the epoch with the
/// highest validation AUC are kept, the earliest such epoch on ties.
FoldResult train_fold(const BagDataset& dataset, const FoldSplit& split, const TrainConfig& cfg);

struct CvResult {
    std::vector<FoldSplit> splits;
    std::vector<FoldResult> folds;
    std::vector<MetricsReport> reports;
    MetricsReport mean;
};

/// Trains every fold (up to `jobs` at a time) and averages the best-checkpoint
/// validation reports.
CvResult run_cv(const BagDataset& dataset, const TrainConfig& cfg, std::size_t jobs = 1);

}  // namespace smile
