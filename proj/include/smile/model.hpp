#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "smile/dense_matrix.hpp"
#include "smile/graph.hpp"

namespace smile {

/// One labeled bag of instance features (n instances x l dims).
struct FeatureBag {
    std::string id;
    DenseMatrix features;
    int label = 0;
    /// Per-instance ground truth when known (synthetic data); empty otherwise.
    std::vector<std::uint8_t> instance_labels;

    std::size_t instance_count() const noexcept { return features.rows(); }
    std::size_t feature_dim() const noexcept { return features.cols(); }
    void validate() const;
};

struct ModelDims {
    std::size_t input_dim = 768;
    std::size_t hidden_dim = 256;
    std::size_t attn_dim = 64;
};

/// Threshold and factor of the scale-adaptive attention.
struct ScaleConfig {
    double threshold = 0.5;
    double factor = 0.5;

    void validate() const;
};

enum class ModelKind { smile, abmil, maxpool, meanpool };
enum class PoolKind { max, mean, abmil };

std::string_view to_string(ModelKind kind);
ModelKind parse_model_kind(std::string_view text);

/// Indices of the trainable tensors inside SmileParams.
enum class ParamId : std::size_t {
    bn_gamma,
    bn_beta,
    adapter_weight,
    adapter_bias,
    attn_v,
    attn_u,
    attn_w,
    clf_weight,
    clf_bias,
};
inline constexpr std::size_t kParamCount = 9;

/// All model state. Shapes: bn_* 1 x l, adapter_weight l x d, adapter_bias
/// 1 x d, attn_v / attn_u e x d, attn_w 1 x e, clf_weight d x 1, clf_bias 1 x 1.
/// The running statistics are updated in train mode but never by the optimizer.
struct SmileParams {
    DenseMatrix bn_gamma;
    DenseMatrix bn_beta;
    DenseMatrix bn_running_mean;
    DenseMatrix bn_running_var;
    DenseMatrix adapter_weight;
    DenseMatrix adapter_bias;
    DenseMatrix attn_v;
    DenseMatrix attn_u;
    DenseMatrix attn_w;
    DenseMatrix clf_weight;
    DenseMatrix clf_bias;

    /// Glorot-uniform weights, zero biases, unit gamma, zero beta, running
    /// mean 0 and variance 1. Deterministic in `seed`.
    static SmileParams initialize(const ModelDims& dims, std::uint64_t seed);

    ModelDims dims() const;
    void validate() const;

    DenseMatrix& tensor(ParamId id);
    const DenseMatrix& tensor(ParamId id) const;
    static std::string_view name(ParamId id);
    /// Biases and batch-norm affine parameters are exempt from weight decay.
    static bool decays(ParamId id);

    friend bool operator==(const SmileParams&, const SmileParams&) = default;
};

inline constexpr std::array<ParamId, kParamCount> kAllParams = {
    ParamId::bn_gamma, ParamId::bn_beta, ParamId::adapter_weight, ParamId::adapter_bias, ParamId::attn_v,
    ParamId::attn_u,   ParamId::attn_w,  ParamId::clf_weight,     ParamId::clf_bias,
};

struct BatchStats {
    DenseMatrix mean;
    /// Biased (divide-by-n) variance.
    DenseMatrix variance;
    std::size_t count = 0;
};

inline constexpr double kBatchNormMomentum = 0.1;

/// running <- (1 - momentum) running + momentum batch, with the unbiased
/// variance when the batch has more than one row.
void update_running_stats(SmileParams& params, const BatchStats& stats, double momentum = kBatchNormMomentum);

struct AttentionTrace {
    std::vector<double> raw_scores;
    std::vector<double> normalized_scores;
    std::vector<std::uint8_t> mask;
    std::vector<double> weights;
};

nlohmann::json trace_to_json(std::string_view bag_id, const AttentionTrace& trace);

/// H = ReLU(BatchNorm(T) W + b). In train mode the batch statistics are those
/// of this bag and are reported through `stats` when given.
DenseMatrix feature_adapter(const FeatureBag& bag, const SmileParams& params, Mode mode,
                            BatchStats* stats = nullptr);

/// Raw gated attention scores A_i = w . (tanh(V h_i) * sigmoid(U h_i)).
std::vector<double> gated_attention(const DenseMatrix& features, const SmileParams& params);

/// (x - min) / (max - min); all zeros when every entry is equal.
std::vector<double> max_min_normalize(std::span<const double> scores);

/// 1 where normalized >= threshold.
std::vector<std::uint8_t> scale_mask(std::span<const double> normalized, double threshold);

/// Softmax of the raw scores after multiplying the masked ones by the factor.
AttentionTrace scale_adaptive_attention(std::span<const double> scores, const ScaleConfig& cfg);

/// Attention-weighted sum of the instance rows.
std::vector<double> aggregate(const DenseMatrix& features, std::span<const double> weights);

/// sigmoid(w . z + b).
double classify(std::span<const double> pooled, const SmileParams& params);

struct BagPrediction {
    double probability = 0.0;
    /// Absent for max/mean pooling, which have no attention.
    std::optional<AttentionTrace> trace;
    std::optional<BatchStats> batch_stats;
};

BagPrediction predict_bag(const FeatureBag& bag, const SmileParams& params, const ScaleConfig& cfg, Mode mode);

double baseline_pool(const FeatureBag& bag, const SmileParams& params, PoolKind kind, Mode mode);

/// Dispatches to predict_bag or baseline_pool.
BagPrediction predict(const FeatureBag& bag, const SmileParams& params, ModelKind kind, const ScaleConfig& cfg,
                      Mode mode);

/// Differentiable forward pass of one bag, exposing the graph for training
/// and gradient checks. The attention mask is computed from the evaluated raw
/// scores and enters the graph as a constant. The graph reads the bag
/// features and the parameters in place, so both must outlive it unchanged.
struct BagGraph {
    Graph graph;
    std::array<Expr, kParamCount> params{};
    Expr probability;
    std::optional<Expr> loss;
    std::optional<Expr> batchnorm;
    std::optional<AttentionTrace> trace;

    Expr param(ParamId id) const { return params[static_cast<std::size_t>(id)]; }
};

BagGraph build_bag_graph(const FeatureBag& bag, const SmileParams& params, ModelKind kind, const ScaleConfig& cfg,
                         Mode mode, bool with_loss);

}  // namespace smile
