#include "smile/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <utility>

#include "smile/errors.hpp"

namespace smile {

namespace {

DenseMatrix glorot_uniform(std::size_t rows, std::size_t cols, std::size_t fan_in, std::size_t fan_out,
                           std::mt19937_64& rng)
{
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    DenseMatrix m(rows, cols);
    for (double& v : m.values()) {
        v = dist(rng);
    }
    return m;
}

void require_shape(const DenseMatrix& m, std::size_t rows, std::size_t cols, std::string_view what)
{
    if (m.rows() != rows || m.cols() != cols) {
        throw ShapeError(std::string(what) + ": expected " + std::to_string(rows) + "x" + std::to_string(cols)
                         + ", got " + m.shape_string());
    }
}

struct AdapterExprs {
    Expr hidden;
    Expr batchnorm;
};

AdapterExprs build_adapter(Graph& g, const std::array<Expr, kParamCount>& p, const FeatureBag& bag,
                           const SmileParams& params, Mode mode)
{
    const auto at = [&](ParamId id) { return p[static_cast<std::size_t>(id)]; };
    const Expr input = g.constant_ref(bag.features, "features");
    const Expr normed = g.batchnorm(input, at(ParamId::bn_gamma), at(ParamId::bn_beta), mode,
                                    params.bn_running_mean, params.bn_running_var);
    const Expr linear = g.add(g.matmul(normed, at(ParamId::adapter_weight)), at(ParamId::adapter_bias));
    return {g.relu(linear), normed};
}

// n x 1 column of raw attention scores.
Expr build_gated_attention(Graph& g, const std::array<Expr, kParamCount>& p, Expr hidden)
{
    const auto at = [&](ParamId id) { return p[static_cast<std::size_t>(id)]; };
    const Expr tanh_branch = g.tanh(g.matmul_nt(hidden, at(ParamId::attn_v)));
    const Expr gate_branch = g.sigmoid(g.matmul_nt(hidden, at(ParamId::attn_u)));
    return g.matmul_nt(g.mul(tanh_branch, gate_branch), at(ParamId::attn_w));
}

// Multiplier applied to each raw score: factor where masked, 1 elsewhere.
std::vector<double> mask_multiplier(std::span<const std::uint8_t> mask, double factor)
{
    std::vector<double> out(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i) {
        out[i] = mask[i] ? factor : 1.0;
    }
    return out;
}

struct AttentionExprs {
    Expr weights;  // 1 x n
    AttentionTrace trace;
};

// Evaluates the raw scores to derive the mask, then continues the graph with
// the mask as a constant. `factor == nullopt` gives the plain softmax.
AttentionExprs build_attention_weights(Graph& g, Expr raw_scores, std::optional<ScaleConfig> cfg)
{
    const DenseMatrix& raw = g.evaluate(raw_scores);
    AttentionTrace trace;
    trace.raw_scores.assign(raw.values().begin(), raw.values().end());
    trace.normalized_scores = max_min_normalize(trace.raw_scores);

    Expr scaled = raw_scores;
    if (cfg) {
        trace.mask = scale_mask(trace.normalized_scores, cfg->threshold);
        const Expr multiplier =
            g.constant(DenseMatrix::column_vector(mask_multiplier(trace.mask, cfg->factor)), "scale_multiplier");
        scaled = g.mul(raw_scores, multiplier);
    } else {
        trace.mask.assign(trace.raw_scores.size(), 0);
    }
    const Expr weights = g.softmax(g.transpose(scaled));
    const DenseMatrix& w = g.evaluate(weights);
    trace.weights.assign(w.values().begin(), w.values().end());
    return {weights, std::move(trace)};
}

Expr build_classifier(Graph& g, const std::array<Expr, kParamCount>& p, Expr pooled)
{
    const auto at = [&](ParamId id) { return p[static_cast<std::size_t>(id)]; };
    return g.sigmoid(g.add(g.matmul(pooled, at(ParamId::clf_weight)), at(ParamId::clf_bias)));
}

std::array<Expr, kParamCount> add_parameters(Graph& g, const SmileParams& params)
{
    std::array<Expr, kParamCount> out{};
    for (ParamId id : kAllParams) {
        out[static_cast<std::size_t>(id)] = g.parameter_ref(params.tensor(id), std::string(SmileParams::name(id)));
    }
    return out;
}

void check_bag_against(const FeatureBag& bag, const SmileParams& params)
{
    bag.validate();
    if (bag.feature_dim() != params.bn_gamma.cols()) {
        throw ShapeError("bag '" + bag.id + "' has feature dimension " + std::to_string(bag.feature_dim())
                         + " but the model expects " + std::to_string(params.bn_gamma.cols()));
    }
}

}  // namespace

void FeatureBag::validate() const
{
    if (features.rows() == 0) {
        throw ConfigError("bag '" + id + "' has no instances");
    }
    if (features.cols() == 0) {
        throw ConfigError("bag '" + id + "' has zero feature dimension");
    }
    if (label != 0 && label != 1) {
        throw ConfigError("bag '" + id + "' has label " + std::to_string(label) + ", expected 0 or 1");
    }
    if (!instance_labels.empty() && instance_labels.size() != features.rows()) {
        throw ConfigError("bag '" + id + "' instance labels do not match its instance count");
    }
}

void ScaleConfig::validate() const
{
    if (!(threshold >= 0.0) || !std::isfinite(threshold)) {
        throw ConfigError("threshold must be a finite value >= 0");
    }
    if (!(factor > 0.0 && factor <= 1.0)) {
        throw ConfigError("factor must lie in (0, 1]");
    }
}

std::string_view to_string(ModelKind kind)
{
    switch (kind) {
    case ModelKind::smile: return "smile";
    case ModelKind::abmil: return "abmil";
    case ModelKind::maxpool: return "maxpool";
    case ModelKind::meanpool: return "meanpool";
    }
    return "unknown";
}

ModelKind parse_model_kind(std::string_view text)
{
    for (ModelKind k : {ModelKind::smile, ModelKind::abmil, ModelKind::maxpool, ModelKind::meanpool}) {
        if (to_string(k) == text) {
            return k;
        }
    }
    throw ConfigError("unknown model '" + std::string(text) + "' (smile|abmil|maxpool|meanpool)");
}

SmileParams SmileParams::initialize(const ModelDims& dims, std::uint64_t seed)
{
    if (dims.input_dim == 0 || dims.hidden_dim == 0 || dims.attn_dim == 0) {
        throw ConfigError("model dimensions must be positive");
    }
    std::mt19937_64 rng(seed);
    const std::size_t l = dims.input_dim;
    const std::size_t d = dims.hidden_dim;
    const std::size_t e = dims.attn_dim;
    SmileParams p;
    p.bn_gamma = DenseMatrix(1, l, 1.0);
    p.bn_beta = DenseMatrix(1, l, 0.0);
    p.bn_running_mean = DenseMatrix(1, l, 0.0);
    p.bn_running_var = DenseMatrix(1, l, 1.0);
    p.adapter_weight = glorot_uniform(l, d, l, d, rng);
    p.adapter_bias = DenseMatrix(1, d, 0.0);
    p.attn_v = glorot_uniform(e, d, d, e, rng);
    p.attn_u = glorot_uniform(e, d, d, e, rng);
    p.attn_w = glorot_uniform(1, e, e, 1, rng);
    p.clf_weight = glorot_uniform(d, 1, d, 1, rng);
    p.clf_bias = DenseMatrix(1, 1, 0.0);
    return p;
}

ModelDims SmileParams::dims() const
{
    return {adapter_weight.rows(), adapter_weight.cols(), attn_v.rows()};
}

void SmileParams::validate() const
{
    const auto [l, d, e] = dims();
    if (l == 0 || d == 0 || e == 0) {
        throw ShapeError("SmileParams: dimensions must be positive");
    }
    require_shape(bn_gamma, 1, l, "bn_gamma");
    require_shape(bn_beta, 1, l, "bn_beta");
    require_shape(bn_running_mean, 1, l, "bn_running_mean");
    require_shape(bn_running_var, 1, l, "bn_running_var");
    require_shape(adapter_bias, 1, d, "adapter_bias");
    require_shape(attn_v, e, d, "attn_v");
    require_shape(attn_u, e, d, "attn_u");
    require_shape(attn_w, 1, e, "attn_w");
    require_shape(clf_weight, d, 1, "clf_weight");
    require_shape(clf_bias, 1, 1, "clf_bias");
    for (ParamId id : kAllParams) {
        if (!tensor(id).all_finite()) {
            throw NonFiniteError("SmileParams: non-finite entries in " + std::string(name(id)));
        }
    }
    for (double v : bn_running_var.values()) {
        if (!(v >= 0.0)) {
            throw ConfigError("SmileParams: negative running variance");
        }
    }
}

DenseMatrix& SmileParams::tensor(ParamId id)
{
    return const_cast<DenseMatrix&>(std::as_const(*this).tensor(id));
}

const DenseMatrix& SmileParams::tensor(ParamId id) const
{
    switch (id) {
    case ParamId::bn_gamma: return bn_gamma;
    case ParamId::bn_beta: return bn_beta;
    case ParamId::adapter_weight: return adapter_weight;
    case ParamId::adapter_bias: return adapter_bias;
    case ParamId::attn_v: return attn_v;
    case ParamId::attn_u: return attn_u;
    case ParamId::attn_w: return attn_w;
    case ParamId::clf_weight: return clf_weight;
    case ParamId::clf_bias: return clf_bias;
    }
    throw Error("SmileParams: bad tensor id");
}

std::string_view SmileParams::name(ParamId id)
{
    switch (id) {
    case ParamId::bn_gamma: return "bn_gamma";
    case ParamId::bn_beta: return "bn_beta";
    case ParamId::adapter_weight: return "adapter_weight";
    case ParamId::adapter_bias: return "adapter_bias";
    case ParamId::attn_v: return "attn_v";
    case ParamId::attn_u: return "attn_u";
    case ParamId::attn_w: return "attn_w";
    case ParamId::clf_weight: return "clf_weight";
    case ParamId::clf_bias: return "clf_bias";
    }
    return "unknown";
}

bool SmileParams::decays(ParamId id)
{
    switch (id) {
    case ParamId::adapter_weight:
    case ParamId::attn_v:
    case ParamId::attn_u:
    case ParamId::attn_w:
    case ParamId::clf_weight:
        return true;
    default:
        return false;
    }
}

void update_running_stats(SmileParams& params, const BatchStats& stats, double momentum)
{
    if (!stats.mean.same_shape(params.bn_running_mean) || !stats.variance.same_shape(params.bn_running_var)) {
        throw ShapeError("update_running_stats: statistics do not match the model input dimension");
    }
    const double n = static_cast<double>(stats.count);
    const double correction = stats.count > 1 ? n / (n - 1.0) : 1.0;
    for (std::size_t c = 0; c < stats.mean.cols(); ++c) {
        params.bn_running_mean[c] = (1.0 - momentum) * params.bn_running_mean[c] + momentum * stats.mean[c];
        params.bn_running_var[c] =
            (1.0 - momentum) * params.bn_running_var[c] + momentum * stats.variance[c] * correction;
    }
}

nlohmann::json trace_to_json(std::string_view bag_id, const AttentionTrace& trace)
{
    nlohmann::json instances = nlohmann::json::array();
    for (std::size_t i = 0; i < trace.raw_scores.size(); ++i) {
        instances.push_back({
            {"index", i},
            {"raw_score", trace.raw_scores[i]},
            {"normalized_score", trace.normalized_scores[i]},
            {"mask", trace.mask[i]},
            {"weight", trace.weights[i]},
        });
    }
    return {{"bag_id", bag_id}, {"instances", std::move(instances)}};
}

DenseMatrix feature_adapter(const FeatureBag& bag, const SmileParams& params, Mode mode, BatchStats* stats)
{
    check_bag_against(bag, params);
    Graph g;
    const auto p = add_parameters(g, params);
    const AdapterExprs adapter = build_adapter(g, p, bag, params, mode);
    DenseMatrix hidden = g.evaluate(adapter.hidden);
    if (stats != nullptr && mode == Mode::train) {
        *stats = {g.batch_mean(adapter.batchnorm), g.batch_variance(adapter.batchnorm), bag.instance_count()};
    }
    return hidden;
}

std::vector<double> gated_attention(const DenseMatrix& features, const SmileParams& params)
{
    if (features.cols() != params.attn_v.cols()) {
        throw ShapeError("gated_attention: features have " + std::to_string(features.cols())
                         + " columns but the attention expects " + std::to_string(params.attn_v.cols()));
    }
    Graph g;
    const auto p = add_parameters(g, params);
    const Expr hidden = g.constant(features, "hidden");
    const DenseMatrix& scores = g.evaluate(build_gated_attention(g, p, hidden));
    return {scores.values().begin(), scores.values().end()};
}

std::vector<double> max_min_normalize(std::span<const double> scores)
{
    std::vector<double> out(scores.size(), 0.0);
    if (scores.empty()) {
        return out;
    }
    const auto [lo, hi] = std::minmax_element(scores.begin(), scores.end());
    const double range = *hi - *lo;
    if (range == 0.0) {
        return out;
    }
    for (std::size_t i = 0; i < scores.size(); ++i) {
        out[i] = (scores[i] - *lo) / range;
    }
    return out;
}

std::vector<std::uint8_t> scale_mask(std::span<const double> normalized, double threshold)
{
    std::vector<std::uint8_t> out(normalized.size());
    for (std::size_t i = 0; i < normalized.size(); ++i) {
        out[i] = normalized[i] - threshold >= 0.0 ? 1 : 0;
    }
    return out;
}

AttentionTrace scale_adaptive_attention(std::span<const double> scores, const ScaleConfig& cfg)
{
    cfg.validate();
    if (scores.empty()) {
        throw ShapeError("scale_adaptive_attention: empty score vector");
    }
    Graph g;
    const Expr raw = g.constant(DenseMatrix::column_vector(scores), "raw_scores");
    return build_attention_weights(g, raw, cfg).trace;
}

std::vector<double> aggregate(const DenseMatrix& features, std::span<const double> weights)
{
    if (weights.size() != features.rows()) {
        throw ShapeError("aggregate: " + std::to_string(weights.size()) + " weights for "
                         + std::to_string(features.rows()) + " instances");
    }
    Graph g;
    const Expr w = g.constant(DenseMatrix::row_vector(weights));
    const Expr h = g.constant(features);
    const DenseMatrix& z = g.evaluate(g.matmul(w, h));
    return {z.values().begin(), z.values().end()};
}

double classify(std::span<const double> pooled, const SmileParams& params)
{
    if (pooled.size() != params.clf_weight.rows()) {
        throw ShapeError("classify: pooled vector has " + std::to_string(pooled.size())
                         + " entries but the classifier expects " + std::to_string(params.clf_weight.rows()));
    }
    Graph g;
    const auto p = add_parameters(g, params);
    const Expr z = g.constant(DenseMatrix::row_vector(pooled), "pooled");
    return g.evaluate(build_classifier(g, p, z))[0];
}

BagGraph build_bag_graph(const FeatureBag& bag, const SmileParams& params, ModelKind kind, const ScaleConfig& cfg,
                         Mode mode, bool with_loss)
{
    check_bag_against(bag, params);
    if (kind == ModelKind::smile) {
        cfg.validate();
    }
    BagGraph out;
    Graph& g = out.graph;
    out.params = add_parameters(g, params);
    const AdapterExprs adapter = build_adapter(g, out.params, bag, params, mode);
    out.batchnorm = adapter.batchnorm;

    Expr pooled;
    switch (kind) {
    case ModelKind::smile:
    case ModelKind::abmil: {
        const Expr raw = build_gated_attention(g, out.params, adapter.hidden);
        auto attention =
            build_attention_weights(g, raw, kind == ModelKind::smile ? std::optional(cfg) : std::nullopt);
        pooled = g.matmul(attention.weights, adapter.hidden);
        out.trace = std::move(attention.trace);
        break;
    }
    case ModelKind::maxpool:
        pooled = g.max_rows(adapter.hidden);
        break;
    case ModelKind::meanpool:
        pooled = g.mean_rows(adapter.hidden);
        break;
    }
    out.probability = build_classifier(g, out.params, pooled);
    if (with_loss) {
        out.loss = g.binary_cross_entropy(out.probability, bag.label);
        g.evaluate(*out.loss);
    } else {
        g.evaluate(out.probability);
    }
    return out;
}

BagPrediction predict(const FeatureBag& bag, const SmileParams& params, ModelKind kind, const ScaleConfig& cfg,
                      Mode mode)
{
    BagGraph bg = build_bag_graph(bag, params, kind, cfg, mode, false);
    BagPrediction out;
    out.probability = bg.graph.value(bg.probability)[0];
    out.trace = std::move(bg.trace);
    if (mode == Mode::train) {
        out.batch_stats = BatchStats{bg.graph.batch_mean(*bg.batchnorm), bg.graph.batch_variance(*bg.batchnorm),
                                     bag.instance_count()};
    }
    return out;
}

BagPrediction predict_bag(const FeatureBag& bag, const SmileParams& params, const ScaleConfig& cfg, Mode mode)
{
    return predict(bag, params, ModelKind::smile, cfg, mode);
}

double baseline_pool(const FeatureBag& bag, const SmileParams& params, PoolKind kind, Mode mode)
{
    const ModelKind model = kind == PoolKind::max    ? ModelKind::maxpool
                            : kind == PoolKind::mean ? ModelKind::meanpool
                                                     : ModelKind::abmil;
    return predict(bag, params, model, ScaleConfig{}, mode).probability;
}

}  // namespace smile
