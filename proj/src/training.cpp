#include "smile/training.hpp"

#ifdef __GLIBC__
#include <malloc.h>
#endif

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <random>
#include <thread>
#include <unordered_map>

#include "smile/errors.hpp"

namespace smile {

namespace {

void check_step_inputs(std::span<const ParamSlot> params, std::span<const DenseMatrix> grads)
{
    if (params.size() != grads.size()) {
        throw ShapeError("optimizer: " + std::to_string(grads.size()) + " gradients for " + std::to_string(params.size())
                         + " parameters");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params[i].value->same_shape(grads[i])) {
            throw ShapeError("optimizer: gradient " + grads[i].shape_string() + " for parameter "
                             + params[i].value->shape_string());
        }
        if (!grads[i].all_finite()) {
            throw NonFiniteError("optimizer: non-finite gradient for parameter " + std::to_string(i));
        }
    }
}

void ensure_moments(std::span<const ParamSlot> params, OptimizerState& state)
{
    if (state.first_moment.size() == params.size()) {
        return;
    }
    state.first_moment.clear();
    state.second_moment.clear();
    for (const ParamSlot& p : params) {
        state.first_moment.emplace_back(p.value->rows(), p.value->cols());
        state.second_moment.emplace_back(p.value->rows(), p.value->cols());
    }
}

void apply_weight_decay(std::span<const ParamSlot> params, const OptimizerConfig& cfg)
{
    const double shrink = cfg.learning_rate * cfg.weight_decay;
    if (shrink == 0.0) {
        return;
    }
    for (const ParamSlot& p : params) {
        if (p.decay) {
            for (double& v : p.value->values()) {
                v -= shrink * v;
            }
        }
    }
}

void update_moments(std::span<const DenseMatrix> grads, OptimizerState& state, const OptimizerConfig& cfg)
{
    for (std::size_t i = 0; i < grads.size(); ++i) {
        auto m = state.first_moment[i].values();
        auto v = state.second_moment[i].values();
        auto g = grads[i].values();
        for (std::size_t k = 0; k < g.size(); ++k) {
            m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
            v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
        }
    }
}

// splitmix64 finalizer
std::uint64_t mix(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::vector<ParamSlot> trainable_slots(SmileParams& params)
{
    std::vector<ParamSlot> slots;
    for (ParamId id : kAllParams) {
        slots.push_back({&params.tensor(id), SmileParams::decays(id)});
    }
    return slots;
}

}  // namespace

double cross_entropy(double prediction, int label)
{
    const double p = std::clamp(prediction, kProbabilityClamp, 1.0 - kProbabilityClamp);
    return label == 1 ? -std::log(p) : -std::log(1.0 - p);
}

std::string_view to_string(OptimizerKind kind)
{
    return kind == OptimizerKind::adam ? "adam" : "ranger";
}

OptimizerKind parse_optimizer_kind(std::string_view text)
{
    if (text == "adam") {
        return OptimizerKind::adam;
    }
    if (text == "ranger") {
        return OptimizerKind::ranger;
    }
    throw ConfigError("unknown optimizer '" + std::string(text) + "' (adam|ranger)");
}

void adam_step(std::span<const ParamSlot> params, std::span<const DenseMatrix> grads, OptimizerState& state,
               const OptimizerConfig& cfg)
{
    check_step_inputs(params, grads);
    ensure_moments(params, state);
    ++state.step;
    apply_weight_decay(params, cfg);
    update_moments(grads, state, cfg);

    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto theta = params[i].value->values();
        auto m = state.first_moment[i].values();
        auto v = state.second_moment[i].values();
        for (std::size_t k = 0; k < theta.size(); ++k) {
            const double m_hat = m[k] / bc1;
            const double v_hat = v[k] / bc2;
            theta[k] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
        }
    }
}

void ranger_step(std::span<const ParamSlot> params, std::span<const DenseMatrix> grads, OptimizerState& state,
                 const OptimizerConfig& cfg)
{
    check_step_inputs(params, grads);
    ensure_moments(params, state);
    if (state.slow_weights.size() != params.size()) {
        state.slow_weights.clear();
        for (const ParamSlot& p : params) {
            state.slow_weights.push_back(*p.value);
        }
    }
    ++state.step;
    apply_weight_decay(params, cfg);
    update_moments(grads, state, cfg);

    const double t = static_cast<double>(state.step);
    const double beta2_t = std::pow(cfg.beta2, t);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - beta2_t;
    const double rho_inf = 2.0 / (1.0 - cfg.beta2) - 1.0;
    const double rho_t = rho_inf - 2.0 * t * beta2_t / bc2;
    const bool rectified = rho_t > 4.0;
    const double rect = rectified ? std::sqrt((rho_t - 4.0) * (rho_t - 2.0) * rho_inf
                                              / ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t))
                                  : 0.0;

    for (std::size_t i = 0; i < params.size(); ++i) {
        auto theta = params[i].value->values();
        auto m = state.first_moment[i].values();
        auto v = state.second_moment[i].values();
        for (std::size_t k = 0; k < theta.size(); ++k) {
            const double m_hat = m[k] / bc1;
            if (rectified) {
                const double v_hat = std::sqrt(v[k] / bc2);
                theta[k] -= cfg.learning_rate * rect * m_hat / (v_hat + cfg.epsilon);
            } else {
                theta[k] -= cfg.learning_rate * m_hat;
            }
        }
    }

    if (cfg.sync_period > 0 && state.step % cfg.sync_period == 0) {
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto fast = params[i].value->values();
            auto slow = state.slow_weights[i].values();
            for (std::size_t k = 0; k < fast.size(); ++k) {
                slow[k] += cfg.slow_step * (fast[k] - slow[k]);
                fast[k] = slow[k];
            }
        }
    }
}

void TrainConfig::validate() const
{
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
        throw ConfigError("learning rate must be a finite value >= 0");
    }
    if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) {
        throw ConfigError("weight decay must be a finite value >= 0");
    }
    if (epochs < 1) {
        throw ConfigError("epochs must be at least 1");
    }
    if (batch_size < 1) {
        throw ConfigError("batch size must be at least 1");
    }
    if (folds < 2) {
        throw ConfigError("folds must be at least 2");
    }
    if (hidden_dim == 0 || attn_dim == 0) {
        throw ConfigError("hidden and attention dimensions must be positive");
    }
    scale.validate();
}

OptimizerConfig TrainConfig::optimizer_config() const
{
    OptimizerConfig o;
    o.learning_rate = learning_rate;
    o.weight_decay = weight_decay;
    return o;
}

std::vector<FoldSplit> kfold_split(std::span<const std::pair<std::string, int>> ids_with_labels, std::size_t k,
                                   std::uint64_t seed)
{
    if (k < 2) {
        throw ConfigError("kfold_split: need at least 2 folds");
    }
    std::vector<std::string> by_class[2];
    for (const auto& [id, label] : ids_with_labels) {
        if (label != 0 && label != 1) {
            throw ConfigError("kfold_split: label of '" + id + "' must be 0 or 1");
        }
        by_class[label].push_back(id);
    }
    for (int c = 0; c < 2; ++c) {
        if (by_class[c].size() < k) {
            throw ConfigError("kfold_split: class " + std::to_string(c) + " has " + std::to_string(by_class[c].size())
                              + " bags, fewer than " + std::to_string(k) + " folds");
        }
    }

    std::mt19937_64 rng(seed);
    std::vector<std::vector<std::string>> val(k);
    // Class 1 continues the deal where class 0 stopped so fold sizes stay balanced.
    std::size_t next = 0;
    for (auto& ids : by_class) {
        std::shuffle(ids.begin(), ids.end(), rng);
        for (const std::string& id : ids) {
            val[next].push_back(id);
            next = (next + 1) % k;
        }
    }

    std::vector<FoldSplit> out(k);
    for (std::size_t f = 0; f < k; ++f) {
        out[f].fold_index = f;
        out[f].val_ids = val[f];
        for (std::size_t g = 0; g < k; ++g) {
            if (g != f) {
                out[f].train_ids.insert(out[f].train_ids.end(), val[g].begin(), val[g].end());
            }
        }
    }
    return out;
}

std::vector<FoldSplit> kfold_split(const BagDataset& dataset, std::size_t k, std::uint64_t seed)
{
    std::vector<std::pair<std::string, int>> ids;
    ids.reserve(dataset.bags.size());
    for (const FeatureBag& bag : dataset.bags) {
        ids.emplace_back(bag.id, bag.label);
    }
    return kfold_split(ids, k, seed);
}

void tune_allocator()
{
#ifdef __GLIBC__
    // Training allocates and frees many short-lived buffers just above the
    // default mmap threshold; serving them from the heap avoids a page fault
    // storm.
    static std::once_flag once;
    std::call_once(once, [] {
        mallopt(M_MMAP_THRESHOLD, 64 << 20);
        mallopt(M_TRIM_THRESHOLD, 256 << 20);
        mallopt(M_TOP_PAD, 64 << 20);
    });
#endif
}

std::uint64_t fold_seed(std::uint64_t base_seed, std::size_t fold_index)
{
    return mix(mix(base_seed) ^ static_cast<std::uint64_t>(fold_index));
}

MetricsReport evaluate_bags(std::span<const FeatureBag* const> bags, const SmileParams& params, ModelKind kind,
                            const ScaleConfig& scale, Averaging averaging, std::vector<double>* probabilities)
{
    std::vector<double> probs;
    std::vector<int> labels;
    probs.reserve(bags.size());
    labels.reserve(bags.size());
    for (const FeatureBag* bag : bags) {
        probs.push_back(predict(*bag, params, kind, scale, Mode::eval).probability);
        labels.push_back(bag->label);
    }
    MetricsReport r = evaluate_predictions(probs, labels, averaging);
    if (probabilities != nullptr) {
        *probabilities = std::move(probs);
    }
    return r;
}

FoldResult train_fold(const BagDataset& dataset, const FoldSplit& split, const TrainConfig& cfg)
{
    tune_allocator();
    cfg.validate();
    dataset.validate();

    std::unordered_map<std::string_view, const FeatureBag*> by_id;
    for (const FeatureBag& bag : dataset.bags) {
        by_id.emplace(bag.id, &bag);
    }
    auto resolve = [&](const std::vector<std::string>& ids) {
        std::vector<const FeatureBag*> out;
        out.reserve(ids.size());
        for (const std::string& id : ids) {
            const auto it = by_id.find(id);
            if (it == by_id.end()) {
                throw ConfigError("fold " + std::to_string(split.fold_index) + " references unknown bag '" + id + "'");
            }
            out.push_back(it->second);
        }
        return out;
    };
    std::vector<const FeatureBag*> train = resolve(split.train_ids);
    const std::vector<const FeatureBag*> val = resolve(split.val_ids);
    if (train.empty() || val.empty()) {
        throw ConfigError("fold " + std::to_string(split.fold_index) + " has an empty train or validation set");
    }

    const std::uint64_t seed = fold_seed(cfg.seed, split.fold_index);
    FoldResult result;
    result.fold_index = split.fold_index;
    SmileParams params = SmileParams::initialize({dataset.feature_dim, cfg.hidden_dim, cfg.attn_dim}, seed);
    result.initial_params = params;

    std::mt19937_64 rng(mix(seed));
    const OptimizerConfig opt_cfg = cfg.optimizer_config();
    OptimizerState opt_state;
    const std::vector<ParamSlot> slots = trainable_slots(params);
    std::vector<DenseMatrix> grads;
    for (const ParamSlot& s : slots) {
        grads.emplace_back(s.value->rows(), s.value->cols());
    }

    bool have_best = false;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(train.begin(), train.end(), rng);
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < train.size(); start += cfg.batch_size) {
            const std::size_t stop = std::min(train.size(), start + cfg.batch_size);
            for (DenseMatrix& g : grads) {
                g.fill(0.0);
            }
            for (std::size_t b = start; b < stop; ++b) {
                const FeatureBag& bag = *train[b];
                BagGraph bg = build_bag_graph(bag, params, cfg.model, cfg.scale, Mode::train, true);
                loss_sum += bg.graph.value(*bg.loss)[0];
                const GradientMap gm = bg.graph.gradient(*bg.loss, DenseMatrix(1, 1, 1.0));
                for (std::size_t i = 0; i < kParamCount; ++i) {
                    const DenseMatrix& g = gm.at(bg.params[i]);
                    auto dst = grads[i].values();
                    for (std::size_t k = 0; k < dst.size(); ++k) {
                        dst[k] += g[k];
                    }
                }
                update_running_stats(params,
                                     {bg.graph.batch_mean(*bg.batchnorm), bg.graph.batch_variance(*bg.batchnorm),
                                      bag.instance_count()});
            }
            const double scale = 1.0 / static_cast<double>(stop - start);
            for (DenseMatrix& g : grads) {
                for (double& v : g.values()) {
                    v *= scale;
                }
            }
            if (cfg.optimizer == OptimizerKind::adam) {
                adam_step(slots, grads, opt_state, opt_cfg);
            } else {
                ranger_step(slots, grads, opt_state, opt_cfg);
            }
        }

        EpochRecord record;
        record.epoch = epoch;
        record.train_loss = loss_sum / static_cast<double>(train.size());
        std::vector<double> probs;
        record.validation = evaluate_bags(val, params, cfg.model, cfg.scale, cfg.averaging, &probs);
        for (std::size_t i = 0; i < val.size(); ++i) {
            record.validation_loss += cross_entropy(probs[i], val[i]->label);
        }
        record.validation_loss /= static_cast<double>(val.size());
        // Strictly higher AUC only, so ties keep the earlier epoch.
        if (!have_best || record.validation.auc > result.best_report.auc) {
            have_best = true;
            result.best_epoch = epoch;
            result.best_report = record.validation;
            result.best_params = params;
        }
        result.history.push_back(record);
    }
    result.final_params = std::move(params);
    return result;
}

CvResult run_cv(const BagDataset& dataset, const TrainConfig& cfg, std::size_t jobs)
{
    cfg.validate();
    CvResult out;
    out.splits = kfold_split(dataset, cfg.folds, cfg.seed);
    out.folds.resize(out.splits.size());
    std::vector<std::exception_ptr> errors(out.splits.size());

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t f = next++; f < out.splits.size(); f = next++) {
            try {
                out.folds[f] = train_fold(dataset, out.splits[f], cfg);
            } catch (...) {
                errors[f] = std::current_exception();
            }
        }
    };
    const std::size_t workers = std::clamp<std::size_t>(jobs, 1, out.splits.size());
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back(worker);
        }
    }
    for (const auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }

    std::unordered_map<std::string_view, const FeatureBag*> by_id;
    for (const FeatureBag& bag : dataset.bags) {
        by_id.emplace(bag.id, &bag);
    }
    for (std::size_t f = 0; f < out.splits.size(); ++f) {
        std::vector<const FeatureBag*> val;
        for (const std::string& id : out.splits[f].val_ids) {
            val.push_back(by_id.at(id));
        }
        out.reports.push_back(
            evaluate_bags(val, out.folds[f].best_params, cfg.model, cfg.scale, cfg.averaging));
    }
    out.mean = aggregate_cv(out.reports);
    return out;
}

}  // namespace smile
