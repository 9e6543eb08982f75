#include "smile/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <ostream>
#include <sstream>
#include <thread>
#include <unordered_map>

#include <CLI11.hpp>
#include <json.hpp>

#include "smile/checkpoint.hpp"
#include "smile/errors.hpp"

namespace smile {

namespace fs = std::filesystem;

namespace {

std::string compact(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

std::string fixed(double v, int digits)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

void write_text(const fs::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error("cannot write '" + path.string() + "'");
    }
    out << text;
    if (!out) {
        throw Error("write failed for '" + path.string() + "'");
    }
}

std::uint64_t parse_seed(const char* text)
{
    try {
        std::size_t used = 0;
        const std::string s(text);
        const unsigned long long v = std::stoull(s, &used);
        if (used != s.size() || s.front() == '-') {
            throw std::invalid_argument(s);
        }
        return v;
    } catch (const std::logic_error&) {
        throw ConfigError("SMILE_SEED='" + std::string(text) + "' is not a non-negative integer");
    }
}

void apply_seed_override(std::uint64_t& seed)
{
    if (const char* env = std::getenv("SMILE_SEED"); env != nullptr && *env != '\0') {
        seed = parse_seed(env);
    }
}

/// Options shared by train and ablate. The string fields are parsed after
/// CLI11 has resolved flag/config precedence.
struct TrainFlags {
    TrainConfig cfg;
    std::string optimizer = "ranger";
    std::string model = "smile";
    std::string averaging = "weighted";
    std::size_t jobs = 1;

    void add_to(CLI::App& app, bool with_scale)
    {
        app.add_option("--folds", cfg.folds, "cross-validation folds")->capture_default_str();
        app.add_option("--epochs", cfg.epochs, "training epochs per fold")->capture_default_str();
        app.add_option("--lr", cfg.learning_rate, "learning rate")->capture_default_str();
        app.add_option("--weight-decay", cfg.weight_decay, "decoupled weight decay")->capture_default_str();
        app.add_option("--batch-size", cfg.batch_size, "bags per optimizer step")->capture_default_str();
        if (with_scale) {
            app.add_option("--threshold", cfg.scale.threshold, "scale mask threshold")->capture_default_str();
            app.add_option("--factor", cfg.scale.factor, "scale factor for masked scores")->capture_default_str();
        }
        app.add_option("--hidden-dim", cfg.hidden_dim, "adapter width")->capture_default_str();
        app.add_option("--attn-dim", cfg.attn_dim, "gated attention width")->capture_default_str();
        app.add_option("--optimizer", optimizer, "adam | ranger")->capture_default_str();
        app.add_option("--model", model, "smile | abmil | maxpool | meanpool")->capture_default_str();
        app.add_option("--averaging", averaging, "F1/recall/precision averaging: weighted | macro")
            ->capture_default_str();
        app.add_option("--seed", cfg.seed, "base seed (SMILE_SEED overrides)")->capture_default_str();
        app.add_option("--jobs", jobs, "parallel workers")->capture_default_str()->check(CLI::PositiveNumber);
    }

    TrainConfig resolve()
    {
        cfg.optimizer = parse_optimizer_kind(optimizer);
        cfg.model = parse_model_kind(model);
        cfg.averaging = parse_averaging(averaging);
        apply_seed_override(cfg.seed);
        cfg.validate();
        return cfg;
    }
};

nlohmann::json fold_json(const FoldResult& fold, const FoldSplit& split, const MetricsReport& report)
{
    nlohmann::json history = nlohmann::json::array();
    for (const EpochRecord& e : fold.history) {
        history.push_back({{"epoch", e.epoch},
                           {"train_loss", e.train_loss},
                           {"validation_loss", e.validation_loss},
                           {"validation", to_json(e.validation)}});
    }
    return {{"fold_index", fold.fold_index}, {"best_epoch", fold.best_epoch}, {"metrics", to_json(report)},
            {"val_ids", split.val_ids},      {"history", history}};
}

std::string metrics_csv(const MetricsReport& mean)
{
    return metrics_csv_header() + "\n" + metrics_csv_row(mean) + "\n";
}

std::string stem_of(const fs::path& path)
{
    const fs::path clean = path.has_filename() ? path : path.parent_path();
    return clean.stem().string();
}

int cmd_synth(SynthConfig cfg, const fs::path& out_path, std::ostream& out)
{
    apply_seed_override(cfg.seed);
    const BagDataset dataset = synth_generate(cfg);
    save_dataset(dataset, out_path);
    out << "wrote " << out_path.string() << ": " << dataset.bags.size() << " bags (" << dataset.count_label(1)
        << " positive, " << dataset.count_label(0) << " negative), feature dim " << dataset.feature_dim << "\n";
    return 0;
}

int cmd_train(const fs::path& data_path, const fs::path& out_root, TrainFlags& flags, std::ostream& out)
{
    const TrainConfig cfg = flags.resolve();
    const BagDataset dataset = load_any_dataset(data_path);
    const CvResult result = run_cv(dataset, cfg, flags.jobs);
    const fs::path dir = out_root / run_directory_name(cfg, stem_of(data_path));
    write_run_directory(dir, result, cfg, dataset.feature_dim);
    out << "run directory " << dir.string() << "\n" << metrics_csv(result.mean);
    return 0;
}

int cmd_eval(const fs::path& ckpt_path, const fs::path& data_path, bool val_only, const std::string& attention_path,
             const std::string& metrics_path, std::ostream& out)
{
    const Checkpoint ckpt = load_checkpoint(ckpt_path);
    const BagDataset dataset = load_any_dataset(data_path);
    const std::size_t expected = ckpt.params.dims().input_dim;
    if (dataset.feature_dim != expected) {
        throw ShapeError("checkpoint expects feature dimension " + std::to_string(expected) + " but '"
                         + data_path.string() + "' has " + std::to_string(dataset.feature_dim));
    }
    const TrainConfig& cfg = ckpt.config;

    std::vector<const FeatureBag*> bags;
    if (val_only) {
        std::unordered_map<std::string_view, const FeatureBag*> by_id;
        for (const FeatureBag& bag : dataset.bags) {
            by_id.emplace(bag.id, &bag);
        }
        for (const std::string& id : ckpt.val_ids) {
            const auto it = by_id.find(id);
            if (it == by_id.end()) {
                throw Error("validation bag '" + id + "' is not in '" + data_path.string() + "'");
            }
            bags.push_back(it->second);
        }
    } else {
        for (const FeatureBag& bag : dataset.bags) {
            bags.push_back(&bag);
        }
    }

    if (!attention_path.empty()) {
        if (cfg.model == ModelKind::maxpool || cfg.model == ModelKind::meanpool) {
            throw ConfigError("--dump-attention needs an attention model, checkpoint uses "
                              + std::string(to_string(cfg.model)));
        }
        std::ofstream trace_out(attention_path, std::ios::binary);
        if (!trace_out) {
            throw Error("cannot write '" + attention_path + "'");
        }
        for (const FeatureBag* bag : bags) {
            const BagPrediction p = predict(*bag, ckpt.params, cfg.model, cfg.scale, Mode::eval);
            trace_out << trace_to_json(bag->id, *p.trace).dump() << "\n";
        }
    }

    const MetricsReport report = evaluate_bags(bags, ckpt.params, cfg.model, cfg.scale, cfg.averaging);
    const std::string text = to_json(report).dump(2) + "\n";
    if (!metrics_path.empty()) {
        write_text(metrics_path, text);
    }
    out << text;
    return 0;
}

int cmd_ablate(const std::vector<std::string>& data_paths, const fs::path& out_dir, AblationGridSpec grid,
               TrainFlags& flags, std::ostream& out)
{
    const TrainConfig base = flags.resolve();
    grid.validate();
    std::vector<NamedDataset> datasets;
    for (const std::string& p : data_paths) {
        datasets.push_back({stem_of(p), load_any_dataset(p)});
    }
    fs::create_directories(out_dir);
    const auto rows = run_ablation(datasets, grid, base, flags.jobs, out_dir / "cells");
    const std::string md = ablation_markdown(rows, datasets);
    write_text(out_dir / "ablation.csv", ablation_csv(rows, datasets));
    write_text(out_dir / "ablation.md", md);
    out << md;
    return 0;
}

/// Fills options that were not given on the command line from a TOML-style
/// file of `long-option-name = value` lines (an optional [subcommand] section
/// is accepted). Flags always win over the file.
void apply_config_file(CLI::App& sub, const std::string& path)
{
    std::vector<CLI::ConfigItem> items;
    try {
        items = CLI::ConfigTOML().from_file(path);
    } catch (const CLI::FileError& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    for (const CLI::ConfigItem& item : items) {
        if (item.name == "++" || item.name == "--") {
            continue;
        }
        if (!item.parents.empty() && !(item.parents.size() == 1 && item.parents.front() == sub.get_name())) {
            continue;
        }
        CLI::Option* opt = sub.get_option_no_throw("--" + item.name);
        if (opt == nullptr || item.name == "config") {
            throw ConfigError("config: unknown key '" + item.name + "' for " + sub.get_name());
        }
        if (opt->count() > 0) {
            continue;
        }
        try {
            opt->add_result(item.inputs);
            opt->run_callback();
        } catch (const CLI::ParseError& e) {
            throw ConfigError("config: bad value for '" + item.name + "': " + e.what());
        }
    }
}

std::string cell_name(const AblationRow& row)
{
    return row.baseline ? std::string("wo") : "t" + compact(row.threshold) + "_f" + compact(row.factor);
}

}  // namespace

BagDataset load_any_dataset(const fs::path& path)
{
    if (fs::is_directory(path)) {
        return import_feature_directory(path);
    }
    return load_dataset(path);
}

std::string run_directory_name(const TrainConfig& cfg, std::string_view dataset_stem)
{
    std::string name(dataset_stem);
    name += "_" + std::string(to_string(cfg.model));
    if (cfg.model == ModelKind::smile) {
        name += "_t" + compact(cfg.scale.threshold) + "_f" + compact(cfg.scale.factor);
    }
    name += "_" + std::string(to_string(cfg.optimizer)) + "_lr" + compact(cfg.learning_rate) + "_wd"
            + compact(cfg.weight_decay) + "_e" + std::to_string(cfg.epochs) + "_b" + std::to_string(cfg.batch_size)
            + "_k" + std::to_string(cfg.folds) + "_h" + std::to_string(cfg.hidden_dim) + "_a"
            + std::to_string(cfg.attn_dim) + "_" + std::string(to_string(cfg.averaging)) + "_s"
            + std::to_string(cfg.seed);
    return name;
}

void write_run_directory(const fs::path& dir, const CvResult& result, const TrainConfig& cfg, std::size_t feature_dim)
{
    fs::create_directories(dir);
    for (std::size_t f = 0; f < result.folds.size(); ++f) {
        const FoldResult& fold = result.folds[f];
        Checkpoint ckpt;
        ckpt.params = fold.best_params;
        ckpt.config = cfg;
        ckpt.fold_index = fold.fold_index;
        ckpt.best_epoch = fold.best_epoch;
        ckpt.best_metrics = result.reports[f];
        ckpt.val_ids = result.splits[f].val_ids;
        const std::string stem = "fold_" + std::to_string(fold.fold_index);
        save_checkpoint(ckpt, dir / (stem + ".milc"));
        write_text(dir / (stem + "_metrics.json"), fold_json(fold, result.splits[f], result.reports[f]).dump(2) + "\n");
    }
    nlohmann::json per_fold = nlohmann::json::array();
    for (const MetricsReport& r : result.reports) {
        per_fold.push_back(to_json(r));
    }
    const nlohmann::json mean = {{"mean", to_json(result.mean)},
                                 {"folds", per_fold},
                                 {"feature_dim", feature_dim},
                                 {"hyperparameters", to_json(cfg)}};
    write_text(dir / "mean_metrics.json", mean.dump(2) + "\n");
    write_text(dir / "metrics.csv", metrics_csv(result.mean));
}

void AblationGridSpec::validate() const
{
    if (thresholds.empty() || factors.empty()) {
        throw ConfigError("ablation grid needs at least one threshold and one factor");
    }
    for (double t : thresholds) {
        ScaleConfig{t, 0.5}.validate();
    }
    for (double f : factors) {
        ScaleConfig{0.5, f}.validate();
    }
}

std::vector<AblationRow> run_ablation(std::span<const NamedDataset> datasets, const AblationGridSpec& grid,
                                      const TrainConfig& base, std::size_t jobs, const fs::path& cell_root)
{
    grid.validate();
    base.validate();
    if (datasets.empty()) {
        throw ConfigError("ablation needs at least one dataset");
    }
    std::vector<AblationRow> rows;
    if (grid.include_baseline_row) {
        AblationRow row;
        row.baseline = true;
        row.threshold = base.scale.threshold;
        rows.push_back(row);
    }
    for (double t : grid.thresholds) {
        for (double f : grid.factors) {
            AblationRow row;
            row.threshold = t;
            row.factor = f;
            rows.push_back(row);
        }
    }
    for (AblationRow& row : rows) {
        row.per_dataset.resize(datasets.size());
    }

    const std::size_t tasks = rows.size() * datasets.size();
    std::vector<std::exception_ptr> errors(tasks);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t t = next++; t < tasks; t = next++) {
            AblationRow& row = rows[t / datasets.size()];
            const NamedDataset& ds = datasets[t % datasets.size()];
            try {
                TrainConfig cfg = base;
                cfg.model = ModelKind::smile;
                cfg.scale = {row.threshold, row.factor};
                const CvResult cv = run_cv(ds.data, cfg, 1);
                row.per_dataset[t % datasets.size()] = cv.mean;
                if (!cell_root.empty()) {
                    const fs::path dir = cell_root / cell_name(row) / ds.name;
                    fs::create_directories(dir);
                    nlohmann::json per_fold = nlohmann::json::array();
                    for (const MetricsReport& r : cv.reports) {
                        per_fold.push_back(to_json(r));
                    }
                    write_text(dir / "mean_metrics.json",
                               nlohmann::json{{"mean", to_json(cv.mean)}, {"folds", per_fold}, {"hyperparameters", to_json(cfg)}}
                                       .dump(2)
                                   + "\n");
                    write_text(dir / "metrics.csv", metrics_csv(cv.mean));
                }
            } catch (...) {
                errors[t] = std::current_exception();
            }
        }
    };
    const std::size_t workers = std::clamp<std::size_t>(jobs, 1, tasks);
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
    return rows;
}

std::string ablation_csv(std::span<const AblationRow> rows, std::span<const NamedDataset> datasets)
{
    std::ostringstream os;
    os << "Threshold,Factor";
    for (const NamedDataset& ds : datasets) {
        os << "," << ds.name << "_Acc," << ds.name << "_AUC," << ds.name << "_F1";
    }
    os << "\n";
    for (const AblationRow& row : rows) {
        if (row.baseline) {
            os << "w/o,w/o";
        } else {
            os << compact(row.threshold) << "," << compact(row.factor);
        }
        for (const MetricsReport& r : row.per_dataset) {
            os << "," << fixed(r.accuracy, 6) << "," << fixed(r.auc, 6) << "," << fixed(r.f1, 6);
        }
        os << "\n";
    }
    return os.str();
}

std::string ablation_markdown(std::span<const AblationRow> rows, std::span<const NamedDataset> datasets)
{
    std::ostringstream os;
    os << "| Threshold | Factor |";
    for (const NamedDataset& ds : datasets) {
        os << " " << ds.name << " Acc | " << ds.name << " AUC | " << ds.name << " F1 |";
    }
    os << "\n|---|---|";
    for (std::size_t i = 0; i < datasets.size(); ++i) {
        os << "---|---|---|";
    }
    os << "\n";
    for (const AblationRow& row : rows) {
        if (row.baseline) {
            os << "| w/o | w/o |";
        } else {
            os << "| " << compact(row.threshold) << " | " << compact(row.factor) << " |";
        }
        for (const MetricsReport& r : row.per_dataset) {
            os << " " << fixed(r.accuracy, 4) << " | " << fixed(r.auc, 4) << " | " << fixed(r.f1, 4) << " |";
        }
        os << "\n";
    }
    return os.str();
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Scale-adaptive attention MIL toolkit"};
    app.name("smile");
    app.require_subcommand(1);

    SynthConfig synth_cfg;
    std::string synth_out;
    CLI::App* synth = app.add_subcommand("synth", "generate a planted-witness dataset");
    synth->add_option("--bags", synth_cfg.n_bags, "number of bags")->capture_default_str();
    synth->add_option("--dim", synth_cfg.feature_dim, "feature dimension")->capture_default_str();
    synth->add_option("--pos-fraction", synth_cfg.pos_fraction, "fraction of positive bags")->capture_default_str();
    synth->add_option("--min-size", synth_cfg.min_size, "smallest bag")->capture_default_str();
    synth->add_option("--max-size", synth_cfg.max_size, "largest bag")->capture_default_str();
    synth->add_option("--witness-rate", synth_cfg.witness_rate, "witness share of a positive bag")
        ->capture_default_str();
    synth->add_option("--separation", synth_cfg.separation, "witness shift per dimension, in noise units")
        ->capture_default_str();
    synth->add_option("--seed", synth_cfg.seed, "generator seed (SMILE_SEED overrides)")->capture_default_str();
    synth->add_option("--out", synth_out, "output .milb path")->required();

    TrainFlags train_flags;
    std::string train_data;
    std::string train_out = "runs";
    CLI::App* train = app.add_subcommand("train", "k-fold cross-validated training");
    train->add_option("--data", train_data, ".milb file or feature directory")->required();
    train->add_option("--out", train_out, "root of the run directories")->capture_default_str();
    train_flags.add_to(*train, true);

    std::string eval_ckpt;
    std::string eval_data;
    std::string eval_attention;
    std::string eval_metrics;
    bool eval_val_only = false;
    CLI::App* eval = app.add_subcommand("eval", "score a checkpoint on a dataset");
    eval->add_option("--checkpoint", eval_ckpt, "fold checkpoint (.milc)")->required();
    eval->add_option("--data", eval_data, ".milb file or feature directory")->required();
    eval->add_flag("--val-only", eval_val_only, "only the checkpoint's validation bags");
    eval->add_option("--dump-attention", eval_attention, "write one attention record per bag (JSON lines)");
    eval->add_option("--metrics-out", eval_metrics, "also write the metrics JSON here");

    TrainFlags ablate_flags;
    std::vector<std::string> ablate_data;
    std::string ablate_out = "ablation";
    AblationGridSpec grid;
    bool no_baseline = false;
    CLI::App* ablate = app.add_subcommand("ablate", "threshold x factor grid");
    ablate->add_option("--data", ablate_data, "datasets, one column group each")->required();
    ablate->add_option("--out", ablate_out, "output directory")->capture_default_str();
    ablate->add_option("--thresholds", grid.thresholds, "threshold axis")->capture_default_str()->delimiter(',');
    ablate->add_option("--factors", grid.factors, "factor axis")->capture_default_str()->delimiter(',');
    ablate->add_flag("--no-baseline-row", no_baseline, "omit the w/o row");
    ablate_flags.add_to(*ablate, false);

    std::string config_path;
    for (CLI::App* sub : {synth, train, eval, ablate}) {
        sub->add_option("--config", config_path, "TOML-style file of option defaults (flags take precedence)");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    try {
        if (!config_path.empty()) {
            apply_config_file(*app.get_subcommands().front(), config_path);
        }
        if (*synth) {
            return cmd_synth(synth_cfg, synth_out, out);
        }
        if (*train) {
            return cmd_train(train_data, train_out, train_flags, out);
        }
        if (*eval) {
            return cmd_eval(eval_ckpt, eval_data, eval_val_only, eval_attention, eval_metrics, out);
        }
        grid.include_baseline_row = !no_baseline;
        return cmd_ablate(ablate_data, ablate_out, grid, ablate_flags, out);
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace smile
