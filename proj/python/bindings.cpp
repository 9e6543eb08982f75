#include <sstream>
#include <string>
#include <vector>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "smile/checkpoint.hpp"
#include "smile/cli.hpp"
#include "smile/data.hpp"
#include "smile/errors.hpp"
#include "smile/metrics.hpp"
#include "smile/model.hpp"
#include "smile/training.hpp"

namespace py = pybind11;
using namespace smile;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

py::array_t<double> to_numpy(const DenseMatrix& m)
{
    py::array_t<double> out({m.rows(), m.cols()});
    std::copy(m.values().begin(), m.values().end(), out.mutable_data());
    return out;
}

DenseMatrix from_numpy(const Array& a)
{
    if (a.ndim() != 2) {
        throw ShapeError("expected a 2-d array of instance features");
    }
    return DenseMatrix(a.shape(0), a.shape(1), std::span<const double>(a.data(), a.size()));
}

py::dict report_dict(const MetricsReport& r)
{
    py::dict d;
    d["accuracy"] = r.accuracy;
    d["auc"] = r.auc;
    d["f1"] = r.f1;
    d["recall"] = r.recall;
    d["precision"] = r.precision;
    d["n_samples"] = r.n_samples;
    return d;
}

py::dict bag_dict(const FeatureBag& bag)
{
    py::dict d;
    d["id"] = bag.id;
    d["label"] = bag.label;
    d["features"] = to_numpy(bag.features);
    d["instance_labels"] = std::vector<int>(bag.instance_labels.begin(), bag.instance_labels.end());
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m)
{
    m.doc() = "Scale-adaptive attention MIL: data, model, training and metrics";

    py::register_exception<Error>(m, "SmileError", PyExc_RuntimeError);
    py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);

    m.def(
        "scale_adaptive_attention",
        [](std::vector<double> scores, double threshold, double factor) {
            const AttentionTrace t = scale_adaptive_attention(scores, {threshold, factor});
            py::dict d;
            d["normalized"] = t.normalized_scores;
            d["mask"] = std::vector<int>(t.mask.begin(), t.mask.end());
            d["weights"] = t.weights;
            return d;
        },
        py::arg("scores"), py::arg("threshold") = 0.5, py::arg("factor") = 0.5);

    m.def(
        "auc", [](std::vector<double> scores, std::vector<int> labels) { return auc(scores, labels); },
        py::arg("scores"), py::arg("labels"));

    m.def(
        "evaluate_predictions",
        [](std::vector<double> probabilities, std::vector<int> labels, const std::string& averaging) {
            return report_dict(evaluate_predictions(probabilities, labels, parse_averaging(averaging)));
        },
        py::arg("probabilities"), py::arg("labels"), py::arg("averaging") = "weighted");

    py::class_<BagDataset>(m, "Dataset")
        .def_static(
            "synthetic",
            [](std::size_t n_bags, double pos_fraction, std::size_t min_size, std::size_t max_size,
               std::size_t feature_dim, double witness_rate, double separation, std::uint64_t seed) {
                SynthConfig cfg;
                cfg.n_bags = n_bags;
                cfg.pos_fraction = pos_fraction;
                cfg.min_size = min_size;
                cfg.max_size = max_size;
                cfg.feature_dim = feature_dim;
                cfg.witness_rate = witness_rate;
                cfg.separation = separation;
                cfg.seed = seed;
                return synth_generate(cfg);
            },
            py::arg("n_bags") = 500, py::arg("pos_fraction") = 0.5, py::arg("min_size") = 20,
            py::arg("max_size") = 60, py::arg("feature_dim") = 64, py::arg("witness_rate") = 0.05,
            py::arg("separation") = 2.0, py::arg("seed") = 7)
        .def_static("load", &load_any_dataset, py::arg("path"))
        .def("save", [](const BagDataset& d, const std::filesystem::path& p) { save_dataset(d, p); })
        .def_readonly("feature_dim", &BagDataset::feature_dim)
        .def_readonly("provenance", &BagDataset::provenance)
        .def("count_label", &BagDataset::count_label)
        .def("__len__", [](const BagDataset& d) { return d.bags.size(); })
        .def("__getitem__", [](const BagDataset& d, std::size_t i) {
            if (i >= d.bags.size()) {
                throw py::index_error();
            }
            return bag_dict(d.bags[i]);
        });

    m.def(
        "run_cv",
        [](const BagDataset& data, std::size_t epochs, std::size_t folds, double lr, double weight_decay,
           std::size_t batch_size, double threshold, double factor, const std::string& model,
           const std::string& optimizer, std::size_t hidden_dim, std::size_t attn_dim, std::uint64_t seed,
           std::size_t jobs) {
            TrainConfig cfg;
            cfg.epochs = epochs;
            cfg.folds = folds;
            cfg.learning_rate = lr;
            cfg.weight_decay = weight_decay;
            cfg.batch_size = batch_size;
            cfg.scale = {threshold, factor};
            cfg.model = parse_model_kind(model);
            cfg.optimizer = parse_optimizer_kind(optimizer);
            cfg.hidden_dim = hidden_dim;
            cfg.attn_dim = attn_dim;
            cfg.seed = seed;
            cfg.validate();
            CvResult result;
            {
                py::gil_scoped_release release;
                result = run_cv(data, cfg, jobs);
            }
            py::dict out;
            out["mean"] = report_dict(result.mean);
            py::list per_fold;
            for (const FoldResult& f : result.folds) {
                py::dict d = report_dict(f.best_report);
                d["best_epoch"] = f.best_epoch;
                per_fold.append(d);
            }
            out["folds"] = per_fold;
            return out;
        },
        py::arg("dataset"), py::arg("epochs") = 100, py::arg("folds") = 5, py::arg("lr") = 2e-4,
        py::arg("weight_decay") = 1e-5, py::arg("batch_size") = 12, py::arg("threshold") = 0.5,
        py::arg("factor") = 0.5, py::arg("model") = "smile", py::arg("optimizer") = "ranger",
        py::arg("hidden_dim") = 256, py::arg("attn_dim") = 64, py::arg("seed") = 0, py::arg("jobs") = 1);

    m.def(
        "predict_checkpoint",
        [](const std::filesystem::path& path, const Array& features) {
            const Checkpoint ckpt = load_checkpoint(path);
            FeatureBag bag;
            bag.id = "bag";
            bag.features = from_numpy(features);
            if (bag.feature_dim() != ckpt.params.dims().input_dim) {
                throw ShapeError("checkpoint expects feature dimension "
                                 + std::to_string(ckpt.params.dims().input_dim));
            }
            const BagPrediction p = predict(bag, ckpt.params, ckpt.config.model, ckpt.config.scale, Mode::eval);
            py::dict d;
            d["probability"] = p.probability;
            d["weights"] = p.trace ? p.trace->weights : std::vector<double>{};
            return d;
        },
        py::arg("checkpoint"), py::arg("features"));

    m.def(
        "run_cli",
        [](std::vector<std::string> args) {
            args.insert(args.begin(), "smile");
            std::vector<const char*> argv;
            for (const std::string& a : args) {
                argv.push_back(a.c_str());
            }
            std::ostringstream out;
            std::ostringstream err;
            int code = 0;
            {
                py::gil_scoped_release release;
                code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
            }
            return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"));
}
