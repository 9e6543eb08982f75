// Acceptance suite: one PASS/FAIL line per headline criterion.
//
//   smile_acceptance [--only NAME] [--work DIR]
//
// NAME is one of: attention, reductions, gradients, invariants, benchmark,
// ablation, determinism.
//
// Exits non-zero only when a check cannot run; measured FAILs are reported
// on their line.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "smile/cli.hpp"
#include "smile/data.hpp"
#include "smile/metrics.hpp"
#include "smile/model.hpp"
#include "smile/training.hpp"

using namespace smile;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
    bool errored = false;  // the check itself could not run
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0)
{
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

std::vector<double> softmax_oracle(const std::vector<double>& a)
{
    const double hi = *std::max_element(a.begin(), a.end());
    std::vector<double> out(a.size());
    double total = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        out[i] = std::exp(a[i] - hi);
        total += out[i];
    }
    for (double& v : out) {
        v /= total;
    }
    return out;
}

FeatureBag random_bag(std::size_t n, std::size_t dim, std::mt19937_64& rng)
{
    std::normal_distribution<double> noise(0.0, 1.0);
    FeatureBag bag;
    bag.id = "b";
    bag.label = static_cast<int>(rng() & 1U);
    bag.features = DenseMatrix(n, dim);
    for (double& v : bag.features.values()) {
        v = noise(rng);
    }
    return bag;
}

SmileParams random_params(const ModelDims& dims, std::uint64_t seed)
{
    SmileParams p = SmileParams::initialize(dims, seed);
    std::mt19937_64 rng(seed + 1000);
    std::uniform_real_distribution<double> u(-0.3, 0.3);
    for (ParamId id : kAllParams) {
        for (double& v : p.tensor(id).values()) {
            v += u(rng);
        }
    }
    for (double& v : p.bn_running_mean.values()) {
        v = u(rng);
    }
    for (double& v : p.bn_running_var.values()) {
        v = 1.0 + u(rng);
    }
    return p;
}

int run_tool(std::vector<std::string> args, std::string* out_text = nullptr)
{
    args.insert(args.begin(), "smile");
    std::vector<const char*> argv;
    for (const std::string& a : args) {
        argv.push_back(a.c_str());
    }
    std::ostringstream out;
    std::ostringstream err;
    const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    if (code != 0) {
        std::cerr << err.str();
    }
    if (out_text != nullptr) {
        *out_text = out.str();
    }
    return code;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

double median3(std::vector<double> v)
{
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
}

// ---------------------------------------------------------------------------

Outcome attention_oracle()
{
    const auto t0 = Clock::now();
    const std::vector<double> a{1, 2, 4};
    struct Case {
        ScaleConfig cfg;
        std::vector<double> expected;
    };
    const std::vector<Case> cases{
        {{0.5, 0.5}, {0.15536, 0.42232, 0.42232}},
        {{0.0, 0.5}, {0.14024438, 0.2312239, 0.62853172}},
        {{0.5, 1.0}, {0.04201007, 0.1141952, 0.84379473}},
    };
    double worst = 0.0;
    for (const Case& c : cases) {
        const AttentionTrace t = scale_adaptive_attention(a, c.cfg);
        for (std::size_t i = 0; i < 3; ++i) {
            worst = std::max(worst, std::abs(t.weights[i] - c.expected[i]));
        }
    }
    const double elapsed = seconds_since(t0);
    return {worst <= 1e-4 && elapsed < 1.0,
            "max |SA - expected| = " + fmt("%.2e", worst) + ", " + fmt("%.3f s", elapsed)};
}

Outcome reduction_identities()
{
    const auto t0 = Clock::now();
    std::mt19937_64 rng(2024);
    std::normal_distribution<double> score(0.0, 2.0);
    std::uniform_int_distribution<std::size_t> len(1, 64);
    std::uniform_real_distribution<double> any_threshold(0.0, 1.0);
    std::uniform_real_distribution<double> any_factor(0.05, 1.0);
    std::uniform_real_distribution<double> high_threshold(1.0 + 1e-9, 5.0);
    double worst_factor = 0.0;
    double worst_threshold = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<double> a(len(rng));
        for (double& v : a) {
            v = score(rng);
        }
        const auto expected = softmax_oracle(a);
        const auto f1 = scale_adaptive_attention(a, {any_threshold(rng), 1.0}).weights;
        const auto hi = scale_adaptive_attention(a, {high_threshold(rng), any_factor(rng)}).weights;
        for (std::size_t i = 0; i < a.size(); ++i) {
            worst_factor = std::max(worst_factor, std::abs(f1[i] - expected[i]));
            worst_threshold = std::max(worst_threshold, std::abs(hi[i] - expected[i]));
        }
    }
    double worst_bag = 0.0;
    for (std::uint64_t s = 0; s < 100; ++s) {
        std::mt19937_64 bag_rng(s);
        const FeatureBag bag = random_bag(1 + s % 40, 16, bag_rng);
        const SmileParams params = random_params({16, 12, 6}, s);
        const double smile = predict_bag(bag, params, {any_threshold(rng), 1.0}, Mode::eval).probability;
        const double abmil = baseline_pool(bag, params, PoolKind::abmil, Mode::eval);
        worst_bag = std::max(worst_bag, std::abs(smile - abmil));
    }
    const double elapsed = seconds_since(t0);
    const bool pass = worst_factor <= 1e-12 && worst_threshold <= 1e-12 && worst_bag <= 1e-12 && elapsed < 10.0;
    return {pass, "factor=1 " + fmt("%.1e", worst_factor) + ", threshold>1 " + fmt("%.1e", worst_threshold)
                      + ", abmil vs factor=1 " + fmt("%.1e", worst_bag) + ", " + fmt("%.2f s", elapsed)};
}

Outcome gradient_suite()
{
    const auto t0 = Clock::now();
    const ModelDims dims{10, 8, 5};
    double worst = 0.0;
    std::string worst_at;
    std::size_t checks = 0;
    for (std::size_t n : {1, 2, 8, 32}) {
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            std::mt19937_64 rng(seed * 97 + n);
            const FeatureBag bag = random_bag(n, dims.input_dim, rng);
            const SmileParams params = random_params(dims, seed);
            BagGraph bg = build_bag_graph(bag, params, ModelKind::smile, {0.5, 0.5}, Mode::train, true);
            for (ParamId id : kAllParams) {
                const double err = finite_diff_check(bg.graph, *bg.loss, bg.param(id), 1e-5);
                ++checks;
                if (err > worst) {
                    worst = err;
                    worst_at = std::string(SmileParams::name(id)) + " n=" + std::to_string(n) + " seed="
                               + std::to_string(seed);
                }
            }
        }
    }
    const double elapsed = seconds_since(t0);
    return {worst <= 1e-4 && elapsed < 60.0, std::to_string(checks) + " tensor checks, worst relative error "
                                                 + fmt("%.2e", worst) + " (" + worst_at + "), "
                                                 + fmt("%.2f s", elapsed)};
}

Outcome invariant_suite()
{
    const auto t0 = Clock::now();
    std::vector<std::string> failures;
    std::mt19937_64 rng(77);

    // softmax normalization and argmax-in-mask
    std::normal_distribution<double> score(0.0, 3.0);
    std::uniform_real_distribution<double> threshold(0.0, 1.0);
    std::uniform_real_distribution<double> factor(0.05, 1.0);
    double worst_sum = 0.0;
    bool argmax_ok = true;
    for (int trial = 0; trial < 2000; ++trial) {
        std::vector<double> a(2 + trial % 50);
        for (double& v : a) {
            v = score(rng);
        }
        double t = threshold(rng);
        if (t == 0.0) {
            t = 1.0;
        }
        const AttentionTrace tr = scale_adaptive_attention(a, {t, factor(rng)});
        worst_sum = std::max(worst_sum, std::abs(std::accumulate(tr.weights.begin(), tr.weights.end(), 0.0) - 1.0));
        const auto top = static_cast<std::size_t>(std::max_element(a.begin(), a.end()) - a.begin());
        argmax_ok = argmax_ok && tr.mask[top] == 1;
    }
    if (worst_sum > 1e-9) {
        failures.push_back("softmax sum off by " + fmt("%.1e", worst_sum));
    }
    if (!argmax_ok) {
        failures.push_back("argmax outside mask");
    }

    // permutation invariance
    double worst_perm = 0.0;
    const SmileParams params = random_params({12, 10, 6}, 5);
    for (int b = 0; b < 1000; ++b) {
        const FeatureBag bag = random_bag(1 + b % 30, 12, rng);
        FeatureBag shuffled = bag;
        std::vector<std::size_t> order(bag.instance_count());
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t i = 0; i < order.size(); ++i) {
            const auto src = bag.features.row(order[i]);
            std::copy(src.begin(), src.end(), shuffled.features.row(i).begin());
        }
        const Mode mode = b % 2 == 0 ? Mode::eval : Mode::train;
        const double p0 = predict_bag(bag, params, {0.5, 0.5}, mode).probability;
        const double p1 = predict_bag(shuffled, params, {0.5, 0.5}, mode).probability;
        worst_perm = std::max(worst_perm, std::abs(p0 - p1));
    }
    if (worst_perm > 1e-9) {
        failures.push_back("permutation changes prediction by " + fmt("%.1e", worst_perm));
    }

    // witness property and round trip on generated datasets
    std::vector<SynthConfig> configs(4);
    configs[1].witness_rate = 0.01;
    configs[1].seed = 1;
    configs[2].min_size = 1;
    configs[2].max_size = 3;
    configs[2].seed = 2;
    configs[3].pos_fraction = 0.3;
    configs[3].witness_rate = 0.5;
    configs[3].seed = 3;
    std::size_t bags_checked = 0;
    for (const SynthConfig& cfg : configs) {
        const BagDataset d = synth_generate(cfg);
        for (const FeatureBag& bag : d.bags) {
            const auto witnesses = std::count(bag.instance_labels.begin(), bag.instance_labels.end(), 1);
            if ((bag.label == 1) != (witnesses >= 1)) {
                failures.push_back("witness property violated in " + bag.id);
            }
            ++bags_checked;
        }
        const auto bytes = encode_dataset(d);
        const BagDataset back = decode_dataset(bytes);
        bool same = back.bags.size() == d.bags.size() && encode_dataset(back) == bytes;
        for (std::size_t i = 0; same && i < d.bags.size(); ++i) {
            same = back.bags[i].id == d.bags[i].id && back.bags[i].label == d.bags[i].label
                   && back.bags[i].features == d.bags[i].features;
        }
        if (!same) {
            failures.push_back("round trip differs for seed " + std::to_string(cfg.seed));
        }
    }

    // AUC against exhaustive pair counting: every labeling of every length up
    // to 12, scores drawn from a few levels so ties are common; lengths up to
    // 6 also enumerate every score assignment over 3 levels.
    std::size_t auc_cases = 0;
    bool auc_ok = true;
    auto check_auc = [&](const std::vector<double>& s, const std::vector<int>& y) {
        double good = 0.0;
        double pairs = 0.0;
        for (std::size_t i = 0; i < s.size(); ++i) {
            for (std::size_t j = 0; j < s.size(); ++j) {
                if (y[i] == 1 && y[j] == 0) {
                    pairs += 1.0;
                    good += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
                }
            }
        }
        auc_ok = auc_ok && auc(s, y) == good / pairs;
        ++auc_cases;
    };
    std::uniform_int_distribution<int> level(0, 3);
    for (std::size_t n = 2; n <= 12; ++n) {
        std::vector<int> y(n);
        std::vector<double> s(n);
        for (std::uint32_t mask = 1; mask + 1 < (1U << n); ++mask) {
            for (std::size_t i = 0; i < n; ++i) {
                y[i] = static_cast<int>((mask >> i) & 1U);
            }
            if (n <= 6) {
                std::size_t combos = 1;
                for (std::size_t i = 0; i < n; ++i) {
                    combos *= 3;
                }
                for (std::size_t c = 0; c < combos; ++c) {
                    std::size_t code = c;
                    for (std::size_t i = 0; i < n; ++i) {
                        s[i] = static_cast<double>(code % 3);
                        code /= 3;
                    }
                    check_auc(s, y);
                }
            } else {
                for (int draw = 0; draw < 3; ++draw) {
                    for (double& v : s) {
                        v = level(rng) * 0.5;
                    }
                    check_auc(s, y);
                }
            }
        }
    }
    if (!auc_ok) {
        failures.push_back("AUC differs from pair counting");
    }

    const double elapsed = seconds_since(t0);
    if (elapsed >= 60.0) {
        failures.push_back("too slow");
    }
    std::string detail = "softmax " + fmt("%.1e", worst_sum) + ", permutation " + fmt("%.1e", worst_perm) + ", "
                         + std::to_string(bags_checked) + " synthetic bags, " + std::to_string(auc_cases)
                         + " AUC cases, " + fmt("%.2f s", elapsed);
    for (const std::string& f : failures) {
        detail += "; " + f;
    }
    return {failures.empty(), detail};
}

struct Workspace {
    fs::path root;
    fs::path dataset;
    std::size_t jobs = 1;
};

void ensure_dataset(const Workspace& ws)
{
    if (!fs::exists(ws.dataset)) {
        run_tool({"synth", "--bags", "500", "--dim", "64", "--min-size", "20", "--max-size", "60", "--witness-rate",
                  "0.05", "--separation", "2.0", "--seed", "7", "--out", ws.dataset.string()});
    }
}

nlohmann::json train_and_read(const Workspace& ws, const std::string& model, std::uint64_t seed,
                              const std::string& out_dir)
{
    std::string text;
    if (run_tool({"train", "--data", ws.dataset.string(), "--out", out_dir, "--epochs", "50", "--model", model,
                  "--seed", std::to_string(seed), "--jobs", std::to_string(ws.jobs)},
                 &text)
        != 0) {
        throw std::runtime_error("train failed");
    }
    const std::string first_line = text.substr(0, text.find('\n'));
    const fs::path dir = first_line.substr(std::string("run directory ").size());
    return nlohmann::json::parse(slurp(dir / "mean_metrics.json"))["mean"];
}

Outcome benchmark(const Workspace& ws)
{
    const auto t0 = Clock::now();
    ensure_dataset(ws);
    std::vector<double> smile_auc;
    std::vector<double> smile_acc;
    std::vector<double> mean_auc;
    for (std::uint64_t seed : {0, 1, 2}) {
        const auto s = train_and_read(ws, "smile", seed, (ws.root / "benchmark").string());
        const auto m = train_and_read(ws, "meanpool", seed, (ws.root / "benchmark").string());
        smile_auc.push_back(s["auc"].get<double>());
        smile_acc.push_back(s["accuracy"].get<double>());
        mean_auc.push_back(m["auc"].get<double>());
        std::cout << "  seed " << seed << ": smile AUC " << fmt("%.4f", smile_auc.back()) << " ACC "
                  << fmt("%.4f", smile_acc.back()) << ", meanpool AUC " << fmt("%.4f", mean_auc.back()) << " ("
                  << fmt("%.0f s", seconds_since(t0)) << ")\n"
                  << std::flush;
    }
    const double auc_med = median3(smile_auc);
    const double acc_med = median3(smile_acc);
    const double mean_med = median3(mean_auc);
    const double elapsed = seconds_since(t0);
    std::vector<std::string> failures;
    if (auc_med < 0.95) {
        failures.push_back("SMILE AUC below 0.95");
    }
    if (acc_med < 0.85) {
        failures.push_back("SMILE accuracy below 0.85");
    }
    if (!(mean_med < auc_med)) {
        failures.push_back("mean-pooling AUC not strictly lower than SMILE");
    }
    if (elapsed > 600.0) {
        failures.push_back("over 10 minutes");
    }
    std::string detail = "median SMILE AUC " + fmt("%.4f", auc_med) + " ACC " + fmt("%.4f", acc_med)
                         + ", median mean-pooling AUC " + fmt("%.4f", mean_med) + ", " + fmt("%.0f s", elapsed);
    for (const std::string& f : failures) {
        detail += "; " + f;
    }
    return {failures.empty(), detail};
}

Outcome ablation(const Workspace& ws)
{
    const auto t0 = Clock::now();
    ensure_dataset(ws);
    const fs::path out = ws.root / "ablation";
    const std::vector<std::string> smoke{"--epochs", "10", "--jobs", std::to_string(ws.jobs)};
    std::vector<std::string> args{"ablate", "--data", ws.dataset.string(), "--out", out.string()};
    args.insert(args.end(), smoke.begin(), smoke.end());
    if (run_tool(args) != 0) {
        return {false, "ablate failed", true};
    }
    std::istringstream csv(slurp(out / "ablation.csv"));
    std::string header;
    std::getline(csv, header);
    std::vector<std::string> rows;
    for (std::string line; std::getline(csv, line);) {
        rows.push_back(line);
    }
    const std::string stem = ws.dataset.stem().string();
    const bool header_ok = header == "Threshold,Factor," + stem + "_Acc," + stem + "_AUC," + stem + "_F1";
    const bool rows_ok = rows.size() == 19 && std::all_of(rows.begin(), rows.end(), [](const std::string& r) {
                             return std::count(r.begin(), r.end(), ',') == 4;
                         });

    // The w/o row against an explicit threshold > 1 run with the same base flags.
    const auto wo = nlohmann::json::parse(slurp(out / "cells" / "wo" / stem / "mean_metrics.json"))["mean"];
    std::string text;
    std::vector<std::string> train{"train", "--data", ws.dataset.string(), "--out", (ws.root / "threshold_gt_1").string(),
                                   "--threshold", "1.5"};
    train.insert(train.end(), smoke.begin(), smoke.end());
    if (run_tool(train, &text) != 0) {
        return {false, "threshold > 1 train failed", true};
    }
    const fs::path dir = text.substr(std::string("run directory ").size(), text.find('\n') - 14);
    const auto high = nlohmann::json::parse(slurp(dir / "mean_metrics.json"))["mean"];
    double worst = 0.0;
    for (const char* key : {"accuracy", "auc", "f1", "recall", "precision"}) {
        worst = std::max(worst, std::abs(wo[key].get<double>() - high[key].get<double>()));
    }
    const double elapsed = seconds_since(t0);
    const bool pass = header_ok && rows_ok && worst <= 1e-9 && elapsed <= 1800.0;
    return {pass, std::to_string(rows.size()) + " rows, header " + (header_ok ? "ok" : "wrong") + ", w/o vs threshold 1.5 "
                      + fmt("%.1e", worst) + ", " + fmt("%.0f s", elapsed) + " (10-epoch smoke setting)"};
}

Outcome determinism(const Workspace& ws)
{
    const auto t0 = Clock::now();
    ensure_dataset(ws);
    std::string csv[2];
    for (int run = 0; run < 2; ++run) {
        const fs::path out = ws.root / ("determinism_" + std::to_string(run));
        fs::remove_all(out);
        std::string text;
        if (run_tool({"train", "--data", ws.dataset.string(), "--out", out.string(), "--epochs", "10", "--seed", "3",
                      "--jobs", std::to_string(ws.jobs)},
                     &text)
            != 0) {
            return {false, "train failed", true};
        }
        const fs::path dir = text.substr(std::string("run directory ").size(), text.find('\n') - 14);
        csv[run] = slurp(dir / "metrics.csv");
    }
    const bool same = !csv[0].empty() && csv[0] == csv[1];
    return {same, std::string(same ? "identical" : "different") + " metrics.csv across two runs, "
                      + fmt("%.0f s", seconds_since(t0))};
}

}  // namespace

int main(int argc, char** argv)
{
    std::string only;
    Workspace ws;
    ws.root = fs::temp_directory_path() / "smile_acceptance";
    for (int i = 1; i + 1 < argc; i += 2) {
        const std::string key = argv[i];
        if (key == "--only") {
            only = argv[i + 1];
        } else if (key == "--work") {
            ws.root = argv[i + 1];
        }
    }
    fs::create_directories(ws.root);
    ws.dataset = ws.root / "synthetic.milb";
    fs::remove(ws.dataset);
    ws.jobs = std::max(1U, std::thread::hardware_concurrency());

    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"attention", attention_oracle},
        {"reductions", reduction_identities},
        {"gradients", gradient_suite},
        {"invariants", invariant_suite},
        {"benchmark", [&] { return benchmark(ws); }},
        {"ablation", [&] { return ablation(ws); }},
        {"determinism", [&] { return determinism(ws); }},
    };
    int failed = 0;
    int errored = 0;
    for (const auto& [name, check] : criteria) {
        if (!only.empty() && only != name) {
            continue;
        }
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what(), true};
        }
        failed += o.pass ? 0 : 1;
        errored += o.errored ? 1 : 0;
        std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << "\n" << std::flush;
    }
    std::cout << (failed == 0 ? "all criteria pass" : std::to_string(failed) + " criterion(s) FAIL") << "\n";
    // A FAIL line is a measured result and stays visible above; only a check
    // that could not run fails the process.
    return errored == 0 ? 0 : 1;
}
