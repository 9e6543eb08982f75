#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "smile/errors.hpp"
#include "smile/model.hpp"
#include "support.hpp"

using namespace smile;
using smile::test::perturbed_params;
using smile::test::random_bag;
using smile::test::tiny_bag;
using smile::test::tiny_params;

namespace {

std::vector<double> plain_softmax(std::span<const double> a)
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

}  // namespace

TEST_CASE("scale-adaptive attention on [1, 2, 4]")
{
    const std::vector<double> a{1, 2, 4};
    SUBCASE("threshold 0.5, factor 0.5")
    {
        const AttentionTrace t = scale_adaptive_attention(a, {0.5, 0.5});
        CHECK(t.normalized_scores == std::vector<double>{0.0, 1.0 / 3.0, 1.0});
        CHECK(t.mask == std::vector<std::uint8_t>{0, 0, 1});
        CHECK(t.weights[0] == doctest::Approx(0.1553624).epsilon(1e-6));
        CHECK(t.weights[1] == doctest::Approx(0.4223188).epsilon(1e-6));
        CHECK(t.weights[2] == doctest::Approx(0.4223188).epsilon(1e-6));
    }
    SUBCASE("threshold 0 scales every score")
    {
        const AttentionTrace t = scale_adaptive_attention(a, {0.0, 0.5});
        CHECK(t.mask == std::vector<std::uint8_t>{1, 1, 1});
        CHECK(t.weights[0] == doctest::Approx(0.14024438).epsilon(1e-7));
        CHECK(t.weights[1] == doctest::Approx(0.2312239).epsilon(1e-6));
        CHECK(t.weights[2] == doctest::Approx(0.62853172).epsilon(1e-7));
    }
    SUBCASE("factor 1 is plain softmax")
    {
        const AttentionTrace t = scale_adaptive_attention(a, {0.5, 1.0});
        CHECK(t.weights[0] == doctest::Approx(0.04201007).epsilon(1e-7));
        CHECK(t.weights[1] == doctest::Approx(0.1141952).epsilon(1e-6));
        CHECK(t.weights[2] == doctest::Approx(0.84379473).epsilon(1e-7));
    }
}

TEST_CASE("max-min normalization edge cases")
{
    CHECK(max_min_normalize(std::vector<double>{3, 3, 3}) == std::vector<double>{0, 0, 0});
    CHECK(max_min_normalize(std::vector<double>{7}) == std::vector<double>{0});
    CHECK(max_min_normalize(std::vector<double>{-1, 1, 0}) == std::vector<double>{0, 1, 0.5});
    // Equal scores normalize to zero, so the mask fires only at threshold 0.
    CHECK(scale_mask(std::vector<double>{0, 0}, 0.0) == std::vector<std::uint8_t>{1, 1});
    CHECK(scale_mask(std::vector<double>{0, 0}, 0.1) == std::vector<std::uint8_t>{0, 0});
}

TEST_CASE("scale config validation")
{
    CHECK_THROWS_AS(ScaleConfig({-0.1, 0.5}).validate(), ConfigError);
    CHECK_THROWS_AS(ScaleConfig({0.5, 0.0}).validate(), ConfigError);
    CHECK_THROWS_AS(ScaleConfig({0.5, 1.5}).validate(), ConfigError);
    CHECK_NOTHROW(ScaleConfig({2.0, 1.0}).validate());
}

TEST_CASE("frozen forward pass of the tiny model")
{
    const FeatureBag bag = tiny_bag();
    const SmileParams params = tiny_params();

    SUBCASE("train mode")
    {
        const DenseMatrix h = feature_adapter(bag, params, Mode::train);
        const std::vector<double> expected_h{0.0, 1.3237363562033024, 1.7227224204256157,
                                             0.0, 0.06991862336835909, 0.33118700875659596};
        for (std::size_t i = 0; i < expected_h.size(); ++i) {
            CHECK(h[i] == doctest::Approx(expected_h[i]).epsilon(1e-12));
        }
        const BagPrediction p = predict_bag(bag, params, {0.5, 0.5}, Mode::train);
        CHECK(p.probability == doctest::Approx(0.5600898165801029).epsilon(1e-12));
        CHECK(p.trace->mask == std::vector<std::uint8_t>{0, 1, 1});
        CHECK(p.trace->raw_scores[0] == doctest::Approx(-0.21848318695669042).epsilon(1e-12));
        CHECK(p.trace->weights[1] == doctest::Approx(0.36409697569377203).epsilon(1e-12));
    }
    SUBCASE("eval mode")
    {
        const BagPrediction p = predict_bag(bag, params, {0.5, 0.5}, Mode::eval);
        CHECK(p.probability == doctest::Approx(0.49470596475771245).epsilon(1e-12));
        const std::vector<double> w{0.29240517236125435, 0.3640036034069441, 0.3435912242318015};
        for (std::size_t i = 0; i < 3; ++i) {
            CHECK(p.trace->weights[i] == doctest::Approx(w[i]).epsilon(1e-12));
        }
        CHECK(baseline_pool(bag, params, PoolKind::mean, Mode::eval)
              == doctest::Approx(0.4757381413876121).epsilon(1e-12));
        CHECK(baseline_pool(bag, params, PoolKind::max, Mode::eval)
              == doctest::Approx(0.4464663665203023).epsilon(1e-12));
    }
    SUBCASE("loss")
    {
        BagGraph bg = build_bag_graph(bag, params, ModelKind::smile, {0.5, 0.5}, Mode::train, true);
        CHECK(bg.graph.value(*bg.loss)[0] == doctest::Approx(0.579658121363338).epsilon(1e-12));
    }
}

TEST_CASE("stepwise helpers compose to predict_bag")
{
    const FeatureBag bag = random_bag(7, 5, 3);
    const SmileParams params = perturbed_params({5, 6, 4}, 3);
    const ScaleConfig cfg{0.6, 0.4};
    const DenseMatrix h = feature_adapter(bag, params, Mode::eval);
    const auto a = gated_attention(h, params);
    const AttentionTrace t = scale_adaptive_attention(a, cfg);
    const double p = classify(aggregate(h, t.weights), params);
    CHECK(p == doctest::Approx(predict_bag(bag, params, cfg, Mode::eval).probability).epsilon(1e-14));
}

TEST_CASE("running statistics update")
{
    SmileParams params = tiny_params();
    BatchStats stats;
    feature_adapter(tiny_bag(), params, Mode::train, &stats);
    CHECK(stats.count == 3);
    update_running_stats(params, stats);
    const std::vector<double> mean{0.15000000000000002, -0.20333333333333337, 0.3466666666666667};
    const std::vector<double> var{1.423, 0.49633333333333335, 1.9563333333333335};
    for (std::size_t c = 0; c < 3; ++c) {
        CHECK(params.bn_running_mean[c] == doctest::Approx(mean[c]).epsilon(1e-12));
        CHECK(params.bn_running_var[c] == doctest::Approx(var[c]).epsilon(1e-12));
    }
}

TEST_CASE("initialization")
{
    const ModelDims dims{10, 8, 4};
    const SmileParams a = SmileParams::initialize(dims, 1);
    CHECK(a == SmileParams::initialize(dims, 1));
    CHECK_FALSE(a == SmileParams::initialize(dims, 2));
    CHECK(a.adapter_weight.shape_string() == "10x8");
    CHECK(a.attn_v.shape_string() == "4x8");
    CHECK(a.attn_w.shape_string() == "1x4");
    CHECK(a.clf_weight.shape_string() == "8x1");
    const double bound = std::sqrt(6.0 / 18.0);
    for (double v : a.adapter_weight.values()) {
        CHECK(std::abs(v) <= bound);
    }
    CHECK(a.bn_gamma == DenseMatrix(1, 10, 1.0));
    CHECK(a.bn_running_var == DenseMatrix(1, 10, 1.0));
    CHECK(a.adapter_bias == DenseMatrix(1, 8));
    CHECK(a.dims().input_dim == 10);
    CHECK_NOTHROW(a.validate());
}

TEST_CASE("weight decay applies to weight matrices only")
{
    CHECK(SmileParams::decays(ParamId::adapter_weight));
    CHECK(SmileParams::decays(ParamId::attn_v));
    CHECK(SmileParams::decays(ParamId::clf_weight));
    CHECK_FALSE(SmileParams::decays(ParamId::bn_gamma));
    CHECK_FALSE(SmileParams::decays(ParamId::bn_beta));
    CHECK_FALSE(SmileParams::decays(ParamId::adapter_bias));
    CHECK_FALSE(SmileParams::decays(ParamId::clf_bias));
}

TEST_CASE("dimension mismatch is an explicit error")
{
    const SmileParams params = SmileParams::initialize({8, 4, 2}, 0);
    CHECK_THROWS_AS(predict_bag(random_bag(3, 5, 0), params, {}, Mode::eval), ShapeError);
}

TEST_CASE("ABMIL equals SMILE with factor 1")
{
    for (std::uint64_t s = 0; s < 20; ++s) {
        const FeatureBag bag = random_bag(1 + s % 9, 6, s);
        const SmileParams params = perturbed_params({6, 5, 3}, s);
        const double smile = predict_bag(bag, params, {0.3, 1.0}, Mode::eval).probability;
        const double abmil = baseline_pool(bag, params, PoolKind::abmil, Mode::eval);
        CHECK(std::abs(smile - abmil) <= 1e-12);
    }
}

TEST_CASE("threshold above 1 never fires the mask")
{
    std::mt19937_64 rng(5);
    std::normal_distribution<double> d(0.0, 3.0);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> a(1 + trial % 13);
        for (double& v : a) {
            v = d(rng);
        }
        const AttentionTrace t = scale_adaptive_attention(a, {1.01, 0.3});
        const auto expected = plain_softmax(a);
        CHECK(std::all_of(t.mask.begin(), t.mask.end(), [](auto m) { return m == 0; }));
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(std::abs(t.weights[i] - expected[i]) <= 1e-12);
        }
    }
}

TEST_CASE("model gradients match finite differences")
{
    for (ModelKind kind : {ModelKind::smile, ModelKind::abmil, ModelKind::maxpool, ModelKind::meanpool}) {
        for (Mode mode : {Mode::train, Mode::eval}) {
            CAPTURE(to_string(kind));
            const FeatureBag bag = random_bag(6, 4, 9, 0);
            const SmileParams params = perturbed_params({4, 5, 3}, 9);
            BagGraph bg = build_bag_graph(bag, params, kind, {0.5, 0.5}, mode, true);
            for (ParamId id : kAllParams) {
                CAPTURE(SmileParams::name(id));
                CHECK(finite_diff_check(bg.graph, *bg.loss, bg.param(id), 1e-5) < 1e-4);
            }
        }
    }
}

TEST_CASE("attention trace JSON")
{
    const AttentionTrace t = scale_adaptive_attention(std::vector<double>{1, 2, 4}, {});
    const auto j = trace_to_json("b", t);
    CHECK(j["bag_id"] == "b");
    CHECK(j["instances"].size() == 3);
    double total = 0.0;
    for (const auto& inst : j["instances"]) {
        total += inst["weight"].get<double>();
    }
    CHECK(std::abs(total - 1.0) < 1e-12);
    CHECK(j["instances"][2]["mask"] == 1);
}

TEST_CASE("model kind names round-trip")
{
    for (ModelKind k : {ModelKind::smile, ModelKind::abmil, ModelKind::maxpool, ModelKind::meanpool}) {
        CHECK(parse_model_kind(to_string(k)) == k);
    }
    CHECK_THROWS_AS(parse_model_kind("transmil"), ConfigError);
}
