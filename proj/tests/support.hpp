#pragma once

#include <cstdint>
#include <random>
#include <string>

#include "smile/model.hpp"

namespace smile::test {

inline FeatureBag random_bag(std::size_t n, std::size_t dim, std::uint64_t seed, int label = 1)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    FeatureBag bag;
    bag.id = "bag_" + std::to_string(seed);
    bag.label = label;
    bag.features = DenseMatrix(n, dim);
    for (double& v : bag.features.values()) {
        v = noise(rng);
    }
    return bag;
}

/// Initialized parameters with every tensor nudged away from its default, so
/// biases, beta and the running statistics are not trivially zero or one.
inline SmileParams perturbed_params(const ModelDims& dims, std::uint64_t seed, double scale = 0.3)
{
    SmileParams p = SmileParams::initialize(dims, seed);
    std::mt19937_64 rng(seed ^ 0x5eedULL);
    std::uniform_real_distribution<double> u(-scale, scale);
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

/// Hand-written 3-instance, l=3, d=2, e=2 model shared with
/// tests/oracles/forward_oracle.py.
inline FeatureBag tiny_bag()
{
    FeatureBag bag;
    bag.id = "tiny";
    bag.label = 1;
    bag.features = DenseMatrix{{0.5, -1.0, 2.0}, {1.5, 0.0, -0.5}, {-0.2, 0.3, 0.8}};
    return bag;
}

inline SmileParams tiny_params()
{
    SmileParams p;
    p.bn_gamma = DenseMatrix{{1.0, 0.5, 2.0}};
    p.bn_beta = DenseMatrix{{0.0, 0.1, -0.1}};
    p.bn_running_mean = DenseMatrix{{0.1, -0.2, 0.3}};
    p.bn_running_var = DenseMatrix{{1.5, 0.5, 2.0}};
    p.adapter_weight = DenseMatrix{{0.2, -0.3}, {0.4, 0.1}, {-0.5, 0.6}};
    p.adapter_bias = DenseMatrix{{0.05, -0.05}};
    p.attn_v = DenseMatrix{{0.3, -0.2}, {0.1, 0.4}};
    p.attn_u = DenseMatrix{{-0.6, 0.2}, {0.5, 0.3}};
    p.attn_w = DenseMatrix{{0.7, -0.4}};
    p.clf_weight = DenseMatrix{{0.9}, {-1.1}};
    p.clf_bias = DenseMatrix{{0.2}};
    return p;
}

}  // namespace smile::test
