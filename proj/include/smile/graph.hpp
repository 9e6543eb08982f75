#pragma once

#include <compare>
#include <cstddef>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "smile/dense_matrix.hpp"

namespace smile {

enum class OpKind {
    constant,
    parameter,
    matmul,
    matmul_nt,
    add,
    sub,
    mul,
    tanh,
    sigmoid,
    relu,
    softmax,
    sum,
    batchnorm,
    transpose,
    mean_rows,
    max_rows,
    binary_cross_entropy,
};

std::string_view to_string(OpKind op);

enum class Mode { train, eval };

/// Handle to a node of a Graph. Only meaningful for the graph that created it.
struct Expr {
    std::size_t index = 0;
    friend auto operator<=>(const Expr&, const Expr&) = default;
};

inline constexpr double kBatchNormEpsilon = 1e-5;
inline constexpr double kProbabilityClamp = 1e-12;

/// Parameter gradients produced by Graph::gradient, one entry per parameter
/// leaf in creation order.
class GradientMap {
public:
    const DenseMatrix& at(Expr param) const;
    bool contains(Expr param) const;
    auto begin() const { return m_entries.begin(); }
    auto end() const { return m_entries.end(); }
    std::size_t size() const { return m_entries.size(); }

private:
    friend class Graph;
    std::vector<std::pair<Expr, DenseMatrix>> m_entries;
};

/// Lazily evaluated expression graph over dense matrices with reverse-mode
/// differentiation.
///
/// Nodes are appended in construction order, so every node's inputs precede
/// it and the node index is a valid topological order. Leaves (constants and
/// parameters) carry values from creation; interior nodes are computed by
/// evaluate() and cached until a leaf changes through set_value().
///
/// Binary elementwise ops accept equal shapes, or an n x c left operand with a
/// 1 x c right operand (row broadcast, used for biases).
class Graph {
public:
    Expr constant(DenseMatrix value, std::string name = {});
    Expr parameter(DenseMatrix value, std::string name = {});
    /// Leaves that read `value` in place instead of copying it. The matrix
    /// must outlive the graph and stay unchanged while the graph is in use;
    /// set_value() detaches the leaf onto its own copy.
    Expr constant_ref(const DenseMatrix& value, std::string name = {});
    Expr parameter_ref(const DenseMatrix& value, std::string name = {});

    /// Replaces a leaf value and invalidates every cached interior value.
    void set_value(Expr leaf, DenseMatrix value);

    Expr matmul(Expr a, Expr b);
    /// a * transpose(b).
    Expr matmul_nt(Expr a, Expr b);
    Expr add(Expr a, Expr b);
    Expr sub(Expr a, Expr b);
    Expr mul(Expr a, Expr b);
    Expr tanh(Expr x);
    Expr sigmoid(Expr x);
    Expr relu(Expr x);
    /// Row-wise softmax.
    Expr softmax(Expr x);
    /// Sum of all entries, 1 x 1.
    Expr sum(Expr x);
    Expr transpose(Expr x);
    /// Column means over rows, 1 x c.
    Expr mean_rows(Expr x);
    /// Column maxima over rows, 1 x c. Ties route the gradient to the first row.
    Expr max_rows(Expr x);

    /// Per-column batch normalization of an n x c input with 1 x c gamma/beta.
    /// In train mode the statistics are the biased mean/variance over the n
    /// rows; in eval mode the supplied running statistics are used.
    Expr batchnorm(Expr x, Expr gamma, Expr beta, Mode mode, const DenseMatrix& running_mean = {},
                   const DenseMatrix& running_var = {}, double epsilon = kBatchNormEpsilon);

    /// -[y log p + (1-y) log(1-p)] of a 1 x 1 probability with p clamped to
    /// [1e-12, 1 - 1e-12]. The clamp has zero derivative outside the range.
    Expr binary_cross_entropy(Expr probability, int label);

    const DenseMatrix& evaluate(Expr root);

    /// Cached forward value; throws if the node has not been evaluated.
    const DenseMatrix& value(Expr node) const;

    /// Reverse-mode accumulation of seed . d(root)/d(param) for every parameter.
    GradientMap gradient(Expr root, const DenseMatrix& seed);

    /// Batch mean / biased variance computed by a train-mode batchnorm node.
    const DenseMatrix& batch_mean(Expr bn) const;
    const DenseMatrix& batch_variance(Expr bn) const;

    OpKind kind(Expr node) const;
    std::string_view name(Expr node) const;
    std::size_t node_count() const noexcept { return m_nodes.size(); }

private:
    struct Node {
        OpKind op;
        std::size_t inputs[3] = {0, 0, 0};
        std::size_t input_count = 0;
        std::string name;
        bool evaluated = false;
        bool requires_grad = false;
        DenseMatrix value;
        const DenseMatrix* external = nullptr;
        DenseMatrix grad;
        // batchnorm
        Mode mode = Mode::train;
        double epsilon = kBatchNormEpsilon;
        DenseMatrix mean;
        DenseMatrix variance;
        DenseMatrix inv_std;
        DenseMatrix normalized;
        // binary_cross_entropy
        int label = 0;
        // max_rows
        std::vector<std::size_t> argmax;
    };

    Expr push(Node node);
    Expr unary(OpKind op, Expr x);
    Expr binary(OpKind op, Expr a, Expr b);
    const Node& node(Expr e) const;
    const DenseMatrix& data(std::size_t index) const;
    std::string describe(std::size_t index) const;
    void forward(std::size_t index);
    void backward(std::size_t index);

    std::vector<Node> m_nodes;
};

/// Largest relative discrepancy between the analytic gradient of a scalar
/// root with respect to `param` and its central finite difference:
/// max_i |g_i - fd_i| / max(|g_i|, |fd_i|, 1e-8).
/// Leaves the parameter value and the graph state as it found them.
double finite_diff_check(Graph& graph, Expr root, Expr param, double step);

}  // namespace smile
