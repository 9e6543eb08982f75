#include "smile/graph.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Core>

#include "smile/errors.hpp"

namespace smile {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapConst = Eigen::Map<const RowMajor>;
using MapMut = Eigen::Map<RowMajor>;

MapConst view(const DenseMatrix& m)
{
    return {m.values().data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols())};
}

MapMut view(DenseMatrix& m)
{
    return {m.values().data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols())};
}

double stable_sigmoid(double x)
{
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

bool is_leaf(OpKind op)
{
    return op == OpKind::constant || op == OpKind::parameter;
}

bool broadcasts(const DenseMatrix& a, const DenseMatrix& b)
{
    return b.rows() == 1 && a.rows() != 1 && b.cols() == a.cols();
}

// Adds `src` into `dst`, summing over rows when dst is the broadcast 1 x c operand.
void accumulate_broadcast(DenseMatrix& dst, const DenseMatrix& src, double sign = 1.0)
{
    if (dst.same_shape(src)) {
        view(dst) += sign * view(src);
        return;
    }
    view(dst) += sign * view(src).colwise().sum();
}

}  // namespace

std::string_view to_string(OpKind op)
{
    switch (op) {
    case OpKind::constant: return "constant";
    case OpKind::parameter: return "parameter";
    case OpKind::matmul: return "matmul";
    case OpKind::matmul_nt: return "matmul_nt";
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::mul: return "mul";
    case OpKind::tanh: return "tanh";
    case OpKind::sigmoid: return "sigmoid";
    case OpKind::relu: return "relu";
    case OpKind::softmax: return "softmax";
    case OpKind::sum: return "sum";
    case OpKind::batchnorm: return "batchnorm";
    case OpKind::transpose: return "transpose";
    case OpKind::mean_rows: return "mean_rows";
    case OpKind::max_rows: return "max_rows";
    case OpKind::binary_cross_entropy: return "binary_cross_entropy";
    }
    return "unknown";
}

const DenseMatrix& GradientMap::at(Expr param) const
{
    for (const auto& [key, grad] : m_entries) {
        if (key == param) {
            return grad;
        }
    }
    throw Error("GradientMap: node #" + std::to_string(param.index) + " is not a parameter");
}

bool GradientMap::contains(Expr param) const
{
    return std::any_of(m_entries.begin(), m_entries.end(), [&](const auto& e) { return e.first == param; });
}

Expr Graph::push(Node n)
{
    m_nodes.push_back(std::move(n));
    return Expr{m_nodes.size() - 1};
}

const Graph::Node& Graph::node(Expr e) const
{
    if (e.index >= m_nodes.size()) {
        throw Error("Graph: node #" + std::to_string(e.index) + " does not exist");
    }
    return m_nodes[e.index];
}

std::string Graph::describe(std::size_t index) const
{
    const Node& n = m_nodes[index];
    std::string s = "node #" + std::to_string(index) + " (" + std::string(to_string(n.op));
    if (!n.name.empty()) {
        s += " '" + n.name + "'";
    }
    return s + ")";
}

Expr Graph::constant(DenseMatrix value, std::string name)
{
    if (!value.all_finite()) {
        throw NonFiniteError("Graph: non-finite value for constant '" + name + "'");
    }
    Node n;
    n.op = OpKind::constant;
    n.name = std::move(name);
    n.value = std::move(value);
    n.evaluated = true;
    return push(std::move(n));
}

Expr Graph::parameter(DenseMatrix value, std::string name)
{
    if (!value.all_finite()) {
        throw NonFiniteError("Graph: non-finite value for parameter '" + name + "'");
    }
    Node n;
    n.op = OpKind::parameter;
    n.name = std::move(name);
    n.value = std::move(value);
    n.evaluated = true;
    n.requires_grad = true;
    return push(std::move(n));
}

Expr Graph::constant_ref(const DenseMatrix& value, std::string name)
{
    if (!value.all_finite()) {
        throw NonFiniteError("Graph: non-finite value for constant '" + name + "'");
    }
    Node n;
    n.op = OpKind::constant;
    n.name = std::move(name);
    n.external = &value;
    n.evaluated = true;
    return push(std::move(n));
}

Expr Graph::parameter_ref(const DenseMatrix& value, std::string name)
{
    if (!value.all_finite()) {
        throw NonFiniteError("Graph: non-finite value for parameter '" + name + "'");
    }
    Node n;
    n.op = OpKind::parameter;
    n.name = std::move(name);
    n.external = &value;
    n.evaluated = true;
    n.requires_grad = true;
    return push(std::move(n));
}

void Graph::set_value(Expr leaf, DenseMatrix value)
{
    Node& n = m_nodes.at(leaf.index);
    if (!is_leaf(n.op)) {
        throw Error("Graph::set_value: " + describe(leaf.index) + " is not a leaf");
    }
    if (!value.all_finite()) {
        throw NonFiniteError("Graph::set_value: non-finite value for " + describe(leaf.index));
    }
    n.value = std::move(value);
    n.external = nullptr;
    for (Node& other : m_nodes) {
        if (!is_leaf(other.op)) {
            other.evaluated = false;
        }
    }
}

Expr Graph::unary(OpKind op, Expr x)
{
    node(x);
    Node n;
    n.op = op;
    n.inputs[0] = x.index;
    n.input_count = 1;
    n.requires_grad = m_nodes[x.index].requires_grad;
    return push(std::move(n));
}

Expr Graph::binary(OpKind op, Expr a, Expr b)
{
    node(a);
    node(b);
    Node n;
    n.op = op;
    n.inputs[0] = a.index;
    n.inputs[1] = b.index;
    n.input_count = 2;
    n.requires_grad = m_nodes[a.index].requires_grad || m_nodes[b.index].requires_grad;
    return push(std::move(n));
}

Expr Graph::matmul(Expr a, Expr b) { return binary(OpKind::matmul, a, b); }
Expr Graph::matmul_nt(Expr a, Expr b) { return binary(OpKind::matmul_nt, a, b); }
Expr Graph::add(Expr a, Expr b) { return binary(OpKind::add, a, b); }
Expr Graph::sub(Expr a, Expr b) { return binary(OpKind::sub, a, b); }
Expr Graph::mul(Expr a, Expr b) { return binary(OpKind::mul, a, b); }
Expr Graph::tanh(Expr x) { return unary(OpKind::tanh, x); }
Expr Graph::sigmoid(Expr x) { return unary(OpKind::sigmoid, x); }
Expr Graph::relu(Expr x) { return unary(OpKind::relu, x); }
Expr Graph::softmax(Expr x) { return unary(OpKind::softmax, x); }
Expr Graph::sum(Expr x) { return unary(OpKind::sum, x); }
Expr Graph::transpose(Expr x) { return unary(OpKind::transpose, x); }
Expr Graph::mean_rows(Expr x) { return unary(OpKind::mean_rows, x); }
Expr Graph::max_rows(Expr x) { return unary(OpKind::max_rows, x); }

Expr Graph::batchnorm(Expr x, Expr gamma, Expr beta, Mode mode, const DenseMatrix& running_mean,
                      const DenseMatrix& running_var, double epsilon)
{
    node(x);
    node(gamma);
    node(beta);
    Node n;
    n.op = OpKind::batchnorm;
    n.inputs[0] = x.index;
    n.inputs[1] = gamma.index;
    n.inputs[2] = beta.index;
    n.input_count = 3;
    n.requires_grad = m_nodes[x.index].requires_grad || m_nodes[gamma.index].requires_grad
                      || m_nodes[beta.index].requires_grad;
    n.mode = mode;
    n.epsilon = epsilon;
    if (mode == Mode::eval) {
        if (!running_mean.same_shape(running_var) || running_mean.rows() != 1) {
            throw ShapeError("Graph::batchnorm: running statistics must be matching 1 x c rows, got "
                             + running_mean.shape_string() + " and " + running_var.shape_string());
        }
        n.mean = running_mean;
        n.variance = running_var;
    }
    return push(std::move(n));
}

Expr Graph::binary_cross_entropy(Expr probability, int label)
{
    if (label != 0 && label != 1) {
        throw Error("Graph::binary_cross_entropy: label must be 0 or 1");
    }
    Expr e = unary(OpKind::binary_cross_entropy, probability);
    m_nodes[e.index].label = label;
    return e;
}

const DenseMatrix& Graph::value(Expr e) const
{
    const Node& n = node(e);
    if (!n.evaluated) {
        throw Error("Graph::value: " + describe(e.index) + " has not been evaluated");
    }
    return data(e.index);
}

const DenseMatrix& Graph::data(std::size_t index) const
{
    const Node& n = m_nodes[index];
    return n.external != nullptr ? *n.external : n.value;
}

const DenseMatrix& Graph::batch_mean(Expr bn) const
{
    const Node& n = node(bn);
    if (n.op != OpKind::batchnorm || !n.evaluated) {
        throw Error("Graph::batch_mean: " + describe(bn.index) + " is not an evaluated batchnorm");
    }
    return n.mean;
}

const DenseMatrix& Graph::batch_variance(Expr bn) const
{
    const Node& n = node(bn);
    if (n.op != OpKind::batchnorm || !n.evaluated) {
        throw Error("Graph::batch_variance: " + describe(bn.index) + " is not an evaluated batchnorm");
    }
    return n.variance;
}

OpKind Graph::kind(Expr e) const { return node(e).op; }
std::string_view Graph::name(Expr e) const { return node(e).name; }

const DenseMatrix& Graph::evaluate(Expr root)
{
    node(root);
    std::vector<char> needed(root.index + 1, 0);
    needed[root.index] = 1;
    for (std::size_t i = root.index + 1; i-- > 0;) {
        const Node& n = m_nodes[i];
        if (!needed[i] || n.evaluated) {
            continue;
        }
        for (std::size_t k = 0; k < n.input_count; ++k) {
            needed[n.inputs[k]] = 1;
        }
    }
    for (std::size_t i = 0; i <= root.index; ++i) {
        if (needed[i] && !m_nodes[i].evaluated) {
            forward(i);
            m_nodes[i].evaluated = true;
        }
    }
    return data(root.index);
}

void Graph::forward(std::size_t index)
{
    Node& n = m_nodes[index];
    const DenseMatrix& a = data(n.inputs[0]);
    auto mismatch = [&](const DenseMatrix& lhs, const DenseMatrix& rhs) {
        return ShapeError("shape mismatch at " + describe(index) + ": " + lhs.shape_string() + " vs "
                          + rhs.shape_string());
    };

    switch (n.op) {
    case OpKind::constant:
    case OpKind::parameter:
        return;
    case OpKind::matmul: {
        const DenseMatrix& b = data(n.inputs[1]);
        if (a.cols() != b.rows()) {
            throw mismatch(a, b);
        }
        n.value = DenseMatrix(a.rows(), b.cols());
        view(n.value).noalias() = view(a) * view(b);
        return;
    }
    case OpKind::matmul_nt: {
        const DenseMatrix& b = data(n.inputs[1]);
        if (a.cols() != b.cols()) {
            throw mismatch(a, b);
        }
        n.value = DenseMatrix(a.rows(), b.rows());
        view(n.value).noalias() = view(a) * view(b).transpose();
        return;
    }
    case OpKind::add:
    case OpKind::sub:
    case OpKind::mul: {
        const DenseMatrix& b = data(n.inputs[1]);
        const bool bcast = broadcasts(a, b);
        if (!a.same_shape(b) && !bcast) {
            throw mismatch(a, b);
        }
        n.value = a;
        for (std::size_t r = 0; r < a.rows(); ++r) {
            auto out = n.value.row(r);
            auto rhs = b.row(bcast ? 0 : r);
            for (std::size_t c = 0; c < a.cols(); ++c) {
                if (n.op == OpKind::add) {
                    out[c] += rhs[c];
                } else if (n.op == OpKind::sub) {
                    out[c] -= rhs[c];
                } else {
                    out[c] *= rhs[c];
                }
            }
        }
        return;
    }
    case OpKind::tanh:
        n.value = a;
        for (double& v : n.value.values()) {
            v = std::tanh(v);
        }
        return;
    case OpKind::sigmoid:
        n.value = a;
        for (double& v : n.value.values()) {
            v = stable_sigmoid(v);
        }
        return;
    case OpKind::relu:
        n.value = a;
        for (double& v : n.value.values()) {
            v = v > 0.0 ? v : 0.0;
        }
        return;
    case OpKind::softmax: {
        if (a.cols() == 0) {
            throw ShapeError("softmax over an empty row at " + describe(index));
        }
        n.value = a;
        for (std::size_t r = 0; r < a.rows(); ++r) {
            auto row = n.value.row(r);
            const double peak = *std::max_element(row.begin(), row.end());
            double total = 0.0;
            for (double& v : row) {
                v = std::exp(v - peak);
                total += v;
            }
            for (double& v : row) {
                v /= total;
            }
        }
        return;
    }
    case OpKind::sum: {
        double total = 0.0;
        for (double v : a.values()) {
            total += v;
        }
        n.value = DenseMatrix(1, 1, total);
        return;
    }
    case OpKind::transpose:
        n.value = DenseMatrix(a.cols(), a.rows());
        view(n.value) = view(a).transpose();
        return;
    case OpKind::mean_rows:
        if (a.rows() == 0) {
            throw ShapeError("mean over zero rows at " + describe(index));
        }
        n.value = DenseMatrix(1, a.cols());
        view(n.value) = view(a).colwise().sum() / static_cast<double>(a.rows());
        return;
    case OpKind::max_rows:
        if (a.rows() == 0) {
            throw ShapeError("max over zero rows at " + describe(index));
        }
        n.value = DenseMatrix(1, a.cols());
        n.argmax.assign(a.cols(), 0);
        for (std::size_t c = 0; c < a.cols(); ++c) {
            double best = a(0, c);
            for (std::size_t r = 1; r < a.rows(); ++r) {
                if (a(r, c) > best) {
                    best = a(r, c);
                    n.argmax[c] = r;
                }
            }
            n.value(0, c) = best;
        }
        return;
    case OpKind::batchnorm: {
        const DenseMatrix& gamma = data(n.inputs[1]);
        const DenseMatrix& beta = data(n.inputs[2]);
        if (gamma.rows() != 1 || gamma.cols() != a.cols()) {
            throw mismatch(a, gamma);
        }
        if (!gamma.same_shape(beta)) {
            throw mismatch(gamma, beta);
        }
        if (a.rows() == 0) {
            throw ShapeError("batchnorm over zero rows at " + describe(index));
        }
        const std::size_t rows = a.rows();
        const std::size_t cols = a.cols();
        if (n.mode == Mode::train) {
            n.mean = DenseMatrix(1, cols);
            n.variance = DenseMatrix(1, cols);
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t c = 0; c < cols; ++c) {
                    n.mean[c] += a(r, c);
                }
            }
            for (std::size_t c = 0; c < cols; ++c) {
                n.mean[c] /= static_cast<double>(rows);
            }
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t c = 0; c < cols; ++c) {
                    const double dev = a(r, c) - n.mean[c];
                    n.variance[c] += dev * dev;
                }
            }
            for (std::size_t c = 0; c < cols; ++c) {
                n.variance[c] /= static_cast<double>(rows);
            }
        } else if (n.mean.cols() != cols) {
            throw mismatch(a, n.mean);
        }
        n.inv_std = DenseMatrix(1, cols);
        for (std::size_t c = 0; c < cols; ++c) {
            n.inv_std[c] = 1.0 / std::sqrt(n.variance[c] + n.epsilon);
        }
        n.normalized = DenseMatrix(rows, cols);
        n.value = DenseMatrix(rows, cols);
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < cols; ++c) {
                const double xhat = (a(r, c) - n.mean[c]) * n.inv_std[c];
                n.normalized(r, c) = xhat;
                n.value(r, c) = gamma[c] * xhat + beta[c];
            }
        }
        return;
    }
    case OpKind::binary_cross_entropy: {
        if (a.rows() != 1 || a.cols() != 1) {
            throw ShapeError("binary_cross_entropy expects a 1x1 probability at " + describe(index) + ", got "
                             + a.shape_string());
        }
        const double p = std::clamp(a[0], kProbabilityClamp, 1.0 - kProbabilityClamp);
        const double loss = n.label == 1 ? -std::log(p) : -std::log(1.0 - p);
        n.value = DenseMatrix(1, 1, loss);
        return;
    }
    }
}

GradientMap Graph::gradient(Expr root, const DenseMatrix& seed)
{
    const Node& top = node(root);
    if (!top.evaluated) {
        throw BackwardBeforeForwardError("Graph::gradient: " + describe(root.index) + " has not been evaluated");
    }
    if (!seed.same_shape(data(root.index))) {
        throw ShapeError("Graph::gradient: seed " + seed.shape_string() + " does not match root "
                         + data(root.index).shape_string());
    }

    for (Node& n : m_nodes) {
        n.grad = DenseMatrix();
    }
    m_nodes[root.index].grad = seed;
    for (std::size_t i = root.index + 1; i-- > 0;) {
        Node& n = m_nodes[i];
        if (n.grad.empty() || !n.requires_grad || is_leaf(n.op)) {
            continue;
        }
        backward(i);
    }

    GradientMap out;
    for (std::size_t i = 0; i < m_nodes.size(); ++i) {
        Node& n = m_nodes[i];
        if (n.op != OpKind::parameter) {
            continue;
        }
        if (n.grad.empty()) {
            out.m_entries.emplace_back(Expr{i}, DenseMatrix(data(i).rows(), data(i).cols()));
        } else {
            out.m_entries.emplace_back(Expr{i}, std::move(n.grad));
            n.grad = DenseMatrix();
        }
    }
    return out;
}

void Graph::backward(std::size_t index)
{
    Node& n = m_nodes[index];
    const DenseMatrix& dy = n.grad;

    // Returns the gradient buffer of input k, or nullptr when it needs none.
    auto sink = [&](std::size_t k) -> DenseMatrix* {
        Node& in = m_nodes[n.inputs[k]];
        if (!in.requires_grad) {
            return nullptr;
        }
        if (in.grad.empty()) {
            in.grad = DenseMatrix(data(n.inputs[k]).rows(), data(n.inputs[k]).cols());
        }
        return &in.grad;
    };
    const DenseMatrix& a = data(n.inputs[0]);

    switch (n.op) {
    case OpKind::constant:
    case OpKind::parameter:
        return;
    case OpKind::matmul: {
        const DenseMatrix& b = data(n.inputs[1]);
        if (DenseMatrix* da = sink(0)) {
            view(*da).noalias() += view(dy) * view(b).transpose();
        }
        if (DenseMatrix* db = sink(1)) {
            view(*db).noalias() += view(a).transpose() * view(dy);
        }
        return;
    }
    case OpKind::matmul_nt: {
        const DenseMatrix& b = data(n.inputs[1]);
        if (DenseMatrix* da = sink(0)) {
            view(*da).noalias() += view(dy) * view(b);
        }
        if (DenseMatrix* db = sink(1)) {
            view(*db).noalias() += view(dy).transpose() * view(a);
        }
        return;
    }
    case OpKind::add:
        if (DenseMatrix* da = sink(0)) {
            view(*da) += view(dy);
        }
        if (DenseMatrix* db = sink(1)) {
            accumulate_broadcast(*db, dy);
        }
        return;
    case OpKind::sub:
        if (DenseMatrix* da = sink(0)) {
            view(*da) += view(dy);
        }
        if (DenseMatrix* db = sink(1)) {
            accumulate_broadcast(*db, dy, -1.0);
        }
        return;
    case OpKind::mul: {
        const DenseMatrix& b = data(n.inputs[1]);
        const bool bcast = !a.same_shape(b);
        if (DenseMatrix* da = sink(0)) {
            for (std::size_t r = 0; r < a.rows(); ++r) {
                auto rhs = b.row(bcast ? 0 : r);
                for (std::size_t c = 0; c < a.cols(); ++c) {
                    (*da)(r, c) += dy(r, c) * rhs[c];
                }
            }
        }
        if (DenseMatrix* db = sink(1)) {
            for (std::size_t r = 0; r < a.rows(); ++r) {
                for (std::size_t c = 0; c < a.cols(); ++c) {
                    (*db)(bcast ? 0 : r, c) += dy(r, c) * a(r, c);
                }
            }
        }
        return;
    }
    case OpKind::tanh:
        if (DenseMatrix* da = sink(0)) {
            for (std::size_t i = 0; i < dy.size(); ++i) {
                (*da)[i] += dy[i] * (1.0 - n.value[i] * n.value[i]);
            }
        }
        return;
    case OpKind::sigmoid:
        if (DenseMatrix* da = sink(0)) {
            for (std::size_t i = 0; i < dy.size(); ++i) {
                (*da)[i] += dy[i] * n.value[i] * (1.0 - n.value[i]);
            }
        }
        return;
    case OpKind::relu:
        if (DenseMatrix* da = sink(0)) {
            for (std::size_t i = 0; i < dy.size(); ++i) {
                (*da)[i] += a[i] > 0.0 ? dy[i] : 0.0;
            }
        }
        return;
    case OpKind::softmax:
        if (DenseMatrix* da = sink(0)) {
            for (std::size_t r = 0; r < a.rows(); ++r) {
                double dot = 0.0;
                for (std::size_t c = 0; c < a.cols(); ++c) {
                    dot += dy(r, c) * n.value(r, c);
                }
                for (std::size_t c = 0; c < a.cols(); ++c) {
                    (*da)(r, c) += n.value(r, c) * (dy(r, c) - dot);
                }
            }
        }
        return;
    case OpKind::sum:
        if (DenseMatrix* da = sink(0)) {
            for (double& v : da->values()) {
                v += dy[0];
            }
        }
        return;
    case OpKind::transpose:
        if (DenseMatrix* da = sink(0)) {
            view(*da) += view(dy).transpose();
        }
        return;
    case OpKind::mean_rows:
        if (DenseMatrix* da = sink(0)) {
            view(*da).rowwise() += view(dy).row(0) / static_cast<double>(a.rows());
        }
        return;
    case OpKind::max_rows:
        if (DenseMatrix* da = sink(0)) {
            for (std::size_t c = 0; c < a.cols(); ++c) {
                (*da)(n.argmax[c], c) += dy(0, c);
            }
        }
        return;
    case OpKind::batchnorm: {
        const DenseMatrix& gamma = data(n.inputs[1]);
        const std::size_t rows = a.rows();
        const std::size_t cols = a.cols();
        if (DenseMatrix* dgamma = sink(1)) {
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t c = 0; c < cols; ++c) {
                    (*dgamma)[c] += dy(r, c) * n.normalized(r, c);
                }
            }
        }
        if (DenseMatrix* dbeta = sink(2)) {
            accumulate_broadcast(*dbeta, dy);
        }
        DenseMatrix* dx = sink(0);
        if (dx == nullptr) {
            return;
        }
        if (n.mode == Mode::eval) {
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t c = 0; c < cols; ++c) {
                    (*dx)(r, c) += dy(r, c) * gamma[c] * n.inv_std[c];
                }
            }
            return;
        }
        // dx = inv_std / m * (m * dxhat - sum(dxhat) - xhat * sum(dxhat * xhat))
        const double m = static_cast<double>(rows);
        for (std::size_t c = 0; c < cols; ++c) {
            double sum_d = 0.0;
            double sum_dx = 0.0;
            for (std::size_t r = 0; r < rows; ++r) {
                const double dxhat = dy(r, c) * gamma[c];
                sum_d += dxhat;
                sum_dx += dxhat * n.normalized(r, c);
            }
            for (std::size_t r = 0; r < rows; ++r) {
                const double dxhat = dy(r, c) * gamma[c];
                (*dx)(r, c) += n.inv_std[c] / m * (m * dxhat - sum_d - n.normalized(r, c) * sum_dx);
            }
        }
        return;
    }
    case OpKind::binary_cross_entropy:
        if (DenseMatrix* da = sink(0)) {
            const double p = a[0];
            if (p > kProbabilityClamp && p < 1.0 - kProbabilityClamp) {
                (*da)[0] += dy[0] * (n.label == 1 ? -1.0 / p : 1.0 / (1.0 - p));
            }
        }
        return;
    }
}

double finite_diff_check(Graph& graph, Expr root, Expr param, double step)
{
    if (step <= 0.0) {
        throw Error("finite_diff_check: step must be positive");
    }
    if (graph.kind(param) != OpKind::parameter) {
        throw Error("finite_diff_check: node #" + std::to_string(param.index) + " is not a parameter");
    }
    const DenseMatrix& out = graph.evaluate(root);
    if (out.rows() != 1 || out.cols() != 1) {
        throw ShapeError("finite_diff_check: root must be scalar, got " + out.shape_string());
    }
    const DenseMatrix analytic = graph.gradient(root, DenseMatrix(1, 1, 1.0)).at(param);
    const DenseMatrix original = graph.value(param);

    double worst = 0.0;
    DenseMatrix probe = original;
    for (std::size_t i = 0; i < original.size(); ++i) {
        probe[i] = original[i] + step;
        graph.set_value(param, probe);
        const double up = graph.evaluate(root)[0];
        probe[i] = original[i] - step;
        graph.set_value(param, probe);
        const double down = graph.evaluate(root)[0];
        probe[i] = original[i];

        const double numeric = (up - down) / (2.0 * step);
        const double scale = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
        worst = std::max(worst, std::abs(analytic[i] - numeric) / scale);
    }
    graph.set_value(param, original);
    graph.evaluate(root);
    return worst;
}

}  // namespace smile
