#include "smile/dense_matrix.hpp"

#include <algorithm>
#include <cmath>

#include "smile/errors.hpp"

namespace smile {

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, double fill)
  : m_rows(rows), m_cols(cols), m_values(rows * cols, fill)
{ }

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, std::span<const double> values)
  : m_rows(rows), m_cols(cols), m_values(values.begin(), values.end())
{
    if (m_values.size() != rows * cols) {
        throw ShapeError("DenseMatrix: " + std::to_string(m_values.size()) + " values for shape "
                         + shape_string());
    }
}

DenseMatrix::DenseMatrix(std::initializer_list<std::initializer_list<double>> rows)
  : m_rows(rows.size()), m_cols(rows.size() ? rows.begin()->size() : 0)
{
    m_values.reserve(m_rows * m_cols);
    for (const auto& r : rows) {
        if (r.size() != m_cols) {
            throw ShapeError("DenseMatrix: ragged initializer list");
        }
        m_values.insert(m_values.end(), r.begin(), r.end());
    }
}

DenseMatrix DenseMatrix::identity(std::size_t n)
{
    DenseMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        m(i, i) = 1.0;
    }
    return m;
}

DenseMatrix DenseMatrix::row_vector(std::span<const double> values)
{
    return {1, values.size(), std::vector<double>(values.begin(), values.end())};
}

DenseMatrix DenseMatrix::column_vector(std::span<const double> values)
{
    return {values.size(), 1, std::vector<double>(values.begin(), values.end())};
}

bool DenseMatrix::all_finite() const noexcept
{
    return std::all_of(m_values.begin(), m_values.end(), [](double v) { return std::isfinite(v); });
}

void DenseMatrix::fill(double v)
{
    std::fill(m_values.begin(), m_values.end(), v);
}

std::string DenseMatrix::shape_string() const
{
    return std::to_string(m_rows) + "x" + std::to_string(m_cols);
}

double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b)
{
    if (!a.same_shape(b)) {
        throw ShapeError("max_abs_diff: " + a.shape_string() + " vs " + b.shape_string());
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        worst = std::max(worst, std::abs(a[i] - b[i]));
    }
    return worst;
}

}  // namespace smile
