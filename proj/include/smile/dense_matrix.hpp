#pragma once

#include <cstddef>
#include <initializer_list>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace smile {

/// Cache-line aligned storage. Vectorized reductions peel a different number
/// of leading elements depending on the address, so a fixed alignment keeps
/// results bitwise reproducible from run to run.
template <class T>
struct AlignedAllocator {
    using value_type = T;
    static constexpr std::align_val_t alignment{64};

    AlignedAllocator() = default;
    template <class U>
    AlignedAllocator(const AlignedAllocator<U>&) noexcept
    {
    }

    T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), alignment)); }
    void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, alignment); }

    template <class U>
    bool operator==(const AlignedAllocator<U>&) const noexcept
    {
        return true;
    }
};

/// Row-major matrix of doubles. Vectors are represented as 1 x n or n x 1.
class DenseMatrix {
public:
    DenseMatrix() = default;
    DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    DenseMatrix(std::size_t rows, std::size_t cols, std::span<const double> values);
    DenseMatrix(std::initializer_list<std::initializer_list<double>> rows);

    static DenseMatrix identity(std::size_t n);
    static DenseMatrix row_vector(std::span<const double> values);
    static DenseMatrix column_vector(std::span<const double> values);

    std::size_t rows() const noexcept { return m_rows; }
    std::size_t cols() const noexcept { return m_cols; }
    std::size_t size() const noexcept { return m_values.size(); }
    bool empty() const noexcept { return m_values.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return m_values[r * m_cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return m_values[r * m_cols + c]; }
    double& operator[](std::size_t i) { return m_values[i]; }
    double operator[](std::size_t i) const { return m_values[i]; }

    std::span<double> values() noexcept { return m_values; }
    std::span<const double> values() const noexcept { return m_values; }
    std::span<double> row(std::size_t r) { return {m_values.data() + r * m_cols, m_cols}; }
    std::span<const double> row(std::size_t r) const { return {m_values.data() + r * m_cols, m_cols}; }

    bool same_shape(const DenseMatrix& other) const noexcept
    {
        return m_rows == other.m_rows && m_cols == other.m_cols;
    }
    bool all_finite() const noexcept;
    void fill(double v);

    /// "RxC", used in error messages.
    std::string shape_string() const;

    friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;

private:
    std::size_t m_rows = 0;
    std::size_t m_cols = 0;
    std::vector<double, AlignedAllocator<double>> m_values;
};

/// max_i |a_i - b_i|; shapes must match.
double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b);

}  // namespace smile
