#include <doctest.h>

#include <cmath>
#include <limits>

#include "smile/dense_matrix.hpp"
#include "smile/errors.hpp"

using namespace smile;

TEST_CASE("construction and indexing are row-major")
{
    const DenseMatrix m{{1, 2, 3}, {4, 5, 6}};
    CHECK(m.rows() == 2);
    CHECK(m.cols() == 3);
    CHECK(m(1, 0) == 4);
    CHECK(m[2] == 3);
    CHECK(m.row(1)[2] == 6);
    CHECK(m.shape_string() == "2x3");
}

TEST_CASE("size mismatches are rejected")
{
    CHECK_THROWS_AS(DenseMatrix(2, 2, std::vector<double>{1, 2, 3}), ShapeError);
    CHECK_THROWS_AS((DenseMatrix{{1, 2}, {3}}), ShapeError);
    CHECK_THROWS_AS(max_abs_diff(DenseMatrix(1, 2), DenseMatrix(2, 1)), ShapeError);
}

TEST_CASE("helpers")
{
    const DenseMatrix i3 = DenseMatrix::identity(3);
    CHECK(i3(0, 0) == 1);
    CHECK(i3(0, 1) == 0);
    const std::vector<double> v{1, 2};
    CHECK(DenseMatrix::row_vector(v).shape_string() == "1x2");
    CHECK(DenseMatrix::column_vector(v).shape_string() == "2x1");
    CHECK(max_abs_diff(DenseMatrix{{1, 2}}, DenseMatrix{{1.5, 1}}) == 1.0);

    DenseMatrix m(2, 2, 3.0);
    CHECK(m.all_finite());
    m(1, 1) = std::numeric_limits<double>::quiet_NaN();
    CHECK_FALSE(m.all_finite());
    m.fill(0.0);
    CHECK(m == DenseMatrix(2, 2));
}
