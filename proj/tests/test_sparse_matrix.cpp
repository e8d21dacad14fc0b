// Copyright The emilab Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <sstream>

#include "emilab/io.hpp"
#include "emilab/sparse_matrix.hpp"
#include "test_util.hpp"

using namespace emilab;

TEST(SparseMatrix, TripletsAreSummedSortedAndZerosDropped)
{
    const auto m = SparseMatrix::from_triplets(3, 3, {{2, 1, 1.0}, {0, 2, 3.0}, {2, 1, 2.0}, {1, 1, 1.0}, {1, 1, -1.0}});
    EXPECT_EQ(m.nnz(), 2);
    EXPECT_DOUBLE_EQ(m.at(2, 1), 3.0);
    EXPECT_DOUBLE_EQ(m.at(0, 2), 3.0);
    EXPECT_DOUBLE_EQ(m.at(1, 1), 0.0);
    for (Index r = 0; r < m.rows(); ++r) {
        const auto cols = m.row_cols(r);
        EXPECT_TRUE(std::is_sorted(cols.begin(), cols.end()));
    }
}

TEST(SparseMatrix, OutOfRangeTripletThrows)
{
    EXPECT_THROW(SparseMatrix::from_triplets(2, 2, {{2, 0, 1.0}}), ConfigError);
}

TEST(SparseMatrix, ProductsMatchDense)
{
    const auto a = testutil::poisson_2d(5, 0.5);
    auto bt = a.triplets();
    bt.push_back({0, 7, 2.5});
    const auto b = SparseMatrix::from_triplets(25, 25, bt);
    const Eigen::MatrixXd ref = a.to_dense() * b.to_dense();
    EXPECT_LT((multiply(a, b).to_dense() - ref).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_EQ((b.transpose().to_dense() - b.to_dense().transpose()).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_LT((add(a, b, 2.0, -1.0).to_dense() - (2.0 * a.to_dense() - b.to_dense())).cwiseAbs().maxCoeff(), 1e-14);

    const auto x = testutil::random_vector(25, 3);
    const Eigen::VectorXd y = a.to_dense() * as_eigen(x);
    const auto ys = a * x;
    for (int i = 0; i < 25; ++i)
        EXPECT_NEAR(ys[i], y[i], 1e-14);
}

TEST(SparseMatrix, BlockExtraction)
{
    const auto a = testutil::poisson_1d(6);
    const auto b = a.block(2, 3, 1, 4);
    EXPECT_EQ(b.rows(), 3);
    EXPECT_EQ(b.cols(), 4);
    EXPECT_DOUBLE_EQ(b.at(0, 0), -1.0);
    EXPECT_DOUBLE_EQ(b.at(0, 1), 2.0);
    EXPECT_DOUBLE_EQ(b.at(2, 3), 2.0);
}

TEST(SparseMatrix, SymmetryCheckIsExact)
{
    auto t = testutil::poisson_1d(4).triplets();
    EXPECT_TRUE(SparseMatrix::from_triplets(4, 4, t).is_symmetric_exact());
    t.push_back({0, 3, 1e-17});
    EXPECT_FALSE(SparseMatrix::from_triplets(4, 4, t).is_symmetric_exact());
}

TEST(MatrixMarket, SymmetricRoundTripIsBitExact)
{
    auto t = testutil::poisson_2d(4).triplets();
    for (auto& e : t)
        e.value /= 3.0;
    const auto a = SparseMatrix::from_triplets(16, 16, t, true);
    std::stringstream ss;
    io::write_matrix_market(ss, a, true);
    EXPECT_NE(ss.str().find("symmetric"), std::string::npos);
    const auto b = io::read_matrix_market(ss);
    ASSERT_EQ(b.nnz(), a.nnz());
    for (Index r = 0; r < a.rows(); ++r)
        for (auto c : a.row_cols(r))
            EXPECT_EQ(a.at(r, c), b.at(r, c));
}

TEST(MatrixMarket, GeneralRoundTrip)
{
    const auto a = SparseMatrix::from_triplets(2, 3, {{0, 2, 1.5}, {1, 0, -2.0}});
    std::stringstream ss;
    io::write_matrix_market(ss, a, false);
    const auto b = io::read_matrix_market(ss);
    EXPECT_EQ(b.rows(), 2);
    EXPECT_EQ(b.cols(), 3);
    EXPECT_EQ(b.at(0, 2), 1.5);
    EXPECT_EQ(b.at(1, 0), -2.0);
}

TEST(MatrixMarket, RejectsUnsupportedBanner)
{
    std::stringstream ss("%%MatrixMarket matrix array real general\n2 2\n1\n2\n3\n4\n");
    EXPECT_THROW(io::read_matrix_market(ss), ConfigError);
    std::stringstream asym;
    EXPECT_THROW(io::write_matrix_market(asym, SparseMatrix::from_triplets(2, 2, {{0, 1, 1.0}}), true), ConfigError);
}
