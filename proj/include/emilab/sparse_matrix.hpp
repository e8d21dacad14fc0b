// Copyright The emilab Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "emilab/error.hpp"

namespace emilab {

using Index = std::ptrdiff_t;
using Vector = std::vector<double>;

/// Coordinate-format entry used while assembling.
struct Triplet {
    Index row;
    Index col;
    double value;
};

/// Compressed sparse row matrix of reals.
///
/// After construction the column indices of every row are strictly increasing
/// and no exact zeros are stored. Duplicate triplets are summed in insertion
/// order, so symmetric element contributions produce bit-identical (i,j) and
/// (j,i) entries.
class SparseMatrix {
public:
    SparseMatrix() = default;

    SparseMatrix(Index rows, Index cols) : rows_(rows), cols_(cols), row_ptr_(rows + 1, 0) {}

    SparseMatrix(Index rows, Index cols, std::vector<Index> row_ptr, std::vector<Index> col_idx,
                 std::vector<double> values, bool symmetric = false)
        : rows_(rows), cols_(cols), row_ptr_(std::move(row_ptr)), col_idx_(std::move(col_idx)),
          values_(std::move(values)), symmetric_(symmetric)
    {
        if (static_cast<Index>(row_ptr_.size()) != rows_ + 1 || col_idx_.size() != values_.size() ||
            row_ptr_.back() != static_cast<Index>(values_.size()))
            throw ConfigError("SparseMatrix: inconsistent CSR arrays");
    }

    static SparseMatrix from_triplets(Index rows, Index cols, std::vector<Triplet> entries,
                                      bool symmetric = false)
    {
        std::stable_sort(entries.begin(), entries.end(), [](const Triplet& a, const Triplet& b) {
            return a.row != b.row ? a.row < b.row : a.col < b.col;
        });
        std::vector<Index> ptr(rows + 1, 0);
        std::vector<Index> idx;
        std::vector<double> val;
        idx.reserve(entries.size());
        val.reserve(entries.size());
        std::size_t k = 0;
        while (k < entries.size()) {
            const auto r = entries[k].row;
            const auto c = entries[k].col;
            if (r < 0 || r >= rows || c < 0 || c >= cols)
                throw ConfigError("SparseMatrix: triplet index out of range");
            double sum = 0.0;
            while (k < entries.size() && entries[k].row == r && entries[k].col == c)
                sum += entries[k++].value;
            if (sum != 0.0) {
                idx.push_back(c);
                val.push_back(sum);
                ++ptr[r + 1];
            }
        }
        std::partial_sum(ptr.begin(), ptr.end(), ptr.begin());
        return SparseMatrix(rows, cols, std::move(ptr), std::move(idx), std::move(val), symmetric);
    }

    static SparseMatrix identity(Index n)
    {
        std::vector<Index> ptr(n + 1);
        std::iota(ptr.begin(), ptr.end(), Index{0});
        std::vector<Index> idx(n);
        std::iota(idx.begin(), idx.end(), Index{0});
        return SparseMatrix(n, n, std::move(ptr), std::move(idx), std::vector<double>(n, 1.0), true);
    }

    static SparseMatrix diagonal(std::span<const double> d)
    {
        std::vector<Triplet> t;
        for (std::size_t i = 0; i < d.size(); ++i)
            t.push_back({Index(i), Index(i), d[i]});
        const auto n = static_cast<Index>(d.size());
        return from_triplets(n, n, std::move(t), true);
    }

    Index rows() const { return rows_; }
    Index cols() const { return cols_; }
    Index nnz() const { return static_cast<Index>(values_.size()); }
    bool symmetric() const { return symmetric_; }
    void set_symmetric(bool s) { symmetric_ = s; }

    std::span<const Index> row_ptr() const { return row_ptr_; }
    std::span<const Index> col_idx() const { return col_idx_; }
    std::span<const double> values() const { return values_; }
    std::span<double> values() { return values_; }

    std::span<const Index> row_cols(Index r) const
    {
        return {col_idx_.data() + row_ptr_[r], static_cast<std::size_t>(row_ptr_[r + 1] - row_ptr_[r])};
    }
    std::span<const double> row_values(Index r) const
    {
        return {values_.data() + row_ptr_[r], static_cast<std::size_t>(row_ptr_[r + 1] - row_ptr_[r])};
    }

    /// Entry lookup by binary search; zero when not stored.
    double at(Index r, Index c) const
    {
        const auto cols = row_cols(r);
        const auto it = std::lower_bound(cols.begin(), cols.end(), c);
        if (it == cols.end() || *it != c)
            return 0.0;
        return values_[row_ptr_[r] + (it - cols.begin())];
    }

    Vector diagonal_values() const
    {
        Vector d(std::min(rows_, cols_), 0.0);
        for (Index r = 0; r < static_cast<Index>(d.size()); ++r)
            d[r] = at(r, r);
        return d;
    }

    void multiply(std::span<const double> x, std::span<double> y) const
    {
        for (Index r = 0; r < rows_; ++r) {
            double s = 0.0;
            for (Index k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k)
                s += values_[k] * x[col_idx_[k]];
            y[r] = s;
        }
    }

    Vector operator*(std::span<const double> x) const
    {
        if (static_cast<Index>(x.size()) != cols_)
            throw ConfigError("SparseMatrix: multiply dimension mismatch");
        Vector y(rows_);
        multiply(x, y);
        return y;
    }

    SparseMatrix transpose() const
    {
        std::vector<Index> ptr(cols_ + 1, 0);
        for (auto c : col_idx_)
            ++ptr[c + 1];
        std::partial_sum(ptr.begin(), ptr.end(), ptr.begin());
        std::vector<Index> next(ptr.begin(), ptr.end() - 1);
        std::vector<Index> idx(values_.size());
        std::vector<double> val(values_.size());
        for (Index r = 0; r < rows_; ++r)
            for (Index k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) {
                const auto dst = next[col_idx_[k]]++;
                idx[dst] = r;
                val[dst] = values_[k];
            }
        return SparseMatrix(cols_, rows_, std::move(ptr), std::move(idx), std::move(val), symmetric_);
    }

    SparseMatrix scaled(double alpha) const
    {
        SparseMatrix out = *this;
        for (auto& v : out.values_)
            v *= alpha;
        if (alpha == 0.0)
            return SparseMatrix(rows_, cols_);
        return out;
    }

    /// Copy of rows [r0, r0+nr) and columns [c0, c0+nc).
    SparseMatrix block(Index r0, Index nr, Index c0, Index nc) const
    {
        std::vector<Index> ptr(nr + 1, 0);
        std::vector<Index> idx;
        std::vector<double> val;
        for (Index r = 0; r < nr; ++r) {
            const auto cols = row_cols(r0 + r);
            const auto vals = row_values(r0 + r);
            const auto lo = std::lower_bound(cols.begin(), cols.end(), c0) - cols.begin();
            const auto hi = std::lower_bound(cols.begin(), cols.end(), c0 + nc) - cols.begin();
            for (auto k = lo; k < hi; ++k) {
                idx.push_back(cols[k] - c0);
                val.push_back(vals[k]);
            }
            ptr[r + 1] = static_cast<Index>(idx.size());
        }
        return SparseMatrix(nr, nc, std::move(ptr), std::move(idx), std::move(val),
                            symmetric_ && r0 == c0 && nr == nc);
    }

    std::vector<Triplet> triplets(Index row_offset = 0, Index col_offset = 0) const
    {
        std::vector<Triplet> t;
        t.reserve(values_.size());
        for (Index r = 0; r < rows_; ++r)
            for (Index k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k)
                t.push_back({r + row_offset, col_idx_[k] + col_offset, values_[k]});
        return t;
    }

    double norm_inf() const
    {
        double m = 0.0;
        for (Index r = 0; r < rows_; ++r) {
            double s = 0.0;
            for (auto v : row_values(r))
                s += std::abs(v);
            m = std::max(m, s);
        }
        return m;
    }

    double max_abs() const
    {
        double m = 0.0;
        for (auto v : values_)
            m = std::max(m, std::abs(v));
        return m;
    }

    /// True when the stored pattern and values equal those of the transpose exactly.
    bool is_symmetric_exact() const
    {
        if (rows_ != cols_)
            return false;
        for (Index r = 0; r < rows_; ++r)
            for (Index k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k)
                if (at(col_idx_[k], r) != values_[k])
                    return false;
        return true;
    }

    Eigen::MatrixXd to_dense() const
    {
        Eigen::MatrixXd d = Eigen::MatrixXd::Zero(rows_, cols_);
        for (Index r = 0; r < rows_; ++r)
            for (Index k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k)
                d(r, col_idx_[k]) += values_[k];
        return d;
    }

    Eigen::SparseMatrix<double> to_eigen() const
    {
        std::vector<Eigen::Triplet<double>> t;
        t.reserve(values_.size());
        for (Index r = 0; r < rows_; ++r)
            for (Index k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k)
                t.emplace_back(r, col_idx_[k], values_[k]);
        Eigen::SparseMatrix<double> m(rows_, cols_);
        m.setFromTriplets(t.begin(), t.end());
        return m;
    }

private:
    Index rows_ = 0;
    Index cols_ = 0;
    std::vector<Index> row_ptr_{0};
    std::vector<Index> col_idx_;
    std::vector<double> values_;
    bool symmetric_ = false;
};

/// alpha*A + beta*B.
inline SparseMatrix add(const SparseMatrix& a, const SparseMatrix& b, double alpha = 1.0, double beta = 1.0)
{
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw ConfigError("add: dimension mismatch");
    std::vector<Triplet> t;
    t.reserve(static_cast<std::size_t>(a.nnz() + b.nnz()));
    for (Index r = 0; r < a.rows(); ++r) {
        const auto ac = a.row_cols(r);
        const auto av = a.row_values(r);
        for (std::size_t k = 0; k < ac.size(); ++k)
            t.push_back({r, ac[k], alpha * av[k]});
        const auto bc = b.row_cols(r);
        const auto bv = b.row_values(r);
        for (std::size_t k = 0; k < bc.size(); ++k)
            t.push_back({r, bc[k], beta * bv[k]});
    }
    return SparseMatrix::from_triplets(a.rows(), a.cols(), std::move(t), a.symmetric() && b.symmetric());
}

/// Sparse product A*B (row-wise accumulation with a dense marker).
inline SparseMatrix multiply(const SparseMatrix& a, const SparseMatrix& b)
{
    if (a.cols() != b.rows())
        throw ConfigError("multiply: dimension mismatch");
    std::vector<Index> ptr(a.rows() + 1, 0);
    std::vector<Index> idx;
    std::vector<double> val;
    std::vector<Index> marker(b.cols(), -1);
    std::vector<double> acc(b.cols(), 0.0);
    std::vector<Index> pattern;
    for (Index r = 0; r < a.rows(); ++r) {
        pattern.clear();
        const auto acols = a.row_cols(r);
        const auto avals = a.row_values(r);
        for (std::size_t k = 0; k < acols.size(); ++k) {
            const auto brow = acols[k];
            const auto bcols = b.row_cols(brow);
            const auto bvals = b.row_values(brow);
            for (std::size_t m = 0; m < bcols.size(); ++m) {
                const auto c = bcols[m];
                if (marker[c] != r) {
                    marker[c] = r;
                    acc[c] = 0.0;
                    pattern.push_back(c);
                }
                acc[c] += avals[k] * bvals[m];
            }
        }
        std::sort(pattern.begin(), pattern.end());
        for (auto c : pattern)
            if (acc[c] != 0.0) {
                idx.push_back(c);
                val.push_back(acc[c]);
            }
        ptr[r + 1] = static_cast<Index>(idx.size());
    }
    return SparseMatrix(a.rows(), b.cols(), std::move(ptr), std::move(idx), std::move(val));
}

inline double dot(std::span<const double> a, std::span<const double> b)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        s += a[i] * b[i];
    return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline double norm_inf(std::span<const double> a)
{
    double m = 0.0;
    for (auto v : a)
        m = std::max(m, std::abs(v));
    return m;
}

/// ||b - A x||_2 / ||b||_2, or ||A x||_2 when b is zero.
inline double relative_residual(const SparseMatrix& a, std::span<const double> x, std::span<const double> b)
{
    Vector r = a * x;
    for (std::size_t i = 0; i < r.size(); ++i)
        r[i] = b[i] - r[i];
    const double nb = norm2(b);
    return nb > 0.0 ? norm2(r) / nb : norm2(r);
}

inline Eigen::Map<const Eigen::VectorXd> as_eigen(std::span<const double> v)
{
    return {v.data(), static_cast<Eigen::Index>(v.size())};
}

} // namespace emilab
