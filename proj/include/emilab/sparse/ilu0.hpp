// Copyright The emilab Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "emilab/error.hpp"
#include "emilab/sparse/preconditioner.hpp"
#include "emilab/sparse_matrix.hpp"

namespace emilab::sparse {

/// Incomplete LU with zero fill-in on the pattern of A, natural ordering.
/// L (unit lower) and U share one CSR array; diag_pos_ points at U's diagonal.
class Ilu0 final : public Preconditioner {
public:
    explicit Ilu0(const SparseMatrix& a) : lu_(a)
    {
        if (a.rows() != a.cols())
            throw ConfigError("ILU(0) needs a square matrix");
        const auto n = a.rows();
        const auto ptr = lu_.row_ptr();
        const auto col = lu_.col_idx();
        auto val = lu_.values();

        diag_pos_.assign(n, -1);
        for (Index i = 0; i < n; ++i)
            for (auto k = ptr[i]; k < ptr[i + 1]; ++k)
                if (col[k] == i)
                    diag_pos_[i] = k;

        double diag_scale = 0.0;
        for (Index i = 0; i < n; ++i)
            if (diag_pos_[i] >= 0)
                diag_scale = std::max(diag_scale, std::abs(val[diag_pos_[i]]));
        if (diag_scale == 0.0)
            diag_scale = 1.0;
        const double pivot_floor = 1e-14 * diag_scale;
        shift_ = 1e-8 * diag_scale;

        std::vector<Index> pos(n, -1);
        for (Index i = 0; i < n; ++i) {
            if (diag_pos_[i] < 0)
                throw SolverError("ILU(0): structurally missing diagonal in row " + std::to_string(i));
            for (auto k = ptr[i]; k < ptr[i + 1]; ++k)
                pos[col[k]] = k;
            for (auto k = ptr[i]; k < ptr[i + 1] && col[k] < i; ++k) {
                const auto j = col[k];
                val[k] /= val[diag_pos_[j]];
                const double lij = val[k];
                for (auto m = diag_pos_[j] + 1; m < ptr[j + 1]; ++m)
                    if (pos[col[m]] >= 0)
                        val[pos[col[m]]] -= lij * val[m];
            }
            if (std::abs(val[diag_pos_[i]]) < pivot_floor) {
                val[diag_pos_[i]] += val[diag_pos_[i]] >= 0.0 ? shift_ : -shift_;
                shifted_rows_.push_back(i);
            }
            for (auto k = ptr[i]; k < ptr[i + 1]; ++k)
                pos[col[k]] = -1;
        }
    }

    void apply(std::span<const double> r, std::span<double> z) const override
    {
        const auto n = lu_.rows();
        const auto ptr = lu_.row_ptr();
        const auto col = lu_.col_idx();
        const auto val = lu_.values();
        for (Index i = 0; i < n; ++i) {
            double s = r[i];
            for (auto k = ptr[i]; k < diag_pos_[i]; ++k)
                s -= val[k] * z[col[k]];
            z[i] = s;
        }
        for (Index i = n - 1; i >= 0; --i) {
            double s = z[i];
            for (auto k = diag_pos_[i] + 1; k < ptr[i + 1]; ++k)
                s -= val[k] * z[col[k]];
            z[i] = s / val[diag_pos_[i]];
        }
    }

    std::string name() const override { return "ilu"; }

    /// Rows whose pivot fell below the floor and received a diagonal shift.
    const std::vector<Index>& shifted_rows() const { return shifted_rows_; }
    double shift_magnitude() const { return shift_; }
    const SparseMatrix& factors() const { return lu_; }

private:
    SparseMatrix lu_;
    std::vector<Index> diag_pos_;
    std::vector<Index> shifted_rows_;
    double shift_ = 0.0;
};

/// Keep only entries whose row and column fall in the same block; blocks are
/// given by consecutive offsets.
inline SparseMatrix block_diagonal_part(const SparseMatrix& a, std::span<const Index> offsets)
{
    std::vector<Index> block_of(a.rows());
    for (std::size_t b = 0; b + 1 < offsets.size(); ++b)
        for (auto i = offsets[b]; i < offsets[b + 1]; ++i)
            block_of[i] = static_cast<Index>(b);
    std::vector<Triplet> t;
    for (Index r = 0; r < a.rows(); ++r) {
        const auto c = a.row_cols(r);
        const auto v = a.row_values(r);
        for (std::size_t k = 0; k < c.size(); ++k)
            if (block_of[c[k]] == block_of[r])
                t.push_back({r, c[k], v[k]});
    }
    return SparseMatrix::from_triplets(a.rows(), a.cols(), std::move(t), a.symmetric());
}

/// Block-Jacobi ILU(0): independent ILU(0) of each subdomain block.
inline Ilu0 make_block_ilu0(const SparseMatrix& a, std::span<const Index> offsets)
{
    return Ilu0(block_diagonal_part(a, offsets));
}

} // namespace emilab::sparse
