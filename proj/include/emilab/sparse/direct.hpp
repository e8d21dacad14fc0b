// Copyright The emilab Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>
#include <span>
#include <string>

#include <Eigen/SparseCholesky>

#include "emilab/error.hpp"
#include "emilab/sparse/preconditioner.hpp"
#include "emilab/sparse_matrix.hpp"

namespace emilab::sparse {

/// Sparse symmetric LDL^T factorization (Eigen, AMD ordering).
class DirectSolver final : public Preconditioner {
public:
    explicit DirectSolver(const SparseMatrix& a) : n_(a.rows())
    {
        if (a.rows() != a.cols())
            throw ConfigError("DirectSolver: matrix must be square");
        factor_ = std::make_unique<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>>(a.to_eigen());
        if (factor_->info() != Eigen::Success)
            throw SolverError("DirectSolver: sparse LDL^T factorization failed");
        const auto d = factor_->vectorD();
        for (Eigen::Index i = 0; i < d.size(); ++i)
            if (d[i] == 0.0 || !std::isfinite(d[i]))
                throw SolverError("DirectSolver: zero pivot, matrix is singular");
    }

    Vector solve(std::span<const double> b) const
    {
        Vector x(b.size());
        apply(b, x);
        return x;
    }

    void apply(std::span<const double> r, std::span<double> z) const override
    {
        Eigen::Map<Eigen::VectorXd>(z.data(), n_) = factor_->solve(as_eigen(r));
    }

    std::string name() const override { return "direct"; }

    /// Smallest and largest |D| pivot, a cheap conditioning indicator.
    std::pair<double, double> pivot_range() const
    {
        const Eigen::VectorXd d = factor_->vectorD().cwiseAbs();
        return {d.minCoeff(), d.maxCoeff()};
    }

private:
    Index n_;
    std::unique_ptr<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>> factor_;
};

inline Vector direct_solve(const SparseMatrix& a, std::span<const double> b) { return DirectSolver(a).solve(b); }

} // namespace emilab::sparse
