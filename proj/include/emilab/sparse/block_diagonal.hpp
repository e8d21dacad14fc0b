// Copyright The emilab Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <string>
#include <vector>

#include "emilab/error.hpp"
#include "emilab/fem.hpp"
#include "emilab/sparse/direct.hpp"
#include "emilab/sparse/preconditioner.hpp"

namespace emilab::sparse {

/// Replace row and column p by the identity (symmetric elimination of one dof).
inline SparseMatrix eliminate_dof(const SparseMatrix& a, Index p)
{
    std::vector<Triplet> t;
    t.reserve(static_cast<std::size_t>(a.nnz()));
    for (Index r = 0; r < a.rows(); ++r) {
        if (r == p)
            continue;
        const auto c = a.row_cols(r);
        const auto v = a.row_values(r);
        for (std::size_t k = 0; k < c.size(); ++k)
            if (c[k] != p)
                t.push_back({r, c[k], v[k]});
    }
    t.push_back({p, p, 1.0});
    return SparseMatrix::from_triplets(a.rows(), a.cols(), std::move(t), a.symmetric());
}

/// Blocks tau_i (A_i + eps Mbulk_i), with pinned global dofs eliminated.
inline std::vector<SparseMatrix> block_preconditioner_blocks(const fem::OperatorSet& ops,
                                                             const fem::ProblemConfig& config, double eps,
                                                             std::span<const Index> offsets,
                                                             std::span<const Index> pinned = {})
{
    if (!(eps > 0.0))
        throw ConfigError("block-diagonal preconditioner: eps must be positive");
    const int ns = ops.num_subdomains();
    if (static_cast<int>(offsets.size()) != ns + 1)
        throw ConfigError("block-diagonal preconditioner: offsets do not match operator set");
    std::vector<SparseMatrix> blocks;
    blocks.reserve(ns);
    for (int s = 0; s < ns; ++s) {
        auto k = add(ops.A[s], ops.Mbulk[s], config.tau_of(s), config.tau_of(s) * eps);
        for (auto p : pinned)
            if (p >= offsets[s] && p < offsets[s + 1])
                k = eliminate_dof(k, p - offsets[s]);
        blocks.push_back(std::move(k));
    }
    return blocks;
}

/// The assembled block-diagonal matrix P_eps.
inline SparseMatrix block_preconditioner_matrix(const fem::OperatorSet& ops, const fem::ProblemConfig& config,
                                                double eps, std::span<const Index> offsets,
                                                std::span<const Index> pinned = {})
{
    const auto blocks = block_preconditioner_blocks(ops, config, eps, offsets, pinned);
    std::vector<Triplet> t;
    for (std::size_t s = 0; s < blocks.size(); ++s) {
        auto part = blocks[s].triplets(offsets[s], offsets[s]);
        t.insert(t.end(), part.begin(), part.end());
    }
    return SparseMatrix::from_triplets(offsets.back(), offsets.back(), std::move(t), true);
}

/// Block-diagonal preconditioner tau_i (A_i + eps Mbulk_i), each block solved
/// exactly by a sparse factorization computed once. Pinned global dofs are
/// eliminated from their block the same way as in the pinned system.
class BlockDiagonalPreconditioner final : public Preconditioner {
public:
    BlockDiagonalPreconditioner(const fem::OperatorSet& ops, const fem::ProblemConfig& config, double eps,
                                std::span<const Index> offsets, std::span<const Index> pinned = {})
        : offsets_(offsets.begin(), offsets.end())
    {
        auto blocks = block_preconditioner_blocks(ops, config, eps, offsets, pinned);
        blocks_.reserve(blocks.size());
        for (std::size_t s = 0; s < blocks.size(); ++s) {
            const auto& k = blocks[s];
            try {
                blocks_.emplace_back(k);
            } catch (const SolverError& e) {
                throw SolverError("block-diagonal preconditioner: block " + std::to_string(s) + ": " + e.what());
            }
        }
    }

    void apply(std::span<const double> r, std::span<double> z) const override
    {
        for (std::size_t s = 0; s < blocks_.size(); ++s) {
            const auto lo = static_cast<std::size_t>(offsets_[s]);
            const auto len = static_cast<std::size_t>(offsets_[s + 1] - offsets_[s]);
            blocks_[s].apply(r.subspan(lo, len), z.subspan(lo, len));
        }
    }

    std::string name() const override { return "blockdiag"; }

private:
    std::vector<Index> offsets_;
    std::vector<DirectSolver> blocks_;
};

} // namespace emilab::sparse
