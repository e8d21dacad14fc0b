// Copyright The emilab Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>

#include "emilab/error.hpp"
#include "emilab/fem.hpp"
#include "emilab/meshgen.hpp"
#include "emilab/sparse/block_diagonal.hpp"
#include "emilab/sparse/direct.hpp"
#include "emilab/sparse_matrix.hpp"

namespace emilab::system {

using fem::OperatorSet;
using fem::ProblemConfig;
using meshgen::Model;

struct BlockRange {
    Index start;
    Index len;
};

/// The assembled EMI matrix with subdomain-major blocks (extracellular first).
struct BlockSystem {
    SparseMatrix A;
    Vector rhs;
    std::vector<Index> offsets;  // block i spans [offsets[i], offsets[i+1])
    ProblemConfig config;
    Model model = Model::A;
    Index pinned_dof = -1;
    std::optional<bool> nonsingular;  // set by pin_nullspace from a factorization probe

    int num_blocks() const { return static_cast<int>(offsets.size()) - 1; }
    Index size() const { return A.rows(); }
    BlockRange block_range(int i) const { return {offsets[i], offsets[i + 1] - offsets[i]}; }
    SparseMatrix block(int i, int j) const
    {
        return A.block(offsets[i], offsets[i + 1] - offsets[i], offsets[j], offsets[j + 1] - offsets[j]);
    }
};

/// D_i = tau_i A_i + M_i on the diagonal, B_{i,j} off the diagonal.
inline BlockSystem build_system(const OperatorSet& ops, const ProblemConfig& config, Model model)
{
    const int ns = ops.num_subdomains();
    config.validate(ns);
    if (static_cast<int>(ops.M.size()) != ns || static_cast<int>(ops.fvec.size()) != ns)
        throw ConfigError("build_system: incomplete operator set");
    BlockSystem sys;
    sys.config = config;
    sys.model = model;
    sys.offsets.assign(ns + 1, 0);
    for (int i = 0; i < ns; ++i) {
        const auto n = ops.A[i].rows();
        if (ops.A[i].cols() != n || ops.M[i].rows() != n || ops.M[i].cols() != n ||
            static_cast<Index>(ops.fvec[i].size()) != n)
            throw ConfigError("build_system: block " + std::to_string(i) + " has inconsistent dimensions");
        sys.offsets[i + 1] = sys.offsets[i] + n;
    }
    std::vector<Triplet> t;
    for (int i = 0; i < ns; ++i) {
        const auto d = add(ops.A[i], ops.M[i], config.tau_of(i), 1.0);
        auto part = d.triplets(sys.offsets[i], sys.offsets[i]);
        t.insert(t.end(), part.begin(), part.end());
    }
    for (const auto& [key, b] : ops.B) {
        const auto [i, j] = key;
        if (b.rows() != sys.offsets[i + 1] - sys.offsets[i] || b.cols() != sys.offsets[j + 1] - sys.offsets[j])
            throw ConfigError("build_system: coupling block (" + std::to_string(i) + "," + std::to_string(j) +
                              ") has inconsistent dimensions");
        auto part = b.triplets(sys.offsets[i], sys.offsets[j]);
        t.insert(t.end(), part.begin(), part.end());
    }
    const auto n = sys.offsets.back();
    sys.A = SparseMatrix::from_triplets(n, n, std::move(t), true);
    sys.rhs.reserve(n);
    for (const auto& f : ops.fvec)
        sys.rhs.insert(sys.rhs.end(), f.begin(), f.end());
    return sys;
}

/// Extracellular dof closest to the origin.
inline Index dof_nearest_origin(const meshgen::DofMap& dofs)
{
    Index best = 0;
    double dmin = std::numeric_limits<double>::infinity();
    for (Index l = 0; l < dofs.size(0); ++l) {
        const auto p = dofs.coordinates(0, l);
        const double d = p.x * p.x + p.y * p.y;
        if (d < dmin) {
            dmin = d;
            best = l;
        }
    }
    return dofs.offset(0) + best;
}

/// Pin u at one dof by symmetric elimination: the row and column become the
/// identity and the rhs entry becomes zero. The result is probed with a sparse
/// factorization and the outcome stored in `nonsingular`.
inline BlockSystem pin_nullspace(const BlockSystem& sys, Index dof)
{
    if (dof < 0 || dof >= sys.size())
        throw ConfigError("pin_nullspace: dof out of range");
    BlockSystem out = sys;
    out.A = sparse::eliminate_dof(sys.A, dof);
    out.rhs[dof] = 0.0;
    out.pinned_dof = dof;
    try {
        sparse::DirectSolver probe(out.A);
        const auto [lo, hi] = probe.pivot_range();
        out.nonsingular = lo > 1e-14 * hi;
    } catch (const SolverError&) {
        out.nonsingular = false;
    }
    return out;
}

inline BlockSystem pin_nullspace(const BlockSystem& sys, const meshgen::DofMap& dofs)
{
    return pin_nullspace(sys, dof_nearest_origin(dofs));
}

/// Low-rank splittings of the nervous-system (arrowhead) matrix:
///   A = Dn + Un Vn,  with Un = [I_{n0} 0; 0 B_i^T], Vn = [0 B_1 .. B_N; I_{n0} 0],
///   A = (Dn + En) + Ut Vt, where En has a unit entry at the first dof of each
///   cell block and Ut = [Un | -e_{1,i}], Vt = [Vn; e_{1,i}^T].
struct ArrowheadFactors {
    std::vector<SparseMatrix> diag_blocks;  // D_0..D_N as stored in the system (pinning included)
    std::vector<Index> offsets;
    SparseMatrix Dn;
    SparseMatrix Un;
    SparseMatrix Vn;
    SparseMatrix En;
    SparseMatrix Dt;
    SparseMatrix Ut;
    SparseMatrix Vt;

    Index n0() const { return offsets[1] - offsets[0]; }
    int num_cells() const { return static_cast<int>(offsets.size()) - 2; }
};

inline ArrowheadFactors build_arrowhead_factors(const BlockSystem& sys)
{
    if (sys.model != Model::A)
        throw ConfigError("build_arrowhead_factors: the arrowhead structure only exists for model A");
    const int nb = sys.num_blocks();
    const auto n = sys.size();
    const auto n0 = sys.offsets[1];
    ArrowheadFactors f;
    f.offsets = sys.offsets;

    std::vector<Triplet> dn, un, vn, en, ut, vt;
    for (int i = 0; i < nb; ++i) {
        f.diag_blocks.push_back(sys.block(i, i));
        auto part = f.diag_blocks.back().triplets(sys.offsets[i], sys.offsets[i]);
        dn.insert(dn.end(), part.begin(), part.end());
    }
    for (int i = 1; i < nb; ++i)
        for (int j = 1; j < nb; ++j)
            if (i != j && sys.block(i, j).nnz() != 0)
                throw ConfigError("build_arrowhead_factors: cell blocks are coupled, matrix is not arrowhead");
    for (Index k = 0; k < n0; ++k) {
        un.push_back({k, k, 1.0});
        vn.push_back({n0 + k, k, 1.0});
    }
    for (int i = 1; i < nb; ++i) {
        // block (0, i) = B_i goes to Vn's first n0 rows; block (i, 0) = B_i^T to Un's last n0 columns
        auto b = sys.block(0, i).triplets(0, sys.offsets[i]);
        vn.insert(vn.end(), b.begin(), b.end());
        auto bt = sys.block(i, 0).triplets(sys.offsets[i], n0);
        un.insert(un.end(), bt.begin(), bt.end());
        en.push_back({sys.offsets[i], sys.offsets[i], 1.0});
    }
    f.Dn = SparseMatrix::from_triplets(n, n, dn, true);
    f.Un = SparseMatrix::from_triplets(n, 2 * n0, un);
    f.Vn = SparseMatrix::from_triplets(2 * n0, n, vn);
    f.En = SparseMatrix::from_triplets(n, n, en, true);
    f.Dt = add(f.Dn, f.En);

    ut = un;
    vt = vn;
    for (int i = 1; i < nb; ++i) {
        ut.push_back({sys.offsets[i], 2 * n0 + i - 1, -1.0});
        vt.push_back({2 * n0 + i - 1, sys.offsets[i], 1.0});
    }
    const Index width = 2 * n0 + (nb - 1);
    f.Ut = SparseMatrix::from_triplets(n, width, ut);
    f.Vt = SparseMatrix::from_triplets(width, n, vt);
    return f;
}

struct SmwResult {
    Vector x;
    Index capacitance_size = 0;
    double capacitance_rcond = 0.0;
};

namespace detail {

/// (D + U V)^{-1} b = y - Y C^{-1} V y with y = D^{-1} b, Y = D^{-1} U and
/// C = I + V Y. D is block diagonal; each block is factored separately.
inline SmwResult woodbury_solve(const std::vector<SparseMatrix>& blocks, std::span<const Index> offsets,
                                const SparseMatrix& u, const SparseMatrix& v, std::span<const double> rhs,
                                const std::string& what)
{
    const auto n = offsets.back();
    if (static_cast<Index>(rhs.size()) != n)
        throw ConfigError(what + ": rhs has the wrong size");
    std::vector<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>> fact(blocks.size());
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        fact[i].compute(blocks[i].to_eigen());
        const bool bad = fact[i].info() != Eigen::Success ||
                         (fact[i].vectorD().array().abs() <= 1e-14 * fact[i].vectorD().cwiseAbs().maxCoeff()).any();
        if (bad)
            throw SolverError(what + ": factorization of diagonal block " + std::to_string(i) + " failed");
    }
    auto block_solve = [&](const Eigen::MatrixXd& b) {
        Eigen::MatrixXd x(b.rows(), b.cols());
        for (std::size_t i = 0; i < blocks.size(); ++i) {
            const auto lo = offsets[i];
            const auto len = offsets[i + 1] - offsets[i];
            x.middleRows(lo, len) = fact[i].solve(b.middleRows(lo, len));
        }
        return x;
    };

    const Eigen::MatrixXd y = block_solve(as_eigen(rhs));
    const Eigen::MatrixXd Y = block_solve(u.to_dense());
    const Eigen::SparseMatrix<double> ve = v.to_eigen();
    Eigen::MatrixXd cap = ve * Y;
    cap.diagonal().array() += 1.0;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(cap);
    SmwResult out;
    out.capacitance_size = cap.rows();
    out.capacitance_rcond = lu.rcond();
    if (!(out.capacitance_rcond > 1e-15)) {
        std::ostringstream msg;
        msg << what << ": capacitance matrix of size " << cap.rows() << " is singular (rcond estimate "
            << out.capacitance_rcond << ")";
        throw SolverError(msg.str());
    }
    const Eigen::VectorXd corr = Y * lu.solve(ve * y);
    const Eigen::VectorXd x = y - corr;
    out.x.assign(x.data(), x.data() + x.size());
    return out;
}

} // namespace detail

/// Solve (Dn + eps I + Un Vn) x = rhs through the SMW identity; the
/// capacitance system has size 2 n0.
inline SmwResult solve_smw_eps(const ArrowheadFactors& f, std::span<const double> rhs, double eps)
{
    if (!(eps > 0.0))
        throw ConfigError("solve_smw_eps: eps must be positive");
    std::vector<SparseMatrix> blocks;
    for (const auto& d : f.diag_blocks)
        blocks.push_back(add(d, SparseMatrix::identity(d.rows()), 1.0, eps));
    try {
        return detail::woodbury_solve(blocks, f.offsets, f.Un, f.Vn, rhs, "solve_smw_eps");
    } catch (const SolverError& e) {
        std::ostringstream msg;
        msg << e.what() << " (eps=" << eps << ")";
        throw SolverError(msg.str());
    }
}

/// Solve A x = rhs through (Dn + En) and the rank 2 n0 + N correction.
inline SmwResult solve_smw_exact(const ArrowheadFactors& f, std::span<const double> rhs)
{
    std::vector<SparseMatrix> blocks;
    for (std::size_t i = 0; i < f.diag_blocks.size(); ++i)
        blocks.push_back(f.Dt.block(f.offsets[i], f.offsets[i + 1] - f.offsets[i], f.offsets[i],
                                    f.offsets[i + 1] - f.offsets[i]));
    return detail::woodbury_solve(blocks, f.offsets, f.Ut, f.Vt, rhs, "solve_smw_exact");
}

/// diag(s_i I) A diag(s_i I) for per-block factors s_i.
struct ScaledSystem {
    SparseMatrix As;
    std::vector<double> factors;
};

inline ScaledSystem scale_blocks(const BlockSystem& sys, std::span<const double> factors)
{
    if (static_cast<int>(factors.size()) != sys.num_blocks())
        throw ConfigError("scale_blocks: one factor per block required");
    std::vector<double> row_factor(sys.size());
    for (int i = 0; i < sys.num_blocks(); ++i)
        for (auto k = sys.offsets[i]; k < sys.offsets[i + 1]; ++k)
            row_factor[k] = factors[i];
    std::vector<Triplet> t;
    t.reserve(static_cast<std::size_t>(sys.A.nnz()));
    for (Index r = 0; r < sys.size(); ++r) {
        const auto c = sys.A.row_cols(r);
        const auto v = sys.A.row_values(r);
        for (std::size_t k = 0; k < c.size(); ++k)
            t.push_back({r, c[k], v[k] * (row_factor[r] * row_factor[c[k]])});
    }
    return {SparseMatrix::from_triplets(sys.size(), sys.size(), std::move(t), true),
            std::vector<double>(factors.begin(), factors.end())};
}

/// Congruence with h_i / sqrt(tau_i) per block.
inline ScaledSystem build_scaled(const BlockSystem& sys, std::span<const double> h, std::span<const double> tau)
{
    if (h.size() != tau.size() || static_cast<int>(h.size()) != sys.num_blocks())
        throw ConfigError("build_scaled: one h and one tau per block required");
    std::vector<double> s(h.size());
    for (std::size_t i = 0; i < h.size(); ++i) {
        if (!(tau[i] > 0.0) || !(h[i] > 0.0))
            throw ConfigError("build_scaled: h and tau must be positive");
        s[i] = h[i] / std::sqrt(tau[i]);
    }
    return scale_blocks(sys, s);
}

/// Same congruence applied to the finite-difference normalization A / h^d of
/// the Galerkin matrix: a P1 stiffness matrix in d dimensions equals h^d times
/// the difference operator whose h^2-multiple carries the Laplacian symbol.
/// In 2D with a common h the factor reduces to 1/sqrt(tau_i).
inline ScaledSystem build_scaled_galerkin(const BlockSystem& sys, double h, int dim = 2)
{
    std::vector<double> s(sys.num_blocks());
    for (int i = 0; i < sys.num_blocks(); ++i)
        s[i] = h / std::sqrt(sys.config.tau_of(i)) / std::pow(h, 0.5 * dim);
    return scale_blocks(sys, s);
}

} // namespace emilab::system
