// Copyright The emilab Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "emilab/error.hpp"
#include "emilab/sparse/preconditioner.hpp"
#include "emilab/sparse_matrix.hpp"

namespace emilab::sparse {

enum class PreconditionerKind { None, ILU0, BlockILU0, BlockDiag, AMG };

inline std::string to_string(PreconditionerKind k)
{
    switch (k) {
    case PreconditionerKind::None: return "cg";
    case PreconditionerKind::ILU0: return "ilu";
    case PreconditionerKind::BlockILU0: return "blockilu";
    case PreconditionerKind::BlockDiag: return "blockdiag";
    case PreconditionerKind::AMG: return "amg";
    }
    return "?";
}

inline PreconditionerKind preconditioner_from_string(const std::string& s)
{
    if (s == "cg" || s == "none")
        return PreconditionerKind::None;
    if (s == "ilu")
        return PreconditionerKind::ILU0;
    if (s == "blockilu")
        return PreconditionerKind::BlockILU0;
    if (s == "blockdiag")
        return PreconditionerKind::BlockDiag;
    if (s == "amg")
        return PreconditionerKind::AMG;
    throw ConfigError("unknown solver '" + s + "' (expected cg|ilu|blockilu|blockdiag|amg)");
}

struct SolverConfig {
    double tol = 1e-9;
    int max_iter = 20000;
    PreconditionerKind preconditioner = PreconditionerKind::None;
    double eps = 1e-4;  // regularization of the block-diagonal preconditioner

    void validate() const
    {
        if (!(tol > 0.0))
            throw ConfigError("tol must be positive");
        if (max_iter <= 0)
            throw ConfigError("maxIter must be positive");
        if (preconditioner == PreconditionerKind::BlockDiag && !(eps > 0.0))
            throw ConfigError("eps must be positive");
    }
};

struct SolveReport {
    int iterations = 0;
    double final_rel_residual = 0.0;
    double seconds = 0.0;
    std::vector<double> residual_history;  // relative residual after each iteration, entry 0 = initial
    bool converged = false;
    bool breakdown = false;
    int breakdown_iteration = -1;
};

struct SolveResult {
    Vector x;
    SolveReport report;
};

/// Called with (iteration, current iterate) after every update.
using IterateObserver = std::function<void(int, std::span<const double>)>;

/// Preconditioned conjugate gradients from a zero initial guess, stopping on
/// ||b - A x||_2 <= tol ||b||_2. A non-positive curvature p^T A p stops the
/// iteration, returning the current iterate with the breakdown flag set.
inline SolveResult cg_solve(const SparseMatrix& a, std::span<const double> b, const SolverConfig& config,
                            const Preconditioner& precond, const IterateObserver& observer = {})
{
    config.validate();
    const auto start = std::chrono::steady_clock::now();
    const auto n = static_cast<std::size_t>(a.rows());
    if (b.size() != n || a.cols() != a.rows())
        throw ConfigError("cg_solve: dimension mismatch");

    SolveResult out;
    out.x.assign(n, 0.0);
    auto& rep = out.report;
    const double bnorm = norm2(b);
    rep.residual_history.push_back(bnorm > 0.0 ? 1.0 : 0.0);
    if (bnorm == 0.0) {
        rep.converged = true;
        rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        return out;
    }

    Vector r(b.begin(), b.end()), z(n), p(n), q(n);
    precond.apply(r, z);
    p = z;
    double rz = dot(r, z);
    for (int it = 1; it <= config.max_iter; ++it) {
        a.multiply(p, q);
        const double curvature = dot(p, q);
        if (!(curvature > 0.0)) {
            rep.breakdown = true;
            rep.breakdown_iteration = it;
            break;
        }
        const double alpha = rz / curvature;
        for (std::size_t i = 0; i < n; ++i) {
            out.x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        rep.iterations = it;
        const double rel = norm2(r) / bnorm;
        rep.residual_history.push_back(rel);
        if (observer)
            observer(it, out.x);
        if (rel <= config.tol) {
            rep.converged = true;
            break;
        }
        precond.apply(r, z);
        const double rz_new = dot(r, z);
        const double beta = rz_new / rz;
        rz = rz_new;
        for (std::size_t i = 0; i < n; ++i)
            p[i] = z[i] + beta * p[i];
    }
    rep.final_rel_residual = rep.residual_history.back();
    rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
}

inline SolveResult cg_solve(const SparseMatrix& a, std::span<const double> b, const SolverConfig& config)
{
    return cg_solve(a, b, config, IdentityPreconditioner{});
}

} // namespace emilab::sparse
