// Copyright The emilab Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "emilab/error.hpp"
#include "emilab/sparse/preconditioner.hpp"
#include "emilab/sparse_matrix.hpp"

namespace emilab::sparse {

enum class StrengthKind {
    Symmetric,  // |a_ij| >= theta sqrt(a_ii a_jj)
    Evolution,  // compare a few damped Jacobi steps of a point source against the near-nullspace
};

struct AmgParams {
    Index target_coarse = 200;  // stop coarsening at or below this size
    StrengthKind strength_kind = StrengthKind::Evolution;
    double strength = 0.08;         // theta for the symmetric measure
    int evolution_steps = 2;        // k for the evolution measure
    double evolution_epsilon = 4.0; // drop tolerance for the evolution measure
    double jacobi_omega = 2.0 / 3.0;
    double max_shrink = 0.9;  // abort when n_coarse / n_fine exceeds this
    int max_levels = 25;
    bool symmetric_sweeps = true;  // forward+backward on each side instead of one directional sweep
};

struct AmgLevel {
    SparseMatrix A;
    SparseMatrix P;  // prolongation to this level from the next coarser one
    SparseMatrix R;  // P^T
};

/// Strong neighbours of every row, with a weight used to break ties.
struct StrengthGraph {
    std::vector<std::vector<Index>> neighbours;
    std::vector<std::vector<double>> weights;
};

inline StrengthGraph symmetric_strength(const SparseMatrix& a, double theta)
{
    const auto n = a.rows();
    const auto diag = a.diagonal_values();
    StrengthGraph g{std::vector<std::vector<Index>>(n), std::vector<std::vector<double>>(n)};
    for (Index i = 0; i < n; ++i) {
        const auto c = a.row_cols(i);
        const auto v = a.row_values(i);
        for (std::size_t k = 0; k < c.size(); ++k) {
            const auto j = c[k];
            if (j == i || diag[i] <= 0.0 || diag[j] <= 0.0)
                continue;
            const double w = std::abs(v[k]) / std::sqrt(diag[i] * diag[j]);
            if (w >= theta) {
                g.neighbours[i].push_back(j);
                g.weights[i].push_back(w);
            }
        }
    }
    return g;
}

/// Largest eigenvalue of D^{-1} A via power iteration on D^{-1/2} A D^{-1/2}
/// from a fixed start vector.
inline double spectral_radius_dinv_a(const SparseMatrix& a, int iterations = 40)
{
    const auto n = a.rows();
    const auto diag = a.diagonal_values();
    Vector s(n), v(n), w(n);
    for (Index i = 0; i < n; ++i)
        s[i] = diag[i] > 0.0 ? 1.0 / std::sqrt(diag[i]) : 1.0;
    for (Index i = 0; i < n; ++i)
        v[i] = 1.0 + 0.5 * std::sin(1.0 + 7.0 * double(i));
    double rho = 0.0;
    for (int it = 0; it < iterations; ++it) {
        const double nv = norm2(v);
        if (nv == 0.0)
            break;
        for (auto& x : v)
            x /= nv;
        for (Index i = 0; i < n; ++i)
            w[i] = s[i] * v[i];
        Vector aw = a * std::span<const double>(w);
        for (Index i = 0; i < n; ++i)
            aw[i] *= s[i];
        rho = dot(v, aw);
        v.swap(aw);
    }
    return rho > 0.0 ? rho : 1.0;
}

/// Evolution strength measure for one near-nullspace vector b: z_i is the
/// point source at i after k steps of (I - D^{-1}A / rho), and j is strong for
/// i when z_i restricted to the pattern of A is close to a multiple of b.
inline StrengthGraph evolution_strength(const SparseMatrix& a, std::span<const double> b, int steps, double epsilon)
{
    if (steps < 1 || epsilon < 1.0)
        throw ConfigError("evolution strength: steps >= 1 and epsilon >= 1 required");
    const auto n = a.rows();
    const auto diag = a.diagonal_values();
    const double rho = spectral_radius_dinv_a(a);
    std::vector<Triplet> t;
    t.reserve(static_cast<std::size_t>(a.nnz()) + n);
    for (Index i = 0; i < n; ++i) {
        const double dinv = diag[i] != 0.0 ? 1.0 / diag[i] : 1.0;
        const auto c = a.row_cols(i);
        const auto v = a.row_values(i);
        for (std::size_t k = 0; k < c.size(); ++k)
            t.push_back({i, c[k], -dinv * v[k] / rho});
        t.push_back({i, i, 1.0});
    }
    // rows of the transposed step operator hold the columns we evolve
    const auto step_t = SparseMatrix::from_triplets(n, n, std::move(t)).transpose();
    SparseMatrix z = step_t;
    for (int s = 1; s < steps; ++s)
        z = multiply(z, step_t);

    // distance |1 - (z_ii / b_i) b_j / z_ij| on the pattern of A; zero and
    // sign-flipped entries are weak
    std::vector<Triplet> dist;
    std::vector<Index> cols;
    std::vector<double> vals;
    for (Index i = 0; i < n; ++i) {
        const double bi = b[i] != 0.0 ? b[i] : 1.0;
        const double zii = z.at(i, i);
        cols.clear();
        vals.clear();
        double dmin = std::numeric_limits<double>::infinity();
        for (auto j : a.row_cols(i)) {
            if (j == i)
                continue;
            const double zij = z.at(i, j);
            if (zij == 0.0)
                continue;
            const double bj = b[j] != 0.0 ? b[j] : 1.0;
            const double approx = zii / bi * bj;
            if (approx * zij < 0.0)
                continue;
            const double ratio = approx / zij;
            if (std::abs(ratio) < 1e-4)
                continue;
            double d = std::abs(1.0 - ratio);
            if (d == 0.0)
                continue;
            if (d < std::sqrt(std::numeric_limits<double>::epsilon()))
                d = 1e-4;
            cols.push_back(j);
            vals.push_back(d);
            dmin = std::min(dmin, d);
        }
        for (std::size_t k = 0; k < cols.size(); ++k)
            if (vals[k] <= epsilon * dmin)
                dist.push_back({i, cols[k], vals[k]});
    }
    auto d = SparseMatrix::from_triplets(n, n, std::move(dist));
    d = add(d, d.transpose(), 0.5, 0.5);

    StrengthGraph g{std::vector<std::vector<Index>>(n), std::vector<std::vector<double>>(n)};
    for (Index i = 0; i < n; ++i) {
        const auto c = d.row_cols(i);
        const auto v = d.row_values(i);
        double rowmax = 1.0;  // the diagonal, perfectly strong
        for (auto x : v)
            rowmax = std::max(rowmax, 1.0 / x);
        for (std::size_t k = 0; k < c.size(); ++k) {
            g.neighbours[i].push_back(c[k]);
            g.weights[i].push_back(1.0 / v[k] / rowmax);
        }
    }
    return g;
}

/// Smoothed-aggregation hierarchy with a dense factorization on the coarsest
/// level. The constant vector is the near-nullspace on the finest level and
/// is carried to coarser levels through the tentative prolongation.
class AmgHierarchy {
public:
    AmgHierarchy(const SparseMatrix& a, AmgParams params = {}) : params_(params)
    {
        if (a.rows() != a.cols())
            throw ConfigError("amg_build: matrix must be square");
        for (auto d : a.diagonal_values())
            if (d < 0.0)
                throw ConfigError("amg_build: negative diagonal entry");
        levels_.push_back({a, {}, {}});
        Vector b(a.rows(), 1.0);
        while (levels_.back().A.rows() > params_.target_coarse &&
               static_cast<int>(levels_.size()) < params_.max_levels) {
            const auto& fine = levels_.back().A;
            Vector b_coarse;
            auto tentative = tentative_prolongation(fine, b, b_coarse);
            if (tentative.cols() == 0)
                break;
            const double shrink = double(tentative.cols()) / double(fine.rows());
            if (shrink > params_.max_shrink) {
                std::ostringstream msg;
                msg << "amg_build: coarsening stagnated at level " << levels_.size() - 1 << " (n=" << fine.rows()
                    << " -> " << tentative.cols() << ", shrink " << shrink << ")";
                throw SolverError(msg.str());
            }
            auto p = smooth_prolongation(fine, tentative);
            auto r = p.transpose();
            auto coarse = multiply(r, multiply(fine, p));
            coarse.set_symmetric(true);
            levels_.back().P = std::move(p);
            levels_.back().R = std::move(r);
            levels_.push_back({std::move(coarse), {}, {}});
            b = std::move(b_coarse);
        }
        factor_coarsest();
    }

    int num_levels() const { return static_cast<int>(levels_.size()); }
    const AmgLevel& level(int l) const { return levels_[l]; }
    const AmgParams& params() const { return params_; }

    /// One V(1,1) cycle from a zero initial guess.
    void vcycle(std::span<const double> r, std::span<double> z) const { cycle(0, r, z); }

    std::string describe() const
    {
        std::ostringstream os;
        for (int l = 0; l < num_levels(); ++l)
            os << (l ? " -> " : "") << levels_[l].A.rows();
        return os.str();
    }

private:
    /// Greedy aggregation over the strength graph. Nodes without strong
    /// neighbours stay unaggregated (zero row in the tentative prolongation)
    /// and are handled by the smoother alone.
    SparseMatrix tentative_prolongation(const SparseMatrix& a, std::span<const double> b, Vector& b_coarse) const
    {
        const auto n = a.rows();
        const auto graph = params_.strength_kind == StrengthKind::Symmetric
                               ? symmetric_strength(a, params_.strength)
                               : evolution_strength(a, b, params_.evolution_steps, params_.evolution_epsilon);
        const auto& strong = graph.neighbours;
        const auto& weight = graph.weights;

        constexpr Index unassigned = -1;
        std::vector<Index> agg(n, unassigned);
        Index count = 0;
        // phase 1: seed aggregates from nodes whose whole strong neighbourhood is free
        for (Index i = 0; i < n; ++i) {
            if (agg[i] != unassigned || strong[i].empty())
                continue;
            bool free = true;
            for (auto j : strong[i])
                free = free && agg[j] == unassigned;
            if (!free)
                continue;
            agg[i] = count;
            for (auto j : strong[i])
                agg[j] = count;
            ++count;
        }
        // phase 2: attach leftovers to the most strongly connected phase-1 aggregate
        const auto seeded = agg;
        for (Index i = 0; i < n; ++i) {
            if (agg[i] != unassigned || strong[i].empty())
                continue;
            double best = -1.0;
            for (std::size_t k = 0; k < strong[i].size(); ++k) {
                const auto j = strong[i][k];
                if (seeded[j] != unassigned && weight[i][k] > best) {
                    best = weight[i][k];
                    agg[i] = seeded[j];
                }
            }
        }
        // phase 3: whatever is left forms aggregates with its free neighbours
        for (Index i = 0; i < n; ++i) {
            if (agg[i] != unassigned || strong[i].empty())
                continue;
            agg[i] = count;
            for (auto j : strong[i])
                if (agg[j] == unassigned)
                    agg[j] = count;
            ++count;
        }

        // one-column QR per aggregate: P_tent(i, g) = b_i / |b_g|, b_coarse(g) = |b_g|
        b_coarse.assign(count, 0.0);
        for (Index i = 0; i < n; ++i)
            if (agg[i] != unassigned)
                b_coarse[agg[i]] += b[i] * b[i];
        for (auto& x : b_coarse)
            x = std::sqrt(x);
        std::vector<Triplet> t;
        for (Index i = 0; i < n; ++i)
            if (agg[i] != unassigned && b_coarse[agg[i]] > 0.0)
                t.push_back({i, agg[i], b[i] / b_coarse[agg[i]]});
        return SparseMatrix::from_triplets(n, count, std::move(t));
    }

    /// P = (I - omega D^{-1} A) P_tent.
    SparseMatrix smooth_prolongation(const SparseMatrix& a, const SparseMatrix& tentative) const
    {
        const auto diag = a.diagonal_values();
        std::vector<Triplet> t;
        for (Index i = 0; i < a.rows(); ++i) {
            const double s = diag[i] > 0.0 ? params_.jacobi_omega / diag[i] : 0.0;
            const auto c = a.row_cols(i);
            const auto v = a.row_values(i);
            for (std::size_t k = 0; k < c.size(); ++k)
                t.push_back({i, c[k], (c[k] == i ? 1.0 : 0.0) - s * v[k]});
            if (a.at(i, i) == 0.0)
                t.push_back({i, i, 1.0});
        }
        const auto smoother = SparseMatrix::from_triplets(a.rows(), a.cols(), std::move(t));
        return multiply(smoother, tentative);
    }

    void factor_coarsest()
    {
        const auto& c = levels_.back().A;
        coarse_diagonal_ = c.nnz() <= c.rows();
        if (coarse_diagonal_) {
            coarse_inv_diag_ = c.diagonal_values();
            for (auto& d : coarse_inv_diag_)
                d = d != 0.0 ? 1.0 / d : 0.0;
            return;
        }
        if (c.rows() > 8000)
            throw SolverError("amg_build: coarsest level too large for a dense solve (" + std::to_string(c.rows()) +
                              ")");
        const Eigen::MatrixXd dense = c.to_dense();
        coarse_ldlt_.compute(dense);
        coarse_singular_ = coarse_ldlt_.info() != Eigen::Success ||
                           coarse_ldlt_.vectorD().cwiseAbs().minCoeff() <=
                               1e-13 * coarse_ldlt_.vectorD().cwiseAbs().maxCoeff();
        if (coarse_singular_)
            coarse_pinv_ = dense.completeOrthogonalDecomposition().pseudoInverse();
    }

    void coarse_solve(std::span<const double> r, std::span<double> z) const
    {
        if (coarse_diagonal_) {
            for (std::size_t i = 0; i < r.size(); ++i)
                z[i] = coarse_inv_diag_[i] * r[i];
            return;
        }
        Eigen::Map<Eigen::VectorXd> out(z.data(), static_cast<Eigen::Index>(z.size()));
        if (coarse_singular_)
            out = coarse_pinv_ * as_eigen(r);
        else
            out = coarse_ldlt_.solve(as_eigen(r));
    }

    static void gauss_seidel(const SparseMatrix& a, std::span<const double> b, std::span<double> x, bool forward)
    {
        const auto n = a.rows();
        const auto sweep = [&](Index i) {
            double s = b[i];
            double d = 0.0;
            const auto c = a.row_cols(i);
            const auto v = a.row_values(i);
            for (std::size_t k = 0; k < c.size(); ++k) {
                if (c[k] == i)
                    d = v[k];
                else
                    s -= v[k] * x[c[k]];
            }
            if (d != 0.0)
                x[i] = s / d;
        };
        if (forward)
            for (Index i = 0; i < n; ++i)
                sweep(i);
        else
            for (Index i = n - 1; i >= 0; --i)
                sweep(i);
    }

    // Pre-smoothing runs forward (then backward), post-smoothing mirrors it,
    // so the cycle is a symmetric operator.
    void cycle(int l, std::span<const double> r, std::span<double> z) const
    {
        if (l == num_levels() - 1) {
            coarse_solve(r, z);
            return;
        }
        const auto& lev = levels_[l];
        std::fill(z.begin(), z.end(), 0.0);
        gauss_seidel(lev.A, r, z, true);
        if (params_.symmetric_sweeps)
            gauss_seidel(lev.A, r, z, false);
        Vector res = lev.A * std::span<const double>(z);
        for (std::size_t i = 0; i < res.size(); ++i)
            res[i] = r[i] - res[i];
        const Vector rc = lev.R * std::span<const double>(res);
        Vector zc(rc.size(), 0.0);
        cycle(l + 1, rc, zc);
        const Vector corr = lev.P * std::span<const double>(zc);
        for (std::size_t i = 0; i < corr.size(); ++i)
            z[i] += corr[i];
        if (params_.symmetric_sweeps)
            gauss_seidel(lev.A, r, z, true);
        gauss_seidel(lev.A, r, z, false);
    }

    AmgParams params_;
    std::vector<AmgLevel> levels_;
    bool coarse_diagonal_ = false;
    bool coarse_singular_ = false;
    Vector coarse_inv_diag_;
    Eigen::LDLT<Eigen::MatrixXd> coarse_ldlt_;
    Eigen::MatrixXd coarse_pinv_;
};

/// AMG_1: a single V-cycle used as the preconditioner action.
class AmgPreconditioner final : public Preconditioner {
public:
    explicit AmgPreconditioner(const SparseMatrix& a, AmgParams params = {}) : hierarchy_(a, params) {}
    void apply(std::span<const double> r, std::span<double> z) const override { hierarchy_.vcycle(r, z); }
    std::string name() const override { return "amg"; }
    const AmgHierarchy& hierarchy() const { return hierarchy_; }

private:
    AmgHierarchy hierarchy_;
};

} // namespace emilab::sparse
