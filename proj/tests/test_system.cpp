// Copyright The emilab Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <Eigen/Dense>

#include "emilab/harness.hpp"
#include "emilab/sparse/direct.hpp"
#include "emilab/system.hpp"
#include "test_util.hpp"

using namespace emilab;
using namespace emilab::system;
using meshgen::Model;

namespace {

struct Unpinned {
    harness::Problem p;
    BlockSystem sys;
};

Unpinned unpinned(Model model, int nh, int n, double tau = 0.01)
{
    fem::ProblemConfig pc;
    pc.tau = tau;
    Unpinned u{harness::build_problem(model, nh, n, pc), {}};
    u.sys = build_system(u.p.ops, pc, model);
    return u;
}

double max_abs_diff(const SparseMatrix& a, const SparseMatrix& b) { return add(a, b, 1.0, -1.0).max_abs(); }

int inertia_sign_count(const Eigen::VectorXd& ev, double tol, int sign)
{
    int c = 0;
    for (auto v : ev)
        c += sign > 0 ? v > tol : sign < 0 ? v < -tol : std::abs(v) <= tol;
    return c;
}

} // namespace

TEST(BuildSystem, BlocksMatchOperators)
{
    const auto u = unpinned(Model::B, 16, 4);
    const auto& sys = u.sys;
    EXPECT_TRUE(sys.A.is_symmetric_exact());
    EXPECT_EQ(sys.size(), u.p.dofs.n());
    for (int i = 0; i < sys.num_blocks(); ++i) {
        const auto d = add(u.p.ops.A[i], u.p.ops.M[i], sys.config.tau_of(i), 1.0);
        EXPECT_EQ(max_abs_diff(sys.block(i, i), d), 0.0);
        EXPECT_EQ(sys.block_range(i).len, u.p.dofs.size(i));
        for (int j = 0; j < sys.num_blocks(); ++j) {
            if (i == j)
                continue;
            const auto it = u.p.ops.B.find({i, j});
            if (it == u.p.ops.B.end())
                EXPECT_EQ(sys.block(i, j).nnz(), 0);
            else
                EXPECT_EQ(max_abs_diff(sys.block(i, j), it->second), 0.0);
        }
    }
}

TEST(BuildSystem, ModelAIsArrowhead)
{
    const auto u = unpinned(Model::A, 32, 25);
    for (int i = 1; i < u.sys.num_blocks(); ++i)
        for (int j = 1; j < u.sys.num_blocks(); ++j)
            if (i != j) {
                ASSERT_EQ(u.sys.block(i, j).nnz(), 0);
            }
}

TEST(BuildSystem, NoCellsReducesToScaledLaplacian)
{
    const auto u = unpinned(Model::A, 8, 0, 0.3);
    EXPECT_EQ(max_abs_diff(u.sys.A, u.p.ops.A[0].scaled(0.3)), 0.0);
}

TEST(BuildSystem, IncompleteOperatorSetThrows)
{
    auto u = unpinned(Model::A, 8, 1);
    auto ops = u.p.ops;
    ops.fvec.pop_back();
    EXPECT_THROW(build_system(ops, u.p.config, Model::A), ConfigError);
}

TEST(Pinning, UnpinnedSystemHasConstantKernel)
{
    const auto u = unpinned(Model::A, 8, 1);
    const auto y = u.sys.A * Vector(u.sys.size(), 1.0);
    EXPECT_LE(norm_inf(y), 1e-15 * u.sys.A.norm_inf());
    double s = 0.0;
    for (auto v : u.sys.rhs)
        s += v;
    EXPECT_LT(std::abs(s), 1e-15);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(u.sys.A.to_dense());
    const double lmin = es.eigenvalues()(0);
    RecordProperty("lambda_min_unpinned", std::to_string(lmin));
    EXPECT_LT(std::abs(lmin), 1e-12);
    EXPECT_GT(es.eigenvalues()(1), 1e-6);
}

TEST(Pinning, PinnedSystemIsNonsingular)
{
    for (auto [model, n] : {std::pair{Model::A, 1}, std::pair{Model::B, 16}}) {
        const auto p = harness::build_problem(model, 32, n, {});
        ASSERT_TRUE(p.system.nonsingular.has_value());
        EXPECT_TRUE(*p.system.nonsingular);
        EXPECT_EQ(p.system.pinned_dof, 0);
        EXPECT_TRUE(p.system.A.is_symmetric_exact());
        const auto x = sparse::direct_solve(p.system.A, p.system.rhs);
        EXPECT_EQ(x[p.system.pinned_dof], 0.0);
        const auto zero = sparse::direct_solve(p.system.A, Vector(p.system.size(), 0.0));
        EXPECT_EQ(norm_inf(zero), 0.0);
    }
}

TEST(Pinning, NearestDofIsTheOrigin)
{
    const auto p = harness::build_problem(Model::A, 16, 1, {});
    const auto pt = p.dofs.coordinates(0, dof_nearest_origin(p.dofs));
    EXPECT_EQ(pt.x, 0.0);
    EXPECT_EQ(pt.y, 0.0);
    EXPECT_THROW(pin_nullspace(p.system, p.system.size()), ConfigError);
}

TEST(Arrowhead, ExactReconstructionAndWidths)
{
    const auto p = harness::build_problem(Model::A, 16, 1, {});
    const auto f = build_arrowhead_factors(p.system);
    const auto n0 = p.dofs.n0();
    EXPECT_EQ(f.Un.cols(), 2 * n0);
    EXPECT_EQ(f.Vn.rows(), 2 * n0);
    EXPECT_EQ(f.Ut.cols(), 2 * n0 + 1);
    EXPECT_EQ(f.Vt.rows(), 2 * n0 + 1);
    EXPECT_EQ(max_abs_diff(add(f.Dn, multiply(f.Un, f.Vn)), p.system.A), 0.0);
    // the +e e^T in Dt and -e e^T in Ut Vt cancel only up to rounding
    EXPECT_LE(max_abs_diff(add(f.Dt, multiply(f.Ut, f.Vt)), p.system.A), 1e-15 * p.system.A.max_abs());
    EXPECT_EQ(f.En.nnz(), 1);
    EXPECT_EQ(f.En.at(p.system.offsets[1], p.system.offsets[1]), 1.0);
}

TEST(Arrowhead, LowRankPartHasRankTwiceTheMembraneDofs)
{
    const auto p = harness::build_problem(Model::A, 16, 1, {});
    const auto f = build_arrowhead_factors(p.system);
    const Eigen::MatrixXd uv = multiply(f.Un, f.Vn).to_dense();
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(uv);
    const auto& sv = svd.singularValues();
    const auto rank = (sv.array() > 1e-12 * sv(0)).count();
    RecordProperty("rank_UnVn", std::to_string(rank));
    EXPECT_EQ(rank, 2 * p.dofs.n_gamma());
}

TEST(Arrowhead, ModelBIsRejected)
{
    const auto p = harness::build_problem(Model::B, 16, 4, {});
    EXPECT_THROW(build_arrowhead_factors(p.system), ConfigError);
}

TEST(Smw, RegularizedSolveAndLimit)
{
    const auto p = harness::build_problem(Model::A, 16, 1, {});
    const auto f = build_arrowhead_factors(p.system);
    const auto& b = p.system.rhs;
    double previous = std::numeric_limits<double>::infinity();
    for (double eps : {1e-2, 1e-4, 1e-6}) {
        const auto res = solve_smw_eps(f, b, eps);
        EXPECT_EQ(res.capacitance_size, 2 * p.dofs.n0());
        const auto reg = add(p.system.A, SparseMatrix::identity(p.system.size()), 1.0, eps);
        EXPECT_LE(relative_residual(reg, res.x, b), 1e-10) << "eps=" << eps;
        const double r = relative_residual(p.system.A, res.x, b);
        EXPECT_LT(r, previous) << "eps=" << eps;
        previous = r;
    }
    EXPECT_THROW(solve_smw_eps(f, b, 0.0), ConfigError);
}

TEST(Smw, ExactPathMatchesDirectSolve)
{
    const auto p = harness::build_problem(Model::A, 16, 1, {});
    const auto f = build_arrowhead_factors(p.system);
    const auto res = solve_smw_exact(f, p.system.rhs);
    EXPECT_EQ(res.capacitance_size, 2 * p.dofs.n0() + 1);
    const auto x = sparse::direct_solve(p.system.A, p.system.rhs);
    EXPECT_LT(testutil::rel_diff(res.x, x), 1e-8);
    EXPECT_LE(relative_residual(p.system.A, res.x, p.system.rhs), 1e-8);

    const auto zero = solve_smw_exact(f, Vector(p.system.size(), 0.0));
    EXPECT_EQ(norm_inf(zero.x), 0.0);
}

TEST(Smw, SeveralCells)
{
    const auto p = harness::build_problem(Model::A, 16, 25, {});
    const auto f = build_arrowhead_factors(p.system);
    const auto res = solve_smw_exact(f, p.system.rhs);
    EXPECT_EQ(res.capacitance_size, 2 * p.dofs.n0() + 25);
    EXPECT_LT(testutil::rel_diff(res.x, sparse::direct_solve(p.system.A, p.system.rhs)), 1e-8);
}

TEST(Smw, CellBlocksAreNonsingular)
{
    // the D_i of cells are factorizable without the rank-one correction
    const auto p = harness::build_problem(Model::A, 16, 1, {});
    const auto f = build_arrowhead_factors(p.system);
    const sparse::DirectSolver d1(f.diag_blocks[1]);
    const auto [lo, hi] = d1.pivot_range();
    RecordProperty("D1_pivot_ratio", std::to_string(lo / hi));
    EXPECT_GT(lo, 1e-10 * hi);
}

TEST(Scaled, UniformScalingIsMultiple)
{
    const auto p = harness::build_problem(Model::A, 8, 1, {});
    const double h = 1.0 / 8, tau = p.config.tau;
    const std::vector<double> hs(2, h), taus(2, tau);
    const auto s = build_scaled(p.system, hs, taus);
    EXPECT_TRUE(s.As.is_symmetric_exact());
    const auto ref = p.system.A.scaled(h * h / tau);
    EXPECT_LE(max_abs_diff(s.As, ref), 1e-15 * ref.max_abs());
    EXPECT_THROW(build_scaled(p.system, std::vector<double>{h}, std::vector<double>{tau}), ConfigError);
}

TEST(Scaled, SpectrumAndInertia)
{
    const auto u = unpinned(Model::A, 8, 1);
    const auto s = build_scaled_galerkin(u.sys, 1.0 / 8);
    EXPECT_TRUE(s.As.is_symmetric_exact());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s.As.to_dense());
    const auto& ev = es.eigenvalues();
    RecordProperty("scaled_max", std::to_string(ev.maxCoeff()));
    EXPECT_GE(ev.minCoeff(), -1e-10);
    // Laplacian symbol range plus the membrane term M / tau
    EXPECT_LE(ev.maxCoeff(), 8.0 + 4.0 * (1.0 / 8) / u.sys.config.tau);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ea(u.sys.A.to_dense());
    const double ta = 1e-10 * ea.eigenvalues().cwiseAbs().maxCoeff();
    const double ts = 1e-10 * ev.cwiseAbs().maxCoeff();
    for (int sign : {-1, 0, 1})
        EXPECT_EQ(inertia_sign_count(ea.eigenvalues(), ta, sign), inertia_sign_count(ev, ts, sign));
}
