// Copyright The emilab Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include <Eigen/Dense>

#include "emilab/fem.hpp"

using namespace emilab;
using namespace emilab::meshgen;

namespace {

struct Setup {
    StructuredMesh mesh;
    SubdomainLabeling lab;
    DofMap dofs;
};

Setup make(Model model, int nh, int n)
{
    Setup s;
    s.mesh = build_mesh(nh);
    s.lab = label_model(model, s.mesh, n);
    s.dofs = build_dofmap(s.mesh, s.lab);
    return s;
}

/// Element matrices from the coefficients of the three P1 basis functions,
/// phi_a(x, y) = c0 + c1 x + c2 y, found by inverting the vertex matrix.
std::pair<Eigen::Matrix3d, Eigen::Matrix3d> reference_element(const StructuredMesh& m, Index t)
{
    Eigen::Matrix3d v;
    for (int a = 0; a < 3; ++a) {
        const auto& p = m.vertices[m.triangles[t][a]];
        v.row(a) << 1.0, p.x, p.y;
    }
    const Eigen::Matrix3d coef = v.inverse();  // column a = coefficients of phi_a
    const double area = 0.5 * std::abs(v.determinant());
    Eigen::Matrix3d k, mass;
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) {
            k(a, b) = area * (coef(1, a) * coef(1, b) + coef(2, a) * coef(2, b));
            mass(a, b) = area / 12.0 * (a == b ? 2.0 : 1.0);
        }
    return {k, mass};
}

double max_rel_diff(const SparseMatrix& a, const Eigen::MatrixXd& ref)
{
    return (a.to_dense() - ref).cwiseAbs().maxCoeff() / ref.cwiseAbs().maxCoeff();
}

} // namespace

class ReferenceAssembly : public ::testing::TestWithParam<std::tuple<Model, int, int>> {};

TEST_P(ReferenceAssembly, MatchesElementLoop)
{
    const auto [model, nh, n] = GetParam();
    const auto s = make(model, nh, n);
    for (int sub = 0; sub < s.dofs.num_subdomains(); ++sub) {
        const auto ni = s.dofs.size(sub);
        Eigen::MatrixXd k = Eigen::MatrixXd::Zero(ni, ni), mass = Eigen::MatrixXd::Zero(ni, ni);
        for (Index t = 0; t < s.mesh.triangle_count(); ++t) {
            if (s.lab.cell_of[t] != sub)
                continue;
            const auto [ke, me] = reference_element(s.mesh, t);
            for (int a = 0; a < 3; ++a)
                for (int b = 0; b < 3; ++b) {
                    const auto la = s.dofs.local(sub, s.mesh.triangles[t][a]);
                    const auto lb = s.dofs.local(sub, s.mesh.triangles[t][b]);
                    k(la, lb) += ke(a, b);
                    mass(la, lb) += me(a, b);
                }
        }
        const auto a = fem::assemble_stiffness(s.mesh, s.lab, s.dofs, sub);
        const auto mb = fem::assemble_bulk_mass(s.mesh, s.lab, s.dofs, sub);
        EXPECT_LT(max_rel_diff(a, k), 1e-14) << "subdomain " << sub;
        EXPECT_LT(max_rel_diff(mb, mass), 1e-14) << "subdomain " << sub;
        EXPECT_TRUE(a.is_symmetric_exact());
        EXPECT_NEAR(mass.sum(), mb.to_dense().sum(), 1e-14);
    }
}

INSTANTIATE_TEST_SUITE_P(Configs, ReferenceAssembly,
                         ::testing::Values(std::tuple{Model::A, 4, 1}, std::tuple{Model::A, 16, 25},
                                           std::tuple{Model::B, 16, 4}),
                         [](const auto& info) {
                             return std::string(1, meshgen::model_name(std::get<0>(info.param))) + "_nh" + std::to_string(std::get<1>(info.param)) + "_N" +
                                    std::to_string(std::get<2>(info.param));
                         });

TEST(Stiffness, InteriorRowIsFivePointStencil)
{
    const auto s = make(Model::A, 4, 0);
    const auto a = fem::assemble_stiffness(s.mesh, s.lab, s.dofs, 0);
    const auto row = s.dofs.local(0, s.mesh.vertex_index(2, 2));
    EXPECT_DOUBLE_EQ(a.at(row, row), 4.0);
    for (auto [di, dj] : {std::pair{1, 0}, std::pair{-1, 0}, std::pair{0, 1}, std::pair{0, -1}})
        EXPECT_DOUBLE_EQ(a.at(row, s.dofs.local(0, s.mesh.vertex_index(2 + di, 2 + dj))), -1.0);
    EXPECT_EQ(a.row_cols(row).size(), 5u);
}

TEST(Stiffness, ConstantsAreInTheKernel)
{
    const auto s = make(Model::B, 32, 16);
    for (int sub = 0; sub < s.dofs.num_subdomains(); ++sub) {
        const auto a = fem::assemble_stiffness(s.mesh, s.lab, s.dofs, sub);
        const auto y = a * Vector(a.rows(), 1.0);
        EXPECT_LE(norm_inf(y), 1e-12 * a.norm_inf());
    }
}

TEST(Stiffness, InvalidSubdomainThrows)
{
    const auto s = make(Model::A, 8, 1);
    EXPECT_THROW(fem::assemble_stiffness(s.mesh, s.lab, s.dofs, 2), ConfigError);
    EXPECT_THROW(fem::assemble_membrane_mass(s.mesh, s.lab, s.dofs, -1), ConfigError);
}

TEST(MembraneMass, StraightSegmentOfTwoEdges)
{
    // nh=4, N=1: each side of the cell [1/4,3/4]^2 has two edges of length 1/4
    const auto s = make(Model::A, 4, 1);
    const auto m = fem::assemble_membrane_mass(s.mesh, s.lab, s.dofs, 1);
    const auto mid = s.dofs.local(1, s.mesh.vertex_index(2, 1));
    const auto left = s.dofs.local(1, s.mesh.vertex_index(1, 1));
    const auto right = s.dofs.local(1, s.mesh.vertex_index(3, 1));
    EXPECT_DOUBLE_EQ(m.at(mid, mid), 1.0 / 6.0);
    EXPECT_DOUBLE_EQ(m.at(mid, left), 1.0 / 24.0);
    EXPECT_DOUBLE_EQ(m.at(mid, right), 1.0 / 24.0);
    double row = 0.0;
    for (auto v : m.row_values(mid))
        row += v;
    EXPECT_DOUBLE_EQ(row, 0.25);
}

TEST(MembraneMass, TotalIsPerimeterAndRefinementInvariant)
{
    for (int nh : {16, 32, 64}) {
        const auto s = make(Model::A, nh, 1);
        const auto m = fem::assemble_membrane_mass(s.mesh, s.lab, s.dofs, 1);
        EXPECT_NEAR(m.to_dense().sum(), 2.0, 1e-13) << "nh=" << nh;
        const auto m0 = fem::assemble_membrane_mass(s.mesh, s.lab, s.dofs, 0);
        EXPECT_NEAR(m0.to_dense().sum(), 2.0, 1e-13);
    }
}

TEST(MembraneMass, SupportAndRank)
{
    const auto s = make(Model::A, 16, 1);
    for (int sub : {0, 1}) {
        const auto m = fem::assemble_membrane_mass(s.mesh, s.lab, s.dofs, sub);
        for (Index r = 0; r < s.dofs.interior_size(sub); ++r)
            EXPECT_TRUE(m.row_cols(r).empty());
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m.to_dense());
        const auto& ev = es.eigenvalues();
        EXPECT_GE(ev.minCoeff(), -1e-15);
        const auto rank = (ev.array() > 1e-12).count();
        EXPECT_LE(rank, s.dofs.membrane_size(sub));
    }
}

TEST(MembraneMass, EmptyMembraneGivesZeroMatrix)
{
    const auto s = make(Model::A, 8, 0);
    EXPECT_EQ(fem::assemble_membrane_mass(s.mesh, s.lab, s.dofs, 0).nnz(), 0);
}

TEST(Coupling, TransposeSignAndTraceIdentity)
{
    const auto s = make(Model::B, 32, 16);
    fem::ProblemConfig pc;
    const auto ops = fem::assemble_operators(s.mesh, s.lab, s.dofs, pc);
    for (const auto& [key, b] : ops.B) {
        const auto& bt = ops.B.at({key.second, key.first});
        EXPECT_EQ((b.to_dense() - bt.to_dense().transpose()).cwiseAbs().maxCoeff(), 0.0);
        for (auto v : b.values())
            EXPECT_LT(v, 0.0);
    }
    // row sums of M_i equal the row sums of -B_ij summed over all interfaces
    for (int i = 0; i < s.dofs.num_subdomains(); ++i) {
        Vector ones_i(s.dofs.size(i), 1.0);
        auto lhs = ops.M[i] * ones_i;
        for (const auto& [key, b] : ops.B) {
            if (key.first != i)
                continue;
            const auto y = b * Vector(b.cols(), 1.0);
            for (std::size_t r = 0; r < lhs.size(); ++r)
                lhs[r] += y[r];
        }
        EXPECT_LT(norm_inf(lhs), 1e-15) << "subdomain " << i;
    }
}

TEST(Coupling, SingleEdgeBlockAndEmptyInterface)
{
    const auto s = make(Model::A, 4, 1);
    const auto b = fem::assemble_coupling(s.mesh, s.lab, s.dofs, 1, 0);
    const auto mid1 = s.dofs.local(1, s.mesh.vertex_index(2, 1));
    const auto mid0 = s.dofs.local(0, s.mesh.vertex_index(2, 1));
    const auto right0 = s.dofs.local(0, s.mesh.vertex_index(3, 1));
    const auto corner1 = s.dofs.local(1, s.mesh.vertex_index(3, 1));
    // one edge of length h = 1/4 from (2,1) to (3,1)
    EXPECT_DOUBLE_EQ(b.at(mid1, right0), -1.0 / 24.0);
    EXPECT_DOUBLE_EQ(b.at(corner1, mid0), -1.0 / 24.0);
    EXPECT_DOUBLE_EQ(b.at(mid1, mid0), -1.0 / 6.0);

    const auto s25 = make(Model::A, 16, 25);
    EXPECT_THROW(fem::assemble_coupling(s25.mesh, s25.lab, s25.dofs, 1, 2), ConfigError);
}

TEST(Rhs, UnitTauGivesZero)
{
    const auto s = make(Model::A, 16, 1);
    fem::ProblemConfig pc;
    pc.tau = 1.0;
    for (const auto& f : fem::assemble_rhs(s.mesh, s.lab, s.dofs, pc))
        EXPECT_EQ(norm_inf(f), 0.0);
}

TEST(Rhs, AntisymmetryAcrossTheMembrane)
{
    const auto s = make(Model::A, 8, 1);
    const auto f = fem::assemble_rhs(s.mesh, s.lab, s.dofs, fem::ProblemConfig{});
    double total = 0.0;
    for (Index l = s.dofs.interior_size(1); l < s.dofs.size(1); ++l) {
        const auto v = s.dofs.vertex(1, l);
        EXPECT_EQ(f[0][s.dofs.local(0, v)] + f[1][l], 0.0);
        total += f[1][l];
    }
    EXPECT_NE(total, 0.0);
    for (int sub : {0, 1})
        for (Index l = 0; l < s.dofs.interior_size(sub); ++l)
            EXPECT_EQ(f[sub][l], 0.0);
}

TEST(Rhs, CornerEntryMatchesQuadratureOracle)
{
    const double tau = 0.01;
    const auto s = make(Model::A, 16, 1);
    fem::ProblemConfig pc;
    pc.tau = tau;
    const auto f = fem::assemble_rhs(s.mesh, s.lab, s.dofs, pc);
    const double h = 1.0 / 16;
    auto g = [tau](double x, double y) { return 0.5 * std::sin(10.0 * (x * x + y * y)) * (1.0 - tau); };

    // corners of the cell [1/4, 3/4]^2; each has two incident membrane edges
    for (auto [ci, cj, di, dj] : {std::array{4, 4, 1, 1}, std::array{12, 4, -1, 1}, std::array{4, 12, 1, -1},
                                  std::array{12, 12, -1, -1}}) {
        const double x0 = ci * h, y0 = cj * h;
        double gauss = 0.0, simpson = 0.0;
        const double gp = 0.5 / std::sqrt(3.0);
        for (auto [ex, ey] : {std::pair{double(di), 0.0}, std::pair{0.0, double(dj)}}) {
            // hat function 1 - s along the edge from the corner
            for (double sq : {0.5 - gp, 0.5 + gp})
                gauss += 0.5 * h * g(x0 + sq * ex * h, y0 + sq * ey * h) * (1.0 - sq);
            const int m = 2000;
            for (int k = 0; k <= m; ++k) {
                const double sq = double(k) / m;
                const double w = (k == 0 || k == m) ? 1.0 : (k % 2 ? 4.0 : 2.0);
                simpson += w * h / (3.0 * m) * g(x0 + sq * ex * h, y0 + sq * ey * h) * (1.0 - sq);
            }
        }
        const auto l = s.dofs.local(1, s.mesh.vertex_index(ci, cj));
        EXPECT_NEAR(f[1][l], gauss, 1e-15);
        // two Gauss points per edge are not exact for sin(10 r^2)
        EXPECT_NEAR(f[1][l], simpson, 5e-5);
    }
}

TEST(Operators, CellBlocksAreNonsingular)
{
    // measured: smallest eigenvalue of tau A_i + M_i on a cell
    const auto s = make(Model::A, 16, 1);
    fem::ProblemConfig pc;
    const auto ops = fem::assemble_operators(s.mesh, s.lab, s.dofs, pc);
    const auto d = add(ops.A[1], ops.M[1], pc.tau, 1.0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(d.to_dense());
    const double lmin = es.eigenvalues().minCoeff();
    RecordProperty("lambda_min", std::to_string(lmin));
    EXPECT_GT(lmin, 1e-6);
}

TEST(Operators, ConfigValidation)
{
    const auto s = make(Model::A, 8, 1);
    fem::ProblemConfig pc;
    pc.tau = 0.0;
    EXPECT_THROW(fem::assemble_operators(s.mesh, s.lab, s.dofs, pc), ConfigError);
    pc.tau = 0.01;
    pc.sigma = {1.0};
    EXPECT_THROW(fem::assemble_operators(s.mesh, s.lab, s.dofs, pc), ConfigError);
    pc.sigma = {1.0, -1.0};
    EXPECT_THROW(fem::assemble_operators(s.mesh, s.lab, s.dofs, pc), ConfigError);
}
