// Copyright The emilab Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cmath>
#include <map>
#include <utility>
#include <vector>

#include "emilab/error.hpp"
#include "emilab/meshgen.hpp"
#include "emilab/sparse_matrix.hpp"

namespace emilab::fem {

using meshgen::DofMap;
using meshgen::StructuredMesh;
using meshgen::SubdomainLabeling;

/// Physical and solver parameters. tau_i = tau * sigma[i]; an empty sigma
/// means unit conductivity everywhere.
struct ProblemConfig {
    double tau = 0.01;
    std::vector<double> sigma;
    double epsilon = 1e-4;

    double sigma_of(int sub) const { return sigma.empty() ? 1.0 : sigma.at(static_cast<std::size_t>(sub)); }
    double tau_of(int sub) const { return tau * sigma_of(sub); }

    void validate(int num_subdomains) const
    {
        if (!(tau > 0.0))
            throw ConfigError("tau must be positive");
        if (!(epsilon > 0.0))
            throw ConfigError("epsilon must be positive");
        if (!sigma.empty() && static_cast<int>(sigma.size()) != num_subdomains)
            throw ConfigError("sigma must list one conductivity per subdomain");
        for (auto s : sigma)
            if (!(s > 0.0))
                throw ConfigError("conductivities must be positive");
    }
};

/// Initial membrane potential v_in(x) = 1/2 sin(10 |x|^2).
inline double initial_membrane_potential(double x, double y) { return 0.5 * std::sin(10.0 * (x * x + y * y)); }

/// Membrane source g = v_in (1 - tau) for the passive ionic current I_ion(v) = v.
inline double membrane_source(double x, double y, double tau) { return initial_membrane_potential(x, y) * (1.0 - tau); }

struct OperatorSet {
    std::vector<SparseMatrix> A;      // bulk stiffness per subdomain
    std::vector<SparseMatrix> M;      // membrane mass per subdomain
    std::vector<SparseMatrix> Mbulk;  // bulk mass per subdomain
    std::map<std::pair<int, int>, SparseMatrix> B;  // coupling for each nonempty interface, both orientations
    std::vector<Vector> fvec;

    int num_subdomains() const { return static_cast<int>(A.size()); }
};

namespace detail {

struct ElementMatrices {
    std::array<std::array<double, 3>, 3> stiffness;
    std::array<std::array<double, 3>, 3> mass;
};

inline ElementMatrices p1_element(const StructuredMesh& mesh, Index t)
{
    const auto& tri = mesh.triangles[t];
    const auto& p0 = mesh.vertices[tri[0]];
    const auto& p1 = mesh.vertices[tri[1]];
    const auto& p2 = mesh.vertices[tri[2]];
    const double det = (p1.x - p0.x) * (p2.y - p0.y) - (p2.x - p0.x) * (p1.y - p0.y);
    const double area = 0.5 * det;
    // gradients of barycentric coordinates times det
    const std::array<double, 3> bx{p1.y - p2.y, p2.y - p0.y, p0.y - p1.y};
    const std::array<double, 3> by{p2.x - p1.x, p0.x - p2.x, p1.x - p0.x};
    ElementMatrices e{};
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) {
            e.stiffness[a][b] = (bx[a] * bx[b] + by[a] * by[b]) / (4.0 * area);
            e.mass[a][b] = area / (a == b ? 6.0 : 12.0);
        }
    return e;
}

inline double edge_length(const StructuredMesh& mesh, Index v0, Index v1)
{
    const auto& a = mesh.vertices[v0];
    const auto& b = mesh.vertices[v1];
    return std::hypot(b.x - a.x, b.y - a.y);
}

inline void require_subdomain(const DofMap& dofs, int sub)
{
    if (sub < 0 || sub >= dofs.num_subdomains())
        throw ConfigError("invalid subdomain id " + std::to_string(sub));
}

template <class ElementPart>
SparseMatrix assemble_bulk(const StructuredMesh& mesh, const SubdomainLabeling& lab, const DofMap& dofs, int sub,
                           ElementPart part)
{
    require_subdomain(dofs, sub);
    const auto tris = lab.triangles_in(sub);
    if (tris.empty())
        throw ConfigError("subdomain " + std::to_string(sub) + " has no triangles");
    std::vector<Triplet> t;
    t.reserve(tris.size() * 9);
    for (auto tr : tris) {
        const auto e = p1_element(mesh, tr);
        const auto& m = part(e);
        std::array<Index, 3> loc{};
        for (int a = 0; a < 3; ++a)
            loc[a] = dofs.local(sub, mesh.triangles[tr][a]);
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b)
                t.push_back({loc[a], loc[b], m[a][b]});
    }
    const auto n = dofs.size(sub);
    return SparseMatrix::from_triplets(n, n, std::move(t), true);
}

} // namespace detail

/// A_i: P1 stiffness over the triangles of subdomain i (Neumann, no boundary terms).
inline SparseMatrix assemble_stiffness(const StructuredMesh& mesh, const SubdomainLabeling& lab, const DofMap& dofs,
                                       int sub)
{
    return detail::assemble_bulk(mesh, lab, dofs, sub, [](const detail::ElementMatrices& e) -> const auto& {
        return e.stiffness;
    });
}

/// Bulk mass over Omega_i, used by the block-diagonal preconditioner.
inline SparseMatrix assemble_bulk_mass(const StructuredMesh& mesh, const SubdomainLabeling& lab, const DofMap& dofs,
                                       int sub)
{
    return detail::assemble_bulk(mesh, lab, dofs, sub, [](const detail::ElementMatrices& e) -> const auto& {
        return e.mass;
    });
}

/// M_i: 1D P1 mass along every membrane edge of Gamma_i.
inline SparseMatrix assemble_membrane_mass(const StructuredMesh& mesh, const SubdomainLabeling& lab,
                                           const DofMap& dofs, int sub)
{
    detail::require_subdomain(dofs, sub);
    std::vector<Triplet> t;
    for (auto k : lab.edges_of(sub)) {
        const auto& e = lab.membrane_edges[k];
        const double len = detail::edge_length(mesh, e.v0, e.v1);
        const Index a = dofs.local(sub, e.v0);
        const Index b = dofs.local(sub, e.v1);
        t.push_back({a, a, len / 3.0});
        t.push_back({a, b, len / 6.0});
        t.push_back({b, a, len / 6.0});
        t.push_back({b, b, len / 3.0});
    }
    const auto n = dofs.size(sub);
    return SparseMatrix::from_triplets(n, n, std::move(t), true);
}

/// B_{i,j} = -[int_{Gamma_ij} phi_{i,l} phi_{j,k}], rows in subdomain i, columns in j.
inline SparseMatrix assemble_coupling(const StructuredMesh& mesh, const SubdomainLabeling& lab, const DofMap& dofs,
                                      int i, int j)
{
    detail::require_subdomain(dofs, i);
    detail::require_subdomain(dofs, j);
    const int lo = std::min(i, j);
    const int hi = std::max(i, j);
    std::vector<Triplet> t;
    const auto edges = lab.edges_of(lo).size() <= lab.edges_of(hi).size() ? lab.edges_of(lo) : lab.edges_of(hi);
    for (auto k : edges) {
        const auto& e = lab.membrane_edges[k];
        if (e.i != lo || e.j != hi)
            continue;
        const double len = detail::edge_length(mesh, e.v0, e.v1);
        const std::array<Index, 2> r{dofs.local(i, e.v0), dofs.local(i, e.v1)};
        const std::array<Index, 2> c{dofs.local(j, e.v0), dofs.local(j, e.v1)};
        for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b)
                t.push_back({r[a], c[b], -(a == b ? len / 3.0 : len / 6.0)});
    }
    if (t.empty())
        throw ConfigError("interface Gamma_" + std::to_string(i) + "," + std::to_string(j) + " is empty");
    return SparseMatrix::from_triplets(dofs.size(i), dofs.size(j), std::move(t));
}

/// Membrane source vectors: an edge on Gamma_ij (i < j) adds -int g phi to
/// f_i and +int g phi to f_j, integrated by 2-point Gauss per edge.
inline std::vector<Vector> assemble_rhs(const StructuredMesh& mesh, const SubdomainLabeling& lab, const DofMap& dofs,
                                        const ProblemConfig& config)
{
    std::vector<Vector> f(dofs.num_subdomains());
    for (int s = 0; s < dofs.num_subdomains(); ++s)
        f[s].assign(dofs.size(s), 0.0);
    const double gp = 0.5 / std::sqrt(3.0);
    const std::array<double, 2> tq{0.5 - gp, 0.5 + gp};
    for (const auto& e : lab.membrane_edges) {
        const auto& p0 = mesh.vertices[e.v0];
        const auto& p1 = mesh.vertices[e.v1];
        const double len = detail::edge_length(mesh, e.v0, e.v1);
        double w0 = 0.0, w1 = 0.0;  // int g phi_v0, int g phi_v1
        for (auto s : tq) {
            const double g = membrane_source(p0.x + s * (p1.x - p0.x), p0.y + s * (p1.y - p0.y), config.tau);
            w0 += 0.5 * len * g * (1.0 - s);
            w1 += 0.5 * len * g * s;
        }
        f[e.i][dofs.local(e.i, e.v0)] -= w0;
        f[e.i][dofs.local(e.i, e.v1)] -= w1;
        f[e.j][dofs.local(e.j, e.v0)] += w0;
        f[e.j][dofs.local(e.j, e.v1)] += w1;
    }
    return f;
}

/// Every operator needed by the block system and the preconditioners.
inline OperatorSet assemble_operators(const StructuredMesh& mesh, const SubdomainLabeling& lab, const DofMap& dofs,
                                      const ProblemConfig& config)
{
    config.validate(dofs.num_subdomains());
    OperatorSet ops;
    const int ns = dofs.num_subdomains();
    ops.A.reserve(ns);
    ops.M.reserve(ns);
    ops.Mbulk.reserve(ns);
    for (int s = 0; s < ns; ++s) {
        ops.A.push_back(assemble_stiffness(mesh, lab, dofs, s));
        ops.M.push_back(assemble_membrane_mass(mesh, lab, dofs, s));
        ops.Mbulk.push_back(assemble_bulk_mass(mesh, lab, dofs, s));
    }
    std::map<std::pair<int, int>, bool> pairs;
    for (const auto& e : lab.membrane_edges)
        pairs[{e.i, e.j}] = true;
    for (const auto& [p, unused] : pairs) {
        auto b = assemble_coupling(mesh, lab, dofs, p.first, p.second);
        ops.B.emplace(std::make_pair(p.second, p.first), b.transpose());
        ops.B.emplace(p, std::move(b));
    }
    ops.fvec = assemble_rhs(mesh, lab, dofs, config);
    return ops;
}

} // namespace emilab::fem
