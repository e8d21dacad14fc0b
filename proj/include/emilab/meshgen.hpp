// Copyright The emilab Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "emilab/error.hpp"
#include "emilab/sparse_matrix.hpp"

namespace emilab::meshgen {

struct Point {
    double x = 0.0;
    double y = 0.0;
};

/// Uniform right-triangular tessellation of the unit square.
///
/// Vertex (i, j) sits at (i*h, j*h) and has index j*(nh+1) + i. Grid square
/// (i, j) is cut by its lower-left to upper-right diagonal into triangle
/// 2*(j*nh+i) = (v00, v10, v11) and 2*(j*nh+i)+1 = (v00, v11, v01), both
/// counter-clockwise.
struct StructuredMesh {
    int nh = 0;
    double h = 0.0;
    std::vector<Point> vertices;
    std::vector<std::array<Index, 3>> triangles;

    Index vertex_index(int i, int j) const { return Index(j) * (nh + 1) + i; }
    Index vertex_count() const { return static_cast<Index>(vertices.size()); }
    Index triangle_count() const { return static_cast<Index>(triangles.size()); }

    /// Grid square (i, j) that contains triangle t.
    std::array<int, 2> square_of(Index t) const
    {
        const auto sq = t / 2;
        return {static_cast<int>(sq % nh), static_cast<int>(sq / nh)};
    }

    Point barycenter(Index t) const
    {
        const auto& tri = triangles[t];
        Point c;
        for (auto v : tri) {
            c.x += vertices[v].x;
            c.y += vertices[v].y;
        }
        c.x /= 3.0;
        c.y /= 3.0;
        return c;
    }
};

inline bool is_power_of_two(long long v) { return v > 0 && (v & (v - 1)) == 0; }

inline StructuredMesh build_mesh(int nh)
{
    if (nh < 4 || !is_power_of_two(nh))
        throw ConfigError("build_mesh: nh must be a power of two >= 4, got " + std::to_string(nh));
    StructuredMesh m;
    m.nh = nh;
    m.h = 1.0 / nh;
    m.vertices.resize(static_cast<std::size_t>(nh + 1) * (nh + 1));
    for (int j = 0; j <= nh; ++j)
        for (int i = 0; i <= nh; ++i)
            m.vertices[m.vertex_index(i, j)] = {i * m.h, j * m.h};
    m.triangles.resize(2 * static_cast<std::size_t>(nh) * nh);
    for (int j = 0; j < nh; ++j)
        for (int i = 0; i < nh; ++i) {
            const auto v00 = m.vertex_index(i, j);
            const auto v10 = m.vertex_index(i + 1, j);
            const auto v11 = m.vertex_index(i + 1, j + 1);
            const auto v01 = m.vertex_index(i, j + 1);
            const auto t = 2 * (Index(j) * nh + i);
            m.triangles[t] = {v00, v10, v11};
            m.triangles[t + 1] = {v00, v11, v01};
        }
    return m;
}

enum class Model { A, B };

inline char model_name(Model m) { return m == Model::A ? 'A' : 'B'; }

/// A mesh edge (v0 < v1) on the interface between subdomains i < j.
struct MembraneEdge {
    Index v0;
    Index v1;
    int i;
    int j;
};

struct SubdomainLabeling {
    Model model = Model::A;
    int num_cells = 0;
    std::vector<int> cell_of;                  // triangle -> subdomain id in 0..num_cells
    std::vector<MembraneEdge> membrane_edges;  // sorted by (v0, v1)

    // Triangles grouped by subdomain (CSR).
    std::vector<Index> triangle_ptr;
    std::vector<Index> triangle_list;
    // Membrane edge indices grouped by subdomain; an edge appears under both sides.
    std::vector<Index> edge_ptr;
    std::vector<Index> edge_list;

    int num_subdomains() const { return num_cells + 1; }

    std::span<const Index> triangles_in(int sub) const
    {
        return {triangle_list.data() + triangle_ptr[sub],
                static_cast<std::size_t>(triangle_ptr[sub + 1] - triangle_ptr[sub])};
    }
    std::span<const Index> edges_of(int sub) const
    {
        return {edge_list.data() + edge_ptr[sub], static_cast<std::size_t>(edge_ptr[sub + 1] - edge_ptr[sub])};
    }
};

namespace detail {

inline void group_by(int groups, const std::vector<int>& key_of, std::vector<Index>& ptr, std::vector<Index>& list)
{
    ptr.assign(groups + 1, 0);
    for (auto k : key_of)
        ++ptr[k + 1];
    std::partial_sum(ptr.begin(), ptr.end(), ptr.begin());
    list.resize(key_of.size());
    std::vector<Index> next(ptr.begin(), ptr.end() - 1);
    for (std::size_t t = 0; t < key_of.size(); ++t)
        list[next[key_of[t]]++] = static_cast<Index>(t);
}

/// Collect interface edges from triangle labels and build the per-subdomain indices.
inline void finalize_labeling(const StructuredMesh& mesh, SubdomainLabeling& lab)
{
    const int nh = mesh.nh;
    const auto& tri = mesh.triangles;
    auto add_edge = [&](Index ta, Index tb, Index va, Index vb) {
        const int a = lab.cell_of[ta];
        const int b = lab.cell_of[tb];
        if (a != b)
            lab.membrane_edges.push_back({std::min(va, vb), std::max(va, vb), std::min(a, b), std::max(a, b)});
    };
    for (int j = 0; j < nh; ++j)
        for (int i = 0; i < nh; ++i) {
            const auto lower = 2 * (Index(j) * nh + i);
            const auto upper = lower + 1;
            // diagonal shared inside the square
            add_edge(lower, upper, tri[lower][0], tri[lower][2]);
            // horizontal edge at the bottom of square (i, j)
            if (j > 0) {
                const auto below = 2 * (Index(j - 1) * nh + i) + 1;
                add_edge(lower, below, tri[lower][0], tri[lower][1]);
            }
            // vertical edge at the left of square (i, j)
            if (i > 0) {
                const auto left = 2 * (Index(j) * nh + i - 1);
                add_edge(upper, left, tri[upper][0], tri[upper][2]);
            }
        }
    std::sort(lab.membrane_edges.begin(), lab.membrane_edges.end(),
              [](const MembraneEdge& a, const MembraneEdge& b) {
                  return a.v0 != b.v0 ? a.v0 < b.v0 : a.v1 < b.v1;
              });

    group_by(lab.num_subdomains(), lab.cell_of, lab.triangle_ptr, lab.triangle_list);
    if (lab.triangle_ptr[1] == 0)
        throw ConfigError("labeling: extracellular subdomain is empty");

    lab.edge_ptr.assign(lab.num_subdomains() + 1, 0);
    for (const auto& e : lab.membrane_edges) {
        ++lab.edge_ptr[e.i + 1];
        ++lab.edge_ptr[e.j + 1];
    }
    std::partial_sum(lab.edge_ptr.begin(), lab.edge_ptr.end(), lab.edge_ptr.begin());
    lab.edge_list.resize(lab.edge_ptr.back());
    std::vector<Index> next(lab.edge_ptr.begin(), lab.edge_ptr.end() - 1);
    for (std::size_t k = 0; k < lab.membrane_edges.size(); ++k) {
        lab.edge_list[next[lab.membrane_edges[k].i]++] = static_cast<Index>(k);
        lab.edge_list[next[lab.membrane_edges[k].j]++] = static_cast<Index>(k);
    }
}

inline long long exact_sqrt(long long n)
{
    if (n < 0)
        return -1;
    auto r = static_cast<long long>(std::llround(std::sqrt(static_cast<double>(n))));
    while (r * r > n)
        --r;
    while ((r + 1) * (r + 1) <= n)
        ++r;
    return r * r == n ? r : -1;
}

} // namespace detail

/// Scale factor s = 3*sqrt(N)+1 of the model A partition, validated to be 4^k.
inline int model_a_scale(int num_cells)
{
    const auto r = detail::exact_sqrt(num_cells);
    if (num_cells < 1 || r < 0)
        throw ConfigError("model A: N must be ((4^k-1)/3)^2 with k >= 1, got " + std::to_string(num_cells));
    const long long s = 3 * r + 1;
    if (!is_power_of_two(s) || (s & 0x5555555555555555LL) == 0)
        throw ConfigError("model A: N must be ((4^k-1)/3)^2 with k >= 1, got " + std::to_string(num_cells));
    return static_cast<int>(s);
}

/// Nervous-system geometry: cells are the squares where both components of
/// psi(x, y) = (x*s mod 3, y*s mod 3) are >= 1, with s = 3*sqrt(N)+1.
///
/// Classification is done per grid square in integer arithmetic: a square
/// lies in the 1/s-strip q = floor(i*s/nh) along each axis, and the strip is
/// intracellular when q mod 3 != 0. Cell ids are assigned row-major.
/// N = 0 labels the whole domain extracellular.
inline SubdomainLabeling label_model_a(const StructuredMesh& mesh, int num_cells)
{
    SubdomainLabeling lab;
    lab.model = Model::A;
    lab.num_cells = num_cells;
    lab.cell_of.assign(mesh.triangles.size(), 0);
    if (num_cells != 0) {
        const int s = model_a_scale(num_cells);
        if (mesh.nh % s != 0)
            throw ConfigError("model A: scale " + std::to_string(s) + " does not divide nh=" +
                              std::to_string(mesh.nh) + " (N=" + std::to_string(num_cells) + ")");
        const int per_strip = mesh.nh / s;
        const int cells_per_side = (s - 1) / 3;
        for (Index t = 0; t < mesh.triangle_count(); ++t) {
            const auto [i, j] = mesh.square_of(t);
            const int qx = i / per_strip;
            const int qy = j / per_strip;
            if (qx % 3 != 0 && qy % 3 != 0)
                lab.cell_of[t] = (qy / 3) * cells_per_side + (qx / 3) + 1;
        }
    }
    detail::finalize_labeling(mesh, lab);
    return lab;
}

/// Cardiac geometry: (1/8, 7/8)^2 split into a sqrt(N) x sqrt(N) grid of
/// touching square cells, ids assigned row-major.
inline SubdomainLabeling label_model_b(const StructuredMesh& mesh, int num_cells)
{
    SubdomainLabeling lab;
    lab.model = Model::B;
    lab.num_cells = num_cells;
    lab.cell_of.assign(mesh.triangles.size(), 0);
    if (num_cells != 0) {
        const auto r = detail::exact_sqrt(num_cells);
        if (r < 1)
            throw ConfigError("model B: N must be a perfect square, got " + std::to_string(num_cells));
        if (mesh.nh % 8 != 0)
            throw ConfigError("model B: nh must be a multiple of 8");
        const int span = 3 * mesh.nh / 4;
        if (span % r != 0)
            throw ConfigError("model B: sqrt(N)=" + std::to_string(r) + " does not divide 3*nh/4=" +
                              std::to_string(span));
        const int width = static_cast<int>(span / r);
        const int lo = mesh.nh / 8;
        for (Index t = 0; t < mesh.triangle_count(); ++t) {
            const auto [i, j] = mesh.square_of(t);
            if (i >= lo && i < lo + span && j >= lo && j < lo + span)
                lab.cell_of[t] = static_cast<int>(((j - lo) / width) * r + (i - lo) / width + 1);
        }
    }
    detail::finalize_labeling(mesh, lab);
    return lab;
}

inline SubdomainLabeling label_model(Model model, const StructuredMesh& mesh, int num_cells)
{
    return model == Model::A ? label_model_a(mesh, num_cells) : label_model_b(mesh, num_cells);
}

/// Degrees of freedom per subdomain. A vertex owns one dof in every subdomain
/// whose triangles touch it. Inside a subdomain, interior dofs come first and
/// membrane dofs last, each group in ascending vertex order. Global numbering
/// is subdomain-major starting with the extracellular block.
class DofMap {
public:
    DofMap() = default;
    DofMap(const StructuredMesh& mesh, const SubdomainLabeling& lab)
    {
        const auto nv = mesh.vertex_count();
        const int ns = lab.num_subdomains();

        // subdomains touching each vertex (at most six distinct ids)
        std::vector<std::array<int, 6>> touch(nv);
        std::vector<unsigned char> ntouch(nv, 0);
        auto note = [&](Index v, int s) {
            auto& list = touch[v];
            for (int k = 0; k < ntouch[v]; ++k)
                if (list[k] == s)
                    return;
            list[ntouch[v]++] = s;
        };
        for (Index t = 0; t < mesh.triangle_count(); ++t)
            for (auto v : mesh.triangles[t])
                note(v, lab.cell_of[t]);

        // membrane marks per (vertex, subdomain) stored alongside touch lists
        std::vector<std::array<bool, 6>> on_membrane(nv, std::array<bool, 6>{});
        auto mark = [&](Index v, int s) {
            for (int k = 0; k < ntouch[v]; ++k)
                if (touch[v][k] == s)
                    on_membrane[v][k] = true;
        };
        for (const auto& e : lab.membrane_edges) {
            mark(e.v0, e.i);
            mark(e.v1, e.i);
            mark(e.v0, e.j);
            mark(e.v1, e.j);
        }

        vertices_.assign(ns, {});
        n_membrane_.assign(ns, 0);
        for (Index v = 0; v < nv; ++v)
            for (int k = 0; k < ntouch[v]; ++k)
                if (!on_membrane[v][k])
                    vertices_[touch[v][k]].push_back(v);
        for (Index v = 0; v < nv; ++v)
            for (int k = 0; k < ntouch[v]; ++k)
                if (on_membrane[v][k]) {
                    vertices_[touch[v][k]].push_back(v);
                    ++n_membrane_[touch[v][k]];
                }

        offsets_.assign(ns + 1, 0);
        for (int s = 0; s < ns; ++s)
            offsets_[s + 1] = offsets_[s] + static_cast<Index>(vertices_[s].size());

        // vertex -> (subdomain, local) lookup in CSR form
        vdof_ptr_.assign(nv + 1, 0);
        for (Index v = 0; v < nv; ++v)
            vdof_ptr_[v + 1] = vdof_ptr_[v] + ntouch[v];
        vdof_sub_.resize(vdof_ptr_.back());
        vdof_local_.resize(vdof_ptr_.back());
        std::vector<Index> fill(nv, 0);
        for (int s = 0; s < ns; ++s)
            for (std::size_t l = 0; l < vertices_[s].size(); ++l) {
                const auto v = vertices_[s][l];
                const auto slot = vdof_ptr_[v] + fill[v]++;
                vdof_sub_[slot] = s;
                vdof_local_[slot] = static_cast<Index>(l);
            }
        points_.reserve(nv);
        for (const auto& p : mesh.vertices)
            points_.push_back(p);
    }

    int num_subdomains() const { return static_cast<int>(vertices_.size()); }
    Index size(int sub) const { return static_cast<Index>(vertices_[sub].size()); }
    Index membrane_size(int sub) const { return n_membrane_[sub]; }
    Index interior_size(int sub) const { return size(sub) - n_membrane_[sub]; }
    Index offset(int sub) const { return offsets_[sub]; }

    /// Global vertex id of local dof l in subdomain sub.
    Index vertex(int sub, Index local) const { return vertices_[sub][local]; }
    std::span<const Index> vertices(int sub) const { return vertices_[sub]; }
    Point coordinates(int sub, Index local) const { return points_[vertices_[sub][local]]; }

    /// Local index of vertex v in subdomain sub, or -1 when v has no dof there.
    Index local(int sub, Index v) const
    {
        for (auto k = vdof_ptr_[v]; k < vdof_ptr_[v + 1]; ++k)
            if (vdof_sub_[k] == sub)
                return vdof_local_[k];
        return -1;
    }

    /// Number of dofs owned by vertex v (one per incident subdomain).
    Index dofs_at_vertex(Index v) const { return vdof_ptr_[v + 1] - vdof_ptr_[v]; }

    Index n0() const { return size(0); }
    Index n_in() const { return offsets_.back() - size(0); }
    Index n_gamma() const
    {
        Index s = 0;
        for (int i = 1; i < num_subdomains(); ++i)
            s += n_membrane_[i];
        return s;
    }
    Index n() const { return offsets_.back(); }

private:
    std::vector<std::vector<Index>> vertices_;
    std::vector<Index> n_membrane_;
    std::vector<Index> offsets_;
    std::vector<Index> vdof_ptr_;
    std::vector<int> vdof_sub_;
    std::vector<Index> vdof_local_;
    std::vector<Point> points_;
};

inline DofMap build_dofmap(const StructuredMesh& mesh, const SubdomainLabeling& lab) { return DofMap(mesh, lab); }

/// Plain-text export: header "nvertices ntriangles", then one "x y" line per
/// vertex, then one "v0 v1 v2 subdomain" line per triangle (0-based).
inline void write_mesh(std::ostream& os, const StructuredMesh& mesh, const SubdomainLabeling& lab)
{
    os << mesh.vertex_count() << ' ' << mesh.triangle_count() << '\n';
    os << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (const auto& p : mesh.vertices)
        os << p.x << ' ' << p.y << '\n';
    for (Index t = 0; t < mesh.triangle_count(); ++t) {
        const auto& tri = mesh.triangles[t];
        os << tri[0] << ' ' << tri[1] << ' ' << tri[2] << ' ' << lab.cell_of[t] << '\n';
    }
}

inline void write_mesh(const std::string& path, const StructuredMesh& mesh, const SubdomainLabeling& lab)
{
    std::ofstream os(path);
    if (!os)
        throw ConfigError("cannot open " + path + " for writing");
    write_mesh(os, mesh, lab);
}

} // namespace emilab::meshgen
