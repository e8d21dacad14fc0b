// Copyright The emilab Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>

#include "emilab/error.hpp"
#include "emilab/sparse_matrix.hpp"

namespace emilab::io {

// Matrix Market coordinate format. Symmetric matrices are written with
// the "symmetric" qualifier and only the lower triangle (row >= col) is stored.

inline void write_matrix_market(std::ostream& os, const SparseMatrix& m, bool as_symmetric)
{
    if (as_symmetric && !m.is_symmetric_exact())
        throw ConfigError("write_matrix_market: matrix is not exactly symmetric");
    Index count = 0;
    for (Index r = 0; r < m.rows(); ++r)
        for (auto c : m.row_cols(r))
            if (!as_symmetric || c <= r)
                ++count;
    os << "%%MatrixMarket matrix coordinate real " << (as_symmetric ? "symmetric" : "general") << '\n';
    os << m.rows() << ' ' << m.cols() << ' ' << count << '\n';
    os << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (Index r = 0; r < m.rows(); ++r) {
        const auto cols = m.row_cols(r);
        const auto vals = m.row_values(r);
        for (std::size_t k = 0; k < cols.size(); ++k)
            if (!as_symmetric || cols[k] <= r)
                os << r + 1 << ' ' << cols[k] + 1 << ' ' << vals[k] << '\n';
    }
}

inline void write_matrix_market(const std::string& path, const SparseMatrix& m)
{
    std::ofstream os(path);
    if (!os)
        throw ConfigError("cannot open " + path + " for writing");
    write_matrix_market(os, m, m.symmetric() && m.is_symmetric_exact());
}

inline SparseMatrix read_matrix_market(std::istream& is)
{
    std::string line;
    if (!std::getline(is, line))
        throw ConfigError("read_matrix_market: empty input");
    std::istringstream banner(line);
    std::string tag, object, format, field, symmetry;
    banner >> tag >> object >> format >> field >> symmetry;
    if (tag != "%%MatrixMarket" || object != "matrix" || format != "coordinate")
        throw ConfigError("read_matrix_market: only 'matrix coordinate' files are supported");
    if (field != "real" && field != "integer")
        throw ConfigError("read_matrix_market: unsupported field '" + field + "'");
    const bool sym = symmetry == "symmetric";
    if (!sym && symmetry != "general")
        throw ConfigError("read_matrix_market: unsupported symmetry '" + symmetry + "'");

    while (std::getline(is, line))
        if (!line.empty() && line[0] != '%')
            break;
    Index rows = 0, cols = 0, entries = 0;
    if (!(std::istringstream(line) >> rows >> cols >> entries))
        throw ConfigError("read_matrix_market: malformed size line");

    std::vector<Triplet> t;
    t.reserve(static_cast<std::size_t>(sym ? 2 * entries : entries));
    for (Index k = 0; k < entries; ++k) {
        Index r = 0, c = 0;
        double v = 0.0;
        if (!(is >> r >> c >> v))
            throw ConfigError("read_matrix_market: truncated entry list");
        t.push_back({r - 1, c - 1, v});
        if (sym && r != c)
            t.push_back({c - 1, r - 1, v});
    }
    return SparseMatrix::from_triplets(rows, cols, std::move(t), sym);
}

inline SparseMatrix read_matrix_market(const std::string& path)
{
    std::ifstream is(path);
    if (!is)
        throw ConfigError("cannot open " + path);
    return read_matrix_market(is);
}

/// Plain vector file: one value per line.
inline void write_vector(const std::string& path, std::span<const double> v)
{
    std::ofstream os(path);
    if (!os)
        throw ConfigError("cannot open " + path + " for writing");
    os << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (auto x : v)
        os << x << '\n';
}

inline Vector read_vector(const std::string& path)
{
    std::ifstream is(path);
    if (!is)
        throw ConfigError("cannot open " + path);
    Vector v;
    double x = 0.0;
    while (is >> x)
        v.push_back(x);
    if (!is.eof())
        throw ConfigError("read_vector: non-numeric entry in " + path);
    return v;
}

} // namespace emilab::io
