// Copyright The emilab Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cctype>
#include <chrono>
#include <fstream>
#include <iomanip>
#include <memory>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "emilab/error.hpp"
#include "emilab/fem.hpp"
#include "emilab/meshgen.hpp"
#include "emilab/sparse/amg.hpp"
#include "emilab/sparse/block_diagonal.hpp"
#include "emilab/sparse/cg.hpp"
#include "emilab/sparse/ilu0.hpp"
#include "emilab/spectral.hpp"
#include "emilab/system.hpp"

namespace emilab::harness {

using meshgen::Model;

inline Model model_from_string(std::string s)
{
    if (s == "A" || s == "a")
        return Model::A;
    if (s == "B" || s == "b")
        return Model::B;
    throw ConfigError("unknown model '" + s + "' (expected A or B)");
}

struct ExperimentSpec {
    Model model = Model::A;
    std::vector<int> nh{64};
    std::vector<int> cells{1};
    std::vector<double> tau{0.01};
    std::vector<std::string> solvers{"cg"};
    double eps = 1e-4;
    double tol = 1e-9;
    int max_iter = 20000;
    std::string table = "refinement";  // refinement | tau | cells | spectral
    std::string output_dir = ".";

    /// Every (nh, N) pair must pass the geometry checks, tau must be positive
    /// and every solver name must be known.
    void validate() const
    {
        if (nh.empty() || cells.empty() || tau.empty())
            throw ConfigError("spec: nh, cells and tau lists must be nonempty");
        for (auto t : tau)
            if (!(t > 0.0))
                throw ConfigError("spec: tau must be positive");
        if (!(eps > 0.0) || !(tol > 0.0) || max_iter <= 0)
            throw ConfigError("spec: eps, tol and maxiter must be positive");
        for (const auto& s : solvers)
            sparse::preconditioner_from_string(s);
        for (auto h : nh) {
            const auto mesh_ok = meshgen::is_power_of_two(h) && h >= 4;
            if (!mesh_ok)
                throw ConfigError("spec: nh=" + std::to_string(h) + " must be a power of two >= 4");
            for (auto n : cells) {
                // labeling throws ConfigError on incompatible pairs
                const auto mesh = meshgen::build_mesh(h);
                meshgen::label_model(model, mesh, n);
            }
        }
        if (table != "refinement" && table != "tau" && table != "cells" && table != "spectral")
            throw ConfigError("spec: unknown table '" + table + "'");
    }
};

namespace detail {

inline std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& v)
{
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ','))
        if (auto t = trim(item); !t.empty())
            out.push_back(t);
    return out;
}

template <class T>
T parse_number(const std::string& key, const std::string& text)
{
    std::istringstream is(text);
    T v{};
    is >> v;
    if (!is || !(is >> std::ws).eof())
        throw ConfigError("config: bad value '" + text + "' for " + key);
    return v;
}

template <class T>
std::vector<T> parse_list(const std::string& key, const std::string& text)
{
    std::vector<T> out;
    for (const auto& item : split_list(text))
        out.push_back(parse_number<T>(key, item));
    if (out.empty())
        throw ConfigError("config: empty list for " + key);
    return out;
}

} // namespace detail

/// Apply one key=value setting.
inline void apply_setting(ExperimentSpec& spec, const std::string& key, const std::string& value)
{
    if (key == "model")
        spec.model = model_from_string(value);
    else if (key == "nh")
        spec.nh = detail::parse_list<int>(key, value);
    else if (key == "cells" || key == "N")
        spec.cells = detail::parse_list<int>(key, value);
    else if (key == "tau")
        spec.tau = detail::parse_list<double>(key, value);
    else if (key == "solver" || key == "solvers")
        spec.solvers = detail::split_list(value);
    else if (key == "eps")
        spec.eps = detail::parse_number<double>(key, value);
    else if (key == "tol")
        spec.tol = detail::parse_number<double>(key, value);
    else if (key == "maxiter")
        spec.max_iter = detail::parse_number<int>(key, value);
    else if (key == "table")
        spec.table = value;
    else if (key == "outdir")
        spec.output_dir = value;
    else
        throw ConfigError("config: unknown key '" + key + "'");
}

/// Flat key=value text; '#' starts a comment; lists are comma separated.
inline ExperimentSpec parse_config(std::istream& is)
{
    ExperimentSpec spec;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos)
            line.erase(hash);
        line = detail::trim(line);
        if (line.empty())
            continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
        apply_setting(spec, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
    }
    return spec;
}

inline ExperimentSpec load_config(const std::string& path)
{
    std::ifstream is(path);
    if (!is)
        throw ConfigError("cannot open config file " + path);
    return parse_config(is);
}

/// Mesh, labels, dofs, operators and the pinned system for one configuration.
struct Problem {
    Model model = Model::A;
    int nh = 0;
    int num_cells = 0;
    fem::ProblemConfig config;
    meshgen::StructuredMesh mesh;
    meshgen::SubdomainLabeling labeling;
    meshgen::DofMap dofs;
    fem::OperatorSet ops;
    system::BlockSystem system;  // pinned
};

inline Problem build_problem(Model model, int nh, int num_cells, const fem::ProblemConfig& config)
{
    Problem p;
    p.model = model;
    p.nh = nh;
    p.num_cells = num_cells;
    p.config = config;
    p.mesh = meshgen::build_mesh(nh);
    p.labeling = meshgen::label_model(model, p.mesh, num_cells);
    p.dofs = meshgen::build_dofmap(p.mesh, p.labeling);
    p.ops = fem::assemble_operators(p.mesh, p.labeling, p.dofs, config);
    p.system = system::pin_nullspace(system::build_system(p.ops, config, model), p.dofs);
    return p;
}

inline std::unique_ptr<sparse::Preconditioner> make_preconditioner(sparse::PreconditionerKind kind, const Problem& p,
                                                                   double eps)
{
    const auto& sys = p.system;
    const std::vector<Index> pinned{sys.pinned_dof};
    switch (kind) {
    case sparse::PreconditionerKind::None:
        return std::make_unique<sparse::IdentityPreconditioner>();
    case sparse::PreconditionerKind::ILU0:
        return std::make_unique<sparse::Ilu0>(sys.A);
    case sparse::PreconditionerKind::BlockILU0:
        return std::make_unique<sparse::Ilu0>(sparse::make_block_ilu0(sys.A, sys.offsets));
    case sparse::PreconditionerKind::BlockDiag:
        return std::make_unique<sparse::BlockDiagonalPreconditioner>(p.ops, p.config, eps, sys.offsets, pinned);
    case sparse::PreconditionerKind::AMG:
        return std::make_unique<sparse::AmgPreconditioner>(sys.A);
    }
    throw ConfigError("unknown preconditioner");
}

struct ResultRow {
    char model = 'A';
    int num_cells = 0;
    int nh = 0;
    double tau = 0.0;
    double eps = 0.0;
    std::string solver;
    int iterations = 0;
    double rel_residual = 0.0;
    double seconds = 0.0;
    Index n = 0;
    Index n0 = 0;
    Index n_gamma = 0;
    std::string status = "ok";
};

inline void write_csv_header(std::ostream& os)
{
    os << "model,N,nh,tau,eps,solver,iterations,relres,seconds,n,n0,nGamma,status\n";
}

inline void write_csv_row(std::ostream& os, const ResultRow& r)
{
    std::ostringstream line;
    line << r.model << ',' << r.num_cells << ',' << r.nh << ',' << std::setprecision(6) << r.tau << ',' << r.eps << ','
         << r.solver << ',' << r.iterations << ',' << std::scientific << std::setprecision(3) << r.rel_residual << ','
         << std::fixed << std::setprecision(4) << r.seconds << ',' << r.n << ',' << r.n0 << ',' << r.n_gamma << ','
         << r.status << '\n';
    os << line.str();
}

inline void write_csv(std::ostream& os, const std::vector<ResultRow>& rows)
{
    write_csv_header(os);
    for (const auto& r : rows)
        write_csv_row(os, r);
}

/// Solve the pinned system of `p` with one CG variant; failures are recorded
/// in the row instead of thrown.
inline ResultRow run_solver(const Problem& p, const std::string& solver, double eps, double tol, int max_iter)
{
    ResultRow row;
    row.model = meshgen::model_name(p.model);
    row.num_cells = p.num_cells;
    row.nh = p.nh;
    row.tau = p.config.tau;
    row.eps = eps;
    row.solver = solver;
    row.n = p.dofs.n();
    row.n0 = p.dofs.n0();
    row.n_gamma = p.dofs.n_gamma();
    try {
        sparse::SolverConfig sc;
        sc.tol = tol;
        sc.max_iter = max_iter;
        sc.preconditioner = sparse::preconditioner_from_string(solver);
        sc.eps = eps;
        const auto start = std::chrono::steady_clock::now();
        const auto prec = make_preconditioner(sc.preconditioner, p, eps);
        const auto result = sparse::cg_solve(p.system.A, p.system.rhs, sc, *prec);
        row.iterations = result.report.iterations;
        row.rel_residual = result.report.final_rel_residual;
        row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (result.report.breakdown)
            row.status = "breakdown@" + std::to_string(result.report.breakdown_iteration);
        else if (!result.report.converged)
            row.status = "maxiter";
    } catch (const Error& e) {
        row.status = std::string("error: ") + e.what();
        std::replace(row.status.begin(), row.status.end(), ',', ';');
    }
    return row;
}

/// Every (nh, N, tau, solver) combination, nh outermost.
inline std::vector<ResultRow> run_grid(const ExperimentSpec& spec)
{
    spec.validate();
    std::vector<ResultRow> rows;
    if (spec.solvers.empty())
        return rows;
    for (auto nh : spec.nh)
        for (auto n : spec.cells)
            for (auto tau : spec.tau) {
                fem::ProblemConfig pc;
                pc.tau = tau;
                pc.epsilon = spec.eps;
                const auto p = build_problem(spec.model, nh, n, pc);
                for (const auto& s : spec.solvers)
                    rows.push_back(run_solver(p, s, spec.eps, spec.tol, spec.max_iter));
            }
    return rows;
}

/// Fixed N and tau, refining nh.
inline std::vector<ResultRow> run_table_refinement(const ExperimentSpec& spec)
{
    if (spec.cells.size() != 1 || spec.tau.size() != 1)
        throw ConfigError("refinement table: exactly one N and one tau expected");
    return run_grid(spec);
}

/// Model A, fixed nh and N, varying tau.
inline std::vector<ResultRow> run_table_tau(const ExperimentSpec& spec)
{
    if (spec.model != Model::A)
        throw ConfigError("tau table: model A only");
    if (spec.nh.size() != 1 || spec.cells.size() != 1)
        throw ConfigError("tau table: exactly one nh and one N expected");
    return run_grid(spec);
}

/// Fixed nh and tau, varying the number of cells.
inline std::vector<ResultRow> run_table_cells(const ExperimentSpec& spec)
{
    if (spec.nh.size() != 1 || spec.tau.size() != 1)
        throw ConfigError("cells table: exactly one nh and one tau expected");
    return run_grid(spec);
}

struct SpectralRow {
    int nh = 0;
    int num_cells = 0;
    std::string check;  // scaled | zero | peps | toeplitz
    Index n = 0;
    double quantile_distance = 0.0;
    double fraction = 0.0;  // fraction of eigenvalues flagged by the check
    double bound = 0.0;     // comparison value for the fraction, when one exists
    Index outliers = 0;     // outliers at delta
    double delta = 0.0;
};

inline void write_spectral_csv(std::ostream& os, const std::vector<SpectralRow>& rows)
{
    os << "nh,N,check,n,quantile_distance,fraction,bound,outliers,delta\n";
    for (const auto& r : rows) {
        std::ostringstream line;
        line << r.nh << ',' << r.num_cells << ',' << r.check << ',' << r.n << ',' << std::setprecision(10)
             << r.quantile_distance << ',' << r.fraction << ',' << r.bound << ',' << r.outliers << ',' << r.delta
             << '\n';
        os << line.str();
    }
}

inline nlohmann::json spectral_json(const std::vector<SpectralRow>& rows)
{
    nlohmann::json j = nlohmann::json::array();
    for (const auto& r : rows)
        j.push_back({{"nh", r.nh},
                     {"N", r.num_cells},
                     {"check", r.check},
                     {"n", r.n},
                     {"quantile_distance", r.quantile_distance},
                     {"fraction", r.fraction},
                     {"bound", r.bound},
                     {"outliers", r.outliers},
                     {"delta", r.delta}});
    return j;
}

/// Dense spectral checks for each nh and N of the spec (model A, first tau):
///  scaled    eig of the scaled matrix against 4 - 2cos t1 - 2cos t2
///  zero      eig of A_n - D_n; fraction above 1e-10 ||A_n|| against 2 nGamma / n
///  peps      eig of P_eps^{-1} A_n against 1; fraction outside [0.9, 1.1]
///  toeplitz  eig of T_(nh,nh)(4 - 2cos t1 - 2cos t2) against its symbol
inline std::vector<SpectralRow> run_spectral_suite(const ExperimentSpec& spec)
{
    if (spec.model != Model::A)
        throw ConfigError("spectral suite: model A only");
    spec.validate();
    const auto f = spectral::p1_laplacian_symbol();
    std::vector<SpectralRow> rows;
    for (auto nh : spec.nh)
        for (auto ncells : spec.cells) {
            fem::ProblemConfig pc;
            pc.tau = spec.tau.front();
            pc.epsilon = spec.eps;
            const auto p = build_problem(spec.model, nh, ncells, pc);
            const auto& sys = p.system;
            const auto n = sys.size();
            if (n > spectral::EigOptions{}.dense_threshold)
                throw ConfigError("spectral suite: n=" + std::to_string(n) + " exceeds the dense threshold");

            SpectralRow base;
            base.nh = nh;
            base.num_cells = ncells;
            base.n = n;

            const auto scaled = system::build_scaled_galerkin(sys, p.mesh.h);
            const auto rs = spectral::distribution_distance(spectral::eig_rearranged(scaled.As), f);
            auto row = base;
            row.check = "scaled";
            row.quantile_distance = rs.quantile_distance;
            row.outliers = rs.outlier_count;
            row.delta = rs.delta;
            rows.push_back(row);

            const auto factors = system::build_arrowhead_factors(sys);
            const auto ez = spectral::eig_rearranged(add(sys.A, factors.Dn, 1.0, -1.0));
            row = base;
            row.check = "zero";
            row.fraction = spectral::fraction_above(ez, 1e-10 * sys.A.norm_inf());
            row.bound = 2.0 * double(p.dofs.n_gamma()) / double(n);
            rows.push_back(row);

            const std::vector<Index> pinned{sys.pinned_dof};
            const auto pe = sparse::block_preconditioner_matrix(p.ops, pc, spec.eps, sys.offsets, pinned);
            const auto ep = spectral::eig_generalized(sys.A, pe);
            const auto rp = spectral::distribution_distance(ep, spectral::SymbolFunction::constant(1.0, 2));
            row = base;
            row.check = "peps";
            row.quantile_distance = rp.quantile_distance;
            row.fraction = spectral::fraction_outside(ep, 0.9, 1.1);
            row.outliers = rp.outlier_count;
            row.delta = rp.delta;
            rows.push_back(row);

            const std::vector<int> nu{nh, nh};
            const auto rt = spectral::distribution_distance(
                spectral::eig_rearranged(spectral::toeplitz_from_symbol(f, nu)), f);
            row = base;
            row.check = "toeplitz";
            row.n = Index(nh) * nh;
            row.quantile_distance = rt.quantile_distance;
            row.outliers = rt.outlier_count;
            row.delta = rt.delta;
            rows.push_back(row);
        }
    return rows;
}

} // namespace emilab::harness
