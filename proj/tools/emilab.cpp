// Copyright The emilab Authors.
// SPDX-License-Identifier: Apache-2.0

// Command line driver: mesh | assemble | solve | spectra | table.
// Exit codes: 0 success, 2 configuration error, 3 solver failure.

#include <algorithm>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "emilab/harness.hpp"
#include "emilab/io.hpp"

namespace {

using namespace emilab;

struct Options {
    std::string config;
    std::string model;
    std::vector<int> nh;
    std::vector<int> cells;
    std::vector<double> tau;
    double eps = 0.0;
    std::vector<std::string> solver;
    double tol = 0.0;
    int max_iter = 0;
    std::string export_mm;
    std::string csv;
    std::string mesh_out;
};

/// Config file first, then explicit flags on top.
harness::ExperimentSpec resolve(const Options& o)
{
    auto spec = o.config.empty() ? harness::ExperimentSpec{} : harness::load_config(o.config);
    if (!o.model.empty())
        spec.model = harness::model_from_string(o.model);
    if (!o.nh.empty())
        spec.nh = o.nh;
    if (!o.cells.empty())
        spec.cells = o.cells;
    if (!o.tau.empty())
        spec.tau = o.tau;
    if (o.eps > 0.0)
        spec.eps = o.eps;
    if (!o.solver.empty())
        spec.solvers = o.solver;
    if (o.tol > 0.0)
        spec.tol = o.tol;
    if (o.max_iter > 0)
        spec.max_iter = o.max_iter;
    spec.validate();
    return spec;
}

fem::ProblemConfig problem_config(const harness::ExperimentSpec& spec)
{
    fem::ProblemConfig pc;
    pc.tau = spec.tau.front();
    pc.epsilon = spec.eps;
    return pc;
}

/// Write to the --csv path, or stdout when none is given.
template <class Fn>
void with_output(const std::string& path, Fn&& fn)
{
    if (path.empty()) {
        fn(std::cout);
        return;
    }
    std::ofstream os(path);
    if (!os)
        throw ConfigError("cannot write " + path);
    fn(os);
}

int cmd_mesh(const Options& o)
{
    const auto spec = resolve(o);
    std::ostringstream rows;
    rows << "model,N,nh,n0,n_in,nGamma,n\n";
    for (auto nh : spec.nh)
        for (auto n : spec.cells) {
            const auto mesh = meshgen::build_mesh(nh);
            const auto lab = meshgen::label_model(spec.model, mesh, n);
            const auto dofs = meshgen::build_dofmap(mesh, lab);
            rows << meshgen::model_name(spec.model) << ',' << n << ',' << nh << ',' << dofs.n0() << ',' << dofs.n_in()
                 << ',' << dofs.n_gamma() << ',' << dofs.n() << '\n';
            if (!o.mesh_out.empty())
                meshgen::write_mesh(o.mesh_out, mesh, lab);
        }
    with_output(o.csv, [&](std::ostream& os) { os << rows.str(); });
    return 0;
}

int cmd_assemble(const Options& o)
{
    const auto spec = resolve(o);
    const auto p = harness::build_problem(spec.model, spec.nh.front(), spec.cells.front(), problem_config(spec));
    const auto& sys = p.system;
    std::cout << "n=" << sys.size() << " nnz=" << sys.A.nnz() << " n0=" << p.dofs.n0() << " nGamma=" << p.dofs.n_gamma()
              << " pinned=" << sys.pinned_dof << " nonsingular=" << (sys.nonsingular.value_or(false) ? "yes" : "no")
              << '\n';
    if (!o.export_mm.empty()) {
        io::write_matrix_market(o.export_mm, sys.A);
        io::write_vector(o.export_mm + ".rhs", sys.rhs);
        std::cout << "wrote " << o.export_mm << " and " << o.export_mm << ".rhs\n";
    }
    return 0;
}

int cmd_solve(const Options& o)
{
    const auto spec = resolve(o);
    const auto rows = harness::run_grid(spec);
    with_output(o.csv, [&](std::ostream& os) { harness::write_csv(os, rows); });
    if (!o.export_mm.empty()) {
        // first configuration of the grid
        const auto p = harness::build_problem(spec.model, spec.nh.front(), spec.cells.front(), problem_config(spec));
        io::write_matrix_market(o.export_mm, p.system.A);
        io::write_vector(o.export_mm + ".rhs", p.system.rhs);
    }
    const bool failed = std::any_of(rows.begin(), rows.end(), [](const auto& r) { return r.status != "ok"; });
    if (failed) {
        for (const auto& r : rows)
            if (r.status != "ok")
                std::cerr << "emilab: " << r.solver << ": " << r.status << '\n';
        return 3;
    }
    return 0;
}

int cmd_spectra(const Options& o)
{
    auto spec = resolve(o);
    const auto rows = harness::run_spectral_suite(spec);
    with_output(o.csv, [&](std::ostream& os) { harness::write_spectral_csv(os, rows); });
    return 0;
}

int cmd_table(const Options& o)
{
    const auto spec = resolve(o);
    if (spec.table == "spectral")
        return cmd_spectra(o);
    std::vector<harness::ResultRow> rows;
    if (spec.table == "refinement")
        rows = harness::run_table_refinement(spec);
    else if (spec.table == "tau")
        rows = harness::run_table_tau(spec);
    else
        rows = harness::run_table_cells(spec);
    with_output(o.csv, [&](std::ostream& os) { harness::write_csv(os, rows); });
    for (const auto& r : rows)
        if (r.status != "ok")
            return 3;
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"EMI cell-by-cell lab: meshes, block systems, solvers and spectra"};
    app.require_subcommand(1);
    Options o;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config, "key=value experiment file");
        sub->add_option("--model", o.model, "A or B");
        sub->add_option("--nh", o.nh, "elements per side (power of two), comma list")->delimiter(',');
        sub->add_option("--cells", o.cells, "number of cells N, comma list")->delimiter(',');
        sub->add_option("--tau", o.tau, "time step parameter, comma list")->delimiter(',');
        sub->add_option("--eps", o.eps, "block preconditioner regularization");
        sub->add_option("--solver", o.solver, "cg|ilu|blockilu|blockdiag|amg, comma list")->delimiter(',');
        sub->add_option("--tol", o.tol, "relative residual tolerance");
        sub->add_option("--maxiter", o.max_iter, "CG iteration limit");
        sub->add_option("--export-mm", o.export_mm, "Matrix Market output path");
        sub->add_option("--csv", o.csv, "CSV output path");
    };
    auto* mesh = app.add_subcommand("mesh", "print dof counts, optionally write the mesh");
    add_common(mesh);
    mesh->add_option("--mesh-out", o.mesh_out, "mesh file output path");
    auto* assemble = app.add_subcommand("assemble", "assemble and pin the block system");
    add_common(assemble);
    auto* solve = app.add_subcommand("solve", "solve with preconditioned CG");
    add_common(solve);
    auto* spectra = app.add_subcommand("spectra", "dense spectral distribution checks (model A)");
    add_common(spectra);
    auto* table = app.add_subcommand("table", "run an experiment table from a config");
    add_common(table);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (mesh->parsed())
            return cmd_mesh(o);
        if (assemble->parsed())
            return cmd_assemble(o);
        if (solve->parsed())
            return cmd_solve(o);
        if (spectra->parsed())
            return cmd_spectra(o);
        return cmd_table(o);
    } catch (const ConfigError& e) {
        std::cerr << "emilab: configuration error: " << e.what() << '\n';
        return 2;
    } catch (const SolverError& e) {
        std::cerr << "emilab: solver failure: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "emilab: " << e.what() << '\n';
        return 1;
    }
}
