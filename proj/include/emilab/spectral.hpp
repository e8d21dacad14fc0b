// Copyright The emilab Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numbers>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "emilab/error.hpp"
#include "emilab/sparse_matrix.hpp"

namespace emilab::spectral {

/// A real, even trigonometric polynomial on [-pi, pi]^d given by its Fourier
/// coefficients, or an arbitrary evaluator without a finite bandwidth.
class SymbolFunction {
public:
    using MultiIndex = std::vector<int>;

    SymbolFunction(int dim, std::map<MultiIndex, double> coefficients) : dim_(dim), coeffs_(std::move(coefficients))
    {
        if (dim < 1)
            throw ConfigError("symbol: dimension must be positive");
        for (const auto& [k, v] : coeffs_) {
            if (static_cast<int>(k.size()) != dim)
                throw ConfigError("symbol: coefficient index of wrong arity");
            MultiIndex neg(k.size());
            std::transform(k.begin(), k.end(), neg.begin(), [](int x) { return -x; });
            const auto it = coeffs_.find(neg);
            const double other = it == coeffs_.end() ? 0.0 : it->second;
            if (std::abs(other - v) > 1e-14 * std::max(1.0, std::abs(v)))
                throw ConfigError("symbol: coefficients must satisfy f_{-k} = f_k");
            for (auto x : k)
                bandwidth_ = std::max(bandwidth_, std::abs(x));
        }
    }

    SymbolFunction(int dim, std::function<double(std::span<const double>)> evaluator)
        : dim_(dim), evaluator_(std::move(evaluator)), bandwidth_(-1)
    {
        if (dim < 1)
            throw ConfigError("symbol: dimension must be positive");
    }

    static SymbolFunction constant(double c, int dim)
    {
        return SymbolFunction(dim, std::map<MultiIndex, double>{{MultiIndex(dim, 0), c}});
    }

    int dim() const { return dim_; }
    /// Largest |k_j| among the coefficients; -1 when the symbol is not a trigonometric polynomial.
    int bandwidth() const { return bandwidth_; }
    bool is_polynomial() const { return bandwidth_ >= 0; }

    double coefficient(const MultiIndex& k) const
    {
        if (!is_polynomial())
            throw ConfigError("symbol: no Fourier coefficients for a non-polynomial symbol");
        const auto it = coeffs_.find(k);
        return it == coeffs_.end() ? 0.0 : it->second;
    }
    const std::map<MultiIndex, double>& coefficients() const { return coeffs_; }

    double operator()(std::span<const double> theta) const
    {
        if (static_cast<int>(theta.size()) != dim_)
            throw ConfigError("symbol: evaluation point of wrong arity");
        if (!is_polynomial())
            return evaluator_(theta);
        double s = 0.0;
        for (const auto& [k, v] : coeffs_) {
            double phase = 0.0;
            for (int j = 0; j < dim_; ++j)
                phase += k[j] * theta[j];
            s += v * std::cos(phase);
        }
        return s;
    }

    double operator()(std::initializer_list<double> theta) const
    {
        return (*this)(std::span<const double>(theta.begin(), theta.size()));
    }

private:
    int dim_;
    std::map<MultiIndex, double> coeffs_;
    std::function<double(std::span<const double>)> evaluator_;
    int bandwidth_ = 0;
};

/// 2 - 2 cos(theta).
inline SymbolFunction laplacian_symbol_1d()
{
    return SymbolFunction(1, std::map<SymbolFunction::MultiIndex, double>{{{0}, 2.0}, {{1}, -1.0}, {{-1}, -1.0}});
}

/// 4 - 2 cos(theta_1) - 2 cos(theta_2), the symbol of the P1 stiffness on a
/// uniform right-triangle mesh (the 5-point stencil).
inline SymbolFunction p1_laplacian_symbol()
{
    return SymbolFunction(2, std::map<SymbolFunction::MultiIndex, double>{
                                 {{0, 0}, 4.0}, {{1, 0}, -1.0}, {{-1, 0}, -1.0}, {{0, 1}, -1.0}, {{0, -1}, -1.0}});
}

/// d-level Toeplitz matrix T_nu(f) = {f_{k-l}}, first index outermost.
inline SparseMatrix toeplitz_from_symbol(const SymbolFunction& f, std::span<const int> nu)
{
    if (!f.is_polynomial())
        throw ConfigError("toeplitz_from_symbol: symbol has no finite bandwidth");
    if (static_cast<int>(nu.size()) != f.dim())
        throw ConfigError("toeplitz_from_symbol: size multi-index has wrong arity");
    Index n = 1;
    for (auto v : nu) {
        if (v < 1)
            throw ConfigError("toeplitz_from_symbol: sizes must be positive");
        n *= v;
    }
    const int d = f.dim();
    auto unflatten = [&](Index i) {
        std::vector<int> k(d);
        for (int j = d - 1; j >= 0; --j) {
            k[j] = static_cast<int>(i % nu[j]);
            i /= nu[j];
        }
        return k;
    };
    auto flatten = [&](const std::vector<int>& k) {
        Index i = 0;
        for (int j = 0; j < d; ++j)
            i = i * nu[j] + k[j];
        return i;
    };
    std::vector<Triplet> t;
    for (Index row = 0; row < n; ++row) {
        const auto k = unflatten(row);
        for (const auto& [diff, v] : f.coefficients()) {
            // column l = k - diff
            std::vector<int> l(d);
            bool inside = true;
            for (int j = 0; j < d && inside; ++j) {
                l[j] = k[j] - diff[j];
                inside = l[j] >= 0 && l[j] < nu[j];
            }
            if (inside)
                t.push_back({row, flatten(l), v});
        }
    }
    return SparseMatrix::from_triplets(n, n, std::move(t), true);
}

inline SparseMatrix toeplitz_from_symbol(const SymbolFunction& f, std::initializer_list<int> nu)
{
    return toeplitz_from_symbol(f, std::span<const int>(nu.begin(), nu.size()));
}

struct EigOptions {
    Index dense_threshold = 6000;
    int residual_checks = 10;
    double residual_tol = 1e-8;  // relative to the matrix norm
};

namespace detail {

inline void check_pairs(const Eigen::MatrixXd& m, const Eigen::VectorXd& lambda, const Eigen::MatrixXd& vecs,
                        const EigOptions& opt, const char* what)
{
    const auto n = lambda.size();
    if (n == 0)
        return;
    const double scale = std::max(m.cwiseAbs().rowwise().sum().maxCoeff(), std::numeric_limits<double>::min());
    const int checks = static_cast<int>(std::min<Index>(opt.residual_checks, n));
    for (int c = 0; c < checks; ++c) {
        const Index j = checks == 1 ? 0 : (c * (n - 1)) / (checks - 1);
        const double res = (m * vecs.col(j) - lambda[j] * vecs.col(j)).norm();
        if (!(res <= opt.residual_tol * scale * std::max(1.0, vecs.col(j).norm())))
            throw SolverError(std::string(what) + ": eigenpair residual " + std::to_string(res) + " too large");
    }
}

/// Full Lanczos with full reorthogonalization; exact in exact arithmetic
/// after n steps, so it returns the whole spectrum.
inline std::pair<Eigen::VectorXd, Eigen::MatrixXd> lanczos_full(const SparseMatrix& m)
{
    const auto n = m.rows();
    Eigen::MatrixXd q = Eigen::MatrixXd::Zero(n, n);
    Eigen::VectorXd alpha = Eigen::VectorXd::Zero(n), beta = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd v(n);
    for (Index i = 0; i < n; ++i)
        v[i] = 1.0 + 0.5 * std::sin(3.0 + 11.0 * double(i));
    v.normalize();
    Index steps = 0;
    Vector w(n);
    for (Index k = 0; k < n; ++k) {
        q.col(k) = v;
        m.multiply(std::span<const double>(v.data(), n), w);
        Eigen::Map<Eigen::VectorXd> wm(w.data(), n);
        alpha[k] = v.dot(wm);
        Eigen::VectorXd r = wm;
        for (int pass = 0; pass < 2; ++pass)
            r -= q.leftCols(k + 1) * (q.leftCols(k + 1).transpose() * r);
        steps = k + 1;
        const double b = r.norm();
        if (k + 1 == n)
            break;
        if (b < 1e-12 * std::max(1.0, std::abs(alpha[k]))) {
            // invariant subspace: restart with a vector orthogonal to the basis
            Eigen::VectorXd e = Eigen::VectorXd::Zero(n);
            bool found = false;
            for (Index i = 0; i < n && !found; ++i) {
                e.setZero();
                e[i] = 1.0;
                for (int pass = 0; pass < 2; ++pass)
                    e -= q.leftCols(k + 1) * (q.leftCols(k + 1).transpose() * e);
                found = e.norm() > 1e-6;
            }
            if (!found)
                break;
            beta[k] = 0.0;
            v = e.normalized();
        } else {
            beta[k] = b;
            v = r / b;
        }
    }
    Eigen::MatrixXd t = Eigen::MatrixXd::Zero(steps, steps);
    for (Index k = 0; k < steps; ++k) {
        t(k, k) = alpha[k];
        if (k + 1 < steps)
            t(k, k + 1) = t(k + 1, k) = beta[k];
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(t);
    if (es.info() != Eigen::Success || steps != n)
        throw SolverError("lanczos: did not converge");
    return {es.eigenvalues(), q.leftCols(steps) * es.eigenvectors()};
}

} // namespace detail

/// Sorted eigenvalues of a symmetric matrix with residual checks on sampled pairs.
inline std::vector<double> eig_rearranged(const SparseMatrix& m, const EigOptions& opt = {})
{
    if (m.rows() != m.cols())
        throw ConfigError("eig_rearranged: matrix must be square");
    if (!m.is_symmetric_exact())
        throw ConfigError("eig_rearranged: matrix must be symmetric");
    const Eigen::MatrixXd dense = m.to_dense();
    Eigen::VectorXd lambda;
    Eigen::MatrixXd vecs;
    if (m.rows() <= opt.dense_threshold) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(dense);
        if (es.info() != Eigen::Success)
            throw SolverError("eig_rearranged: dense eigensolver failed");
        lambda = es.eigenvalues();
        vecs = es.eigenvectors();
    } else {
        std::tie(lambda, vecs) = detail::lanczos_full(m);
    }
    detail::check_pairs(dense, lambda, vecs, opt, "eig_rearranged");
    std::vector<double> out(lambda.data(), lambda.data() + lambda.size());
    std::sort(out.begin(), out.end());
    return out;
}

/// Sorted eigenvalues of P^{-1} A for symmetric A and symmetric positive definite P.
inline std::vector<double> eig_generalized(const SparseMatrix& a, const SparseMatrix& p)
{
    if (a.rows() != p.rows() || a.rows() != a.cols() || p.rows() != p.cols())
        throw ConfigError("eig_generalized: dimension mismatch");
    const Eigen::MatrixXd ad = a.to_dense();
    const Eigen::MatrixXd pd = p.to_dense();
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(ad, pd);
    if (es.info() != Eigen::Success)
        throw SolverError("eig_generalized: eigensolver failed (P not positive definite?)");
    const Eigen::VectorXd lambda = es.eigenvalues();
    for (Eigen::Index j = 0; j < std::min<Eigen::Index>(10, lambda.size()); ++j) {
        const auto k = lambda.size() == 1 ? 0 : (j * (lambda.size() - 1)) / 9;
        const Eigen::VectorXd v = es.eigenvectors().col(k);
        const double res = (ad * v - lambda[k] * (pd * v)).norm();
        const double scale = ad.cwiseAbs().rowwise().sum().maxCoeff() + std::abs(lambda[k]) * pd.cwiseAbs().rowwise().sum().maxCoeff();
        if (!(res <= 1e-8 * scale * v.norm()))
            throw SolverError("eig_generalized: eigenpair residual too large");
    }
    std::vector<double> out(lambda.data(), lambda.data() + lambda.size());
    std::sort(out.begin(), out.end());
    return out;
}

/// Piecewise symbol g(x, t_0..t_N) = f^i(t_i) for x in [rhat_{i-1}, rhat_i].
struct CombinedSymbol {
    std::vector<SymbolFunction> pieces;
    std::vector<double> weights;
    std::vector<double> breakpoints;  // rhat_{-1} = 0, ..., rhat_N = 1

    int index_at(double x) const
    {
        if (x < 0.0 || x > 1.0)
            throw ConfigError("combined symbol: x outside [0, 1]");
        for (std::size_t i = 0; i + 1 < breakpoints.size(); ++i)
            if (x <= breakpoints[i + 1])
                return static_cast<int>(i);
        return static_cast<int>(pieces.size()) - 1;
    }

    double operator()(double x, std::span<const double> theta) const { return pieces[index_at(x)](theta); }
};

inline CombinedSymbol combined_symbol(std::vector<std::pair<SymbolFunction, double>> pieces)
{
    if (pieces.empty())
        throw ConfigError("combined_symbol: no pieces");
    CombinedSymbol g;
    double sum = 0.0;
    g.breakpoints.push_back(0.0);
    for (auto& [f, r] : pieces) {
        if (!(r > 0.0 && r <= 1.0))
            throw ConfigError("combined_symbol: weights must lie in (0, 1]");
        if (f.dim() != pieces.front().first.dim())
            throw ConfigError("combined_symbol: pieces must share the dimension");
        sum += r;
        g.pieces.push_back(std::move(f));
        g.weights.push_back(r);
        g.breakpoints.push_back(sum);
    }
    if (std::abs(sum - 1.0) > 1e-12)
        throw ConfigError("combined_symbol: weights must sum to 1 (got " + std::to_string(sum) + ")");
    g.breakpoints.back() = 1.0;
    return g;
}

inline CombinedSymbol combined_symbol(const SymbolFunction& f) { return combined_symbol({{f, 1.0}}); }

/// Values with probability weights, sorted by value.
struct WeightedSamples {
    std::vector<double> values;
    std::vector<double> weights;
};

/// Symbol samples on a uniform midpoint grid with m points per axis over
/// [-pi, pi]^d, weighted by the piece weights.
inline WeightedSamples sample_symbol(const CombinedSymbol& g, int m)
{
    if (m < 1)
        throw ConfigError("sample_symbol: grid size must be positive");
    WeightedSamples s;
    const int d = g.pieces.front().dim();
    Index total = 1;
    for (int j = 0; j < d; ++j)
        total *= m;
    std::vector<std::pair<double, double>> vw;
    vw.reserve(static_cast<std::size_t>(total) * g.pieces.size());
    std::vector<double> theta(d);
    for (std::size_t p = 0; p < g.pieces.size(); ++p) {
        const double w = g.weights[p] / double(total);
        for (Index idx = 0; idx < total; ++idx) {
            Index rest = idx;
            for (int j = d - 1; j >= 0; --j) {
                theta[j] = -std::numbers::pi + (double(rest % m) + 0.5) * 2.0 * std::numbers::pi / m;
                rest /= m;
            }
            vw.emplace_back(g.pieces[p](theta), w);
        }
    }
    std::sort(vw.begin(), vw.end());
    for (auto& [v, w] : vw) {
        s.values.push_back(v);
        s.weights.push_back(w);
    }
    return s;
}

/// Left-continuous inverse CDF at p_j = (j + 1/2) / length.
inline std::vector<double> quantiles(const WeightedSamples& s, Index length)
{
    if (s.values.empty() || length < 1)
        throw ConfigError("quantiles: empty sample");
    double total = 0.0;
    for (auto w : s.weights)
        total += w;
    std::vector<double> q(length);
    std::size_t k = 0;
    double cum = s.weights[0] / total;
    for (Index j = 0; j < length; ++j) {
        const double p = (double(j) + 0.5) / double(length);
        while (cum < p && k + 1 < s.values.size())
            cum += s.weights[++k] / total;
        q[j] = s.values[k];
    }
    return q;
}

inline std::vector<double> quantiles(std::span<const double> sorted, Index length)
{
    WeightedSamples s{{sorted.begin(), sorted.end()}, std::vector<double>(sorted.size(), 1.0)};
    return quantiles(s, length);
}

struct TestFunctionGap {
    std::string id;
    double matrix_average = 0.0;
    double symbol_average = 0.0;
    double gap = 0.0;
};

struct DistributionReport {
    std::vector<double> sorted_eigs;
    std::vector<double> eig_quantiles;
    std::vector<double> symbol_quantiles;
    double quantile_distance = 0.0;  // mean |lambda_(j) - q_(j)|
    std::vector<TestFunctionGap> test_function_gaps;
    double delta = 0.0;
    Index outlier_count = 0;  // eigenvalues farther than delta from the symbol range
    double symbol_min = 0.0;
    double symbol_max = 0.0;
};

/// Gauss-Legendre nodes and weights on [-1, 1] (Golub-Welsch).
inline std::pair<std::vector<double>, std::vector<double>> gauss_legendre(int n)
{
    if (n < 1)
        throw ConfigError("gauss_legendre: need at least one point");
    Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(n, n);
    for (int k = 1; k < n; ++k)
        jac(k, k - 1) = jac(k - 1, k) = k / std::sqrt(4.0 * k * k - 1.0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jac);
    std::vector<double> x(n), w(n);
    for (int i = 0; i < n; ++i) {
        x[i] = es.eigenvalues()[i];
        w[i] = 2.0 * es.eigenvectors()(0, i) * es.eigenvectors()(0, i);
    }
    return {x, w};
}

/// The fixed test-function battery: t^k times a C1 cutoff on [-1, 1.25 M]
/// for k = 0..4, and three C1 bumps inside [0, M]; M = max(1, max f).
inline std::vector<std::pair<std::string, std::function<double(double)>>> test_battery(double fmax)
{
    const double big = std::max(1.0, fmax);
    const double a = -1.0, b = 1.25 * big, ramp = 0.1 * (b - a);
    auto smooth = [](double s) { return s <= 0.0 ? 0.0 : s >= 1.0 ? 1.0 : s * s * (3.0 - 2.0 * s); };
    auto cutoff = [=](double t) { return smooth((t - a) / ramp) * smooth((b - t) / ramp); };
    std::vector<std::pair<std::string, std::function<double(double)>>> out;
    for (int k = 0; k <= 4; ++k)
        out.emplace_back("poly" + std::to_string(k), [=](double t) { return std::pow(t / big, k) * cutoff(t); });
    for (int c = 1; c <= 3; ++c) {
        const double centre = 0.25 * c * big, width = 0.25 * big;
        out.emplace_back("bump" + std::to_string(c), [=](double t) {
            const double s = (t - centre) / width;
            return std::abs(s) < 1.0 ? (1.0 - s * s) * (1.0 - s * s) : 0.0;
        });
    }
    return out;
}

struct DistanceOptions {
    Index max_length = 1024;  // quantile resampling length = min(max_length, n)
    int grid = 128;           // symbol samples per axis
    int quadrature = 64;      // Gauss-Legendre points per axis
    double delta = 0.1;       // outlier threshold
};

inline DistributionReport distribution_distance(std::span<const double> sorted_eigs, const CombinedSymbol& g,
                                                const DistanceOptions& opt = {})
{
    if (sorted_eigs.empty())
        throw ConfigError("distribution_distance: no eigenvalues");
    if (!std::is_sorted(sorted_eigs.begin(), sorted_eigs.end()))
        throw ConfigError("distribution_distance: eigenvalues must be sorted");
    if (opt.quadrature < 64)
        throw ConfigError("distribution_distance: at least 64 quadrature points per axis");
    DistributionReport rep;
    rep.sorted_eigs.assign(sorted_eigs.begin(), sorted_eigs.end());
    const Index length = std::min<Index>(opt.max_length, static_cast<Index>(sorted_eigs.size()));
    const auto samples = sample_symbol(g, opt.grid);
    rep.eig_quantiles = quantiles(sorted_eigs, length);
    rep.symbol_quantiles = quantiles(samples, length);
    double sum = 0.0;
    for (Index j = 0; j < length; ++j)
        sum += std::abs(rep.eig_quantiles[j] - rep.symbol_quantiles[j]);
    rep.quantile_distance = sum / double(length);

    // Weyl averages: tensor Gauss-Legendre over [-pi, pi]^d per piece
    const int d = g.pieces.front().dim();
    const auto [xg, wg] = gauss_legendre(opt.quadrature);
    Index points = 1;
    for (int j = 0; j < d; ++j)
        points *= opt.quadrature;
    std::vector<double> fvals;  // symbol value at each quadrature node, per piece
    std::vector<double> fweights;
    std::vector<double> theta(d);
    double fmin = samples.values.front(), fmax = samples.values.back();
    for (std::size_t p = 0; p < g.pieces.size(); ++p) {
        for (Index idx = 0; idx < points; ++idx) {
            Index rest = idx;
            double w = g.weights[p];
            for (int j = d - 1; j >= 0; --j) {
                const auto q = rest % opt.quadrature;
                theta[j] = std::numbers::pi * xg[q];
                w *= 0.5 * wg[q];
                rest /= opt.quadrature;
            }
            const double v = g.pieces[p](theta);
            fvals.push_back(v);
            fweights.push_back(w);
            fmin = std::min(fmin, v);
            fmax = std::max(fmax, v);
        }
    }
    rep.symbol_min = fmin;
    rep.symbol_max = fmax;
    for (const auto& [id, fn] : test_battery(fmax)) {
        TestFunctionGap tg;
        tg.id = id;
        for (auto l : sorted_eigs)
            tg.matrix_average += fn(l);
        tg.matrix_average /= double(sorted_eigs.size());
        for (std::size_t k = 0; k < fvals.size(); ++k)
            tg.symbol_average += fweights[k] * fn(fvals[k]);
        tg.gap = std::abs(tg.matrix_average - tg.symbol_average);
        rep.test_function_gaps.push_back(tg);
    }
    rep.delta = opt.delta;
    for (auto l : sorted_eigs)
        if (l < fmin - opt.delta || l > fmax + opt.delta)
            ++rep.outlier_count;
    return rep;
}

inline DistributionReport distribution_distance(std::span<const double> sorted_eigs, const SymbolFunction& f,
                                                const DistanceOptions& opt = {})
{
    return distribution_distance(sorted_eigs, combined_symbol(f), opt);
}

/// Fraction of eigenvalues with |lambda| > threshold.
inline double fraction_above(std::span<const double> eigs, double threshold)
{
    if (eigs.empty())
        return 0.0;
    Index c = 0;
    for (auto l : eigs)
        if (std::abs(l) > threshold)
            ++c;
    return double(c) / double(eigs.size());
}

/// Fraction of eigenvalues outside [lo, hi].
inline double fraction_outside(std::span<const double> eigs, double lo, double hi)
{
    if (eigs.empty())
        return 0.0;
    Index c = 0;
    for (auto l : eigs)
        if (l < lo || l > hi)
            ++c;
    return double(c) / double(eigs.size());
}

/// One quantile pair per row.
inline void write_quantiles_csv(std::ostream& os, const DistributionReport& rep)
{
    os << "j,eig_quantile,symbol_quantile\n";
    os.precision(17);
    for (std::size_t j = 0; j < rep.eig_quantiles.size(); ++j)
        os << j << ',' << rep.eig_quantiles[j] << ',' << rep.symbol_quantiles[j] << '\n';
}

inline nlohmann::json summary_json(const DistributionReport& rep)
{
    nlohmann::json j;
    j["n"] = rep.sorted_eigs.size();
    j["quantile_distance"] = rep.quantile_distance;
    j["delta"] = rep.delta;
    j["outlier_count"] = rep.outlier_count;
    j["symbol_min"] = rep.symbol_min;
    j["symbol_max"] = rep.symbol_max;
    j["eig_min"] = rep.sorted_eigs.front();
    j["eig_max"] = rep.sorted_eigs.back();
    for (const auto& g : rep.test_function_gaps)
        j["test_function_gaps"][g.id] = g.gap;
    return j;
}

} // namespace emilab::spectral
