#include "ocpfem/fem.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>

#include "ocpfem/parallel.hpp"
#include "ocpfem/quadrature.hpp"

namespace ocpfem {

namespace {

using Triplet = Eigen::Triplet<double>;
using Local = Eigen::Matrix3d;

double min_eigenvalue(const Matrix2& a) {
    const double mean = 0.5 * (a(0, 0) + a(1, 1));
    const double half = 0.5 * (a(0, 0) - a(1, 1));
    return mean - std::sqrt(half * half + a(0, 1) * a(0, 1));
}

double max_eigenvalue(const Matrix2& a) {
    const double mean = 0.5 * (a(0, 0) + a(1, 1));
    const double half = 0.5 * (a(0, 0) - a(1, 1));
    return mean + std::sqrt(half * half + a(0, 1) * a(0, 1));
}

void check_finite(double v, const char* what) {
    if (!std::isfinite(v)) throw CoefficientError(std::string(what) + ": non-finite sample");
}

void check_coefficients(const CoefficientSet& coeff, const Matrix2& a, double c) {
    if (!a.allFinite()) throw CoefficientError("coefficient A: non-finite sample");
    check_finite(c, "coefficient c");
    if (!coeff.check_ellipticity) return;
    if (std::abs(a(0, 1) - a(1, 0)) > 1e-12 * std::max(1.0, a.norm()))
        throw CoefficientError("coefficient A: not symmetric");
    if (min_eigenvalue(a) < coeff.mu * (1.0 - 1e-12))
        throw CoefficientError("coefficient A: ellipticity floor mu violated");
    if (c < 0.0) throw CoefficientError("coefficient c: negative sample");
}

SparseMatrix from_local(const Mesh& m, const std::vector<Local>& local) {
    std::vector<Triplet> triplets;
    triplets.reserve(9 * local.size());
    for (int c = 0; c < m.num_cells(); ++c) {
        const Cell& t = m.cell(c);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                triplets.emplace_back(t[static_cast<std::size_t>(i)], t[static_cast<std::size_t>(j)],
                                      local[static_cast<std::size_t>(c)](i, j));
    }
    SparseMatrix a(m.num_vertices(), m.num_vertices());
    a.setFromTriplets(triplets.begin(), triplets.end());
    return a;
}

}  // namespace

Function Function::constant(double c) {
    return {[c](const Point&) { return c; }, [](const Point&) { return Point::Zero().eval(); }};
}

Matrix2 CoefficientSet::A_at(const Mesh& m, int cell, const Point& x) const {
    return piecewise_constant ? A(m.centroid(cell)) : A(x);
}

double CoefficientSet::c_at(const Mesh& m, int cell, const Point& x) const {
    return piecewise_constant ? c(m.centroid(cell)) : c(x);
}

CoefficientSet CoefficientSet::laplace() { return isotropic(1.0, 0.0); }

CoefficientSet CoefficientSet::isotropic(double a, double c) {
    CoefficientSet k;
    k.A = [a](const Point&) { return Matrix2(a * Matrix2::Identity()); };
    k.c = [c](const Point&) { return c; };
    k.mu = a;
    k.alpha = a;
    k.beta = a;
    k.piecewise_constant = true;
    return k;
}

CoefficientSet CoefficientSet::checkerboard(double contrast, double period) {
    if (!(contrast > 0.0) || !(period > 0.0))
        throw std::invalid_argument("checkerboard: contrast and period must be positive");
    CoefficientSet k;
    const double side = 0.5 * period;
    k.A = [contrast, side](const Point& x) {
        const auto i = static_cast<long>(std::floor(x.x() / side));
        const auto j = static_cast<long>(std::floor(x.y() / side));
        const double a = ((i + j) % 2 != 0) ? contrast : 1.0;
        return Matrix2(a * Matrix2::Identity());
    };
    k.c = [](const Point&) { return 0.0; };
    k.mu = std::min(1.0, contrast);
    k.alpha = k.mu;
    k.beta = std::max(1.0, contrast);
    k.piecewise_constant = true;
    return k;
}

CoefficientBounds sample_bounds(const Mesh& m, const CoefficientSet& coeff, double c_pf) {
    const auto& rule = quadrature_degree5();
    double lo = std::numeric_limits<double>::infinity();
    double hi = 0.0, cmax = 0.0;
    for (int c = 0; c < m.num_cells(); ++c) {
        for (const Point& x : quadrature_points(m, c, rule)) {
            const Matrix2 a = coeff.A_at(m, c, x);
            lo = std::min(lo, min_eigenvalue(a));
            hi = std::max(hi, max_eigenvalue(a));
            cmax = std::max(cmax, coeff.c_at(m, c, x));
        }
    }
    return {lo, hi + cmax * c_pf * c_pf};
}

DofMap::DofMap(const Mesh& m) : vertex_to_dof(static_cast<std::size_t>(m.num_vertices()), -1) {
    for (int v = 0; v < m.num_vertices(); ++v) {
        if (m.is_boundary(v)) continue;
        vertex_to_dof[static_cast<std::size_t>(v)] = static_cast<int>(dof_to_vertex.size());
        dof_to_vertex.push_back(v);
    }
}

Vector DofMap::restrict(const Vector& full) const {
    Vector out(size());
    for (int d = 0; d < size(); ++d) out[d] = full[dof_to_vertex[static_cast<std::size_t>(d)]];
    return out;
}

Vector DofMap::extend(const Vector& interior) const {
    Vector out = Vector::Zero(static_cast<Eigen::Index>(vertex_to_dof.size()));
    for (int d = 0; d < size(); ++d) out[dof_to_vertex[static_cast<std::size_t>(d)]] = interior[d];
    return out;
}

double P1Field::evaluate(int cell, const Point& x) const {
    const auto b = mesh->barycentric(cell, x);
    const Cell& t = mesh->cell(cell);
    return b[0] * values[t[0]] + b[1] * values[t[1]] + b[2] * values[t[2]];
}

Point P1Field::gradient(int cell) const {
    const auto g = mesh->barycentric_gradients(cell);
    const Cell& t = mesh->cell(cell);
    return values[t[0]] * g[0] + values[t[1]] * g[1] + values[t[2]] * g[2];
}

double P1Field::operator()(const Point& x) const {
    const auto c = mesh->locate(x, 1e-10);
    if (!c) throw std::out_of_range("P1Field: point outside mesh");
    return evaluate(*c, x);
}

SparseMatrix assemble_bilinear_full(const Mesh& m, const CoefficientSet& coeff) {
    const auto& rule = quadrature_degree2();
    std::vector<Local> local(static_cast<std::size_t>(m.num_cells()));
    parallel_for(m.num_cells(), [&](int c) {
        const auto grads = m.barycentric_gradients(c);
        const auto pts = quadrature_points(m, c, rule);
        const double area = m.area(c);
        Matrix2 a_int = Matrix2::Zero();
        Local mass = Local::Zero();
        for (std::size_t q = 0; q < rule.size(); ++q) {
            const Matrix2 a = coeff.A_at(m, c, pts[q]);
            const double cc = coeff.c_at(m, c, pts[q]);
            check_coefficients(coeff, a, cc);
            const double w = rule.weights[q] * area;
            a_int += w * a;
            const auto& b = rule.points[q];
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 3; ++j) mass(i, j) += w * cc * b[static_cast<std::size_t>(i)] *
                                                          b[static_cast<std::size_t>(j)];
        }
        Local k;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                k(i, j) = grads[static_cast<std::size_t>(j)].dot(a_int * grads[static_cast<std::size_t>(i)]);
        local[static_cast<std::size_t>(c)] = k + mass;
    });
    return from_local(m, local);
}

SparseMatrix restrict_matrix(const SparseMatrix& full, const DofMap& dofs) {
    std::vector<Triplet> triplets;
    triplets.reserve(static_cast<std::size_t>(full.nonZeros()));
    for (int row = 0; row < full.outerSize(); ++row) {
        const int r = dofs.vertex_to_dof[static_cast<std::size_t>(row)];
        if (r < 0) continue;
        for (SparseMatrix::InnerIterator it(full, row); it; ++it) {
            const int col = dofs.vertex_to_dof[static_cast<std::size_t>(it.col())];
            if (col >= 0) triplets.emplace_back(r, col, it.value());
        }
    }
    SparseMatrix a(dofs.size(), dofs.size());
    a.setFromTriplets(triplets.begin(), triplets.end());
    return a;
}

SpdSystem assemble_bilinear(const MeshPtr& m, const CoefficientSet& coeff) {
    DofMap dofs(*m);
    SparseMatrix a = restrict_matrix(assemble_bilinear_full(*m, coeff), dofs);
    return {m, std::move(dofs), std::move(a)};
}

SparseMatrix assemble_mass_full(const Mesh& m) {
    std::vector<Local> local(static_cast<std::size_t>(m.num_cells()));
    Local ref;
    ref << 2, 1, 1, 1, 2, 1, 1, 1, 2;
    for (int c = 0; c < m.num_cells(); ++c) local[static_cast<std::size_t>(c)] = (m.area(c) / 12.0) * ref;
    return from_local(m, local);
}

Vector assemble_load(const Mesh& m, const Function& g, int quad_degree) {
    const auto& rule = quadrature(quad_degree);
    Vector load = Vector::Zero(m.num_vertices());
    for (int c = 0; c < m.num_cells(); ++c) {
        const Cell& t = m.cell(c);
        const auto pts = quadrature_points(m, c, rule);
        for (std::size_t q = 0; q < rule.size(); ++q) {
            const double v = g(pts[q]);
            check_finite(v, "assemble_load");
            const double w = rule.weights[q] * m.area(c) * v;
            for (int i = 0; i < 3; ++i) load[t[static_cast<std::size_t>(i)]] += w * rule.points[q][static_cast<std::size_t>(i)];
        }
    }
    return load;
}

Vector assemble_ritz_load(const Mesh& m, const CoefficientSet& coeff, const Function& zeta) {
    if (!zeta.has_gradient()) throw std::invalid_argument("ritz load: function needs a gradient");
    const auto& rule = quadrature_degree5();
    Vector load = Vector::Zero(m.num_vertices());
    for (int c = 0; c < m.num_cells(); ++c) {
        const Cell& t = m.cell(c);
        const auto grads = m.barycentric_gradients(c);
        const auto pts = quadrature_points(m, c, rule);
        for (std::size_t q = 0; q < rule.size(); ++q) {
            const Matrix2 a = coeff.A_at(m, c, pts[q]);
            const double cc = coeff.c_at(m, c, pts[q]);
            const Point flux = a * zeta.gradient(pts[q]);
            const double z = zeta(pts[q]);
            if (!flux.allFinite()) throw CoefficientError("ritz load: non-finite sample");
            check_finite(z, "ritz load");
            const double w = rule.weights[q] * m.area(c);
            for (std::size_t i = 0; i < 3; ++i)
                load[t[i]] += w * (flux.dot(grads[i]) + cc * z * rule.points[q][i]);
        }
    }
    return load;
}

Vector solve_spd_interior(const SpdSystem& sys, const Vector& rhs, double tol, const Vector* initial_guess) {
    if (rhs.size() != sys.dimension())
        throw std::invalid_argument("solve_spd: rhs dimension does not match the system");
    const Vector inv_diag = sys.matrix.diagonal().cwiseInverse();
    Vector x = initial_guess ? *initial_guess : Vector::Zero(rhs.size());
    conjugate_gradient([&](const Vector& v, Vector& out) { out.noalias() = sys.matrix * v; }, rhs, x,
                       [&](const Vector& r, Vector& out) { out = inv_diag.cwiseProduct(r); }, tol,
                       10 * std::max(1, sys.dimension()));
    return x;
}

P1Field solve_spd(const SpdSystem& sys, const Vector& rhs, double tol) {
    return {sys.mesh, sys.dofs.extend(solve_spd_interior(sys, rhs, tol))};
}

P1Field interpolate(const MeshPtr& m, const Function& f) {
    Vector v(m->num_vertices());
    for (int i = 0; i < m->num_vertices(); ++i) v[i] = f(m->vertex(i));
    return {m, std::move(v)};
}

P1Field ritz_project(const SpdSystem& sys, const CoefficientSet& coeff, const Function& zeta) {
    const Vector rhs = sys.dofs.restrict(assemble_ritz_load(*sys.mesh, coeff, zeta));
    return solve_spd(sys, rhs);
}

P1Field ritz_project(const MeshPtr& m, const CoefficientSet& coeff, const Function& zeta) {
    return ritz_project(assemble_bilinear(m, coeff), coeff, zeta);
}

P0Field l2_project_p0(const MeshPtr& m, const Function& v) {
    const auto& rule = quadrature_degree5();
    Vector values(m->num_cells());
    for (int c = 0; c < m->num_cells(); ++c) {
        const auto pts = quadrature_points(*m, c, rule);
        double avg = 0.0;
        for (std::size_t q = 0; q < rule.size(); ++q) {
            const double s = v(pts[q]);
            check_finite(s, "l2_project_p0");
            avg += rule.weights[q] * s;
        }
        values[c] = avg;
    }
    return {m, std::move(values)};
}

ErrorNorms error_norms(const CoefficientSet& coeff, const P1Field& fld, const Function& exact) {
    const Mesh& m = *fld.mesh;
    const auto& rule = quadrature_degree5();
    const bool energy = exact.has_gradient();
    double l2 = 0.0, en = 0.0;
    for (int c = 0; c < m.num_cells(); ++c) {
        const auto pts = quadrature_points(m, c, rule);
        const Cell& t = m.cell(c);
        const Point g = energy ? fld.gradient(c) : Point::Zero();
        for (std::size_t q = 0; q < rule.size(); ++q) {
            const auto& b = rule.points[q];
            const double uh = b[0] * fld.values[t[0]] + b[1] * fld.values[t[1]] + b[2] * fld.values[t[2]];
            const double e = uh - exact(pts[q]);
            const double w = rule.weights[q] * m.area(c);
            l2 += w * e * e;
            if (energy) {
                const Point ge = g - exact.gradient(pts[q]);
                en += w * (ge.dot(coeff.A_at(m, c, pts[q]) * ge) + coeff.c_at(m, c, pts[q]) * e * e);
            }
        }
    }
    return {std::sqrt(l2), energy ? std::sqrt(en) : std::numeric_limits<double>::quiet_NaN()};
}

double error_l2(const P0Field& fld, const Function& exact) {
    const Mesh& m = *fld.mesh;
    const auto& rule = quadrature_degree5();
    double l2 = 0.0;
    for (int c = 0; c < m.num_cells(); ++c) {
        const auto pts = quadrature_points(m, c, rule);
        for (std::size_t q = 0; q < rule.size(); ++q) {
            const double e = fld.values[c] - exact(pts[q]);
            l2 += rule.weights[q] * m.area(c) * e * e;
        }
    }
    return std::sqrt(l2);
}

double l2_norm(const Mesh& m, const Function& f) {
    const auto& rule = quadrature_degree5();
    double s = 0.0;
    for (int c = 0; c < m.num_cells(); ++c) {
        const auto pts = quadrature_points(m, c, rule);
        for (std::size_t q = 0; q < rule.size(); ++q) {
            const double v = f(pts[q]);
            s += rule.weights[q] * m.area(c) * v * v;
        }
    }
    return std::sqrt(s);
}

double h1_seminorm(const Mesh& m, const Function& f) {
    if (!f.has_gradient()) throw std::invalid_argument("h1_seminorm: function needs a gradient");
    const auto& rule = quadrature_degree5();
    double s = 0.0;
    for (int c = 0; c < m.num_cells(); ++c) {
        const auto pts = quadrature_points(m, c, rule);
        for (std::size_t q = 0; q < rule.size(); ++q)
            s += rule.weights[q] * m.area(c) * f.gradient(pts[q]).squaredNorm();
    }
    return std::sqrt(s);
}

double poincare_constant(const Mesh& m) {
    const DofMap dofs(m);
    if (dofs.size() == 0) throw std::invalid_argument("poincare_constant: mesh has no interior vertices");
    const SparseMatrix k = restrict_matrix(assemble_bilinear_full(m, CoefficientSet::laplace()), dofs);
    const SparseMatrix mass = restrict_matrix(assemble_mass_full(m), dofs);
    const Vector inv_diag = k.diagonal().cwiseInverse();

    Vector v = Vector::Ones(dofs.size());
    v /= std::sqrt(v.dot(mass * v));
    Vector x = Vector::Zero(dofs.size());
    double lambda = 0.0;
    for (int it = 0; it < 500; ++it) {
        const Vector rhs = mass * v;
        conjugate_gradient([&](const Vector& s, Vector& out) { out.noalias() = k * s; }, rhs, x,
                           [&](const Vector& r, Vector& out) { out = inv_diag.cwiseProduct(r); }, 1e-13,
                           10 * dofs.size());
        // Rayleigh quotient of x: x'Kx / x'Mx with Kx = Mv.
        const Vector mx = mass * x;
        const double next = x.dot(rhs) / x.dot(mx);
        const double norm = std::sqrt(x.dot(mx));
        v = x / norm;
        x = v / next;
        if (it > 0 && std::abs(next - lambda) <= 1e-8 * next) return 1.0 / std::sqrt(next);
        lambda = next;
    }
    throw SolverError("poincare_constant: inverse iteration did not converge in 500 steps");
}

}  // namespace ocpfem
