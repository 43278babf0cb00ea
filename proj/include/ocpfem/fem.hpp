#pragma once

#include <functional>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "ocpfem/cg.hpp"
#include "ocpfem/mesh.hpp"

namespace ocpfem {

using Vector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using Matrix2 = Eigen::Matrix2d;

/// Scalar function on the plane with an optional analytic gradient.
struct Function {
    std::function<double(const Point&)> value;
    std::function<Point(const Point&)> gradient;

    double operator()(const Point& x) const { return value(x); }
    bool has_gradient() const { return static_cast<bool>(gradient); }

    static Function constant(double c);
};

/// Thrown for invalid coefficient samples (non-finite, non-elliptic, c < 0)
/// and other non-finite data.
class CoefficientError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Coefficients of a(y,z) = int A grad y . grad z + c y z.
///
/// With `piecewise_constant` set the coefficients are constant on every cell
/// of any mesh that resolves the coefficient mesh, and are sampled at cell
/// centroids so quadrature points on cell edges never see the neighbour.
struct CoefficientSet {
    std::function<Matrix2(const Point&)> A;
    std::function<double(const Point&)> c;
    double mu = 1.0;     // ellipticity floor
    double alpha = 1.0;  // coercivity constant of a w.r.t. |.|_{H^1}
    double beta = 1.0;   // continuity constant
    bool piecewise_constant = false;
    bool check_ellipticity = true;

    Matrix2 A_at(const Mesh& m, int cell, const Point& x) const;
    double c_at(const Mesh& m, int cell, const Point& x) const;

    /// A = I, c = 0.
    static CoefficientSet laplace();
    /// A = a I and constant c.
    static CoefficientSet isotropic(double a, double c = 0.0);
    /// A = a(x) I with a = 1 and a = contrast on alternating squares of side
    /// period/2, aligned with the origin, so a(x) has period `period` in each
    /// direction.
    static CoefficientSet checkerboard(double contrast, double period);
};

struct CoefficientBounds {
    double alpha = 0.0;
    double beta = 0.0;
};

/// Sampled coercivity/continuity bounds over the degree-5 quadrature points:
/// alpha = min lambda_min(A), beta = max lambda_max(A) + max c * C_PF^2.
CoefficientBounds sample_bounds(const Mesh& m, const CoefficientSet& coeff, double c_pf);

/// Interior (non-Dirichlet) vertices numbered consecutively.
struct DofMap {
    std::vector<int> vertex_to_dof;  // -1 on the boundary
    std::vector<int> dof_to_vertex;

    DofMap() = default;
    explicit DofMap(const Mesh& m);
    int size() const { return static_cast<int>(dof_to_vertex.size()); }

    Vector restrict(const Vector& full) const;
    Vector extend(const Vector& interior) const;
};

/// Continuous piecewise-linear field, one value per mesh vertex.
struct P1Field {
    MeshPtr mesh;
    Vector values;

    double evaluate(int cell, const Point& x) const;
    Point gradient(int cell) const;
    /// Point evaluation through point location.
    double operator()(const Point& x) const;
};

/// Piecewise-constant field, one value per cell.
struct P0Field {
    MeshPtr mesh;
    Vector values;
};

/// Dirichlet-eliminated symmetric positive definite system on the interior
/// vertices of a mesh.
struct SpdSystem {
    MeshPtr mesh;
    DofMap dofs;
    SparseMatrix matrix;

    int dimension() const { return dofs.size(); }
};

/// Full vertex-by-vertex matrix of a(.,.), before Dirichlet elimination.
SparseMatrix assemble_bilinear_full(const Mesh& m, const CoefficientSet& coeff);
/// Matrix of a(.,.) on the interior vertices.
SpdSystem assemble_bilinear(const MeshPtr& m, const CoefficientSet& coeff);
/// Consistent P1 mass matrix, full (all vertices).
SparseMatrix assemble_mass_full(const Mesh& m);
/// Keeps the rows and columns of the interior dofs.
SparseMatrix restrict_matrix(const SparseMatrix& full, const DofMap& dofs);

/// Load vector int g phi_i over all vertices.
Vector assemble_load(const Mesh& m, const Function& g, int quad_degree);
/// Vector a(zeta, phi_i) over all vertices, degree-5 quadrature.
Vector assemble_ritz_load(const Mesh& m, const CoefficientSet& coeff, const Function& zeta);

/// Diagonally preconditioned CG on the interior system; relative residual
/// <= tol (default 1e-12), at most 10 * dimension iterations.
Vector solve_spd_interior(const SpdSystem& sys, const Vector& rhs, double tol = 1e-12,
                          const Vector* initial_guess = nullptr);
/// Solves and extends by zero on the boundary.
P1Field solve_spd(const SpdSystem& sys, const Vector& rhs, double tol = 1e-12);

/// Nodal interpolant.
P1Field interpolate(const MeshPtr& m, const Function& f);

/// Ritz projection: a(R zeta, v) = a(zeta, v) for all v in V_h.
P1Field ritz_project(const MeshPtr& m, const CoefficientSet& coeff, const Function& zeta);
P1Field ritz_project(const SpdSystem& sys, const CoefficientSet& coeff, const Function& zeta);

/// L2 projection onto piecewise constants: degree-5 cell averages.
P0Field l2_project_p0(const MeshPtr& m, const Function& v);

struct ErrorNorms {
    double l2 = 0.0;
    double energy = 0.0;
};

/// ||fld - exact||_{L2} and |fld - exact|_a with degree-5 quadrature. The
/// energy part needs exact.gradient.
ErrorNorms error_norms(const CoefficientSet& coeff, const P1Field& fld, const Function& exact);
/// ||fld - exact||_{L2}. An energy norm is not defined for P0 fields.
double error_l2(const P0Field& fld, const Function& exact);
/// ||f||_{L2} on the mesh domain by degree-5 quadrature.
double l2_norm(const Mesh& m, const Function& f);
/// |f|_{H^1} by degree-5 quadrature; needs f.gradient.
double h1_seminorm(const Mesh& m, const Function& f);

/// Poincare-Friedrichs constant of V_h: 1/sqrt(lambda_min) of the Dirichlet
/// Laplacian pencil (stiffness, mass), by inverse power iteration to 1e-8.
double poincare_constant(const Mesh& m);

}  // namespace ocpfem
