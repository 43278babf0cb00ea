#pragma once

#include <memory>
#include <optional>
#include <vector>

#include "ocpfem/fem.hpp"

namespace ocpfem {

/// Distributed optimal control problem
///   min 1/2 ||y - y_d||^2 + gamma/2 ||u||^2
///   s.t. a(y, z) = (f + u, z) for all z in H^1_0, phi1 <= u <= phi2.
struct OcpProblem {
    CoefficientSet coeff;
    double gamma = 1.0;
    Function f;
    Function y_d;
    Function phi1;
    Function phi2;

    /// Checks gamma in (0,1]; throws std::invalid_argument otherwise.
    void validate() const;
};

/// Discrete state space V_*: the P1 space of a mesh, or a subspace of it
/// spanned by the columns of a basis matrix over the interior vertices.
class StateSpace {
public:
    static StateSpace standard(MeshPtr mesh, const CoefficientSet& coeff);
    /// Span of the columns of `basis` inside a standard space.
    static StateSpace subspace(const StateSpace& fine, SparseMatrix basis);

    const MeshPtr& mesh() const { return mesh_; }
    const DofMap& dofs() const { return dofs_; }
    int dimension() const { return static_cast<int>(stiffness_.rows()); }
    bool is_standard() const { return !basis_; }

    const SparseMatrix& stiffness() const { return stiffness_; }
    const SparseMatrix& mass() const { return mass_; }
    const SparseMatrix& fine_stiffness() const { return fine_stiffness_; }
    const SparseMatrix& fine_mass() const { return fine_mass_; }

    /// Interior dual vector on the mesh -> dual vector of the space.
    Vector reduce(const Vector& fine_dual) const;
    /// Row-wise reduction of an operator with interior-vertex rows.
    SparseMatrix reduce_matrix(const SparseMatrix& fine) const;
    /// Coefficients -> interior vertex values.
    Vector prolong(const Vector& coeffs) const;
    /// Coefficients -> field on the mesh.
    P1Field field(const Vector& coeffs) const;
    /// Solves stiffness * x = rhs by diagonally preconditioned CG.
    Vector solve(const Vector& rhs, const Vector* guess = nullptr, double tol = 1e-13) const;

private:
    MeshPtr mesh_;
    DofMap dofs_;
    SparseMatrix fine_stiffness_, fine_mass_;
    std::shared_ptr<const SparseMatrix> basis_;
    SparseMatrix stiffness_, mass_;
    Vector inv_diag_;
};

enum class ControlMode { piecewise_constant, variational };

/// Discrete control space W_dag with its diagonal mass and its coupling to
/// the state mesh. In piecewise-constant mode the unknowns are cell values
/// on the control mesh; in variational mode they are values at the degree-5
/// quadrature points of the state mesh, and Q_dag is point sampling.
class ControlSpace {
public:
    /// Control and state meshes must be nested (either may be the finer).
    static ControlSpace piecewise_constant(const MeshPtr& state_mesh, const MeshPtr& control_mesh);
    static ControlSpace variational(const MeshPtr& state_mesh);

    ControlMode mode() const { return mode_; }
    int size() const { return static_cast<int>(weights_.size()); }
    const MeshPtr& state_mesh() const { return state_mesh_; }
    /// Control mesh in piecewise-constant mode; the state mesh otherwise.
    const MeshPtr& control_mesh() const { return control_mesh_; }

    /// Diagonal of the control mass matrix.
    const Vector& weights() const { return weights_; }
    /// int phi_i e_k over interior state vertices i and control unknowns k.
    const SparseMatrix& coupling() const { return coupling_; }
    /// Physical location of each unknown (cell centroid or quadrature point).
    const std::vector<Point>& points() const { return points_; }

    /// Q_dag applied to a function.
    Vector project(const Function& f) const;
    /// Q_dag applied to a P1 state field given by its interior values.
    Vector project_state(const Vector& interior) const;
    /// Weighted L2 norm of a control vector.
    double norm(const Vector& v) const;
    /// ||v - exact||_{L2}, degree-5 quadrature on the control cells.
    double l2_error(const Vector& v, const Function& exact) const;
    /// ||f - Q_dag f||_{L2}; zero in variational mode.
    double projection_error(const Function& f) const;
    /// Control values as a P0 field (piecewise-constant mode only).
    P0Field as_p0(const Vector& v) const;

private:
    ControlMode mode_ = ControlMode::piecewise_constant;
    MeshPtr state_mesh_;
    MeshPtr control_mesh_;
    Vector weights_;
    SparseMatrix coupling_;
    std::vector<Point> points_;
};

/// Componentwise max(lo, min(hi, -p_over_gamma)). Throws
/// std::invalid_argument if lo > hi anywhere.
Vector clamp_control(const Vector& p_over_gamma, const Vector& lo, const Vector& hi);

struct MultiplierSplit {
    Vector positive;  // lambda_1 = max(lambda, 0)
    Vector negative;  // lambda_2 = min(lambda, 0)
};
MultiplierSplit split_multiplier(const Vector& lambda);

struct PdasOptions {
    int max_iter = 50;
    double tol = 1e-10;
};

struct KktSolution {
    P1Field y;
    P1Field p;
    Vector y_coeffs;  // coefficients in the state space
    Vector p_coeffs;
    Vector u;
    Vector lambda;
    Vector lambda1;
    Vector lambda2;
    Vector lower;  // Q_dag phi1
    Vector upper;  // Q_dag phi2
    int iterations = 0;
    double kkt_residual = 0.0;
    std::vector<double> residual_history;
    bool sets_repeated = false;
    double objective = 0.0;
    int active_lower = 0;
    int active_upper = 0;
    std::shared_ptr<const ControlSpace> control;

    /// int lambda_1 (u - Phi_1) and int lambda_2 (u - Phi_2).
    std::pair<double, double> complementarity() const;
};

/// PDAS failed to reach the KKT tolerance; carries the residual history.
class ConvergenceError : public SolverError {
public:
    ConvergenceError(const std::string& what, std::vector<double> history)
        : SolverError(what), history_(std::move(history)) {}
    const std::vector<double>& history() const { return history_; }

private:
    std::vector<double> history_;
};

/// Algebraic form of the discrete problem on a (state space, control space)
/// pair.
class DiscreteOcp {
public:
    DiscreteOcp(const OcpProblem& prob, StateSpace state, std::shared_ptr<const ControlSpace> control);

    const StateSpace& state() const { return state_; }
    const ControlSpace& control() const { return *control_; }
    const OcpProblem& problem() const { return prob_; }
    const SparseMatrix& coupling() const { return coupling_; }
    const Vector& load() const { return load_; }
    const Vector& target_load() const { return target_; }
    const Vector& lower() const { return lower_; }
    const Vector& upper() const { return upper_; }

    /// State coefficients for control u.
    Vector state_solve(const Vector& u, const Vector* guess = nullptr) const;
    /// Adjoint coefficients for state coefficients y.
    Vector adjoint_solve(const Vector& y, const Vector* guess = nullptr) const;
    /// Discrete objective 1/2||y - y_d||^2 + gamma/2 ||u||^2.
    double objective(const Vector& y, const Vector& u) const;
    /// Q_dag p for adjoint coefficients p.
    Vector project_adjoint(const Vector& p) const;

    /// Primal-dual active set iteration from u0 = clamp(0, Phi_1, Phi_2).
    KktSolution solve(const PdasOptions& opts = {}) const;

private:
    OcpProblem prob_;
    StateSpace state_;
    std::shared_ptr<const ControlSpace> control_;
    SparseMatrix coupling_;  // state space x control
    Vector load_;            // int f phi
    Vector target_;          // int y_d phi
    double target_norm2_ = 0.0;
    Vector lower_, upper_;
};

KktSolution solve_ocp(const OcpProblem& prob, const MeshPtr& state_mesh, const MeshPtr& control_mesh,
                      const PdasOptions& opts = {});
KktSolution solve_ocp_variational(const OcpProblem& prob, const MeshPtr& state_mesh,
                                  const PdasOptions& opts = {});

struct AprioriBounds {
    double c_sharp = 0.0;
    double state_misfit_bound = 0.0;       // ||y - y_d|| <= C#
    double control_bound = 0.0;            // ||u|| <= C#/gamma
    double adjoint_seminorm_bound = 0.0;   // |p|_{H^1} <= (C_PF/alpha) C#
    double control_seminorm_bound = 0.0;   // |u|_{H^1} <= max(|phi1|, |phi2|, |p|/gamma)
};

/// A-priori bounds of the continuous solution. Norms of the data are taken
/// by degree-5 quadrature on `m`; the H^1 seminorms of phi1, phi2 need
/// gradients (treated as zero when absent).
AprioriBounds apriori_bounds(const OcpProblem& prob, const Mesh& m, double c_pf, double alpha);

}  // namespace ocpfem
