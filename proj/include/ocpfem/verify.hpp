#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "ocpfem/fem.hpp"
#include "ocpfem/multiscale.hpp"
#include "ocpfem/ocp.hpp"

namespace ocpfem {

/// Control problem together with its exact optimal solution.
struct ManufacturedProblem {
    OcpProblem prob;
    Function exact_y;
    Function exact_u;
    Function exact_p;
    Function exact_lambda;
    double bound = 0.0;
};

/// Unit square, A = I, c = 0, p = y = sin(pi x) sin(pi y), constant bounds
/// +-bound, u = clamp(-p/gamma), f = -Lap y - u, y_d = y + Lap p.
/// Throws std::invalid_argument unless gamma is in (0,1] and bound > 0.
ManufacturedProblem manufacture_m1(double gamma, double bound);

struct SelfCheck {
    double kkt = 0.0;       // max |u - clamp(-p/gamma)|
    double state = 0.0;     // max residual of the state equation
    double adjoint = 0.0;   // max residual of the adjoint equation
    double boundary = 0.0;  // max |y|, |p| on the boundary
    bool passed() const { return kkt <= 1e-12 && state <= 1e-8 && adjoint <= 1e-8 && boundary <= 1e-12; }
};

/// Evaluates the optimality system of `mp` at `points` random points. The
/// divergence terms use fourth-order differences of the exact gradients, so
/// A and c must be smooth.
SelfCheck self_check(const ManufacturedProblem& mp, std::uint64_t seed = 42, int points = 200);

/// Field on its mesh as a Function (point location), with piecewise
/// gradient.
Function field_function(const P1Field& fld);

/// Ritz projection onto an arbitrary state space, returned as a mesh field.
P1Field ritz_project(const StateSpace& space, const CoefficientSet& coeff, const Function& zeta);

/// Projection errors entering the theorem bounds.
struct ProjectionErrors {
    double ritz_y_l2 = 0.0, ritz_p_l2 = 0.0;
    double ritz_y_a = 0.0, ritz_p_a = 0.0;
    double lambda1 = 0.0, lambda2 = 0.0;  // ||lambda_i - Q_dag lambda_i||
    double phi1 = 0.0, phi2 = 0.0;        // ||phi_i - Q_dag phi_i||
    double u = 0.0;                       // ||u - Q_dag u||

    double control_terms() const { return lambda1 + lambda2 + phi1 + phi2 + u; }
};

ProjectionErrors projection_errors(const ManufacturedProblem& mp, const StateSpace& state,
                                   const ControlSpace& control);

struct TheoremCheck {
    double lhs = 0.0;
    double rhs = 0.0;
    double ratio = 0.0;
};

/// L2 error bound: lhs = ||y-y*|| + ||u-u*|| + ||p-p*||, rhs = the seven
/// projection errors. Throws std::logic_error if rhs = 0 while lhs > 1e-8.
TheoremCheck check_theorem_41(const ManufacturedProblem& mp, const KktSolution& sol, const ProjectionErrors& pe);
/// Energy error bound: lhs = |y-y*|_a + |p-p*|_a, rhs with energy Ritz errors.
TheoremCheck check_theorem_43(const ManufacturedProblem& mp, const KktSolution& sol, const ProjectionErrors& pe);
/// Converse: lhs = ||y - R y|| + ||p - R p||, rhs = the L2 error sum.
TheoremCheck check_tight(const ManufacturedProblem& mp, const KktSolution& sol, const ProjectionErrors& pe);

/// Least-squares slope of log e against log h. Throws std::invalid_argument
/// with fewer than two rows or a nonpositive entry.
double fit_rate(const std::vector<std::pair<double, double>>& errors);

/// max / median of positive values.
double spread(const std::vector<double>& values);

struct StabilityCheck {
    int samples = 0;
    int violations = 0;
    double c_pf = 0.0;
    double max_l2_ratio = 0.0;      // ||v|| / ((C_PF^2/alpha) ||g||)
    double max_energy_ratio = 0.0;  // |v|_a / ((C_PF/sqrt(alpha)) ||g||)
};

/// Solves a(v, w) = (g, w) on `space` for random piecewise constant g on
/// the mesh of `space` and compares with the stability bounds.
StabilityCheck check_stability(const StateSpace& space, double alpha, double c_pf, int samples,
                               std::uint64_t seed);

/// Violations of the discrete optimality system of one solve.
struct KktCheck {
    double complementarity = 0.0;  // max of the two integrals (absolute)
    double feasibility = 0.0;      // max violation of lower <= u <= upper
    double multiplier = 0.0;       // max |lambda - (Q p + gamma u)|
    double sign = 0.0;             // max violation of lambda1 >= 0 >= lambda2
    bool passed() const {
        return complementarity <= 1e-9 && feasibility <= 1e-12 && multiplier <= 1e-10 && sign <= 1e-12;
    }
};
KktCheck check_kkt(const KktSolution& sol, double gamma);

enum class ControlRule { same, h_squared, fixed_n, variational };

struct StudyOptions {
    ControlRule control = ControlRule::same;
    std::vector<int> schedule{8, 16, 32, 64};
    int control_n = 8;  // for fixed_n
    PdasOptions pdas;
    std::uint64_t seed = 42;
    int stability_samples = 10;
};

/// Options of the LOD studies: coarse schedule over a fixed fine mesh.
struct LodStudyOptions {
    std::vector<int> schedule{4, 8, 16};
    int fine_n = 128;
    double c_loc = 1.0;
    int layers = 0;  // 0: default_layers(coarse, c_loc)
    double period = 0.0;
    PdasOptions pdas;
    std::uint64_t seed = 42;
    int stability_samples = 10;
};

struct StudyRow {
    int n = 0;          // state (or coarse) mesh subdivisions
    int control_n = 0;  // 0 in variational mode
    double h = 0.0;
    double rho = 0.0;
    double err_y_l2 = 0.0, err_u_l2 = 0.0, err_p_l2 = 0.0;
    double err_y_a = 0.0, err_p_a = 0.0;
    TheoremCheck thm41, thm43, tight;
    int iters = 0;
    double kkt_residual = 0.0;
    KktCheck kkt;
    double misfit = 0.0;   // ||y* - y_d||
    double c_sharp = 0.0;
    StabilityCheck stability;
    bool failed = false;
    std::string error;
    std::vector<double> residual_history;
};

struct ConvergenceTable {
    std::string mode;
    std::vector<StudyRow> rows;
    std::map<std::string, double> rates;    // per error column; NaN if unavailable
    std::map<std::string, double> spreads;  // thm41, thm43, tight

    bool any_failed() const;
};

/// Column names with fitted rates, in output order.
const std::vector<std::string>& error_columns();

/// Convergence study against the exact solution. P0 controls with
/// ControlRule same / h_squared / fixed_n, or the variational mode.
ConvergenceTable run_study(const ManufacturedProblem& mp, const StudyOptions& opts);

/// LOD state space on coarse meshes of the schedule, P0 control on the
/// coarse mesh, errors against the fine P1 / fine P0 solution of the same
/// data (theorem columns are NaN).
ConvergenceTable run_lod_study(const OcpProblem& prob, const LodStudyOptions& opts);

struct LodSourceRow {
    int coarse_n = 0;
    int layers = 0;
    double H = 0.0;
    double energy = 0.0;
    double l2 = 0.0;
};

struct LodSourceStudy {
    std::vector<LodSourceRow> rows;
    double energy_rate = 0.0;
    double l2_rate = 0.0;
};

/// LOD Galerkin solutions of a(v, w) = (g, w) against the fine P1 solution.
LodSourceStudy lod_source_study(const CoefficientSet& coeff, const Function& g, const LodStudyOptions& opts);

}  // namespace ocpfem
