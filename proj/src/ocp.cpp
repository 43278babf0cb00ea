#include "ocpfem/ocp.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "ocpfem/quadrature.hpp"

namespace ocpfem {

namespace {

using Triplet = Eigen::Triplet<double>;

constexpr double kInnerTol = 1e-13;
constexpr double kReducedTol = 1e-12;

}  // namespace

void OcpProblem::validate() const {
    if (!(gamma > 0.0) || gamma > 1.0) throw std::invalid_argument("gamma must be in (0,1]");
    if (!f.value || !y_d.value || !phi1.value || !phi2.value)
        throw std::invalid_argument("OcpProblem: f, y_d, phi1 and phi2 must be set");
}

// ---------------------------------------------------------------------------
// StateSpace

StateSpace StateSpace::standard(MeshPtr mesh, const CoefficientSet& coeff) {
    StateSpace s;
    s.dofs_ = DofMap(*mesh);
    s.fine_stiffness_ = restrict_matrix(assemble_bilinear_full(*mesh, coeff), s.dofs_);
    s.fine_mass_ = restrict_matrix(assemble_mass_full(*mesh), s.dofs_);
    s.stiffness_ = s.fine_stiffness_;
    s.mass_ = s.fine_mass_;
    s.inv_diag_ = s.stiffness_.diagonal().cwiseInverse();
    s.mesh_ = std::move(mesh);
    return s;
}

StateSpace StateSpace::subspace(const StateSpace& fine, SparseMatrix basis) {
    if (!fine.is_standard()) throw std::invalid_argument("StateSpace: subspace of a subspace");
    if (basis.rows() != fine.dofs_.size())
        throw std::invalid_argument("StateSpace: basis rows must match the interior vertex count");
    StateSpace s = fine;
    const SparseMatrix basis_t = basis.transpose();
    s.stiffness_ = basis_t * (s.fine_stiffness_ * basis);
    s.mass_ = basis_t * (s.fine_mass_ * basis);
    s.inv_diag_ = s.stiffness_.diagonal().cwiseInverse();
    s.basis_ = std::make_shared<const SparseMatrix>(std::move(basis));
    return s;
}

Vector StateSpace::reduce(const Vector& fine_dual) const {
    if (!basis_) return fine_dual;
    return basis_->transpose() * fine_dual;
}

SparseMatrix StateSpace::reduce_matrix(const SparseMatrix& fine) const {
    if (!basis_) return fine;
    return SparseMatrix(basis_->transpose()) * fine;
}

Vector StateSpace::prolong(const Vector& coeffs) const {
    if (!basis_) return coeffs;
    return *basis_ * coeffs;
}

P1Field StateSpace::field(const Vector& coeffs) const { return {mesh_, dofs_.extend(prolong(coeffs))}; }

Vector StateSpace::solve(const Vector& rhs, const Vector* guess, double tol) const {
    Vector x = guess ? *guess : Vector::Zero(rhs.size());
    conjugate_gradient([&](const Vector& v, Vector& out) { out.noalias() = stiffness_ * v; }, rhs, x,
                       [&](const Vector& r, Vector& out) { out = inv_diag_.cwiseProduct(r); }, tol,
                       10 * std::max(1, dimension()));
    return x;
}

// ---------------------------------------------------------------------------
// ControlSpace

ControlSpace ControlSpace::piecewise_constant(const MeshPtr& state_mesh, const MeshPtr& control_mesh) {
    ControlSpace s;
    s.mode_ = ControlMode::piecewise_constant;
    s.state_mesh_ = state_mesh;
    s.control_mesh_ = control_mesh;
    const Mesh& sm = *state_mesh;
    const Mesh& cm = *control_mesh;
    const DofMap dofs(sm);

    std::vector<Triplet> triplets;
    if (cm.num_cells() <= sm.num_cells()) {
        // State mesh is the finer one: every state cell sits in one control cell.
        const auto host = nested_cell_map(cm, sm);
        for (int c = 0; c < sm.num_cells(); ++c) {
            for (int v : sm.cell(c)) {
                const int i = dofs.vertex_to_dof[static_cast<std::size_t>(v)];
                if (i >= 0) triplets.emplace_back(i, host[static_cast<std::size_t>(c)], sm.area(c) / 3.0);
            }
        }
    } else {
        const auto host = nested_cell_map(sm, cm);
        for (int k = 0; k < cm.num_cells(); ++k) {
            const int c = host[static_cast<std::size_t>(k)];
            const auto b = sm.barycentric(c, cm.centroid(k));
            const Cell& t = sm.cell(c);
            for (std::size_t j = 0; j < 3; ++j) {
                const int i = dofs.vertex_to_dof[static_cast<std::size_t>(t[j])];
                if (i >= 0) triplets.emplace_back(i, k, cm.area(k) * b[j]);
            }
        }
    }
    s.coupling_.resize(dofs.size(), cm.num_cells());
    s.coupling_.setFromTriplets(triplets.begin(), triplets.end());

    s.weights_.resize(cm.num_cells());
    s.points_.reserve(static_cast<std::size_t>(cm.num_cells()));
    for (int k = 0; k < cm.num_cells(); ++k) {
        s.weights_[k] = cm.area(k);
        s.points_.push_back(cm.centroid(k));
    }
    return s;
}

ControlSpace ControlSpace::variational(const MeshPtr& state_mesh) {
    ControlSpace s;
    s.mode_ = ControlMode::variational;
    s.state_mesh_ = state_mesh;
    s.control_mesh_ = state_mesh;
    const Mesh& sm = *state_mesh;
    const DofMap dofs(sm);
    const auto& rule = quadrature_degree5();
    const auto nq = static_cast<int>(rule.size());

    std::vector<Triplet> triplets;
    s.weights_.resize(static_cast<Eigen::Index>(sm.num_cells()) * nq);
    s.points_.reserve(static_cast<std::size_t>(s.weights_.size()));
    for (int c = 0; c < sm.num_cells(); ++c) {
        const auto pts = quadrature_points(sm, c, rule);
        const Cell& t = sm.cell(c);
        for (int q = 0; q < nq; ++q) {
            const int k = c * nq + q;
            const double w = rule.weights[static_cast<std::size_t>(q)] * sm.area(c);
            s.weights_[k] = w;
            s.points_.push_back(pts[static_cast<std::size_t>(q)]);
            for (std::size_t j = 0; j < 3; ++j) {
                const int i = dofs.vertex_to_dof[static_cast<std::size_t>(t[j])];
                if (i >= 0) triplets.emplace_back(i, k, w * rule.points[static_cast<std::size_t>(q)][j]);
            }
        }
    }
    s.coupling_.resize(dofs.size(), s.weights_.size());
    s.coupling_.setFromTriplets(triplets.begin(), triplets.end());
    return s;
}

Vector ControlSpace::project(const Function& f) const {
    if (mode_ == ControlMode::piecewise_constant) return l2_project_p0(control_mesh_, f).values;
    Vector v(size());
    for (int k = 0; k < size(); ++k) v[k] = f(points_[static_cast<std::size_t>(k)]);
    return v;
}

Vector ControlSpace::project_state(const Vector& interior) const {
    return (coupling_.transpose() * interior).cwiseQuotient(weights_);
}

double ControlSpace::norm(const Vector& v) const {
    return std::sqrt(v.cwiseProduct(v).dot(weights_));
}

double ControlSpace::l2_error(const Vector& v, const Function& exact) const {
    if (mode_ == ControlMode::piecewise_constant) return error_l2(P0Field{control_mesh_, v}, exact);
    double s = 0.0;
    for (int k = 0; k < size(); ++k) {
        const double e = v[k] - exact(points_[static_cast<std::size_t>(k)]);
        s += weights_[k] * e * e;
    }
    return std::sqrt(s);
}

double ControlSpace::projection_error(const Function& f) const {
    if (mode_ == ControlMode::variational) return 0.0;
    return error_l2(l2_project_p0(control_mesh_, f), f);
}

P0Field ControlSpace::as_p0(const Vector& v) const {
    if (mode_ != ControlMode::piecewise_constant)
        throw std::logic_error("ControlSpace: variational controls are not cellwise constant");
    return {control_mesh_, v};
}

// ---------------------------------------------------------------------------

Vector clamp_control(const Vector& p_over_gamma, const Vector& lo, const Vector& hi) {
    if (lo.size() != p_over_gamma.size() || hi.size() != p_over_gamma.size())
        throw std::invalid_argument("clamp_control: size mismatch");
    Vector out(p_over_gamma.size());
    for (Eigen::Index k = 0; k < out.size(); ++k) {
        if (lo[k] > hi[k]) {
            std::ostringstream msg;
            msg << "clamp_control: lower bound exceeds upper bound at component " << k;
            throw std::invalid_argument(msg.str());
        }
        out[k] = std::max(lo[k], std::min(hi[k], -p_over_gamma[k]));
    }
    return out;
}

MultiplierSplit split_multiplier(const Vector& lambda) {
    return {lambda.cwiseMax(0.0), lambda.cwiseMin(0.0)};
}

std::pair<double, double> KktSolution::complementarity() const {
    const Vector& w = control->weights();
    return {w.dot(lambda1.cwiseProduct(u - lower)), w.dot(lambda2.cwiseProduct(u - upper))};
}

// ---------------------------------------------------------------------------
// DiscreteOcp

DiscreteOcp::DiscreteOcp(const OcpProblem& prob, StateSpace state, std::shared_ptr<const ControlSpace> control)
    : prob_(prob), state_(std::move(state)), control_(std::move(control)) {
    prob_.validate();
    if (control_->state_mesh() != state_.mesh())
        throw std::invalid_argument("DiscreteOcp: control space is coupled to a different state mesh");
    const Mesh& m = *state_.mesh();
    const DofMap& dofs = state_.dofs();
    coupling_ = state_.reduce_matrix(control_->coupling());
    load_ = state_.reduce(dofs.restrict(assemble_load(m, prob_.f, 5)));
    target_ = state_.reduce(dofs.restrict(assemble_load(m, prob_.y_d, 5)));
    const double yd = l2_norm(m, prob_.y_d);
    target_norm2_ = yd * yd;
    lower_ = control_->project(prob_.phi1);
    upper_ = control_->project(prob_.phi2);
    for (Eigen::Index k = 0; k < lower_.size(); ++k)
        if (lower_[k] > upper_[k] + 1e-12)
            throw std::invalid_argument("DiscreteOcp: infeasible bounds (Q phi1 > Q phi2)");
}

Vector DiscreteOcp::state_solve(const Vector& u, const Vector* guess) const {
    return state_.solve(load_ + coupling_ * u, guess, kInnerTol);
}

Vector DiscreteOcp::adjoint_solve(const Vector& y, const Vector* guess) const {
    return state_.solve(state_.mass() * y - target_, guess, kInnerTol);
}

double DiscreteOcp::objective(const Vector& y, const Vector& u) const {
    const double misfit = y.dot(state_.mass() * y) - 2.0 * y.dot(target_) + target_norm2_;
    return 0.5 * std::max(misfit, 0.0) + 0.5 * prob_.gamma * u.cwiseProduct(u).dot(control_->weights());
}

Vector DiscreteOcp::project_adjoint(const Vector& p) const {
    return (coupling_.transpose() * p).cwiseQuotient(control_->weights());
}

KktSolution DiscreteOcp::solve(const PdasOptions& opts) const {
    if (!(opts.tol > 0.0)) throw std::invalid_argument("solve_ocp: tol must be positive");
    const double gamma = prob_.gamma;
    const Vector& w = control_->weights();
    const int n = control_->size();

    Vector u = clamp_control(Vector::Zero(n), lower_, upper_);
    Vector y = state_solve(u);
    Vector p = adjoint_solve(y);
    Vector q = project_adjoint(p) / gamma;

    auto residual = [&] {
        const Vector d = u - clamp_control(q, lower_, upper_);
        return std::sqrt(d.cwiseProduct(d).dot(w));
    };

    KktSolution sol;
    double res = residual();
    sol.residual_history.push_back(res);
    std::vector<signed char> sets(static_cast<std::size_t>(n), 0), previous;
    int iter = 0;
    while (res > opts.tol) {
        if (iter >= opts.max_iter) {
            std::ostringstream msg;
            msg << "PDAS did not converge in " << opts.max_iter << " iterations (KKT residual " << res << ")";
            throw ConvergenceError(msg.str(), sol.residual_history);
        }
        ++iter;

        // Active sets from the projection characterization; ties stay inactive.
        std::vector<int> inactive;
        for (int k = 0; k < n; ++k) {
            const double z = -q[k];
            if (z < lower_[k]) {
                sets[static_cast<std::size_t>(k)] = -1;
                u[k] = lower_[k];
            } else if (z > upper_[k]) {
                sets[static_cast<std::size_t>(k)] = 1;
                u[k] = upper_[k];
            } else {
                sets[static_cast<std::size_t>(k)] = 0;
                inactive.push_back(k);
            }
        }
        if (sets == previous) sol.sets_repeated = true;
        previous = sets;

        if (!inactive.empty()) {
            // Reduced Newton system on the inactive set:
            //   (gamma W + B' K^-1 M K^-1 B)_II u_I = -(B' p(u_A, 0))_I
            const auto ni = static_cast<Eigen::Index>(inactive.size());
            Vector fixed = u;
            for (int k : inactive) fixed[k] = 0.0;
            const Vector p0 = adjoint_solve(state_solve(fixed));
            const Vector g = coupling_.transpose() * p0;
            Vector rhs(ni), diag(ni), x(ni);
            for (Eigen::Index j = 0; j < ni; ++j) {
                const int k = inactive[static_cast<std::size_t>(j)];
                rhs[j] = -g[k];
                diag[j] = gamma * w[k];
                x[j] = u[k];
            }
            auto apply = [&](const Vector& v, Vector& out) {
                Vector full = Vector::Zero(n);
                for (Eigen::Index j = 0; j < ni; ++j) full[inactive[static_cast<std::size_t>(j)]] = v[j];
                const Vector yy = state_.solve(coupling_ * full, nullptr, kInnerTol);
                const Vector pp = state_.solve(state_.mass() * yy, nullptr, kInnerTol);
                const Vector bp = coupling_.transpose() * pp;
                out.resize(ni);
                for (Eigen::Index j = 0; j < ni; ++j)
                    out[j] = diag[j] * v[j] + bp[inactive[static_cast<std::size_t>(j)]];
            };
            conjugate_gradient(apply, rhs, x, [&](const Vector& r, Vector& out) { out = r.cwiseQuotient(diag); },
                               kReducedTol, 50 + 10 * static_cast<int>(ni));
            for (Eigen::Index j = 0; j < ni; ++j) u[inactive[static_cast<std::size_t>(j)]] = x[j];
        }

        y = state_solve(u, &y);
        p = adjoint_solve(y, &p);
        q = project_adjoint(p) / gamma;
        res = residual();
        sol.residual_history.push_back(res);
    }

    sol.iterations = iter;
    sol.kkt_residual = res;
    sol.y_coeffs = y;
    sol.p_coeffs = p;
    sol.y = state_.field(y);
    sol.p = state_.field(p);
    sol.u = u;
    sol.lambda = q * gamma + gamma * u;
    auto [l1, l2] = split_multiplier(sol.lambda);
    sol.lambda1 = std::move(l1);
    sol.lambda2 = std::move(l2);
    sol.lower = lower_;
    sol.upper = upper_;
    sol.objective = objective(y, u);
    for (int k = 0; k < n; ++k) {
        const double z = -q[k];
        sol.active_lower += z < lower_[k] ? 1 : 0;
        sol.active_upper += z > upper_[k] ? 1 : 0;
    }
    sol.control = control_;
    return sol;
}

KktSolution solve_ocp(const OcpProblem& prob, const MeshPtr& state_mesh, const MeshPtr& control_mesh,
                      const PdasOptions& opts) {
    auto control = std::make_shared<const ControlSpace>(ControlSpace::piecewise_constant(state_mesh, control_mesh));
    return DiscreteOcp(prob, StateSpace::standard(state_mesh, prob.coeff), std::move(control)).solve(opts);
}

KktSolution solve_ocp_variational(const OcpProblem& prob, const MeshPtr& state_mesh, const PdasOptions& opts) {
    auto control = std::make_shared<const ControlSpace>(ControlSpace::variational(state_mesh));
    return DiscreteOcp(prob, StateSpace::standard(state_mesh, prob.coeff), std::move(control)).solve(opts);
}

AprioriBounds apriori_bounds(const OcpProblem& prob, const Mesh& m, double c_pf, double alpha) {
    if (!(alpha > 0.0) || !(c_pf > 0.0)) throw std::invalid_argument("apriori_bounds: C_PF and alpha must be positive");
    const double yd = l2_norm(m, prob.y_d);
    const double f = l2_norm(m, prob.f);
    const double p1 = l2_norm(m, prob.phi1);
    const double p2 = l2_norm(m, prob.phi2);
    const double k = c_pf * c_pf / (alpha * alpha);
    AprioriBounds b;
    b.c_sharp = std::sqrt(2.0 * yd * yd + 4.0 * k * f * f + (4.0 * k + 1.0) * std::min(p1 * p1, p2 * p2));
    b.state_misfit_bound = b.c_sharp;
    b.control_bound = b.c_sharp / prob.gamma;
    b.adjoint_seminorm_bound = (c_pf / alpha) * b.c_sharp;
    const double s1 = prob.phi1.has_gradient() ? h1_seminorm(m, prob.phi1) : 0.0;
    const double s2 = prob.phi2.has_gradient() ? h1_seminorm(m, prob.phi2) : 0.0;
    b.control_seminorm_bound = std::max({s1, s2, b.adjoint_seminorm_bound / prob.gamma});
    return b;
}

}  // namespace ocpfem
