#include <cmath>
#include <random>

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>
#include <gtest/gtest.h>

#include "ocpfem/ocp.hpp"
#include "ocpfem/verify.hpp"

using namespace ocpfem;

namespace {


struct Oracle {
    Vector y, u, p;
};

/// Unconstrained optimum from the dense reduced system
///   (gamma W + S' M S) u = -S' (M K^-1 F - Yd),  S = K^-1 B,
/// with a sparse Cholesky factorization of K.
Oracle unconstrained(const DiscreteOcp& ocp) {
    const SparseMatrix& k = ocp.state().stiffness();
    const Eigen::SparseMatrix<double> kc(k);
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> chol(kc);
    const Eigen::MatrixXd b = Eigen::MatrixXd(ocp.coupling());
    const Eigen::MatrixXd s = chol.solve(b);
    const Eigen::MatrixXd m = Eigen::MatrixXd(ocp.state().mass());
    const Vector y0 = chol.solve(ocp.load());
    Eigen::MatrixXd r = s.transpose() * m * s;
    r.diagonal() += ocp.problem().gamma * ocp.control().weights();
    Oracle o;
    o.u = r.ldlt().solve(-s.transpose() * (m * y0 - ocp.target_load()));
    o.y = y0 + s * o.u;
    o.p = chol.solve(m * o.y - ocp.target_load());
    return o;
}

OcpProblem smooth_problem(double gamma, double bound) {
    OcpProblem p;
    p.coeff = CoefficientSet::isotropic(1.0, 0.5);
    p.gamma = gamma;
    p.f = {[](const Point& x) { return 1.0 + x.x() * x.y(); }, {}};
    p.y_d = {[](const Point& x) { return std::sin(3 * x.x()) - x.y(); }, {}};
    p.phi1 = Function::constant(-bound);
    p.phi2 = Function::constant(bound);
    return p;
}

DiscreteOcp p0_ocp(const OcpProblem& p, int n, int nc) {
    const auto m = unit_square_mesh(n);
    const auto c = nc == n ? m : unit_square_mesh(nc);
    return DiscreteOcp(p, StateSpace::standard(m, p.coeff),
                       std::make_shared<const ControlSpace>(ControlSpace::piecewise_constant(m, c)));
}

double weighted(const Vector& w, const Vector& v) { return std::sqrt(v.cwiseProduct(v).dot(w)); }

}  // namespace

TEST(ClampControl, Examples) {
    const Vector lo = Vector::Constant(1, -0.5), hi = Vector::Constant(1, 0.5);
    EXPECT_DOUBLE_EQ(clamp_control(Vector::Constant(1, -0.7), lo, hi)[0], 0.5);
    EXPECT_DOUBLE_EQ(clamp_control(Vector::Constant(1, -0.2), lo, hi)[0], 0.2);
    EXPECT_DOUBLE_EQ(clamp_control(Vector::Constant(1, 0.9), lo, hi)[0], -0.5);
    const Vector z = Vector::Zero(3);
    EXPECT_EQ(clamp_control(Vector::LinSpaced(3, -5, 5), z, z), z);
    EXPECT_THROW(clamp_control(Vector::Zero(1), hi, lo), std::invalid_argument);
}

TEST(SplitMultiplier, Examples) {
    Vector l(3);
    l << 1, -2, 0;
    const auto s = split_multiplier(l);
    EXPECT_EQ(s.positive, Vector((Vector(3) << 1, 0, 0).finished()));
    EXPECT_EQ(s.negative, Vector((Vector(3) << 0, -2, 0).finished()));
    EXPECT_EQ(s.positive + s.negative, l);
    EXPECT_EQ(split_multiplier(Vector::Constant(4, 2.0)).negative, Vector::Zero(4));
    EXPECT_EQ(s.positive.cwiseProduct(s.negative), Vector::Zero(3));
}

TEST(OcpProblem, Validation) {
    auto p = smooth_problem(1.0, 1.0);
    p.gamma = 0.0;
    EXPECT_THROW(p.validate(), std::invalid_argument);
    p.gamma = 1.5;
    EXPECT_THROW(p.validate(), std::invalid_argument);
    auto q = smooth_problem(1.0, 1.0);
    q.phi1 = Function::constant(1.0);
    q.phi2 = Function::constant(-1.0);
    EXPECT_THROW(p0_ocp(q, 4, 4), std::invalid_argument);
}

TEST(SolveOcp, InactiveBoundsMatchUnconstrainedOracle) {
    for (const auto& [gamma, nc] : {std::pair{1.0, 8}, std::pair{0.01, 4}, std::pair{0.1, 16}}) {
        const auto ocp = p0_ocp(smooth_problem(gamma, 1e6), 8, nc);
        const KktSolution sol = ocp.solve();
        const Oracle o = unconstrained(ocp);
        EXPECT_LE(weighted(ocp.control().weights(), sol.u - o.u), 1e-8);
        const Vector dy = sol.y_coeffs - o.y, dp = sol.p_coeffs - o.p;
        EXPECT_LE(std::sqrt(dy.dot(ocp.state().mass() * dy)), 1e-8);
        EXPECT_LE(std::sqrt(dp.dot(ocp.state().mass() * dp)), 1e-8);
        EXPECT_EQ(sol.active_lower + sol.active_upper, 0);
    }
}

TEST(SolveOcp, ZeroData) {
    OcpProblem p;
    p.coeff = CoefficientSet::laplace();
    p.f = Function::constant(0.0);
    p.y_d = Function::constant(0.0);
    p.phi1 = Function::constant(0.0);
    p.phi2 = Function::constant(1.0);
    const auto m = unit_square_mesh(6);
    const KktSolution sol = solve_ocp(p, m, m);
    EXPECT_EQ(sol.u.norm(), 0.0);
    EXPECT_EQ(sol.y.values.norm(), 0.0);
    EXPECT_EQ(sol.p.values.norm(), 0.0);
    EXPECT_EQ(sol.lambda.norm(), 0.0);
}

TEST(SolveOcp, ManufacturedActiveSet) {
    const auto mp = manufacture_m1(1.0, 0.5);
    const auto m = unit_square_mesh(16);
    const KktSolution sol = solve_ocp(mp.prob, m, m);
    EXPECT_LE(sol.kkt_residual, 1e-9);
    EXPECT_TRUE(check_kkt(sol, 1.0).passed());
    int checked = 0;
    for (int c = 0; c < m->num_cells(); ++c) {
        double lo = 1e9, hi = -1e9;
        for (int v : m->cell(c)) {
            lo = std::min(lo, mp.exact_p(m->vertex(v)));
            hi = std::max(hi, mp.exact_p(m->vertex(v)));
        }
        // Cells cut by the free boundary |p| = gamma * bound are skipped.
        if (lo > 0.55) {
            EXPECT_EQ(sol.u[c], sol.lower[c]);
            ++checked;
        } else if (hi < 0.45) {
            EXPECT_GT(sol.u[c], sol.lower[c]);
            EXPECT_LT(sol.u[c], sol.upper[c]);
            ++checked;
        }
    }
    EXPECT_GT(checked, m->num_cells() / 2);
    EXPECT_GT(sol.active_lower, 0);
}

TEST(SolveOcp, KktInvariantsBothModes) {
    const auto mp = manufacture_m1(0.1, 0.5);
    const auto m = unit_square_mesh(16);
    for (const KktSolution& sol : {solve_ocp(mp.prob, m, m), solve_ocp(mp.prob, m, unit_square_mesh(8)),
                                   solve_ocp_variational(mp.prob, m)}) {
        const KktCheck k = check_kkt(sol, 0.1);
        EXPECT_LE(k.complementarity, 1e-9);
        EXPECT_LE(k.feasibility, 1e-12);
        EXPECT_LE(k.multiplier, 1e-10);
        EXPECT_LE(k.sign, 1e-12);
        EXPECT_LE(sol.iterations, 30);
        EXPECT_LE(sol.kkt_residual, 1e-10);
        EXPECT_EQ(sol.lambda1 + sol.lambda2, sol.lambda);
    }
}

TEST(SolveOcp, FixedPointOnceSetsRepeat) {
    const auto mp = manufacture_m1(0.1, 5.0);
    const auto m = unit_square_mesh(16);
    const KktSolution sol = solve_ocp(mp.prob, m, m);
    EXPECT_GE(sol.iterations, 2);
    EXPECT_LE(sol.kkt_residual, 1e-10);
    EXPECT_EQ(sol.residual_history.size(), static_cast<std::size_t>(sol.iterations + 1));
    if (sol.sets_repeated) EXPECT_LE(sol.residual_history.back(), 1e-10);
}

TEST(SolveOcp, NonConvergenceCarriesHistory) {
    const auto mp = manufacture_m1(0.1, 5.0);
    const auto m = unit_square_mesh(16);
    try {
        solve_ocp(mp.prob, m, m, {1, 1e-10});
        FAIL() << "expected ConvergenceError";
    } catch (const ConvergenceError& e) {
        EXPECT_EQ(e.history().size(), 2u);
        EXPECT_GT(e.history().back(), 1e-10);
    }
    EXPECT_THROW(solve_ocp(mp.prob, m, m, {10, 0.0}), std::invalid_argument);
}

TEST(SolveOcp, VariationalInequalityAndDescent) {
    const auto mp = manufacture_m1(0.1, 0.5);
    const auto ocp = p0_ocp(mp.prob, 12, 12);
    const KktSolution sol = ocp.solve();
    const Vector& w = ocp.control().weights();
    const Vector grad = ocp.coupling().transpose() * sol.p_coeffs + mp.prob.gamma * w.cwiseProduct(sol.u);
    const double best = ocp.objective(sol.y_coeffs, sol.u);
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<Vector> competitors;
    for (int k = 0; k < 20; ++k) {
        Vector u(sol.u.size());
        for (Eigen::Index i = 0; i < u.size(); ++i) u[i] = sol.lower[i] + unit(rng) * (sol.upper[i] - sol.lower[i]);
        competitors.push_back(u);
    }
    competitors.push_back(ocp.control().project(mp.exact_u));
    for (const Vector& u : competitors) {
        // Discrete optimality: (B'p + gamma W u, v - u) >= 0 for feasible v.
        EXPECT_GE(grad.dot(u - sol.u), -1e-9);
        EXPECT_LE(best, ocp.objective(ocp.state_solve(u), u) + 1e-9);
    }
}

TEST(SolveOcp, VariationalAgreesWithP0WhenInactive) {
    const auto p = smooth_problem(0.5, 1e6);
    const auto m = unit_square_mesh(16);
    const KktSolution p0 = solve_ocp(p, m, m);
    const KktSolution var = solve_ocp_variational(p, m);
    const Vector& w = var.control->weights();
    const int nq = static_cast<int>(var.u.size() / p0.u.size());
    double diff = 0.0, proj = 0.0;
    for (int c = 0; c < m->num_cells(); ++c) {
        double mean = 0.0;
        for (int q = 0; q < nq; ++q) mean += w[c * nq + q] * var.u[c * nq + q];
        mean /= m->area(c);
        for (int q = 0; q < nq; ++q) {
            const int k = c * nq + q;
            diff += w[k] * (var.u[k] - p0.u[c]) * (var.u[k] - p0.u[c]);
            proj += w[k] * (var.u[k] - mean) * (var.u[k] - mean);
        }
    }
    EXPECT_LE(std::sqrt(diff), 5.0 * std::sqrt(proj));
}

TEST(SolveOcp, CoarserAndFinerControlMeshes) {
    const auto mp = manufacture_m1(1.0, 0.5);
    const auto m = unit_square_mesh(8);
    const KktSolution coarse = solve_ocp(mp.prob, m, unit_square_mesh(4));
    const KktSolution fine = solve_ocp(mp.prob, m, unit_square_mesh(32));
    EXPECT_EQ(coarse.u.size(), 32);
    EXPECT_EQ(fine.u.size(), 2048);
    EXPECT_TRUE(check_kkt(coarse, 1.0).passed());
    EXPECT_TRUE(check_kkt(fine, 1.0).passed());
    EXPECT_THROW(solve_ocp(mp.prob, m, unit_square_mesh(3)), std::invalid_argument);
}

TEST(AprioriBounds, Examples) {
    const auto m = unit_square_mesh(8);
    OcpProblem p;
    p.coeff = CoefficientSet::laplace();
    p.f = Function::constant(0.0);
    p.y_d = Function::constant(0.0);
    p.phi1 = Function::constant(0.0);
    p.phi2 = Function::constant(1.0);
    EXPECT_EQ(apriori_bounds(p, *m, 0.2, 1.0).c_sharp, 0.0);
    p.y_d = Function::constant(1.0);
    p.phi1 = Function::constant(-1e6);
    p.phi2 = Function::constant(0.0);
    EXPECT_NEAR(apriori_bounds(p, *m, 0.2, 1.0).c_sharp, std::sqrt(2.0), 1e-12);

    const auto mp = manufacture_m1(1.0, 0.5);
    const double c_pf = poincare_constant(*m);
    const auto b = apriori_bounds(mp.prob, *m, c_pf, 1.0);
    const KktSolution sol = solve_ocp(mp.prob, m, m);
    EXPECT_LE(error_norms(mp.prob.coeff, sol.y, mp.prob.y_d).l2, b.state_misfit_bound);
    EXPECT_LE(sol.control->norm(sol.u), b.control_bound);
    EXPECT_GE(b.adjoint_seminorm_bound, 0.0);
    EXPECT_GE(b.control_seminorm_bound, 0.0);
    const double k = c_pf * c_pf;
    const double yd = l2_norm(*m, mp.prob.y_d), f = l2_norm(*m, mp.prob.f);
    EXPECT_NEAR(b.c_sharp, std::sqrt(2 * yd * yd + 4 * k * f * f + (4 * k + 1) * 0.25), 1e-12);
}
