#include "ocpfem/verify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>

namespace ocpfem {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kPi = std::numbers::pi;

double clamp(double v, double lo, double hi) { return std::max(lo, std::min(hi, v)); }

/// Flux A grad g at x for a function with analytic gradient.
Point flux(const CoefficientSet& coeff, const Function& g, const Point& x) { return coeff.A(x) * g.gradient(x); }

/// div(A grad g) by fourth-order central differences of the flux.
double divergence(const CoefficientSet& coeff, const Function& g, const Point& x) {
    const double d = 1e-3;
    double div = 0.0;
    for (int axis = 0; axis < 2; ++axis) {
        const Point e = axis == 0 ? Point(d, 0.0) : Point(0.0, d);
        const double fm2 = flux(coeff, g, x - 2.0 * e)[axis];
        const double fm1 = flux(coeff, g, x - e)[axis];
        const double fp1 = flux(coeff, g, x + e)[axis];
        const double fp2 = flux(coeff, g, x + 2.0 * e)[axis];
        div += (fm2 - 8.0 * fm1 + 8.0 * fp1 - fp2) / (12.0 * d);
    }
    return div;
}

double interior_l2(const SparseMatrix& mass, const Vector& d) { return std::sqrt(std::max(0.0, d.dot(mass * d))); }

bool halving(const std::vector<double>& h) {
    for (std::size_t i = 1; i < h.size(); ++i)
        if (std::abs(h[i - 1] / h[i] - 2.0) > 1e-9) return false;
    return h.size() >= 2;
}

void fill_rates(ConvergenceTable& t) {
    std::vector<double> hs;
    bool ok = !t.rows.empty();
    for (const auto& r : t.rows) {
        hs.push_back(r.h);
        ok = ok && !r.failed;
    }
    ok = ok && halving(hs);
    for (const auto& col : error_columns()) {
        double rate = kNaN;
        if (ok) {
            std::vector<std::pair<double, double>> pts;
            bool finite = true;
            for (const auto& r : t.rows) {
                double e = kNaN;
                if (col == "err_y_l2") e = r.err_y_l2;
                else if (col == "err_u_l2") e = r.err_u_l2;
                else if (col == "err_p_l2") e = r.err_p_l2;
                else if (col == "err_y_a") e = r.err_y_a;
                else if (col == "err_p_a") e = r.err_p_a;
                finite = finite && std::isfinite(e) && e > 0.0;
                pts.emplace_back(r.h, e);
            }
            if (finite) rate = fit_rate(pts);
        }
        t.rates[col] = rate;
    }
    auto spread_of = [&](auto member) {
        std::vector<double> v;
        for (const auto& r : t.rows) {
            if (r.failed) return kNaN;
            const double x = (r.*member).ratio;
            if (!std::isfinite(x)) return kNaN;
            v.push_back(x);
        }
        return v.empty() ? kNaN : spread(v);
    };
    t.spreads["thm41"] = spread_of(&StudyRow::thm41);
    t.spreads["thm43"] = spread_of(&StudyRow::thm43);
    t.spreads["tight"] = spread_of(&StudyRow::tight);
}

MeshPtr refine_to(const MeshPtr& coarse, int coarse_n, int fine_n) {
    int n = coarse_n;
    MeshPtr m = coarse;
    while (n < fine_n) {
        m = refine_uniform(*m);
        n *= 2;
    }
    if (n != fine_n)
        throw std::invalid_argument("fine_n must be a power-of-two multiple of the coarse subdivisions");
    return m;
}

TheoremCheck make_check(double lhs, double rhs) {
    if (rhs == 0.0) {
        if (lhs > 1e-8) throw std::logic_error("theorem check: zero right-hand side with nonzero error");
        return {lhs, rhs, 0.0};
    }
    return {lhs, rhs, lhs / rhs};
}

}  // namespace

ManufacturedProblem manufacture_m1(double gamma, double bound) {
    if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("gamma must be in (0,1]");
    if (!(bound > 0.0)) throw std::invalid_argument("bound must be > 0");
    const Function s{[](const Point& x) { return std::sin(kPi * x.x()) * std::sin(kPi * x.y()); },
                     [](const Point& x) {
                         return Point(kPi * std::cos(kPi * x.x()) * std::sin(kPi * x.y()),
                                      kPi * std::sin(kPi * x.x()) * std::cos(kPi * x.y()));
                     }};
    const double k = 2.0 * kPi * kPi;
    ManufacturedProblem mp;
    mp.bound = bound;
    mp.prob.coeff = CoefficientSet::laplace();
    mp.prob.gamma = gamma;
    mp.exact_y = s;
    mp.exact_p = s;
    mp.exact_u = {[s, gamma, bound](const Point& x) { return clamp(-s(x) / gamma, -bound, bound); }, {}};
    mp.exact_lambda = {[s, gamma, bound](const Point& x) {
                           return s(x) + gamma * clamp(-s(x) / gamma, -bound, bound);
                       },
                       {}};
    mp.prob.f = {[s, gamma, bound, k](const Point& x) { return k * s(x) - clamp(-s(x) / gamma, -bound, bound); }, {}};
    mp.prob.y_d = {[s, k](const Point& x) { return s(x) - k * s(x); }, {}};
    mp.prob.phi1 = Function::constant(-bound);
    mp.prob.phi2 = Function::constant(bound);
    return mp;
}

SelfCheck self_check(const ManufacturedProblem& mp, std::uint64_t seed, int points) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const auto& prob = mp.prob;
    const double gamma = prob.gamma;
    SelfCheck r;
    for (int i = 0; i < points; ++i) {
        // Keep the difference stencil inside the domain.
        const Point x(0.01 + 0.98 * unit(rng), 0.01 + 0.98 * unit(rng));
        const double u = clamp(-mp.exact_p(x) / gamma, prob.phi1(x), prob.phi2(x));
        r.kkt = std::max(r.kkt, std::abs(mp.exact_u(x) - u));
        const double y = mp.exact_y(x), p = mp.exact_p(x), c = prob.coeff.c(x);
        const double state = -divergence(prob.coeff, mp.exact_y, x) + c * y - mp.exact_u(x) - prob.f(x);
        const double adjoint = y + divergence(prob.coeff, mp.exact_p, x) - c * p - prob.y_d(x);
        r.state = std::max(r.state, std::abs(state));
        r.adjoint = std::max(r.adjoint, std::abs(adjoint));

        const double t = unit(rng);
        const Point b[4] = {Point(t, 0.0), Point(t, 1.0), Point(0.0, t), Point(1.0, t)};
        for (const Point& q : b)
            r.boundary = std::max({r.boundary, std::abs(mp.exact_y(q)), std::abs(mp.exact_p(q))});
    }
    return r;
}

Function field_function(const P1Field& fld) {
    return {[fld](const Point& x) { return fld(x); },
            [fld](const Point& x) {
                const auto c = fld.mesh->locate(x, 1e-10);
                if (!c) throw std::out_of_range("field_function: point outside mesh");
                return fld.gradient(*c);
            }};
}

P1Field ritz_project(const StateSpace& space, const CoefficientSet& coeff, const Function& zeta) {
    const Vector load = space.dofs().restrict(assemble_ritz_load(*space.mesh(), coeff, zeta));
    return space.field(space.solve(space.reduce(load), nullptr, 1e-13));
}

ProjectionErrors projection_errors(const ManufacturedProblem& mp, const StateSpace& state,
                                   const ControlSpace& control) {
    const auto& coeff = mp.prob.coeff;
    ProjectionErrors pe;
    const ErrorNorms ey = error_norms(coeff, ritz_project(state, coeff, mp.exact_y), mp.exact_y);
    const ErrorNorms ep = error_norms(coeff, ritz_project(state, coeff, mp.exact_p), mp.exact_p);
    pe.ritz_y_l2 = ey.l2;
    pe.ritz_y_a = ey.energy;
    pe.ritz_p_l2 = ep.l2;
    pe.ritz_p_a = ep.energy;
    const Function lambda = mp.exact_lambda;
    pe.lambda1 = control.projection_error({[lambda](const Point& x) { return std::max(lambda(x), 0.0); }, {}});
    pe.lambda2 = control.projection_error({[lambda](const Point& x) { return std::min(lambda(x), 0.0); }, {}});
    pe.phi1 = control.projection_error(mp.prob.phi1);
    pe.phi2 = control.projection_error(mp.prob.phi2);
    pe.u = control.projection_error(mp.exact_u);
    return pe;
}

TheoremCheck check_theorem_41(const ManufacturedProblem& mp, const KktSolution& sol, const ProjectionErrors& pe) {
    const auto& coeff = mp.prob.coeff;
    const double lhs = error_norms(coeff, sol.y, mp.exact_y).l2 + sol.control->l2_error(sol.u, mp.exact_u) +
                       error_norms(coeff, sol.p, mp.exact_p).l2;
    return make_check(lhs, pe.ritz_y_l2 + pe.ritz_p_l2 + pe.control_terms());
}

TheoremCheck check_theorem_43(const ManufacturedProblem& mp, const KktSolution& sol, const ProjectionErrors& pe) {
    const auto& coeff = mp.prob.coeff;
    const double lhs = error_norms(coeff, sol.y, mp.exact_y).energy + error_norms(coeff, sol.p, mp.exact_p).energy;
    return make_check(lhs, pe.ritz_y_a + pe.ritz_p_a + pe.control_terms());
}

TheoremCheck check_tight(const ManufacturedProblem& mp, const KktSolution& sol, const ProjectionErrors& pe) {
    const TheoremCheck l2 = check_theorem_41(mp, sol, pe);
    const double lhs = pe.ritz_y_l2 + pe.ritz_p_l2;
    if (l2.lhs == 0.0) {
        if (lhs > 1e-8) throw std::logic_error("theorem check: zero right-hand side with nonzero error");
        return {lhs, 0.0, 0.0};
    }
    return {lhs, l2.lhs, lhs / l2.lhs};
}

double fit_rate(const std::vector<std::pair<double, double>>& errors) {
    if (errors.size() < 2) throw std::invalid_argument("fit_rate: need at least two rows");
    double sx = 0.0, sy = 0.0;
    for (const auto& [h, e] : errors) {
        if (!(h > 0.0) || !(e > 0.0)) throw std::invalid_argument("fit_rate: mesh sizes and errors must be positive");
        sx += std::log(h);
        sy += std::log(e);
    }
    const double n = static_cast<double>(errors.size());
    const double mx = sx / n, my = sy / n;
    double sxx = 0.0, sxy = 0.0;
    for (const auto& [h, e] : errors) {
        sxx += (std::log(h) - mx) * (std::log(h) - mx);
        sxy += (std::log(h) - mx) * (std::log(e) - my);
    }
    if (sxx == 0.0) throw std::invalid_argument("fit_rate: mesh sizes must differ");
    return sxy / sxx;
}

double spread(const std::vector<double>& values) {
    if (values.empty()) throw std::invalid_argument("spread: no values");
    std::vector<double> v = values;
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    const double median = v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
    if (!(median > 0.0)) throw std::invalid_argument("spread: values must be positive");
    return v.back() / median;
}

StabilityCheck check_stability(const StateSpace& space, double alpha, double c_pf, int samples, std::uint64_t seed) {
    const MeshPtr& m = space.mesh();
    const ControlSpace cells = ControlSpace::piecewise_constant(m, m);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    StabilityCheck r;
    r.samples = samples;
    r.c_pf = c_pf;
    for (int s = 0; s < samples; ++s) {
        Vector g(cells.size());
        for (Eigen::Index k = 0; k < g.size(); ++k) g[k] = dist(rng);
        const double gn = cells.norm(g);
        const Vector v = space.solve(space.reduce(cells.coupling() * g), nullptr, 1e-13);
        const double l2 = interior_l2(space.mass(), v);
        const double energy = interior_l2(space.stiffness(), v);
        const double l2_ratio = l2 / (c_pf * c_pf / alpha * gn);
        const double energy_ratio = energy / (c_pf / std::sqrt(alpha) * gn);
        r.max_l2_ratio = std::max(r.max_l2_ratio, l2_ratio);
        r.max_energy_ratio = std::max(r.max_energy_ratio, energy_ratio);
        if (l2_ratio > 1.0 || energy_ratio > 1.0) ++r.violations;
    }
    return r;
}

KktCheck check_kkt(const KktSolution& sol, double gamma) {
    KktCheck k;
    const auto [c1, c2] = sol.complementarity();
    k.complementarity = std::max(std::abs(c1), std::abs(c2));
    const Vector qp = sol.control->project_state(DofMap(*sol.p.mesh).restrict(sol.p.values));
    for (Eigen::Index i = 0; i < sol.u.size(); ++i) {
        k.feasibility = std::max({k.feasibility, sol.lower[i] - sol.u[i], sol.u[i] - sol.upper[i]});
        k.multiplier = std::max(k.multiplier, std::abs(sol.lambda[i] - (qp[i] + gamma * sol.u[i])));
        k.sign = std::max({k.sign, -sol.lambda1[i], sol.lambda2[i]});
        k.multiplier = std::max(k.multiplier, std::abs(sol.lambda1[i] + sol.lambda2[i] - sol.lambda[i]));
    }
    return k;
}

bool ConvergenceTable::any_failed() const {
    return std::any_of(rows.begin(), rows.end(), [](const StudyRow& r) { return r.failed; });
}

const std::vector<std::string>& error_columns() {
    static const std::vector<std::string> cols{"err_y_l2", "err_u_l2", "err_p_l2", "err_y_a", "err_p_a"};
    return cols;
}

ConvergenceTable run_study(const ManufacturedProblem& mp, const StudyOptions& opts) {
    if (opts.schedule.empty()) throw std::invalid_argument("schedule must not be empty");
    ConvergenceTable table;
    switch (opts.control) {
        case ControlRule::same: table.mode = "p0-control/same"; break;
        case ControlRule::h_squared: table.mode = "p0-control/h-squared"; break;
        case ControlRule::fixed_n: table.mode = "p0-control/fixed-n"; break;
        case ControlRule::variational: table.mode = "variational"; break;
    }
    const auto& prob = mp.prob;
    const int n0 = opts.schedule.front();
    for (std::size_t level = 0; level < opts.schedule.size(); ++level) {
        const int n = opts.schedule[level];
        StudyRow row;
        row.n = n;
        const MeshPtr mesh = unit_square_mesh(n);
        row.h = mesh_size(*mesh);
        std::shared_ptr<const ControlSpace> control;
        switch (opts.control) {
            case ControlRule::same: row.control_n = n; break;
            case ControlRule::h_squared:
                if ((n * n) % n0 != 0) throw std::invalid_argument("h-squared control rule needs n*n divisible by n0");
                row.control_n = n * n / n0;
                break;
            case ControlRule::fixed_n: row.control_n = opts.control_n; break;
            case ControlRule::variational: row.control_n = 0; break;
        }
        if (opts.control == ControlRule::variational) {
            control = std::make_shared<const ControlSpace>(ControlSpace::variational(mesh));
        } else {
            const MeshPtr cm = row.control_n == n ? mesh : unit_square_mesh(row.control_n);
            control = std::make_shared<const ControlSpace>(ControlSpace::piecewise_constant(mesh, cm));
            row.rho = mesh_size(*cm);
        }
        const StateSpace state = StateSpace::standard(mesh, prob.coeff);
        const double c_pf = poincare_constant(*mesh);
        row.c_sharp = apriori_bounds(prob, *mesh, c_pf, prob.coeff.alpha).c_sharp;
        row.stability = check_stability(state, prob.coeff.alpha, c_pf, opts.stability_samples,
                                        opts.seed + static_cast<std::uint64_t>(level));
        try {
            const KktSolution sol = DiscreteOcp(prob, state, control).solve(opts.pdas);
            row.iters = sol.iterations;
            row.kkt_residual = sol.kkt_residual;
            row.residual_history = sol.residual_history;
            const ErrorNorms ey = error_norms(prob.coeff, sol.y, mp.exact_y);
            const ErrorNorms ep = error_norms(prob.coeff, sol.p, mp.exact_p);
            row.err_y_l2 = ey.l2;
            row.err_y_a = ey.energy;
            row.err_p_l2 = ep.l2;
            row.err_p_a = ep.energy;
            row.err_u_l2 = control->l2_error(sol.u, mp.exact_u);
            const ProjectionErrors pe = projection_errors(mp, state, *control);
            row.thm41 = check_theorem_41(mp, sol, pe);
            row.thm43 = check_theorem_43(mp, sol, pe);
            row.tight = check_tight(mp, sol, pe);
            row.kkt = check_kkt(sol, prob.gamma);
            row.misfit = error_norms(prob.coeff, sol.y, prob.y_d).l2;
        } catch (const ConvergenceError& e) {
            row.failed = true;
            row.error = e.what();
            row.residual_history = e.history();
        } catch (const SolverError& e) {
            row.failed = true;
            row.error = e.what();
        }
        table.rows.push_back(std::move(row));
    }
    fill_rates(table);
    return table;
}

ConvergenceTable run_lod_study(const OcpProblem& prob, const LodStudyOptions& opts) {
    if (opts.schedule.empty()) throw std::invalid_argument("schedule must not be empty");
    ConvergenceTable table;
    table.mode = "lod";
    const MeshPtr root = unit_square_mesh(opts.schedule.front());
    const MeshPtr fine = refine_to(root, opts.schedule.front(), opts.fine_n);

    // Fine reference: P1 state and P0 control on the fine mesh.
    const KktSolution ref = solve_ocp(prob, fine, fine, opts.pdas);
    const StateSpace fine_space = StateSpace::standard(fine, prob.coeff);
    const DofMap& fdofs = fine_space.dofs();
    const double c_pf = poincare_constant(*fine);
    const double c_sharp = apriori_bounds(prob, *fine, c_pf, prob.coeff.alpha).c_sharp;

    for (std::size_t level = 0; level < opts.schedule.size(); ++level) {
        const int nc = opts.schedule[level];
        StudyRow row;
        row.n = nc;
        row.control_n = nc;
        const MeshPtr coarse = level == 0 ? root : unit_square_mesh(nc);
        row.h = row.rho = mesh_size(*coarse);
        row.c_sharp = c_sharp;
        row.thm41 = row.thm43 = row.tight = {kNaN, kNaN, kNaN};
        const int layers = opts.layers > 0 ? opts.layers : default_layers(*coarse, opts.c_loc);
        try {
            const LodSpace space = build_lod(coarse, fine, prob.coeff, layers, opts.period);
            row.stability = check_stability(space.space, prob.coeff.alpha, c_pf, opts.stability_samples,
                                            opts.seed + static_cast<std::uint64_t>(level));
            const KktSolution sol = lod_ocp_solve(prob, space, coarse, opts.pdas);
            row.iters = sol.iterations;
            row.kkt_residual = sol.kkt_residual;
            row.residual_history = sol.residual_history;
            const Vector dy = fdofs.restrict(sol.y.values - ref.y.values);
            const Vector dp = fdofs.restrict(sol.p.values - ref.p.values);
            row.err_y_l2 = interior_l2(fine_space.mass(), dy);
            row.err_y_a = interior_l2(fine_space.stiffness(), dy);
            row.err_p_l2 = interior_l2(fine_space.mass(), dp);
            row.err_p_a = interior_l2(fine_space.stiffness(), dp);
            double eu = 0.0;
            for (int f = 0; f < fine->num_cells(); ++f) {
                const double d = sol.u[space.fine_to_coarse[static_cast<std::size_t>(f)]] - ref.u[f];
                eu += fine->area(f) * d * d;
            }
            row.err_u_l2 = std::sqrt(eu);
            row.kkt = check_kkt(sol, prob.gamma);
            row.misfit = error_norms(prob.coeff, sol.y, prob.y_d).l2;
        } catch (const ConvergenceError& e) {
            row.failed = true;
            row.error = e.what();
            row.residual_history = e.history();
        } catch (const SolverError& e) {
            row.failed = true;
            row.error = e.what();
        }
        table.rows.push_back(std::move(row));
    }
    fill_rates(table);
    return table;
}

LodSourceStudy lod_source_study(const CoefficientSet& coeff, const Function& g, const LodStudyOptions& opts) {
    if (opts.schedule.size() < 2) throw std::invalid_argument("lod source study needs at least two coarse meshes");
    const MeshPtr root = unit_square_mesh(opts.schedule.front());
    const MeshPtr fine = refine_to(root, opts.schedule.front(), opts.fine_n);
    const StateSpace fine_space = StateSpace::standard(fine, coeff);
    const DofMap& fdofs = fine_space.dofs();
    const Vector ref = fine_space.solve(fdofs.restrict(assemble_load(*fine, g, 5)), nullptr, 1e-12);

    LodSourceStudy study;
    std::vector<std::pair<double, double>> energy, l2;
    for (std::size_t level = 0; level < opts.schedule.size(); ++level) {
        const int nc = opts.schedule[level];
        const MeshPtr coarse = level == 0 ? root : unit_square_mesh(nc);
        LodSourceRow row;
        row.coarse_n = nc;
        row.H = mesh_size(*coarse);
        row.layers = opts.layers > 0 ? opts.layers : default_layers(*coarse, opts.c_loc);
        const LodSpace space = build_lod(coarse, fine, coeff, row.layers, opts.period);
        const Vector d = fdofs.restrict(lod_solve(space, g).values) - ref;
        row.energy = interior_l2(fine_space.stiffness(), d);
        row.l2 = interior_l2(fine_space.mass(), d);
        energy.emplace_back(row.H, row.energy);
        l2.emplace_back(row.H, row.l2);
        study.rows.push_back(row);
    }
    study.energy_rate = fit_rate(energy);
    study.l2_rate = fit_rate(l2);
    return study;
}

}  // namespace ocpfem
