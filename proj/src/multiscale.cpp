#include "ocpfem/multiscale.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "ocpfem/parallel.hpp"
#include "ocpfem/quadrature.hpp"

namespace ocpfem {

namespace {

using Triplet = Eigen::Triplet<double>;

constexpr double kCorrectorTol = 1e-11;

/// Quasi-interpolation matrix: average over the coarse cells around each
/// coarse vertex of the local L2 projection onto P1.
SparseMatrix build_interpolation(const Mesh& coarse, const Mesh& fine, const std::vector<int>& host,
                                 const DofMap& coarse_dofs, const DofMap& fine_dofs) {
    const auto& rule = quadrature_degree2();
    std::vector<Triplet> triplets;
    triplets.reserve(static_cast<std::size_t>(27 * fine.num_cells()));
    for (int f = 0; f < fine.num_cells(); ++f) {
        const int t = host[static_cast<std::size_t>(f)];
        const Cell& coarse_cell = coarse.cell(t);
        const Cell& fine_cell = fine.cell(f);
        // block(m, a) = int_F lambda_m phi_a, exact for the product of linears.
        Eigen::Matrix3d block = Eigen::Matrix3d::Zero();
        const auto pts = quadrature_points(fine, f, rule);
        for (std::size_t q = 0; q < rule.size(); ++q) {
            const auto lam = coarse.barycentric(t, pts[q]);
            const double w = rule.weights[q] * fine.area(f);
            for (int m = 0; m < 3; ++m)
                for (int a = 0; a < 3; ++a)
                    block(m, a) += w * lam[static_cast<std::size_t>(m)] * rule.points[q][static_cast<std::size_t>(a)];
        }
        Eigen::Matrix3d inv_mass;
        inv_mass << 3, -1, -1, -1, 3, -1, -1, -1, 3;
        inv_mass *= 3.0 / coarse.area(t);
        const Eigen::Matrix3d coeffs = inv_mass * block;
        for (int k = 0; k < 3; ++k) {
            const int z = coarse_cell[static_cast<std::size_t>(k)];
            const int row = coarse_dofs.vertex_to_dof[static_cast<std::size_t>(z)];
            if (row < 0) continue;
            const double share = 1.0 / static_cast<double>(coarse.vertex_cells()[static_cast<std::size_t>(z)].size());
            for (int a = 0; a < 3; ++a) {
                const int col = fine_dofs.vertex_to_dof[static_cast<std::size_t>(fine_cell[static_cast<std::size_t>(a)])];
                if (col >= 0) triplets.emplace_back(row, col, share * coeffs(k, a));
            }
        }
    }
    SparseMatrix ih(coarse_dofs.size(), fine_dofs.size());
    ih.setFromTriplets(triplets.begin(), triplets.end());
    return ih;
}

SparseMatrix build_coarse_hats(const Mesh& coarse, const Mesh& fine, const std::vector<int>& host,
                               const DofMap& coarse_dofs, const DofMap& fine_dofs) {
    std::vector<Triplet> triplets;
    for (int i = 0; i < fine_dofs.size(); ++i) {
        const int v = fine_dofs.dof_to_vertex[static_cast<std::size_t>(i)];
        const int t = host[static_cast<std::size_t>(fine.vertex_cells()[static_cast<std::size_t>(v)].front())];
        const auto lam = coarse.barycentric(t, fine.vertex(v));
        for (std::size_t k = 0; k < 3; ++k) {
            const int j = coarse_dofs.vertex_to_dof[static_cast<std::size_t>(coarse.cell(t)[k])];
            if (j >= 0 && std::abs(lam[k]) > 1e-14) triplets.emplace_back(i, j, lam[k]);
        }
    }
    SparseMatrix e(fine_dofs.size(), coarse_dofs.size());
    e.setFromTriplets(triplets.begin(), triplets.end());
    return e;
}

/// Corrector of one coarse dof on the given coarse-cell patch, by projected
/// CG on ker(I_H) restricted to the patch.
Vector solve_corrector(const LodSpace& s, int coarse_dof, const std::vector<int>& patch) {
    const Mesh& coarse = *s.coarse;
    const Mesh& fine = *s.fine;
    const DofMap& fine_dofs = s.fine_space.dofs();

    std::vector<bool> in_patch(static_cast<std::size_t>(coarse.num_cells()), false);
    for (int t : patch) in_patch[static_cast<std::size_t>(t)] = true;

    // Fine interior vertices whose whole star lies in the patch.
    std::vector<int> local_of(static_cast<std::size_t>(fine_dofs.size()), -1);
    std::vector<int> global_of;
    for (int i = 0; i < fine_dofs.size(); ++i) {
        const int v = fine_dofs.dof_to_vertex[static_cast<std::size_t>(i)];
        const auto& star = fine.vertex_cells()[static_cast<std::size_t>(v)];
        const bool inside = std::all_of(star.begin(), star.end(), [&](int f) {
            return in_patch[static_cast<std::size_t>(s.fine_to_coarse[static_cast<std::size_t>(f)])];
        });
        if (inside) {
            local_of[static_cast<std::size_t>(i)] = static_cast<int>(global_of.size());
            global_of.push_back(i);
        }
    }
    const auto np = static_cast<Eigen::Index>(global_of.size());
    Vector result = Vector::Zero(fine_dofs.size());
    if (np == 0) return result;

    std::vector<Triplet> triplets;
    for (Eigen::Index r = 0; r < np; ++r) {
        for (SparseMatrix::InnerIterator it(s.fine_space.fine_stiffness(), global_of[static_cast<std::size_t>(r)]); it; ++it) {
            const int c = local_of[static_cast<std::size_t>(it.col())];
            if (c >= 0) triplets.emplace_back(static_cast<int>(r), c, it.value());
        }
    }
    SparseMatrix k(np, np);
    k.setFromTriplets(triplets.begin(), triplets.end());

    const Vector hat = Vector(s.coarse_hats.col(coarse_dof));
    const Vector khat = s.fine_space.fine_stiffness() * hat;
    Vector b(np);
    for (Eigen::Index r = 0; r < np; ++r) b[r] = khat[global_of[static_cast<std::size_t>(r)]];

    // Constraint rows: coarse dofs whose I_H row sees the patch.
    std::set<int> candidates;
    for (int t : patch)
        for (int z : coarse.cell(t)) {
            const int j = s.coarse_dofs.vertex_to_dof[static_cast<std::size_t>(z)];
            if (j >= 0) candidates.insert(j);
        }
    triplets.clear();
    int rows = 0;
    for (int j : candidates) {
        bool any = false;
        for (SparseMatrix::InnerIterator it(s.interpolation, j); it; ++it) {
            const int c = local_of[static_cast<std::size_t>(it.col())];
            if (c >= 0 && it.value() != 0.0) {
                triplets.emplace_back(rows, c, it.value());
                any = true;
            }
        }
        if (any) ++rows;
    }
    SparseMatrix constraint(rows, np);
    constraint.setFromTriplets(triplets.begin(), triplets.end());
    const Eigen::MatrixXd gram = Eigen::MatrixXd(constraint * SparseMatrix(constraint.transpose()));
    const Eigen::LLT<Eigen::MatrixXd> gram_llt(gram);
    if (rows > 0 && gram_llt.info() != Eigen::Success)
        throw SolverError("build_lod: rank-deficient interpolation constraints on a patch");

    auto project = [&](Vector& x) {
        if (rows == 0) return;
        const Vector mult = gram_llt.solve(constraint * x);
        x.noalias() -= constraint.transpose() * mult;
    };
    const Vector inv_diag = k.diagonal().cwiseInverse();

    Vector rhs = b;
    project(rhs);
    Vector q = Vector::Zero(np);
    conjugate_gradient(
        [&](const Vector& v, Vector& out) {
            Vector pv = v;
            project(pv);
            out = k * pv;
            project(out);
        },
        rhs, q,
        [&](const Vector& r, Vector& out) {
            out = inv_diag.cwiseProduct(r);
            project(out);
        },
        kCorrectorTol, 10 * static_cast<int>(np) + 100);
    project(q);
    for (Eigen::Index r = 0; r < np; ++r) result[global_of[static_cast<std::size_t>(r)]] = q[r];
    return result;
}

}  // namespace

P1Field LodSpace::basis_function(int coarse_dof) const {
    return {fine, fine_space.dofs().extend(Vector(basis.col(coarse_dof)))};
}

P1Field LodSpace::hat_function(int coarse_dof) const {
    return {fine, fine_space.dofs().extend(Vector(coarse_hats.col(coarse_dof)))};
}

int default_layers(const Mesh& coarse, double c_loc) {
    const double h = mesh_size(coarse);
    return std::max(1, static_cast<int>(std::ceil(c_loc * std::log2(1.0 / h) - 1e-12)));
}

std::vector<int> vertex_patch(const Mesh& coarse, int vertex, int layers) {
    std::vector<bool> in(static_cast<std::size_t>(coarse.num_cells()), false);
    std::vector<int> cells = coarse.vertex_cells()[static_cast<std::size_t>(vertex)];
    for (int c : cells) in[static_cast<std::size_t>(c)] = true;
    for (int layer = 0; layer < layers; ++layer) {
        std::vector<int> grown = cells;
        for (int c : cells)
            for (int v : coarse.cell(c))
                for (int n : coarse.vertex_cells()[static_cast<std::size_t>(v)])
                    if (!in[static_cast<std::size_t>(n)]) {
                        in[static_cast<std::size_t>(n)] = true;
                        grown.push_back(n);
                    }
        if (grown.size() == cells.size()) break;
        cells = std::move(grown);
    }
    std::sort(cells.begin(), cells.end());
    return cells;
}

LodSpace build_lod(const MeshPtr& coarse, const MeshPtr& fine, const CoefficientSet& coeff, int layers,
                   double min_period) {
    if (layers < 1) throw std::invalid_argument("build_lod: layers must be >= 1");
    if (min_period > 0.0) {
        double extent = 0.0;
        for (int c = 0; c < fine->num_cells(); ++c) {
            const Cell& t = fine->cell(c);
            for (int a = 0; a < 3; ++a)
                for (int b = a + 1; b < 3; ++b) {
                    const Point d = (fine->vertex(t[static_cast<std::size_t>(a)]) - fine->vertex(t[static_cast<std::size_t>(b)])).cwiseAbs();
                    extent = std::max({extent, d.x(), d.y()});
                }
        }
        if (min_period < 2.0 * extent * (1.0 - 1e-12))
            throw std::invalid_argument("build_lod: fine mesh does not resolve the coefficient period");
    }

    LodSpace s;
    s.coarse = coarse;
    s.fine = fine;
    s.layers = layers;
    s.fine_to_coarse = nested_cell_map(*coarse, *fine);
    s.coarse_dofs = DofMap(*coarse);
    s.fine_space = StateSpace::standard(fine, coeff);
    const DofMap& fine_dofs = s.fine_space.dofs();
    s.interpolation = build_interpolation(*coarse, *fine, s.fine_to_coarse, s.coarse_dofs, fine_dofs);
    s.coarse_hats = build_coarse_hats(*coarse, *fine, s.fine_to_coarse, s.coarse_dofs, fine_dofs);

    const int nc = s.coarse_dofs.size();
    s.patches.resize(static_cast<std::size_t>(nc));
    for (int j = 0; j < nc; ++j)
        s.patches[static_cast<std::size_t>(j)] =
            vertex_patch(*coarse, s.coarse_dofs.dof_to_vertex[static_cast<std::size_t>(j)], layers);

    std::vector<Vector> correctors(static_cast<std::size_t>(nc));
    parallel_for(nc, [&](int j) {
        correctors[static_cast<std::size_t>(j)] = solve_corrector(s, j, s.patches[static_cast<std::size_t>(j)]);
    });

    std::vector<Triplet> triplets;
    for (int j = 0; j < nc; ++j) {
        const Vector col = Vector(s.coarse_hats.col(j)) - correctors[static_cast<std::size_t>(j)];
        for (Eigen::Index i = 0; i < col.size(); ++i)
            if (col[i] != 0.0) triplets.emplace_back(static_cast<int>(i), j, col[i]);
    }
    s.basis.resize(fine_dofs.size(), nc);
    s.basis.setFromTriplets(triplets.begin(), triplets.end());
    s.space = StateSpace::subspace(s.fine_space, s.basis);
    return s;
}

Vector lod_corrector(const LodSpace& space, int coarse_dof, int layers) {
    if (coarse_dof < 0 || coarse_dof >= space.dimension())
        throw std::out_of_range("lod_corrector: coarse dof out of range");
    const int vertex = space.coarse_dofs.dof_to_vertex[static_cast<std::size_t>(coarse_dof)];
    return solve_corrector(space, coarse_dof, vertex_patch(*space.coarse, vertex, layers));
}

P1Field lod_solve(const LodSpace& space, const Function& g) {
    const Vector load = space.fine_space.dofs().restrict(assemble_load(*space.fine, g, 5));
    return space.space.field(space.space.solve(space.space.reduce(load), nullptr, 1e-12));
}

P1Field lod_solve(const LodSpace& space, const P0Field& g) {
    const Vector load = ControlSpace::piecewise_constant(space.fine, g.mesh).coupling() * g.values;
    return space.space.field(space.space.solve(space.space.reduce(load), nullptr, 1e-12));
}

KktSolution lod_ocp_solve(const OcpProblem& prob, const LodSpace& space, const MeshPtr& control_mesh,
                          const PdasOptions& opts) {
    auto control = std::make_shared<const ControlSpace>(ControlSpace::piecewise_constant(space.fine, control_mesh));
    return DiscreteOcp(prob, space.space, std::move(control)).solve(opts);
}

}  // namespace ocpfem
