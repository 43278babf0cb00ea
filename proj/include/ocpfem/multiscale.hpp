#pragma once

#include <vector>

#include "ocpfem/fem.hpp"
#include "ocpfem/ocp.hpp"

namespace ocpfem {

/// Localized orthogonal decomposition space over a nested pair of meshes.
///
/// The quasi-interpolation I_H is the cellwise L2 projection onto coarse P1
/// followed by averaging at the coarse vertices, with zero at Dirichlet
/// vertices. For every interior coarse vertex z the corrector q_z solves
///   a(q_z, w) = a(phi_z, w)  for all w in ker(I_H) supported in the patch,
/// and the corrected basis function is phi_z - q_z. The patch is the star of
/// z grown by `layers` rings of coarse cells.
struct LodSpace {
    MeshPtr coarse;
    MeshPtr fine;
    int layers = 1;
    DofMap coarse_dofs;
    StateSpace fine_space;              // standard P1 on the fine mesh
    std::vector<int> fine_to_coarse;    // host coarse cell of each fine cell
    SparseMatrix interpolation;         // I_H: coarse interior x fine interior
    SparseMatrix coarse_hats;           // coarse hat functions on the fine interior vertices
    SparseMatrix basis;                 // corrected basis, same layout as coarse_hats
    std::vector<std::vector<int>> patches;  // coarse cells of each patch
    StateSpace space;                   // span of `basis`

    int dimension() const { return coarse_dofs.size(); }
    /// Corrected basis function of a coarse interior dof as a fine field.
    P1Field basis_function(int coarse_dof) const;
    /// Coarse hat function of a coarse interior dof as a fine field.
    P1Field hat_function(int coarse_dof) const;
};

/// Default localization radius ceil(c_loc * log2(1/H)), at least one layer.
int default_layers(const Mesh& coarse, double c_loc = 1.0);

/// Coarse cells within `layers` rings of the star of a coarse vertex.
std::vector<int> vertex_patch(const Mesh& coarse, int vertex, int layers);

/// Builds correctors for all interior coarse vertices (in parallel). Throws
/// std::invalid_argument if `fine` is not nested in `coarse`, if layers < 1,
/// or if the fine mesh does not resolve a coefficient mesh of `min_period`
/// with two cells per period (pass 0 to skip that check).
LodSpace build_lod(const MeshPtr& coarse, const MeshPtr& fine, const CoefficientSet& coeff, int layers,
                   double min_period = 0.0);

/// Corrector of one coarse interior dof with an arbitrary patch size,
/// returned on the fine interior vertices. Used to study localization.
Vector lod_corrector(const LodSpace& space, int coarse_dof, int layers);

/// Galerkin solution of a(v, w) = (g, w) in the LOD space, as a fine field.
P1Field lod_solve(const LodSpace& space, const Function& g);
P1Field lod_solve(const LodSpace& space, const P0Field& g);

/// Control problem with the LOD space as the state space and piecewise
/// constant controls on `control_mesh`.
KktSolution lod_ocp_solve(const OcpProblem& prob, const LodSpace& space, const MeshPtr& control_mesh,
                          const PdasOptions& opts = {});

}  // namespace ocpfem
