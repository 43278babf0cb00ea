#pragma once

#include <array>
#include <span>
#include <vector>

#include "ocpfem/mesh.hpp"

namespace ocpfem {

/// Quadrature rule on the reference triangle in barycentric coordinates.
/// Weights sum to one, so physical weights are `weight * area`.
struct QuadratureRule {
    std::vector<std::array<double, 3>> points;
    std::vector<double> weights;
    int degree = 0;

    std::size_t size() const { return weights.size(); }
};

/// Edge-midpoint rule, exact for quadratics.
const QuadratureRule& quadrature_degree2();
/// Seven-point rule, exact for quintics.
const QuadratureRule& quadrature_degree5();
/// Rule by polynomial degree; only 2 and 5 are available.
const QuadratureRule& quadrature(int degree);

/// Physical coordinates of the quadrature points of cell c.
std::vector<Point> quadrature_points(const Mesh& m, int c, const QuadratureRule& rule);

}  // namespace ocpfem
