#pragma once

#include <array>
#include <iosfwd>
#include <memory>
#include <optional>
#include <vector>

#include <Eigen/Core>

namespace ocpfem {

using Point = Eigen::Vector2d;
using Cell = std::array<int, 3>;

/// Axis-aligned rectangle [x0,x1] x [y0,y1].
struct Rect {
    double x0 = 0.0, y0 = 0.0, x1 = 1.0, y1 = 1.0;

    double area() const { return (x1 - x0) * (y1 - y0); }
    bool on_boundary(const Point& p, double tol = 1e-12) const;
};

/// Conforming triangulation of a rectangle.
///
/// Cells are counterclockwise vertex triples. Meshes are immutable once built
/// and shared through `std::shared_ptr<const Mesh>`; fields keep a reference
/// to the mesh they live on.
class Mesh {
public:
    Mesh(Rect domain, std::vector<Point> vertices, std::vector<Cell> cells,
         std::vector<int> parent = {});

    const Rect& domain() const { return domain_; }
    const std::vector<Point>& vertices() const { return vertices_; }
    const std::vector<Cell>& cells() const { return cells_; }
    const Point& vertex(int i) const { return vertices_[static_cast<std::size_t>(i)]; }
    const Cell& cell(int c) const { return cells_[static_cast<std::size_t>(c)]; }
    int num_vertices() const { return static_cast<int>(vertices_.size()); }
    int num_cells() const { return static_cast<int>(cells_.size()); }

    const std::vector<int>& boundary_vertices() const { return boundary_; }
    bool is_boundary(int v) const { return on_boundary_[static_cast<std::size_t>(v)]; }

    /// Cell index in the coarser mesh this one was refined from; empty for a
    /// root mesh.
    const std::vector<int>& parent_map() const { return parent_; }

    double area(int c) const { return areas_[static_cast<std::size_t>(c)]; }
    double signed_area(int c) const;
    Point centroid(int c) const;
    double diameter(int c) const;

    /// Gradients of the three barycentric coordinates on cell c (constant).
    std::array<Point, 3> barycentric_gradients(int c) const;
    /// Barycentric coordinates of p with respect to cell c.
    std::array<double, 3> barycentric(int c, const Point& p) const;

    /// Cell containing p (closed cells, tolerance tol in barycentric units).
    std::optional<int> locate(const Point& p, double tol = 1e-12) const;

    /// Cells incident to each vertex.
    const std::vector<std::vector<int>>& vertex_cells() const { return vertex_cells_; }

private:
    void build_locator();

    Rect domain_;
    std::vector<Point> vertices_;
    std::vector<Cell> cells_;
    std::vector<int> parent_;
    std::vector<int> boundary_;
    std::vector<bool> on_boundary_;
    std::vector<double> areas_;
    std::vector<std::vector<int>> vertex_cells_;

    // Uniform bucket grid over the bounding box for point location.
    int bins_x_ = 1, bins_y_ = 1;
    std::vector<std::vector<int>> buckets_;
};

using MeshPtr = std::shared_ptr<const Mesh>;

/// Freudenthal triangulation of `domain` with nx by ny squares, each split
/// along its lower-left to upper-right diagonal.
MeshPtr rectangle_mesh(const Rect& domain, int nx, int ny);

/// Freudenthal triangulation of the unit square, n x n squares.
MeshPtr unit_square_mesh(int n);

/// Red refinement: every cell is split into four congruent children through
/// its edge midpoints. Parent vertices keep their indices.
MeshPtr refine_uniform(const Mesh& m);

/// Maximum cell diameter.
double mesh_size(const Mesh& m);

/// For two meshes of the same domain where `fine` is a geometric refinement
/// of `coarse`, maps each fine cell to the coarse cell containing it.
/// Throws std::invalid_argument if the meshes are not nested.
std::vector<int> nested_cell_map(const Mesh& coarse, const Mesh& fine);

/// Plain-text dump: "x y" per vertex, a blank line, then "i j k" per cell.
void write_mesh(std::ostream& os, const Mesh& m);

}  // namespace ocpfem
