#include "ocpfem/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <stdexcept>
#include <string>

namespace ocpfem {

bool Rect::on_boundary(const Point& p, double tol) const {
    const double sx = tol * std::max(1.0, x1 - x0);
    const double sy = tol * std::max(1.0, y1 - y0);
    return std::abs(p.x() - x0) <= sx || std::abs(p.x() - x1) <= sx ||
           std::abs(p.y() - y0) <= sy || std::abs(p.y() - y1) <= sy;
}

Mesh::Mesh(Rect domain, std::vector<Point> vertices, std::vector<Cell> cells,
           std::vector<int> parent)
    : domain_(domain),
      vertices_(std::move(vertices)),
      cells_(std::move(cells)),
      parent_(std::move(parent)) {
    if (!parent_.empty() && parent_.size() != cells_.size())
        throw std::invalid_argument("Mesh: parent map size does not match cell count");

    const int nv = num_vertices();
    for (const Cell& c : cells_)
        for (int v : c)
            if (v < 0 || v >= nv) throw std::invalid_argument("Mesh: cell references missing vertex");

    areas_.resize(cells_.size());
    for (int c = 0; c < num_cells(); ++c) {
        const double a = signed_area(c);
        if (!(a > 0.0))
            throw std::invalid_argument("Mesh: cell " + std::to_string(c) +
                                        " has nonpositive signed area");
        areas_[static_cast<std::size_t>(c)] = a;
    }

    on_boundary_.assign(vertices_.size(), false);
    for (int v = 0; v < nv; ++v) {
        if (domain_.on_boundary(vertex(v))) {
            on_boundary_[static_cast<std::size_t>(v)] = true;
            boundary_.push_back(v);
        }
    }

    vertex_cells_.assign(vertices_.size(), {});
    for (int c = 0; c < num_cells(); ++c)
        for (int v : cell(c)) vertex_cells_[static_cast<std::size_t>(v)].push_back(c);

    build_locator();
}

double Mesh::signed_area(int c) const {
    const Cell& t = cell(c);
    const Point e1 = vertex(t[1]) - vertex(t[0]);
    const Point e2 = vertex(t[2]) - vertex(t[0]);
    return 0.5 * (e1.x() * e2.y() - e1.y() * e2.x());
}

Point Mesh::centroid(int c) const {
    const Cell& t = cell(c);
    return (vertex(t[0]) + vertex(t[1]) + vertex(t[2])) / 3.0;
}

double Mesh::diameter(int c) const {
    const Cell& t = cell(c);
    const double a = (vertex(t[0]) - vertex(t[1])).norm();
    const double b = (vertex(t[1]) - vertex(t[2])).norm();
    const double d = (vertex(t[2]) - vertex(t[0])).norm();
    return std::max({a, b, d});
}

std::array<Point, 3> Mesh::barycentric_gradients(int c) const {
    const Cell& t = cell(c);
    const Point& p0 = vertex(t[0]);
    const Point& p1 = vertex(t[1]);
    const Point& p2 = vertex(t[2]);
    const double two_area = 2.0 * area(c);
    // grad lambda_i = rot90(opposite edge) / (2|T|)
    return {Point((p1.y() - p2.y()) / two_area, (p2.x() - p1.x()) / two_area),
            Point((p2.y() - p0.y()) / two_area, (p0.x() - p2.x()) / two_area),
            Point((p0.y() - p1.y()) / two_area, (p1.x() - p0.x()) / two_area)};
}

std::array<double, 3> Mesh::barycentric(int c, const Point& p) const {
    const auto g = barycentric_gradients(c);
    const Cell& t = cell(c);
    const double l1 = g[1].dot(p - vertex(t[0]));
    const double l2 = g[2].dot(p - vertex(t[0]));
    return {1.0 - l1 - l2, l1, l2};
}

void Mesh::build_locator() {
    const double w = domain_.x1 - domain_.x0;
    const double h = domain_.y1 - domain_.y0;
    const double per_bin = 4.0;
    const double target = std::max(1.0, std::sqrt(num_cells() / per_bin));
    bins_x_ = std::max(1, static_cast<int>(std::ceil(target * std::sqrt(w / h))));
    bins_y_ = std::max(1, static_cast<int>(std::ceil(target * std::sqrt(h / w))));
    buckets_.assign(static_cast<std::size_t>(bins_x_ * bins_y_), {});

    auto bin_of = [&](double x, double y) {
        int i = static_cast<int>(std::floor((x - domain_.x0) / w * bins_x_));
        int j = static_cast<int>(std::floor((y - domain_.y0) / h * bins_y_));
        return std::pair{std::clamp(i, 0, bins_x_ - 1), std::clamp(j, 0, bins_y_ - 1)};
    };
    for (int c = 0; c < num_cells(); ++c) {
        const Cell& t = cell(c);
        double xmin = vertex(t[0]).x(), xmax = xmin, ymin = vertex(t[0]).y(), ymax = ymin;
        for (int k = 1; k < 3; ++k) {
            xmin = std::min(xmin, vertex(t[k]).x());
            xmax = std::max(xmax, vertex(t[k]).x());
            ymin = std::min(ymin, vertex(t[k]).y());
            ymax = std::max(ymax, vertex(t[k]).y());
        }
        const double ex = 1e-12 * w, ey = 1e-12 * h;
        auto [i0, j0] = bin_of(xmin - ex, ymin - ey);
        auto [i1, j1] = bin_of(xmax + ex, ymax + ey);
        for (int j = j0; j <= j1; ++j)
            for (int i = i0; i <= i1; ++i)
                buckets_[static_cast<std::size_t>(j * bins_x_ + i)].push_back(c);
    }
}

std::optional<int> Mesh::locate(const Point& p, double tol) const {
    const double w = domain_.x1 - domain_.x0;
    const double h = domain_.y1 - domain_.y0;
    const int i = std::clamp(static_cast<int>(std::floor((p.x() - domain_.x0) / w * bins_x_)), 0,
                             bins_x_ - 1);
    const int j = std::clamp(static_cast<int>(std::floor((p.y() - domain_.y0) / h * bins_y_)), 0,
                             bins_y_ - 1);
    for (int c : buckets_[static_cast<std::size_t>(j * bins_x_ + i)]) {
        const auto b = barycentric(c, p);
        if (b[0] >= -tol && b[1] >= -tol && b[2] >= -tol) return c;
    }
    return std::nullopt;
}

MeshPtr rectangle_mesh(const Rect& domain, int nx, int ny) {
    if (nx < 1 || ny < 1) throw std::invalid_argument("rectangle_mesh: n must be >= 1");
    if (!(domain.x1 > domain.x0) || !(domain.y1 > domain.y0))
        throw std::invalid_argument("rectangle_mesh: empty domain");

    std::vector<Point> vertices;
    vertices.reserve(static_cast<std::size_t>((nx + 1) * (ny + 1)));
    for (int j = 0; j <= ny; ++j) {
        for (int i = 0; i <= nx; ++i) {
            // Exact endpoints so boundary detection is not at the mercy of rounding.
            const double x = i == nx ? domain.x1 : domain.x0 + (domain.x1 - domain.x0) * i / nx;
            const double y = j == ny ? domain.y1 : domain.y0 + (domain.y1 - domain.y0) * j / ny;
            vertices.emplace_back(x, y);
        }
    }
    std::vector<Cell> cells;
    cells.reserve(static_cast<std::size_t>(2 * nx * ny));
    auto id = [nx](int i, int j) { return j * (nx + 1) + i; };
    for (int j = 0; j < ny; ++j) {
        for (int i = 0; i < nx; ++i) {
            const int v00 = id(i, j), v10 = id(i + 1, j), v01 = id(i, j + 1), v11 = id(i + 1, j + 1);
            cells.push_back({v00, v10, v11});
            cells.push_back({v00, v11, v01});
        }
    }
    return std::make_shared<const Mesh>(domain, std::move(vertices), std::move(cells));
}

MeshPtr unit_square_mesh(int n) {
    if (n < 1) throw std::invalid_argument("unit_square_mesh: n must be >= 1");
    return rectangle_mesh(Rect{}, n, n);
}

MeshPtr refine_uniform(const Mesh& m) {
    std::vector<Point> vertices = m.vertices();
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int a, int b) {
        const auto key = std::minmax(a, b);
        auto [it, inserted] = midpoint.try_emplace({key.first, key.second}, 0);
        if (inserted) {
            it->second = static_cast<int>(vertices.size());
            vertices.push_back(0.5 * (m.vertex(a) + m.vertex(b)));
        }
        return it->second;
    };

    std::vector<Cell> cells;
    std::vector<int> parent;
    cells.reserve(static_cast<std::size_t>(4 * m.num_cells()));
    parent.reserve(cells.capacity());
    for (int c = 0; c < m.num_cells(); ++c) {
        const auto [a, b, d] = m.cell(c);
        const int ab = mid(a, b), bd = mid(b, d), da = mid(d, a);
        for (const Cell& child : {Cell{a, ab, da}, Cell{ab, b, bd}, Cell{da, bd, d}, Cell{ab, bd, da}}) {
            cells.push_back(child);
            parent.push_back(c);
        }
    }
    return std::make_shared<const Mesh>(m.domain(), std::move(vertices), std::move(cells),
                                        std::move(parent));
}

double mesh_size(const Mesh& m) {
    double h = 0.0;
    for (int c = 0; c < m.num_cells(); ++c) h = std::max(h, m.diameter(c));
    return h;
}

std::vector<int> nested_cell_map(const Mesh& coarse, const Mesh& fine) {
    const Rect& a = coarse.domain();
    const Rect& b = fine.domain();
    if (a.x0 != b.x0 || a.x1 != b.x1 || a.y0 != b.y0 || a.y1 != b.y1)
        throw std::invalid_argument("nested_cell_map: meshes cover different domains");

    std::vector<int> map(static_cast<std::size_t>(fine.num_cells()));
    for (int c = 0; c < fine.num_cells(); ++c) {
        const auto host = coarse.locate(fine.centroid(c));
        if (!host) throw std::invalid_argument("nested_cell_map: fine cell outside coarse mesh");
        for (int v : fine.cell(c)) {
            const auto bc = coarse.barycentric(*host, fine.vertex(v));
            if (bc[0] < -1e-10 || bc[1] < -1e-10 || bc[2] < -1e-10)
                throw std::invalid_argument("nested_cell_map: meshes are not nested");
        }
        map[static_cast<std::size_t>(c)] = *host;
    }
    return map;
}

void write_mesh(std::ostream& os, const Mesh& m) {
    const auto old = os.precision(17);
    for (const Point& p : m.vertices()) os << p.x() << ' ' << p.y() << '\n';
    os << '\n';
    for (const Cell& c : m.cells()) os << c[0] << ' ' << c[1] << ' ' << c[2] << '\n';
    os.precision(old);
}

}  // namespace ocpfem
