#include "ocpfem/quadrature.hpp"

#include <cmath>
#include <stdexcept>

namespace ocpfem {

const QuadratureRule& quadrature_degree2() {
    static const QuadratureRule rule{
        {{0.5, 0.5, 0.0}, {0.0, 0.5, 0.5}, {0.5, 0.0, 0.5}},
        {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0},
        2};
    return rule;
}

const QuadratureRule& quadrature_degree5() {
    static const QuadratureRule rule = [] {
        const double s = std::sqrt(15.0);
        const double a1 = (6.0 - s) / 21.0;
        const double a2 = (6.0 + s) / 21.0;
        const double w1 = (155.0 - s) / 1200.0;
        const double w2 = (155.0 + s) / 1200.0;
        QuadratureRule r;
        r.degree = 5;
        r.points = {{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0},
                    {a1, a1, 1.0 - 2.0 * a1},
                    {a1, 1.0 - 2.0 * a1, a1},
                    {1.0 - 2.0 * a1, a1, a1},
                    {a2, a2, 1.0 - 2.0 * a2},
                    {a2, 1.0 - 2.0 * a2, a2},
                    {1.0 - 2.0 * a2, a2, a2}};
        r.weights = {9.0 / 40.0, w1, w1, w1, w2, w2, w2};
        return r;
    }();
    return rule;
}

const QuadratureRule& quadrature(int degree) {
    switch (degree) {
        case 2: return quadrature_degree2();
        case 5: return quadrature_degree5();
        default: throw std::invalid_argument("quadrature: degree must be 2 or 5");
    }
}

std::vector<Point> quadrature_points(const Mesh& m, int c, const QuadratureRule& rule) {
    const Cell& t = m.cell(c);
    std::vector<Point> pts;
    pts.reserve(rule.size());
    for (const auto& b : rule.points)
        pts.push_back(b[0] * m.vertex(t[0]) + b[1] * m.vertex(t[1]) + b[2] * m.vertex(t[2]));
    return pts;
}

}  // namespace ocpfem
