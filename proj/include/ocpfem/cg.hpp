#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace ocpfem {

/// Raised when an iterative solver fails to reach its tolerance.
class SolverError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct CgStats {
    int iterations = 0;
    double relative_residual = 0.0;
};

/// Preconditioned conjugate gradients for a symmetric positive (semi)definite
/// operator. `apply(v, out)` computes out = A v, `precondition(r, out)` computes
/// out = M^{-1} r. `x` holds the initial guess on entry. Stops once
/// ||r|| <= rel_tol * ||b||; throws SolverError after max_iter iterations.
template <class Apply, class Precondition>
CgStats conjugate_gradient(Apply&& apply, const Eigen::VectorXd& b, Eigen::VectorXd& x,
                           Precondition&& precondition, double rel_tol, int max_iter) {
    const double bnorm = b.norm();
    if (bnorm == 0.0) {
        x.setZero(b.size());
        return {};
    }
    if (x.size() != b.size()) x.setZero(b.size());

    Eigen::VectorXd r(b.size()), z(b.size()), p(b.size()), q(b.size());
    apply(x, q);
    r = b - q;
    double rnorm = r.norm();
    if (rnorm <= rel_tol * bnorm) return {0, rnorm / bnorm};

    precondition(r, z);
    p = z;
    double rz = r.dot(z);
    for (int it = 1; it <= max_iter; ++it) {
        apply(p, q);
        const double pq = p.dot(q);
        if (!(pq > 0.0)) {
            // Breakdown on a semidefinite operator: the residual is in its range
            // complement, so the current iterate is as good as it gets.
            if (rnorm <= 1e3 * rel_tol * bnorm) return {it, rnorm / bnorm};
            throw SolverError("conjugate_gradient: breakdown (p'Ap = " + std::to_string(pq) + ")");
        }
        const double step = rz / pq;
        x.noalias() += step * p;
        r.noalias() -= step * q;
        rnorm = r.norm();
        if (rnorm <= rel_tol * bnorm) return {it, rnorm / bnorm};
        precondition(r, z);
        const double rz_next = r.dot(z);
        p = z + (rz_next / rz) * p;
        rz = rz_next;
    }
    throw SolverError("conjugate_gradient: no convergence after " + std::to_string(max_iter) +
                      " iterations (relative residual " + std::to_string(rnorm / bnorm) + ")");
}

}  // namespace ocpfem
