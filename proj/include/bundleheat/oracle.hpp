// bundleheat - deterministic ground truth: images kernels, eigen-expansions,
// Crank-Nicolson solvers and the quadratic-form evaluator
#pragma once

#include "bundleheat/bundle.hpp"
#include "bundleheat/common.hpp"
#include "bundleheat/geometry.hpp"
#include "bundleheat/sections.hpp"

#include <cmath>
#include <functional>
#include <vector>

namespace bundleheat::oracle {

enum class Bc { Neumann, Dirichlet };

inline double free_gauss(double t, double dx) {
    return std::exp(-0.5 * dx * dx / t) / std::sqrt(2.0 * M_PI * t);
}

// Half-line heat kernel for the generator Laplacian/2, by the method of images.
inline double images_kernel(double t, double x, double y, Bc bc) {
    if (!(t > 0.0)) throw DomainError("images_kernel: t must be positive");
    if (x < 0.0 || y < 0.0) throw DomainError("images_kernel: points must be >= 0");
    const double direct = free_gauss(t, x - y);
    const double image = free_gauss(t, x + y);
    return bc == Bc::Neumann ? direct + image : direct - image;
}

// (e^{-t Delta/2} f)(x) on the half-line, f supported in [a,b].
inline double images_propagate_1d(double t, double x, const std::function<double(double)>& f,
                                  Bc bc, double a, double b, int nodes = 160) {
    const Quad1D q = Quad1D::gl(std::max(a, 0.0), b, nodes);
    double acc = 0.0;
    for (std::size_t i = 0; i < q.x.size(); ++i)
        acc += q.w[i] * images_kernel(t, x, q.x[i], bc) * f(q.x[i]);
    return acc;
}

// Free-line propagation (no boundary), f supported in [a,b].
inline double free_propagate_1d(double t, double x, const std::function<double(double)>& f,
                                double a, double b, int nodes = 160) {
    const Quad1D q = Quad1D::gl(a, b, nodes);
    double acc = 0.0;
    for (std::size_t i = 0; i < q.x.size(); ++i)
        acc += q.w[i] * free_gauss(t, x - q.x[i]) * f(q.x[i]);
    return acc;
}

// Heat kernel of the absolute 1-form Laplacian on the flat half-plane, in the
// (dx1, dx2) frame: tangential component Neumann, normal component Dirichlet,
// free Gaussian along the boundary direction.
inline Eigen::Matrix2d halfspace_forms_kernel(double t, const Vecn& x, const Vecn& y, int p = 1,
                                              int n = 2) {
    if (p != 1 || n != 2) throw DomainError("halfspace_forms_kernel: only (p, n) = (1, 2)");
    if (x(1) < 0.0 || y(1) < 0.0) throw DomainError("halfspace_forms_kernel: outside half-plane");
    Eigen::Matrix2d k = Eigen::Matrix2d::Zero();
    const double tang = free_gauss(t, x(0) - y(0));
    k(0, 0) = tang * images_kernel(t, x(1), y(1), Bc::Neumann);
    k(1, 1) = tang * images_kernel(t, x(1), y(1), Bc::Dirichlet);
    return k;
}

// Component-wise semigroup action on a 1-form phi = (phi1 dx1, phi2 dx2) over
// the half-plane; phi supported in [a1,b1] x [a2,b2].
inline Eigen::Vector2d halfspace_forms_propagate(double t, const Vecn& x,
                                                 const SectionField& phi, double a1, double b1,
                                                 double a2, double b2, int nodes = 120) {
    const Quad1D q1 = Quad1D::gl(a1, b1, nodes);
    const Quad1D q2 = Quad1D::gl(std::max(a2, 0.0), b2, nodes);
    Eigen::Vector2d acc = Eigen::Vector2d::Zero();
    Vecn y(2);
    for (std::size_t i = 0; i < q1.x.size(); ++i) {
        const double tang = free_gauss(t, x(0) - q1.x[i]);
        for (std::size_t j = 0; j < q2.x.size(); ++j) {
            y(0) = q1.x[i];
            y(1) = q2.x[j];
            const VecN v = phi(y);
            const double w = q1.w[i] * q2.w[j] * tang;
            acc(0) += w * images_kernel(t, x(1), q2.x[j], Bc::Neumann) * v(0);
            acc(1) += w * images_kernel(t, x(1), q2.x[j], Bc::Dirichlet) * v(1);
        }
    }
    return acc;
}

// Scalar Neumann propagation on the half-plane.
inline double halfspace2_scalar_propagate(double t, const Vecn& x, const SectionField& phi,
                                          double a1, double b1, double a2, double b2,
                                          int nodes = 120) {
    const Quad1D q1 = Quad1D::gl(a1, b1, nodes);
    const Quad1D q2 = Quad1D::gl(std::max(a2, 0.0), b2, nodes);
    double acc = 0.0;
    Vecn y(2);
    for (std::size_t i = 0; i < q1.x.size(); ++i)
        for (std::size_t j = 0; j < q2.x.size(); ++j) {
            y(0) = q1.x[i];
            y(1) = q2.x[j];
            acc += q1.w[i] * q2.w[j] * free_gauss(t, x(0) - q1.x[i]) *
                   images_kernel(t, x(1), q2.x[j], Bc::Neumann) * phi(y)(0);
        }
    return acc;
}

// ---------------------------------------------------------------------------
// Crank-Nicolson solvers

struct Pde1DSolution {
    std::vector<double> x, u;
    double h = 0.0;

    double mass() const {
        double m = 0.0;
        for (std::size_t i = 0; i + 1 < x.size(); ++i) m += 0.5 * h * (u[i] + u[i + 1]);
        return m;
    }
    double eval(double xq) const {
        if (xq <= x.front()) return u.front();
        if (xq >= x.back()) return u.back();
        const auto i = static_cast<std::size_t>((xq - x.front()) / h);
        const double s = (xq - x[i]) / h;
        return (1.0 - s) * u[i] + s * u[i + 1];
    }
};

namespace detail {

// Thomas solve of a tridiagonal system (in place on rhs).
inline void tridiag_solve(std::vector<double>& sub, std::vector<double>& diag,
                          std::vector<double>& sup, std::vector<double>& rhs) {
    const std::size_t m = diag.size();
    for (std::size_t i = 1; i < m; ++i) {
        const double w = sub[i] / diag[i - 1];
        diag[i] -= w * sup[i - 1];
        rhs[i] -= w * rhs[i - 1];
    }
    rhs[m - 1] /= diag[m - 1];
    for (std::size_t i = m - 1; i-- > 0;) rhs[i] = (rhs[i] - sup[i] * rhs[i + 1]) / diag[i];
}

// Generic CN march for du/dt = A u with A tridiagonal (rows given by the three
// bands) and the last node pinned to a Dirichlet value.
inline std::vector<double> cn_march(const std::vector<double>& asub,
                                    const std::vector<double>& adia,
                                    const std::vector<double>& asup, std::vector<double> u,
                                    double t, double dtau, double pinned_value) {
    const std::size_t m = u.size();
    const long nt = std::max(1L, static_cast<long>(std::ceil(t / dtau)));
    const double k = t / nt;
    std::vector<double> sub(m), dia(m), sup(m), rhs(m);
    for (long step = 0; step < nt; ++step) {
        for (std::size_t i = 0; i < m; ++i) {
            const double um = i ? u[i - 1] : 0.0;
            const double up = i + 1 < m ? u[i + 1] : 0.0;
            rhs[i] = u[i] + 0.5 * k * (asub[i] * um + adia[i] * u[i] + asup[i] * up);
            sub[i] = -0.5 * k * asub[i];
            dia[i] = 1.0 - 0.5 * k * adia[i];
            sup[i] = -0.5 * k * asup[i];
        }
        // pinned far boundary
        sub[m - 1] = 0.0;
        dia[m - 1] = 1.0;
        sup[m - 1] = 0.0;
        rhs[m - 1] = pinned_value;
        tridiag_solve(sub, dia, sup, rhs);
        u = rhs;
    }
    return u;
}

}  // namespace detail

// d_t u = u_xx / 2 on [0, L], Robin u_x(0) = sigma u(0) (sigma > 0 removes
// mass), absorbing at L. Ghost-node boundary treatment keeps second order.
inline Pde1DSolution robin_pde_1d(double sigma, double t, double length, int cells,
                                  const std::function<double(double)>& u0) {
    if (cells < 8) throw ConfigError("robin_pde_1d: grid too coarse");
    Pde1DSolution sol;
    sol.h = length / cells;
    const double h = sol.h;
    const std::size_t m = cells + 1;
    sol.x.resize(m);
    std::vector<double> u(m), asub(m, 0.5 / (h * h)), adia(m, -1.0 / (h * h)),
        asup(m, 0.5 / (h * h));
    for (std::size_t i = 0; i < m; ++i) {
        sol.x[i] = i * h;
        u[i] = u0(sol.x[i]);
    }
    // Robin row via the eliminated ghost node u_{-1} = u_1 - 2 h sigma u_0
    asub[0] = 0.0;
    adia[0] = (-1.0 - h * sigma) / (h * h);
    asup[0] = 1.0 / (h * h);
    sol.u = detail::cn_march(asub, adia, asup, u, t, h, 0.0);
    return sol;
}

// d_t u = (u_rr + u_r / r) / 2 on [1, R]; the boundary weight beta enters as
// the Robin coefficient u_r(1) = -beta u(1), so that u(t, r) started from
// u0 = 1 equals E_r[exp(beta lambda_t)]. Far boundary pinned to u0(R).
inline Pde1DSolution radial_disk_exterior_pde(double t, double beta, double radius, int cells,
                                              const std::function<double(double)>& u0 =
                                                  [](double) { return 1.0; }) {
    if (cells < 8) throw ConfigError("radial_disk_exterior_pde: grid too coarse");
    Pde1DSolution sol;
    sol.h = (radius - 1.0) / cells;
    const double h = sol.h;
    const std::size_t m = cells + 1;
    sol.x.resize(m);
    std::vector<double> u(m), asub(m), adia(m), asup(m);
    for (std::size_t i = 0; i < m; ++i) {
        sol.x[i] = 1.0 + i * h;
        u[i] = u0(sol.x[i]);
        asub[i] = 0.5 / (h * h) - 0.25 / (h * sol.x[i]);
        adia[i] = -1.0 / (h * h);
        asup[i] = 0.5 / (h * h) + 0.25 / (h * sol.x[i]);
    }
    // ghost elimination at r = 1: u_{-1} = u_1 + 2 h beta u_0
    asub[0] = 0.0;
    adia[0] = (-1.0 + h * beta) / (h * h) - 0.5 * beta;
    asup[0] = 1.0 / (h * h);
    sol.u = detail::cn_march(asub, adia, asup, u, t, h, u0(radius));
    return sol;
}

// Empirical convergence order from three grid levels, evaluated at xq.
template <class Solver>
inline double grid_doubling_order(Solver&& solve, int cells, double xq) {
    const double u1 = solve(cells).eval(xq);
    const double u2 = solve(2 * cells).eval(xq);
    const double u4 = solve(4 * cells).eval(xq);
    return std::log2(std::abs(u1 - u2) / std::abs(u2 - u4));
}

// ---------------------------------------------------------------------------
// Hemisphere Neumann kernel by spherical-harmonic series (generator
// Laplacian/2): full-sphere kernel plus its equator-reflected image.

inline double sphere_kernel_cos(double t, double c) {
    double acc = 0.0;
    for (int l = 0;; ++l) {
        const double amp = (2.0 * l + 1.0) / (4.0 * M_PI) * std::exp(-0.5 * l * (l + 1.0) * t);
        acc += amp * legendre_p(l, c);
        if (l > 2.0 / t && amp * (l + 2.0) < 1e-10) break;
        if (l > 4000) throw DomainError("sphere_kernel_cos: series did not truncate");
    }
    return acc;
}

inline double hemisphere_kernel(double t, const Vecn& x, const Vecn& y) {
    if (t < 0.01) throw DomainError("hemisphere_kernel: t below the truncation budget");
    if (x(0) < 0.0 || x(0) > M_PI / 2.0 + 1e-12 || y(0) < 0.0 || y(0) > M_PI / 2.0 + 1e-12)
        throw DomainError("hemisphere_kernel: point off the closed hemisphere");
    auto cosdist = [](const Vecn& a, const Vecn& b) {
        return std::cos(a(0)) * std::cos(b(0)) +
               std::sin(a(0)) * std::sin(b(0)) * std::cos(a(1) - b(1));
    };
    Vecn ybar = y;
    ybar(0) = M_PI - y(0);
    return sphere_kernel_cos(t, cosdist(x, y)) + sphere_kernel_cos(t, cosdist(x, ybar));
}

// ---------------------------------------------------------------------------
// Quadratic form Q(phi, eta) = int <grad phi, grad eta> + int <W phi, eta>
// + int_Sigma <S phi, eta>, by tensor-grid quadrature with central
// differences. Flat half-space charts only (the covariant derivative is the
// plain coordinate derivative there).

struct QGridSpec {
    Vecn lo, hi;
    int cells_per_dim = 48;
};

inline double quadratic_form_q(const SectionField& phi, const SectionField& eta,
                               const BundleModel& bundle, const ModelGeometry& geom,
                               const QGridSpec& grid) {
    if (geom.id() != GeometryId::HalfSpace)
        throw DomainError("quadratic_form_q: flat half-space charts only");
    if (!phi.compliant || !eta.compliant)
        throw DomainError("quadratic_form_q: sections must satisfy the boundary conditions");
    const int n = geom.dim();
    const int m = grid.cells_per_dim;
    std::vector<double> hs(n);
    std::vector<int> counts(n, m + 1);
    for (int d = 0; d < n; ++d) hs[d] = (grid.hi(d) - grid.lo(d)) / m;

    std::size_t total = 1;
    for (int d = 0; d < n; ++d) total *= counts[d];

    auto node = [&](std::size_t flat, Vecn& x, double& w, std::vector<int>& idx) {
        w = 1.0;
        for (int d = n - 1; d >= 0; --d) {
            const int i = static_cast<int>(flat % counts[d]);
            idx[d] = i;
            flat /= counts[d];
            x(d) = grid.lo(d) + i * hs[d];
            w *= (i == 0 || i == m) ? 0.5 * hs[d] : hs[d];
        }
    };

    auto deriv = [&](const SectionField& f, const Vecn& x, int d, int i) {
        Vecn xp = x, xm = x;
        if (i == 0) {  // one-sided second order at the chart edge
            Vecn x1 = x, x2 = x;
            x1(d) += hs[d];
            x2(d) += 2.0 * hs[d];
            return VecN((-3.0 * f(x) + 4.0 * f(x1) - f(x2)) / (2.0 * hs[d]));
        }
        if (i == m) {
            Vecn x1 = x, x2 = x;
            x1(d) -= hs[d];
            x2(d) -= 2.0 * hs[d];
            return VecN((3.0 * f(x) - 4.0 * f(x1) + f(x2)) / (2.0 * hs[d]));
        }
        xp(d) += hs[d];
        xm(d) -= hs[d];
        return VecN((f(xp) - f(xm)) / (2.0 * hs[d]));
    };

    const Matn e = Matn::Identity(n, n);
    double q = 0.0;
    Vecn x(n);
    std::vector<int> idx(n);
    for (std::size_t flat = 0; flat < total; ++flat) {
        double w;
        node(flat, x, w, idx);
        double dot = 0.0;
        for (int d = 0; d < n; ++d) dot += deriv(phi, x, d, idx[d]).dot(deriv(eta, x, d, idx[d]));
        const MatN wmat = bundle.weitzenbock_frame(geom, x, e);
        q += w * (dot + (wmat * phi(x)).dot(eta(x)));
        if (idx[n - 1] == 0) {  // boundary face x_n = 0
            const double wb = w / (0.5 * hs[n - 1]);
            const MatN s = bundle.robin_frame(geom, x, e);
            if (s.size() > 0 && s.cwiseAbs().maxCoeff() > 0.0)
                q += wb * (s * phi(x)).dot(eta(x));
        }
    }
    return q;
}

// L2 inner product over the same grid (for the lower-bound checks).
inline double l2_product(const SectionField& phi, const SectionField& eta,
                         const ModelGeometry& geom, const QGridSpec& grid) {
    const int n = geom.dim();
    const int m = grid.cells_per_dim;
    std::vector<double> hs(n);
    for (int d = 0; d < n; ++d) hs[d] = (grid.hi(d) - grid.lo(d)) / m;
    std::size_t total = 1;
    for (int d = 0; d < n; ++d) total *= (m + 1);
    double acc = 0.0;
    Vecn x(n);
    for (std::size_t flat = 0; flat < total; ++flat) {
        std::size_t rest = flat;
        double w = 1.0;
        for (int d = n - 1; d >= 0; --d) {
            const int i = static_cast<int>(rest % (m + 1));
            rest /= (m + 1);
            x(d) = grid.lo(d) + i * hs[d];
            w *= (i == 0 || i == m) ? 0.5 * hs[d] : hs[d];
        }
        acc += w * phi(x).dot(eta(x));
    }
    return acc;
}

}  // namespace bundleheat::oracle
