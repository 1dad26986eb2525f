// bundleheat - shared numeric types and small linear-algebra helpers
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace bundleheat {

// Base dimension is capped at 6 and fiber rank at 20 (= C(6,3)) so that all
// hot-loop matrices live on the stack.
inline constexpr int kMaxDim = 6;
inline constexpr int kMaxRank = 20;

using Vecn = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxDim, 1>;
using Matn = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxDim, kMaxDim>;
using VecN = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxRank, 1>;
using MatN = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxRank, kMaxRank>;

// Christoffel symbols Gamma^k_{ij}, stored dense.
struct Christoffel {
    int n = 0;
    std::array<double, kMaxDim * kMaxDim * kMaxDim> a{};
    double& at(int k, int i, int j) { return a[(k * kMaxDim + i) * kMaxDim + j]; }
    double at(int k, int i, int j) const { return a[(k * kMaxDim + i) * kMaxDim + j]; }
};

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& m) : std::runtime_error(m) {}
};
struct DomainError : std::runtime_error {
    explicit DomainError(const std::string& m) : std::runtime_error(m) {}
};

// exp(A) for symmetric A via its eigendecomposition.
inline MatN sym_exp(const MatN& a) {
    if (a.rows() == 1) {
        MatN r(1, 1);
        r(0, 0) = std::exp(a(0, 0));
        return r;
    }
    Eigen::SelfAdjointEigenSolver<MatN> es(a);
    return es.eigenvectors() * es.eigenvalues().array().exp().matrix().asDiagonal() *
           es.eigenvectors().transpose();
}

// Spectral norm; closed form up to 2x2, SVD above.
inline double spectral_norm(const MatN& a) {
    const int n = static_cast<int>(a.rows());
    if (n == 1) return std::abs(a(0, 0));
    if (n == 2 && a.cols() == 2) {
        const double f2 = a.squaredNorm();
        const double det = a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0);
        const double disc = std::max(f2 * f2 - 4.0 * det * det, 0.0);
        return std::sqrt(0.5 * (f2 + std::sqrt(disc)));
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(Eigen::MatrixXd(a));
    return svd.singularValues()(0);
}

// Orthonormalize the columns of E against the metric g (modified Gram-Schmidt).
inline void gram_schmidt_metric(Matn& e, const Matn& g) {
    const int n = static_cast<int>(e.cols());
    for (int a = 0; a < n; ++a) {
        for (int b = 0; b < a; ++b) {
            const double proj = e.col(a).dot(g * e.col(b));
            e.col(a) -= proj * e.col(b);
        }
        const double nrm = std::sqrt(e.col(a).dot(g * e.col(a)));
        if (!(nrm > 0.0)) throw DomainError("gram_schmidt_metric: degenerate frame");
        e.col(a) /= nrm;
    }
}

// ---------------------------------------------------------------------------
// Exterior algebra on R^n in an orthonormal basis. Basis of Lambda^p is the
// lexicographically ordered list of p-subsets of {0..n-1}.

inline std::vector<std::vector<int>> psubsets(int n, int p) {
    std::vector<std::vector<int>> out;
    if (p < 0 || p > n) return out;
    std::vector<int> idx(p);
    for (int i = 0; i < p; ++i) idx[i] = i;
    while (true) {
        out.push_back(idx);
        int i = p - 1;
        while (i >= 0 && idx[i] == n - p + i) --i;
        if (i < 0) break;
        ++idx[i];
        for (int j = i + 1; j < p; ++j) idx[j] = idx[j - 1] + 1;
    }
    return out;
}

inline long binom(int n, int p) {
    if (p < 0 || p > n) return 0;
    long r = 1;
    for (int i = 0; i < p; ++i) r = r * (n - i) / (i + 1);
    return r;
}

// Lambda^p(O): the induced map on p-vectors, entries are p x p minors of O.
inline MatN lambda_rep(const Matn& o, int p) {
    const int n = static_cast<int>(o.rows());
    const auto basis = psubsets(n, p);
    const int np = static_cast<int>(basis.size());
    MatN r(np, np);
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxDim, kMaxDim> sub(p, p);
    for (int a = 0; a < np; ++a)
        for (int b = 0; b < np; ++b) {
            for (int i = 0; i < p; ++i)
                for (int j = 0; j < p; ++j) sub(i, j) = o(basis[a][i], basis[b][j]);
            r(a, b) = p == 0 ? 1.0 : sub.determinant();
        }
    return r;
}

// Derivation extension of an endomorphism A of R^n to Lambda^p:
// D(e_{i1}^..^e_ip) = sum_k e_{i1}^..^(A e_{ik})^..^e_ip.
inline MatN lambda_derivation(const Matn& a, int p) {
    const int n = static_cast<int>(a.rows());
    const auto basis = psubsets(n, p);
    const int np = static_cast<int>(basis.size());
    MatN r = MatN::Zero(np, np);
    for (int col = 0; col < np; ++col) {
        for (int k = 0; k < p; ++k) {
            for (int m = 0; m < n; ++m) {
                const double c = a(m, basis[col][k]);
                if (c == 0.0) continue;
                // replace slot k by m, re-sort with sign
                std::vector<int> idx = basis[col];
                idx[k] = m;
                int sign = 1;
                bool dup = false;
                for (int i = 0; i < p && !dup; ++i)
                    for (int j = i + 1; j < p; ++j) {
                        if (idx[i] == idx[j]) { dup = true; break; }
                        if (idx[i] > idx[j]) { std::swap(idx[i], idx[j]); sign = -sign; }
                    }
                if (dup) continue;
                const auto it = std::lower_bound(basis.begin(), basis.end(), idx);
                r(static_cast<int>(it - basis.begin()), col) += sign * c;
            }
        }
    }
    return r;
}

// Projector onto the "normal" part of Lambda^p: nu^ wedge (i_nu .), for a unit
// vector nu given in the same orthonormal basis.
inline MatN normal_projector(const Vecn& nu, int p) {
    const int n = static_cast<int>(nu.size());
    const auto basis = psubsets(n, p);
    const int np = static_cast<int>(basis.size());
    // Build as P = W * C where C: Lambda^p -> Lambda^{p-1} is contraction by nu
    // and W: Lambda^{p-1} -> Lambda^p is exterior multiplication by nu.
    const auto bm1 = psubsets(n, p - 1);
    const int nm1 = static_cast<int>(bm1.size());
    Eigen::MatrixXd c = Eigen::MatrixXd::Zero(nm1, np);
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(np, nm1);
    for (int col = 0; col < np; ++col)
        for (int k = 0; k < p; ++k) {
            std::vector<int> idx;
            for (int i = 0; i < p; ++i)
                if (i != k) idx.push_back(basis[col][i]);
            const auto it = std::lower_bound(bm1.begin(), bm1.end(), idx);
            c(static_cast<int>(it - bm1.begin()), col) += (k % 2 ? -1.0 : 1.0) * nu(basis[col][k]);
        }
    for (int col = 0; col < nm1; ++col)
        for (int m = 0; m < n; ++m) {
            if (nu(m) == 0.0) continue;
            std::vector<int> idx = bm1[col];
            if (std::find(idx.begin(), idx.end(), m) != idx.end()) continue;
            idx.push_back(m);
            int sign = 1;
            for (int i = 0; i < p; ++i)
                for (int j = i + 1; j < p; ++j)
                    if (idx[i] > idx[j]) { std::swap(idx[i], idx[j]); sign = -sign; }
            const auto it = std::lower_bound(basis.begin(), basis.end(), idx);
            w(static_cast<int>(it - basis.begin()), col) += sign * nu(m);
        }
    MatN out(np, np);
    out = w * c;
    return out;
}

// ---------------------------------------------------------------------------
// Quadrature

// Gauss-Legendre nodes/weights on [-1,1] by Newton iteration.
inline void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w) {
    x.assign(n, 0.0);
    w.assign(n, 0.0);
    for (int i = 0; i < (n + 1) / 2; ++i) {
        double z = std::cos(M_PI * (i + 0.75) / (n + 0.5));
        double pp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = 0.0;
            for (int j = 0; j < n; ++j) {
                const double p2 = p1;
                p1 = p0;
                p0 = ((2.0 * j + 1.0) * z * p1 - j * p2) / (j + 1.0);
            }
            pp = n * (z * p0 - p1) / (z * z - 1.0);
            const double dz = p0 / pp;
            z -= dz;
            if (std::abs(dz) < 1e-15) break;
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = w[n - 1 - i] = 2.0 / ((1.0 - z * z) * pp * pp);
    }
}

struct Quad1D {
    std::vector<double> x, w;
    // n-point Gauss-Legendre on [a,b]
    static Quad1D gl(double a, double b, int n) {
        Quad1D q;
        std::vector<double> xs, ws;
        gauss_legendre(n, xs, ws);
        q.x.resize(n);
        q.w.resize(n);
        for (int i = 0; i < n; ++i) {
            q.x[i] = 0.5 * (a + b) + 0.5 * (b - a) * xs[i];
            q.w[i] = 0.5 * (b - a) * ws[i];
        }
        return q;
    }
    // composite Simpson with m+1 nodes (m even)
    static Quad1D simpson(double a, double b, int m) {
        if (m % 2) ++m;
        Quad1D q;
        const double h = (b - a) / m;
        q.x.resize(m + 1);
        q.w.resize(m + 1);
        for (int i = 0; i <= m; ++i) {
            q.x[i] = a + i * h;
            q.w[i] = (i == 0 || i == m) ? h / 3.0 : (i % 2 ? 4.0 * h / 3.0 : 2.0 * h / 3.0);
        }
        return q;
    }
};

// Tensor product of 1-D quadrature rules.
struct TensorGrid {
    std::vector<Quad1D> axes;

    std::size_t size() const {
        std::size_t s = 1;
        for (const auto& a : axes) s *= a.x.size();
        return s;
    }
    Vecn node(std::size_t flat) const {
        Vecn x(static_cast<int>(axes.size()));
        for (int d = static_cast<int>(axes.size()) - 1; d >= 0; --d) {
            const std::size_t m = axes[d].x.size();
            x(d) = axes[d].x[flat % m];
            flat /= m;
        }
        return x;
    }
    double weight(std::size_t flat) const {
        double w = 1.0;
        for (int d = static_cast<int>(axes.size()) - 1; d >= 0; --d) {
            const std::size_t m = axes[d].x.size();
            w *= axes[d].w[flat % m];
            flat /= m;
        }
        return w;
    }
};

// Legendre polynomial P_l(x) by recurrence.
inline double legendre_p(int l, double x) {
    if (l == 0) return 1.0;
    double p0 = 1.0, p1 = x;
    for (int j = 1; j < l; ++j) {
        const double p2 = ((2.0 * j + 1.0) * x * p1 - j * p0) / (j + 1.0);
        p0 = p1;
        p1 = p2;
    }
    return p1;
}

// FNV-1a over a byte string; used for config fingerprints.
inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    static const char* d = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[i] = d[v & 0xf];
        v >>= 4;
    }
    return s;
}

}  // namespace bundleheat
