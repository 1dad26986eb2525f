// bundleheat - vector bundle models: Weitzenboeck term and mixed boundary data
#pragma once

#include "bundleheat/common.hpp"
#include "bundleheat/geometry.hpp"
#include "bundleheat/rng.hpp"

#include <functional>
#include <sstream>

namespace bundleheat {

enum class BundleKind { Scalar, Forms, Spinor2D, Generic };

// Bundle data scalarized to the moving orthonormal frame carried by each path:
// every matrix returned here is expressed in frame coordinates. Instances are
// immutable and bound to the geometry they were built for.
class BundleModel {
  public:
    using MatFn = std::function<MatN(const Vecn&)>;

    // p-forms with absolute boundary conditions: I = Pi_t - Pi_n, S = the
    // shape-operator derivation on the tangential part, W = R_p.
    static BundleModel forms(const ModelGeometry& geom, int p) {
        if (p < 0 || p > geom.dim()) throw ConfigError("forms bundle: p out of range");
        if (geom.id() == GeometryId::Hemisphere2D && p >= 2)
            throw ConfigError("forms bundle: curved catalogue entries support p <= 1 only");
        BundleModel b;
        b.kind_ = BundleKind::Forms;
        b.p_ = p;
        b.n_ = geom.dim();
        b.geom_id_ = geom.id();
        b.rank_ = static_cast<int>(binom(geom.dim(), p));
        b.c1_ = (geom.id() == GeometryId::Hemisphere2D && p == 1) ? 1.0 : 0.0;
        b.c2_ = geom.kappa_lower(p);
        return b;
    }

    static BundleModel scalar(const ModelGeometry& geom) { return forms(geom, 0); }

    // 2-D spinor toy on the flat half-plane. Chirality-type involution by
    // default; "rotated" picks the other symmetric involution anticommuting
    // with the tangential Clifford action.
    static BundleModel spinor2d(const ModelGeometry& geom,
                                const std::string& variant = "chirality") {
        if (geom.id() != GeometryId::HalfSpace || geom.dim() != 2)
            throw ConfigError("spinor2d bundle: only supported on half_space with dimension 2");
        BundleModel b;
        b.kind_ = BundleKind::Spinor2D;
        b.n_ = 2;
        b.geom_id_ = geom.id();
        b.rank_ = 2;
        b.c1_ = 0.0;
        b.c2_ = 0.0;
        b.spinor_involution_ = MatN(2, 2);
        if (variant == "chirality")
            b.spinor_involution_ << 1, 0, 0, -1;
        else if (variant == "rotated")
            b.spinor_involution_ << 0, 1, 1, 0;
        else
            throw ConfigError("spinor2d bundle: unknown involution variant " + variant);
        return b;
    }

    // User-supplied bundle with data given in reference-frame coordinates.
    // Invariants are re-verified by sampling; a violation reports the point.
    static BundleModel generic(const ModelGeometry& geom, int rank, MatFn w, MatFn s, MatFn invol,
                               double c1, double c2, int validation_samples = 200,
                               std::uint64_t validation_seed = 12345) {
        if (rank < 1 || rank > kMaxRank) throw ConfigError("generic bundle: rank out of range");
        BundleModel b;
        b.kind_ = BundleKind::Generic;
        b.n_ = geom.dim();
        b.geom_id_ = geom.id();
        b.rank_ = rank;
        b.c1_ = c1;
        b.c2_ = c2;
        b.gen_w_ = std::move(w);
        b.gen_s_ = std::move(s);
        b.gen_i_ = std::move(invol);
        b.validate_generic(geom, validation_samples, validation_seed);
        return b;
    }

    static BundleModel generic_constant(const ModelGeometry& geom, const MatN& w, const MatN& s,
                                        const MatN& invol, double c1, double c2) {
        return generic(
            geom, static_cast<int>(w.rows()), [w](const Vecn&) { return w; },
            [s](const Vecn&) { return s; }, [invol](const Vecn&) { return invol; }, c1, c2);
    }

    BundleKind kind() const { return kind_; }
    int rank() const { return rank_; }
    int degree() const { return p_; }
    double c1() const { return c1_; }
    double c2() const { return c2_; }

    // W and S constant as frame matrices? True for the whole built-in
    // catalogue; generic bundles probe their callables at two points.
    bool constant_coefficient() const {
        if (kind_ != BundleKind::Generic) return true;
        return gen_constant_;
    }

    std::string name() const {
        switch (kind_) {
            case BundleKind::Scalar: return "scalar";
            case BundleKind::Forms: return p_ == 0 ? "scalar" : ("forms:" + std::to_string(p_));
            case BundleKind::Spinor2D: return "spinor2d";
            default: return "generic";
        }
    }

    // ---- frame-coordinate data ---------------------------------------------

    // Weitzenboeck matrix at x in the frame E (columns g-orthonormal).
    MatN weitzenbock_frame(const ModelGeometry& geom, const Vecn& x, const Matn& e) const {
        switch (kind_) {
            case BundleKind::Spinor2D:
            case BundleKind::Scalar:
                return MatN::Zero(rank_, rank_);
            case BundleKind::Forms: {
                if (p_ == 0) return MatN::Zero(1, 1);
                if (geom.id() != GeometryId::Hemisphere2D) return MatN::Zero(rank_, rank_);
                // R_1 = Ric; identity in any orthonormal frame of the unit sphere
                const Matn ric = e.transpose() * geom.metric(x) * geom.ricci_11(x) * e;
                MatN w(rank_, rank_);
                w = ric;
                return w;
            }
            default:
                return gen_w_(x);
        }
    }

    // Involution at a boundary point y, in the frame E.
    MatN involution_frame(const ModelGeometry& geom, const Vecn& y, const Matn& e) const {
        switch (kind_) {
            case BundleKind::Spinor2D:
                return spinor_involution_;
            case BundleKind::Scalar:
                return MatN::Identity(1, 1);
            case BundleKind::Forms: {
                const Vecn nu_hat = frame_normal(geom, y, e);
                return MatN::Identity(rank_, rank_) - 2.0 * normal_projector(nu_hat, p_);
            }
            default:
                return gen_i_(y);
        }
    }

    MatN proj_minus_frame(const ModelGeometry& geom, const Vecn& y, const Matn& e) const {
        return 0.5 * (MatN::Identity(rank_, rank_) - involution_frame(geom, y, e));
    }
    MatN proj_plus_frame(const ModelGeometry& geom, const Vecn& y, const Matn& e) const {
        return 0.5 * (MatN::Identity(rank_, rank_) + involution_frame(geom, y, e));
    }

    // Robin endomorphism at a boundary point y in the frame E; vanishes on F-.
    MatN robin_frame(const ModelGeometry& geom, const Vecn& y, const Matn& e) const {
        switch (kind_) {
            case BundleKind::Spinor2D:
            case BundleKind::Scalar:
                return MatN::Zero(rank_, rank_);
            case BundleKind::Forms: {
                if (p_ == 0) return MatN::Zero(1, 1);
                const BoundaryData bd = geom.shape_operator(y, 1e-6);
                const Matn bfr = e.transpose() * geom.metric(bd.y) * bd.shape * e;
                const MatN pp = proj_plus_frame(geom, y, e);
                return MatN(pp * lambda_derivation(bfr, p_) * pp);
            }
            default:
                return gen_s_(y);
        }
    }

    // Associated representation applied to an orthogonal frame-change matrix.
    // Spinor and generic bundles are exercised on flat charts where parallel
    // transport is trivial, so they only accept O = I.
    MatN rep(const Matn& o) const {
        switch (kind_) {
            case BundleKind::Scalar:
                return MatN::Identity(1, 1);
            case BundleKind::Forms:
                return lambda_rep(o, p_);
            default: {
                if ((o - Matn::Identity(o.rows(), o.cols())).cwiseAbs().maxCoeff() > 1e-6)
                    throw DomainError(name() + " bundle: nontrivial frame change unsupported");
                return MatN::Identity(rank_, rank_);
            }
        }
    }

    // Inward normal in frame components (unit vector).
    static Vecn frame_normal(const ModelGeometry& geom, const Vecn& y, const Matn& e) {
        Vecn nu_hat = e.transpose() * geom.metric(y) * geom.inward_normal(y);
        return nu_hat;
    }

  private:
    void validate_generic(const ModelGeometry& geom, int samples, std::uint64_t seed) {
        PathRng rng(splitmix64(seed));
        const MatN id = MatN::Identity(rank_, rank_);
        const Vecn probe_a = sample_point(geom, rng);
        const Vecn probe_b = sample_point(geom, rng);
        gen_constant_ = (gen_w_(probe_a) - gen_w_(probe_b)).cwiseAbs().maxCoeff() < 1e-14 &&
                        (gen_s_(probe_a) - gen_s_(probe_b)).cwiseAbs().maxCoeff() < 1e-14;
        for (int k = 0; k < samples; ++k) {
            const Vecn x = sample_point(geom, rng);
            const Vecn y = sample_boundary_point(geom, rng);
            const MatN w = gen_w_(x);
            const MatN invol = gen_i_(y);
            const MatN s = gen_s_(y);
            auto fail = [&](const std::string& what, const Vecn& at) {
                std::ostringstream os;
                os << "generic bundle invariant violated: " << what << " at point [";
                for (int i = 0; i < at.size(); ++i) os << (i ? ", " : "") << at(i);
                os << "]";
                throw ConfigError(os.str());
            };
            if (static_cast<int>(w.rows()) != rank_ || static_cast<int>(invol.rows()) != rank_ ||
                static_cast<int>(s.rows()) != rank_)
                fail("matrix rank mismatch", x);
            if ((w - w.transpose()).cwiseAbs().maxCoeff() > 1e-10) fail("W not symmetric", x);
            if ((invol - invol.transpose()).cwiseAbs().maxCoeff() > 1e-10)
                fail("involution not symmetric", y);
            if ((MatN(invol * invol) - id).cwiseAbs().maxCoeff() > 1e-10)
                fail("involution squared != identity", y);
            if ((s - s.transpose()).cwiseAbs().maxCoeff() > 1e-10) fail("S not symmetric", y);
            const MatN pm = 0.5 * (id - invol);
            if ((MatN(s * pm) - MatN(pm * s)).cwiseAbs().maxCoeff() > 1e-10)
                fail("S does not commute with the projections", y);
            if (MatN(pm * s * pm).cwiseAbs().maxCoeff() > 1e-10)
                fail("S does not vanish on the Dirichlet eigenbundle", y);
            Eigen::SelfAdjointEigenSolver<MatN> ew(w);
            if (ew.eigenvalues().minCoeff() < c1_ - 1e-8) fail("W below the declared c1", x);
            const double smin = min_eig_on_plus(s, 0.5 * (id + invol));
            if (smin < c2_ - 1e-8) fail("S below the declared c2 on F+", y);
        }
    }

  public:
    // Smallest eigenvalue of S restricted to the range of the projector P
    // (0 when the subspace is trivial).
    static double min_eig_on_plus(const MatN& s, const MatN& proj) {
        Eigen::SelfAdjointEigenSolver<MatN> ep(proj);
        int rank = 0;
        for (int i = 0; i < ep.eigenvalues().size(); ++i)
            if (ep.eigenvalues()(i) > 0.5) ++rank;
        if (rank == 0) return 0.0;
        Eigen::MatrixXd basis(s.rows(), rank);
        int c = 0;
        for (int i = 0; i < ep.eigenvalues().size(); ++i)
            if (ep.eigenvalues()(i) > 0.5) basis.col(c++) = ep.eigenvectors().col(i);
        const Eigen::MatrixXd restricted = basis.transpose() * s * basis;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(restricted);
        return es.eigenvalues().minCoeff();
    }

    // Sampling windows used for invariant verification and lower_bounds.
    static Vecn sample_point(const ModelGeometry& geom, PathRng& rng) {
        const int n = geom.dim();
        Vecn x(n);
        auto u = [&] { return rng.uniform_pos(); };
        switch (geom.id()) {
            case GeometryId::HalfSpace:
                for (int i = 0; i < n - 1; ++i) x(i) = 6.0 * u() - 3.0;
                x(n - 1) = 3.0 * u();
                break;
            case GeometryId::DiskExterior2D:
                x(0) = 1.0 + 3.0 * u();
                x(1) = 2.0 * M_PI * u() - M_PI;
                break;
            case GeometryId::Hemisphere2D:
                x(0) = 0.05 + (M_PI / 2.0 - 0.05) * u();
                x(1) = 2.0 * M_PI * u() - M_PI;
                break;
        }
        return x;
    }

    static Vecn sample_boundary_point(const ModelGeometry& geom, PathRng& rng) {
        Vecn x = sample_point(geom, rng);
        x(geom.radial_index()) = geom.radial_offset();
        return x;
    }

  private:
    BundleKind kind_ = BundleKind::Scalar;
    int rank_ = 1;
    int p_ = 0;
    int n_ = 2;
    GeometryId geom_id_ = GeometryId::HalfSpace;
    double c1_ = 0.0, c2_ = 0.0;
    MatN spinor_involution_;
    MatFn gen_w_, gen_s_, gen_i_;
    bool gen_constant_ = true;
};

// Sampled minima of the Weitzenboeck and Robin eigenvalues; the declared
// (c1, c2) must lie below these up to tolerance.
inline std::pair<double, double> lower_bounds(const BundleModel& bundle,
                                              const ModelGeometry& geom, int sample_count,
                                              std::uint64_t seed = 99) {
    PathRng rng(splitmix64(seed));
    double wmin = std::numeric_limits<double>::infinity();
    double smin = std::numeric_limits<double>::infinity();
    bool any_plus = false;
    for (int k = 0; k < sample_count; ++k) {
        const Vecn x = BundleModel::sample_point(geom, rng);
        const Matn e = geom.reference_frame(x);
        Eigen::SelfAdjointEigenSolver<MatN> ew(bundle.weitzenbock_frame(geom, x, e));
        wmin = std::min(wmin, ew.eigenvalues().minCoeff());
        const Vecn y = BundleModel::sample_boundary_point(geom, rng);
        const Matn ey = geom.reference_frame(y);
        const MatN pp = bundle.proj_plus_frame(geom, y, ey);
        if (pp.cwiseAbs().maxCoeff() > 0.5) {
            any_plus = true;
            smin = std::min(smin,
                            BundleModel::min_eig_on_plus(bundle.robin_frame(geom, y, ey), pp));
        }
    }
    if (!any_plus) smin = 0.0;
    return {wmin, smin};
}

}  // namespace bundleheat
