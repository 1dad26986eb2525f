// bundleheat - model geometries: charts, metric data, collars, shape operators
#pragma once

#include "bundleheat/common.hpp"

#include <array>
#include <cmath>
#include <string>

namespace bundleheat {

enum class GeometryId { HalfSpace, DiskExterior2D, Hemisphere2D };

// Sentinel collar radius for geometries whose normal exponential is global.
inline constexpr double kCollarInfinity = 1e30;

struct BoundaryData {
    Vecn y;        // boundary point, chart coordinates
    Vecn normal;   // inward unit normal, chart components
    Matn shape;    // shape operator as a (1,1) tensor in chart basis, extended by B(nu)=0
    Vecn kappas;   // principal curvatures, sorted ascending
};

// Curvature/collar constants recorded per catalogue entry.
struct GeometryWitness {
    double ric_lower;          // lower bound of Ric
    double shape_bound;        // sup |B|
    double collar_radius;      // r0
    double collar_sect_upper;  // upper sectional curvature bound on the collar
};

// A chart-based description of one of the three catalogue manifolds with
// boundary. Immutable; all member functions are pure.
//
//   half_space(n):  {x in R^n : x_{n-1} >= 0}, flat Cartesian chart.
//   disk_exterior(): {rho >= 1} in the plane, polar chart (rho, phi).
//   hemisphere():    upper unit hemisphere, polar chart (theta, phi),
//                    theta the colatitude, boundary at theta = pi/2.
class ModelGeometry {
  public:
    static ModelGeometry half_space(int n) {
        if (n < 1 || n > kMaxDim) throw ConfigError("half_space: dimension out of range");
        ModelGeometry g;
        g.id_ = GeometryId::HalfSpace;
        g.n_ = n;
        g.r0_ = kCollarInfinity;
        return g;
    }
    static ModelGeometry disk_exterior() {
        ModelGeometry g;
        g.id_ = GeometryId::DiskExterior2D;
        g.n_ = 2;
        g.r0_ = 0.5;
        return g;
    }
    static ModelGeometry hemisphere() {
        ModelGeometry g;
        g.id_ = GeometryId::Hemisphere2D;
        g.n_ = 2;
        g.r0_ = M_PI / 4.0;
        return g;
    }
    static ModelGeometry from_name(const std::string& name, int dimension) {
        if (name == "half_space") return half_space(dimension);
        if (name == "disk_exterior") return disk_exterior();
        if (name == "hemisphere") return hemisphere();
        throw ConfigError("unknown geometry: " + name);
    }

    GeometryId id() const { return id_; }
    int dim() const { return n_; }
    double collar_radius() const { return r0_; }

    std::string name() const {
        switch (id_) {
            case GeometryId::HalfSpace: return "half_space";
            case GeometryId::DiskExterior2D: return "disk_exterior";
            default: return "hemisphere";
        }
    }

    bool contains(const Vecn& x, double tol = 1e-12) const {
        return collar_r(x) >= -tol && (id_ != GeometryId::Hemisphere2D || x(0) >= -tol);
    }

    // ---- chart metric data ------------------------------------------------

    Matn metric(const Vecn& x) const {
        Matn g = Matn::Identity(n_, n_);
        switch (id_) {
            case GeometryId::HalfSpace: break;
            case GeometryId::DiskExterior2D: g(1, 1) = x(0) * x(0); break;
            case GeometryId::Hemisphere2D: {
                const double s = std::sin(x(0));
                g(1, 1) = s * s;
                break;
            }
        }
        return g;
    }

    Matn metric_inverse(const Vecn& x) const {
        Matn gi = Matn::Identity(n_, n_);
        switch (id_) {
            case GeometryId::HalfSpace: break;
            case GeometryId::DiskExterior2D: gi(1, 1) = 1.0 / (x(0) * x(0)); break;
            case GeometryId::Hemisphere2D: {
                const double s = std::sin(x(0));
                gi(1, 1) = 1.0 / (s * s);
                break;
            }
        }
        return gi;
    }

    double sqrt_det_metric(const Vecn& x) const {
        switch (id_) {
            case GeometryId::HalfSpace: return 1.0;
            case GeometryId::DiskExterior2D: return x(0);
            default: return std::sin(x(0));
        }
    }

    Christoffel christoffel_at(const Vecn& x) const {
        if (!chart_ok(x))
            throw DomainError(name() + ": point outside chart domain");
        Christoffel c;
        c.n = n_;
        switch (id_) {
            case GeometryId::HalfSpace: break;
            case GeometryId::DiskExterior2D: {
                const double rho = x(0);
                c.at(0, 1, 1) = -rho;
                c.at(1, 0, 1) = c.at(1, 1, 0) = 1.0 / rho;
                break;
            }
            case GeometryId::Hemisphere2D: {
                const double th = x(0);
                c.at(0, 1, 1) = -std::sin(th) * std::cos(th);
                const double ct = std::cos(th) / std::sin(th);
                c.at(1, 0, 1) = c.at(1, 1, 0) = ct;
                break;
            }
        }
        return c;
    }

    // Ricci tensor as a (1,1) tensor in the chart basis (flat entries: 0).
    Matn ricci_11(const Vecn& x) const {
        (void)x;
        if (id_ == GeometryId::Hemisphere2D) return Matn::Identity(n_, n_);
        return Matn::Zero(n_, n_);
    }

    // Orthonormal reference frame at x: Gram-Schmidt of the chart basis.
    // Diagonal for the whole catalogue.
    Matn reference_frame(const Vecn& x) const {
        Matn f = Matn::Identity(n_, n_);
        switch (id_) {
            case GeometryId::HalfSpace: break;
            case GeometryId::DiskExterior2D: f(1, 1) = 1.0 / x(0); break;
            case GeometryId::Hemisphere2D: {
                const double s = std::sin(x(0));
                if (s < 1e-12)
                    throw DomainError("hemisphere: reference frame undefined at the pole");
                f(1, 1) = 1.0 / s;
                break;
            }
        }
        return f;
    }

    // ---- collar (Fermi) coordinates ---------------------------------------
    // For the whole catalogue the signed collar coordinate is an affine
    // function of one chart coordinate:  r = radial_sign * (x[k] - offset).

    int radial_index() const { return id_ == GeometryId::HalfSpace ? n_ - 1 : 0; }
    double radial_sign() const { return id_ == GeometryId::Hemisphere2D ? -1.0 : 1.0; }
    double radial_offset() const {
        switch (id_) {
            case GeometryId::HalfSpace: return 0.0;
            case GeometryId::DiskExterior2D: return 1.0;
            default: return M_PI / 2.0;
        }
    }

    // Signed distance to the boundary; negative values may appear transiently
    // inside the stepper.
    double collar_r(const Vecn& x) const {
        return radial_sign() * (x(radial_index()) - radial_offset());
    }

    // (r, y) with y the boundary foot point. Requires r(x) < r0.
    std::pair<double, Vecn> collar_coords(const Vecn& x) const {
        const double r = collar_r(x);
        if (r < 0.0) throw DomainError(name() + ": point outside manifold");
        if (r >= r0_) throw DomainError(name() + ": point outside collar");
        Vecn y = x;
        y(radial_index()) = radial_offset();
        return {r, y};
    }

    Vecn collar_point(double r, const Vecn& y) const {
        if (r < 0.0 || r >= r0_) throw DomainError(name() + ": collar coordinate out of range");
        Vecn x = y;
        x(radial_index()) = radial_offset() + radial_sign() * r;
        return x;
    }

    // ---- boundary data -----------------------------------------------------

    Vecn inward_normal(const Vecn& y) const {
        Vecn nu = Vecn::Zero(n_);
        nu(radial_index()) = radial_sign();
        (void)y;
        return nu;
    }

    BoundaryData shape_operator(const Vecn& y, double tol = 1e-9) const {
        if (std::abs(collar_r(y)) > tol)
            throw DomainError(name() + ": shape_operator: point not on the boundary");
        BoundaryData b;
        b.y = y;
        b.y(radial_index()) = radial_offset();
        b.normal = inward_normal(y);
        b.shape = Matn::Zero(n_, n_);
        b.kappas = Vecn::Zero(n_ - 1);
        if (id_ == GeometryId::DiskExterior2D) {
            // unit circle with the normal pointing away from the origin
            b.shape(1, 1) = -1.0;
            b.kappas(0) = -1.0;
        }
        return b;
    }

    GeometryWitness witness() const {
        switch (id_) {
            case GeometryId::HalfSpace: return {0.0, 0.0, r0_, 0.0};
            case GeometryId::DiskExterior2D: return {0.0, 1.0, r0_, 0.0};
            default: return {1.0, 0.0, r0_, 1.0};
        }
    }

    // Lower bound of the principal-curvature sums kappa_(p) over the boundary.
    double kappa_lower(int p = 1) const {
        return id_ == GeometryId::DiskExterior2D ? -static_cast<double>(p) : 0.0;
    }

    // Metric volume of a chart-aligned box (density depends only on the radial
    // coordinate for the whole catalogue).
    double chart_box_volume(const Vecn& lo, const Vecn& hi) const {
        double v = 1.0;
        switch (id_) {
            case GeometryId::HalfSpace:
                for (int i = 0; i < n_; ++i) v *= hi(i) - lo(i);
                return v;
            case GeometryId::DiskExterior2D:
                return 0.5 * (hi(0) * hi(0) - lo(0) * lo(0)) * (hi(1) - lo(1));
            default:
                return (std::cos(lo(0)) - std::cos(hi(0))) * (hi(1) - lo(1));
        }
    }

    // ---- chart housekeeping -------------------------------------------------

    // Wrap angular coordinates and resolve the polar-chart identification
    // (theta, phi) ~ (-theta, phi + pi). Frame columns are adjusted in place.
    void canonicalize(Vecn& x, Matn* frame = nullptr) const {
        if (id_ == GeometryId::HalfSpace) return;
        if (id_ == GeometryId::Hemisphere2D && x(0) < 0.0) {
            x(0) = -x(0);
            x(1) += M_PI;
            if (frame) frame->row(0) *= -1.0;
        }
        x(1) = std::remainder(x(1), 2.0 * M_PI);
    }

    // ---- hemisphere ambient helpers (pole re-centering) ---------------------

    static Eigen::Vector3d sph_point(double th, double ph) {
        return {std::sin(th) * std::cos(ph), std::sin(th) * std::sin(ph), std::cos(th)};
    }
    // chart coordinate basis vectors in R^3 (d_phi not normalized)
    static void sph_basis(double th, double ph, Eigen::Vector3d& dth, Eigen::Vector3d& dph) {
        dth = {std::cos(th) * std::cos(ph), std::cos(th) * std::sin(ph), -std::sin(th)};
        dph = {-std::sin(th) * std::sin(ph), std::sin(th) * std::cos(ph), 0.0};
    }
    static void chart_of_point(const Eigen::Vector3d& p, double& th, double& ph) {
        th = std::acos(std::clamp(p(2), -1.0, 1.0));
        ph = (std::abs(p(0)) + std::abs(p(1)) < 1e-300) ? 0.0 : std::atan2(p(1), p(0));
    }

    // Rotation taking the point at colatitude th0 to colatitude target along
    // its meridian (away from the pole).
    static Eigen::Matrix3d recenter_rotation(double th0, double ph0, double target) {
        Eigen::Vector3d axis;
        if (std::sin(th0) < 1e-14)
            axis = Eigen::Vector3d(-std::sin(ph0), std::cos(ph0), 0.0);
        else {
            const Eigen::Vector3d p = sph_point(th0, ph0);
            axis = Eigen::Vector3d::UnitZ().cross(p).normalized();
        }
        return Eigen::AngleAxisd(target - th0, axis).toRotationMatrix();
    }

    // Push chart data (point + frame columns) through an ambient rotation and
    // back into chart coordinates.
    void rotate_chart_data(const Eigen::Matrix3d& rot, Vecn& x, Matn& frame) const {
        Eigen::Vector3d p = sph_point(x(0), x(1));
        Eigen::Vector3d dth, dph;
        sph_basis(x(0), x(1), dth, dph);
        std::array<Eigen::Vector3d, kMaxDim> cols;
        for (int a = 0; a < n_; ++a) cols[a] = frame(0, a) * dth + frame(1, a) * dph;
        p = rot * p;
        double th, ph;
        chart_of_point(p, th, ph);
        sph_basis(th, ph, dth, dph);
        const double s2 = std::max(std::sin(th) * std::sin(th), 1e-300);
        for (int a = 0; a < n_; ++a) {
            const Eigen::Vector3d v = rot * cols[a];
            frame(0, a) = v.dot(dth);
            frame(1, a) = v.dot(dph) / s2;
        }
        x(0) = th;
        x(1) = ph;
    }

  private:
    bool chart_ok(const Vecn& x) const {
        if (x.size() != n_) return false;
        switch (id_) {
            case GeometryId::HalfSpace: return x(n_ - 1) >= -1e-9;
            case GeometryId::DiskExterior2D: return x(0) >= 1.0 - 1e-9;
            default: return x(0) > 0.0 && x(0) <= M_PI / 2.0 + 1e-9;
        }
    }

    GeometryId id_ = GeometryId::HalfSpace;
    int n_ = 2;
    double r0_ = kCollarInfinity;
};

}  // namespace bundleheat
