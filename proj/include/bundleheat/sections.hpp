// bundleheat - test sections: compliant bumps and the closed-form harmonic catalogue
#pragma once

#include "bundleheat/bundle.hpp"
#include "bundleheat/geometry.hpp"

#include <functional>
#include <limits>

namespace bundleheat {

// A section given by its components in the reference orthonormal frame at
// each chart point. Compactly supported sections are hard-zeroed outside
// support_radius around center.
struct SectionField {
    int rank = 1;
    std::function<VecN(const Vecn&)> eval_raw;
    Vecn center;
    double support_radius = std::numeric_limits<double>::infinity();
    bool compliant = false;
    std::string id;

    bool compact() const { return std::isfinite(support_radius); }

    VecN operator()(const Vecn& x) const {
        if (compact() && (x - center).norm() > support_radius) return VecN::Zero(rank);
        return eval_raw(x);
    }
};

namespace sections {

inline double gauss_profile(double d, double w) { return std::exp(-0.5 * d * d / (w * w)); }

// Scalar section identically 1 (bounded, harmonic, Neumann-compliant).
inline SectionField one() {
    SectionField s;
    s.rank = 1;
    s.eval_raw = [](const Vecn&) { return VecN::Ones(1); };
    s.compliant = true;
    s.id = "one";
    return s;
}

// Scalar Gaussian bump, made Neumann-compliant by even reflection of the
// profile in the collar coordinate. width w, support hard-zeroed at 6w.
inline SectionField scalar_bump(const ModelGeometry& geom, const Vecn& center, double w) {
    SectionField s;
    s.rank = 1;
    s.center = center;
    s.support_radius = 6.0 * w;
    const int k = geom.radial_index();
    const double off = geom.radial_offset();
    const double sign = geom.radial_sign();
    const double rc = sign * (center(k) - off);
    s.eval_raw = [=](const Vecn& x) {
        double tang = 0.0;
        for (int i = 0; i < x.size(); ++i)
            if (i != k) tang += (x(i) - center(i)) * (x(i) - center(i));
        const double r = sign * (x(k) - off);
        const double prof = gauss_profile(r - rc, w) + gauss_profile(r + rc, w);
        VecN v(1);
        v(0) = std::exp(-0.5 * tang / (w * w)) * prof;
        return v;
    };
    s.compliant = true;
    s.id = "bump";
    return s;
}

// Rotationally symmetric scalar cap bump on the hemisphere, centered at the
// pole; even reflection across the equator makes it Neumann-compliant.
inline SectionField polar_cap_bump(double w) {
    SectionField s;
    s.rank = 1;
    s.center = Vecn::Zero(2);
    s.support_radius = std::numeric_limits<double>::infinity();
    s.eval_raw = [w](const Vecn& x) {
        VecN v(1);
        v(0) = gauss_profile(x(0), w) + gauss_profile(M_PI - x(0), w);
        return v;
    };
    s.compliant = true;
    s.id = "cap_bump";
    return s;
}

// 1-form bump f dx1 on half_space(2); d f / d x2 = 0 on the boundary by even
// reflection, so the section is absolute-compliant.
inline SectionField form_bump_tangential(const Vecn& center, double w) {
    SectionField s;
    s.rank = 2;
    s.center = center;
    s.support_radius = 6.0 * w;
    const double c2 = center(1);
    s.eval_raw = [=](const Vecn& x) {
        VecN v = VecN::Zero(2);
        v(0) = gauss_profile(x(0) - center(0), w) *
               (gauss_profile(x(1) - c2, w) + gauss_profile(x(1) + c2, w));
        return v;
    };
    s.compliant = true;
    s.id = "bump_dx1";
    return s;
}

// 1-form bump h dx2 on half_space(2); h vanishes on the boundary by odd
// reflection, so Pi_- phi = 0 there.
inline SectionField form_bump_normal(const Vecn& center, double w) {
    SectionField s;
    s.rank = 2;
    s.center = center;
    s.support_radius = 6.0 * w;
    const double c2 = center(1);
    s.eval_raw = [=](const Vecn& x) {
        VecN v = VecN::Zero(2);
        v(1) = gauss_profile(x(0) - center(0), w) *
               (gauss_profile(x(1) - c2, w) - gauss_profile(x(1) + c2, w));
        return v;
    };
    s.compliant = true;
    s.id = "bump_dx2";
    return s;
}

// Constant coordinate 1-form dx_i on half_space(n). dx1 is bounded, harmonic
// and absolute; dx_n (the normal one) violates the Dirichlet condition and is
// only accepted as a negative control.
inline SectionField form_dx(const ModelGeometry& geom, int i) {
    SectionField s;
    s.rank = geom.dim();
    const int idx = i - 1;
    s.eval_raw = [rank = s.rank, idx](const Vecn&) {
        VecN v = VecN::Zero(rank);
        v(idx) = 1.0;
        return v;
    };
    s.compliant = idx != geom.dim() - 1;
    s.id = "dx" + std::to_string(i);
    return s;
}

// Constant spinor section lying in F+ / F- of the given involution.
inline SectionField spinor_constant(const BundleModel& bundle, const ModelGeometry& geom,
                                    bool plus) {
    Vecn y0 = Vecn::Zero(2);
    const Matn e = geom.reference_frame(y0);
    const MatN proj =
        plus ? bundle.proj_plus_frame(geom, y0, e) : bundle.proj_minus_frame(geom, y0, e);
    Eigen::SelfAdjointEigenSolver<MatN> es(proj);
    VecN dir = es.eigenvectors().col(es.eigenvalues().size() - 1);
    SectionField s;
    s.rank = 2;
    s.eval_raw = [dir](const Vecn&) { return dir; };
    s.compliant = plus;
    s.id = plus ? "spinor_plus" : "spinor_minus";
    return s;
}

}  // namespace sections

// Numerical compliance probe: max |Pi_- phi| over sampled boundary points.
inline double boundary_dirichlet_residual(const SectionField& phi, const BundleModel& bundle,
                                          const ModelGeometry& geom, int samples = 100,
                                          std::uint64_t seed = 7) {
    PathRng rng(splitmix64(seed));
    double worst = 0.0;
    for (int k = 0; k < samples; ++k) {
        const Vecn y = BundleModel::sample_boundary_point(geom, rng);
        const Matn e = geom.reference_frame(y);
        const VecN v = bundle.proj_minus_frame(geom, y, e) * phi(y);
        worst = std::max(worst, v.cwiseAbs().maxCoeff());
    }
    return worst;
}

}  // namespace bundleheat
