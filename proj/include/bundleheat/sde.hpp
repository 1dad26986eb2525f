// bundleheat - reflected Brownian paths with frame lift, local time and the
// multiplicative functional
#pragma once

#include "bundleheat/bundle.hpp"
#include "bundleheat/common.hpp"
#include "bundleheat/geometry.hpp"
#include "bundleheat/rng.hpp"

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace bundleheat {

enum class Scheme { Overshoot, OneStepExact };

inline Scheme scheme_from_name(const std::string& s) {
    if (s == "overshoot") return Scheme::Overshoot;
    if (s == "onestep-exact") return Scheme::OneStepExact;
    throw ConfigError("unknown scheme: " + s);
}
inline std::string scheme_name(Scheme s) {
    return s == Scheme::Overshoot ? "overshoot" : "onestep-exact";
}

struct StepConfig {
    double dt = 1e-3;
    Scheme scheme = Scheme::OneStepExact;
    std::uint64_t seed = 1;
    long max_steps = 100000000;
    bool check_bound = true;     // per-step Prop-4.1 check on constant-coefficient bundles
    bool track_inverse = false;  // integrate M^{-1} alongside M
};

struct PathState {
    Vecn x;          // chart coordinates
    Matn frame;      // columns: g-orthonormal frame vectors in the chart basis
    double t = 0.0;
    double lambda = 0.0;  // boundary local time (Skorokhod normalization)
    MatN m;               // multiplicative functional
    MatN m_inv;           // inverse process, when tracked
    bool alive = true;
    bool inverse_valid = false;
    long steps = 0;
    long contacts = 0;
    double bound_violation = 0.0;  // max over steps of ||M||/exp(-c1 t/2 - c2 lambda) - 1
    std::string abort_reason;
};

// One-step update of the reflected normal coordinate and its local time.
//
// overshoot:      r' = |r + db|, dlambda = 2 max(0, -(r + db)).  The factor 2
//                 makes the single-step increment from r = 0 unbiased; the
//                 summed estimate still underestimates lambda at rate
//                 O(sqrt(dt)).
// onestep-exact:  samples (r', dlambda) from the exact joint law of reflected
//                 Brownian motion and its semimartingale local time at 0 over
//                 time dt, using the Brownian-bridge running-maximum law.
//
// db is the driving N(0, dt) increment; the exact scheme draws one extra
// uniform from rng.
inline std::pair<double, double> local_time_increment(double r, double db, double dt,
                                                      Scheme scheme, PathRng& rng) {
    if (r < -1e-12) throw DomainError("local_time_increment: negative normal coordinate");
    r = std::max(r, 0.0);
    if (scheme == Scheme::Overshoot) {
        const double cand = r + db;
        if (cand >= 0.0) return {cand, 0.0};
        return {-cand, -2.0 * cand};
    }
    // running maximum of -B over [0, dt] given its endpoint -db
    const double v = -db;
    const double u = rng.uniform_pos();
    const double mx = 0.5 * (v + std::sqrt(v * v - 2.0 * dt * std::log(u)));
    const double dl = std::max(0.0, mx - r);
    return {r + db + dl, dl};
}

namespace detail {

// Per-run precomputed data shared by all steps.
struct StepContext {
    const ModelGeometry* geom = nullptr;
    const BundleModel* bundle = nullptr;
    StepConfig cfg;
    double sqrt_dt = 0.0;
    MatN exp_w;      // exp(-W dt / 2) for the full step, frame-constant bundles
    MatN exp_w_inv;  // exp(+W dt / 2)
    MatN w_const;    // the constant frame matrix of W
    bool w_cached = false;
    bool do_bound = false;
    double recenter_threshold = 0.0;  // hemisphere chart colatitude
};

inline StepContext make_step_context(const ModelGeometry& geom, const BundleModel& bundle,
                                     const StepConfig& cfg) {
    if (!(cfg.dt > 0.0)) throw ConfigError("dt must be positive");
    if (geom.collar_radius() < kCollarInfinity &&
        cfg.dt >= geom.collar_radius() * geom.collar_radius() / 4.0)
        throw ConfigError("dt too large for the collar radius (need dt < r0^2/4)");
    StepContext ctx;
    ctx.geom = &geom;
    ctx.bundle = &bundle;
    ctx.cfg = cfg;
    ctx.sqrt_dt = std::sqrt(cfg.dt);
    if (bundle.constant_coefficient()) {
        PathRng probe(splitmix64(4242));
        const Vecn x = BundleModel::sample_point(geom, probe);
        ctx.w_const = bundle.weitzenbock_frame(geom, x, geom.reference_frame(x));
        ctx.exp_w = sym_exp(MatN(-0.5 * cfg.dt * ctx.w_const));
        ctx.exp_w_inv = sym_exp(MatN(0.5 * cfg.dt * ctx.w_const));
        ctx.w_cached = true;
        ctx.do_bound = cfg.check_bound;
    } else if (geom.id() == GeometryId::Hemisphere2D) {
        throw ConfigError("position-dependent generic bundles unsupported on the hemisphere");
    }
    if (geom.id() == GeometryId::Hemisphere2D)
        ctx.recenter_threshold = std::min(std::max(1e-3, 8.0 * ctx.sqrt_dt), M_PI / 8.0);
    return ctx;
}

inline void transport_frame(Matn& e, const Christoffel& gamma, const Vecn& dx) {
    const int n = static_cast<int>(e.rows());
    Matn upd = Matn::Zero(n, n);
    for (int k = 0; k < n; ++k)
        for (int i = 0; i < n; ++i) {
            const double dxi = dx(i);
            if (dxi == 0.0) continue;
            for (int j = 0; j < n; ++j) {
                const double c = gamma.at(k, i, j);
                if (c != 0.0) upd.row(k) += (c * dxi) * e.row(j);
            }
        }
    e -= upd;
}

inline Vecn drift_vector(const ModelGeometry& geom, const Vecn& x, const Christoffel& gamma) {
    const int n = geom.dim();
    const Matn gi = geom.metric_inverse(x);
    Vecn d = Vecn::Zero(n);
    for (int k = 0; k < n; ++k) {
        double acc = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                const double c = gamma.at(k, i, j);
                if (c != 0.0) acc += gi(i, j) * c;
            }
        d(k) = -0.5 * acc;
    }
    return d;
}

// Apply the interior part of the multiplicative update, M <- M exp(-W dt/2).
inline void update_m_interior(PathState& st, const StepContext& ctx, const Vecn& x_left,
                              const Matn& e_left, double step_dt) {
    const BundleModel& b = *ctx.bundle;
    if (ctx.w_cached && std::abs(step_dt - ctx.cfg.dt) < 1e-15 * (1.0 + ctx.cfg.dt)) {
        if (b.rank() == 1) {
            st.m(0, 0) *= ctx.exp_w(0, 0);
            if (st.inverse_valid) st.m_inv(0, 0) *= ctx.exp_w_inv(0, 0);
        } else {
            st.m = MatN(st.m * ctx.exp_w);
            if (st.inverse_valid) st.m_inv = MatN(ctx.exp_w_inv * st.m_inv);
        }
        return;
    }
    const MatN w =
        ctx.w_cached ? ctx.w_const : b.weitzenbock_frame(*ctx.geom, x_left, e_left);
    st.m = MatN(st.m * sym_exp(MatN(-0.5 * step_dt * w)));
    if (st.inverse_valid) st.m_inv = MatN(sym_exp(MatN(0.5 * step_dt * w)) * st.m_inv);
}

// Boundary contact: Robin weight then hard Dirichlet projection.
inline void update_m_contact(PathState& st, const StepContext& ctx, const Vecn& foot,
                             const Matn& e_left, double dlambda) {
    const BundleModel& b = *ctx.bundle;
    const MatN s = b.robin_frame(*ctx.geom, foot, e_left);
    const MatN pm = b.proj_minus_frame(*ctx.geom, foot, e_left);
    const bool has_dirichlet = pm.cwiseAbs().maxCoeff() > 1e-12;
    if (s.cwiseAbs().maxCoeff() > 0.0) {
        const MatN es = sym_exp(MatN(-dlambda * s));
        st.m = MatN(st.m * es);
        if (st.inverse_valid) st.m_inv = MatN(sym_exp(MatN(dlambda * s)) * st.m_inv);
    }
    if (has_dirichlet) {
        st.m = MatN(st.m * (MatN::Identity(b.rank(), b.rank()) - pm));
        st.inverse_valid = false;  // M is singular from here on
    }
    st.contacts += 1;
    st.lambda += dlambda;
}

inline void finish_step(PathState& st, const StepContext& ctx, double step_dt) {
    const ModelGeometry& geom = *ctx.geom;
    geom.canonicalize(st.x, &st.frame);
    st.t += step_dt;
    st.steps += 1;
    if (!st.x.allFinite() || !st.frame.allFinite() || !st.m.allFinite()) {
        st.alive = false;
        st.abort_reason = "NaN detected at step " + std::to_string(st.steps);
        return;
    }
    gram_schmidt_metric(st.frame, geom.metric(st.x));
    if (ctx.do_bound) {
        const double bound =
            std::exp(-0.5 * ctx.bundle->c1() * st.t - ctx.bundle->c2() * st.lambda);
        st.bound_violation = std::max(st.bound_violation, spectral_norm(st.m) / bound - 1.0);
    }
}

// Plain chart Euler-Maruyama move; used outside the collar.
inline void interior_move(PathState& st, const StepContext& ctx, PathRng& rng, double step_dt) {
    const ModelGeometry& geom = *ctx.geom;
    const int n = geom.dim();
    const Vecn x0 = st.x;
    const Christoffel gamma = geom.christoffel_at(x0);
    Vecn db(n);
    const double sdt = std::sqrt(step_dt);
    for (int i = 0; i < n; ++i) db(i) = sdt * rng.gauss();
    Vecn dx = st.frame * db + step_dt * drift_vector(geom, x0, gamma);
    update_m_interior(st, ctx, x0, st.frame, step_dt);
    transport_frame(st.frame, gamma, dx);
    st.x += dx;
    // freak excursion across the whole collar: reflect and account overshoot
    const double r_new = geom.collar_r(st.x);
    if (r_new < 0.0) {
        st.x(geom.radial_index()) -= 2.0 * geom.radial_sign() * r_new;
        st.frame.row(geom.radial_index()) *= -1.0;
        st.lambda += -2.0 * r_new;
        st.contacts += 1;
    }
}

// Collar move: the normal coordinate runs as a 1-D reflected motion with its
// local time, tangential coordinates follow the collar metric.
inline void collar_move(PathState& st, const StepContext& ctx, PathRng& rng, double step_dt) {
    const ModelGeometry& geom = *ctx.geom;
    const int n = geom.dim();
    const int k = geom.radial_index();
    const double s = geom.radial_sign();
    const Vecn x0 = st.x;
    const Matn e0 = st.frame;
    const Christoffel gamma = geom.christoffel_at(x0);
    const Vecn drift = drift_vector(geom, x0, gamma);
    const Matn gi = geom.metric_inverse(x0);
    const double sdt = std::sqrt(step_dt);

    const double r = std::max(geom.collar_r(x0), 0.0);
    const double r_star = std::max(r + s * drift(k) * step_dt, 0.0);
    const auto [r_new, dlambda] =
        local_time_increment(r_star, sdt * rng.gauss(), step_dt, ctx.cfg.scheme, rng);

    Vecn dx = Vecn::Zero(n);
    dx(k) = s * (r_new - r);
    for (int j = 0; j < n; ++j)
        if (j != k) dx(j) = std::sqrt(gi(j, j)) * sdt * rng.gauss() + drift(j) * step_dt;

    update_m_interior(st, ctx, x0, e0, step_dt);
    if (dlambda > 0.0) {
        Vecn foot = x0;
        foot(k) = geom.radial_offset();
        update_m_contact(st, ctx, foot, e0, dlambda);
    }
    transport_frame(st.frame, gamma, dx);
    st.x += dx;
}

inline void hemisphere_recentered_move(PathState& st, const StepContext& ctx, PathRng& rng,
                                       double step_dt) {
    const ModelGeometry& geom = *ctx.geom;
    const Eigen::Matrix3d rot =
        ModelGeometry::recenter_rotation(st.x(0), st.x(1), M_PI / 4.0);
    geom.rotate_chart_data(rot, st.x, st.frame);
    interior_move(st, ctx, rng, step_dt);
    geom.rotate_chart_data(rot.transpose(), st.x, st.frame);
}

inline void step_inner(PathState& st, const StepContext& ctx, PathRng& rng, double step_dt) {
    const ModelGeometry& geom = *ctx.geom;
    if (geom.collar_r(st.x) < geom.collar_radius())
        collar_move(st, ctx, rng, step_dt);
    else if (geom.id() == GeometryId::Hemisphere2D && st.x(0) < ctx.recenter_threshold)
        hemisphere_recentered_move(st, ctx, rng, step_dt);
    else
        interior_move(st, ctx, rng, step_dt);
    finish_step(st, ctx, step_dt);
}

}  // namespace detail

// Initial state at x0: reference frame, M = I, lambda = 0.
inline PathState initial_state(const Vecn& x0, const ModelGeometry& geom,
                               const BundleModel& bundle, bool track_inverse = false) {
    if (!geom.contains(x0)) throw DomainError("simulate_path: start point outside the manifold");
    PathState st;
    st.x = x0;
    geom.canonicalize(st.x);
    // the polar chart cannot represent a frame at the exact pole; nudge off it
    if (geom.id() == GeometryId::Hemisphere2D && st.x(0) < 1e-9) st.x(0) = 1e-9;
    st.frame = geom.reference_frame(st.x);
    st.m = MatN::Identity(bundle.rank(), bundle.rank());
    if (track_inverse) {
        st.m_inv = st.m;
        st.inverse_valid = true;
    }
    return st;
}

// Single step with the spec signature; estimator loops reuse a context.
inline PathState step(const PathState& state, const ModelGeometry& geom,
                      const BundleModel& bundle, const StepConfig& cfg, PathRng& rng) {
    if (!state.alive) throw DomainError("step: path is not alive");
    detail::StepContext ctx = detail::make_step_context(geom, bundle, cfg);
    PathState st = state;
    detail::step_inner(st, ctx, rng, cfg.dt);
    return st;
}

// Terminal state at time t (up to one partial step), deterministic given
// (seed, config).
inline PathState simulate_path(const Vecn& x0, double t, const ModelGeometry& geom,
                               const BundleModel& bundle, const StepConfig& cfg) {
    if (t < 0.0) throw ConfigError("simulate_path: negative time");
    detail::StepContext ctx = detail::make_step_context(geom, bundle, cfg);
    if (t / cfg.dt > static_cast<double>(cfg.max_steps))
        throw ConfigError("simulate_path: max_steps exceeded for the requested horizon");
    PathRng rng(cfg.seed);
    PathState st = initial_state(x0, geom, bundle, cfg.track_inverse);
    while (st.alive && st.t < t - 1e-15) {
        const double step_dt = std::min(cfg.dt, t - st.t);
        detail::step_inner(st, ctx, rng, step_dt);
    }
    return st;
}

// Visits the path at each requested time (sorted ascending); fn may stop the
// walk early by returning false. The context form shares precomputed data
// across a whole ensemble.
template <class Fn>
inline void simulate_with_context(const detail::StepContext& ctx, const Vecn& x0,
                                  const std::vector<double>& times, PathRng& rng, Fn&& fn) {
    PathState st = initial_state(x0, *ctx.geom, *ctx.bundle, ctx.cfg.track_inverse);
    for (std::size_t i = 0; i < times.size(); ++i) {
        const double target = times[i];
        while (st.alive && st.t < target - 1e-15) {
            const double step_dt = std::min(ctx.cfg.dt, target - st.t);
            detail::step_inner(st, ctx, rng, step_dt);
            if (st.steps > ctx.cfg.max_steps)
                throw ConfigError("simulate_path: max_steps exceeded");
        }
        if (!fn(i, st)) return;
    }
}

template <class Fn>
inline void simulate_path_snapshots(const Vecn& x0, const std::vector<double>& times,
                                    const ModelGeometry& geom, const BundleModel& bundle,
                                    const StepConfig& cfg, PathRng& rng, Fn&& fn) {
    const detail::StepContext ctx = detail::make_step_context(geom, bundle, cfg);
    simulate_with_context(ctx, x0, times, rng, std::forward<Fn>(fn));
}

}  // namespace bundleheat
