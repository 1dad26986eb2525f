// bundleheat - Monte Carlo estimators: semigroup action, kernel histograms,
// conservation pairings, local-time moments, domination and L1 reports
#pragma once

#include "bundleheat/common.hpp"
#include "bundleheat/sde.hpp"
#include "bundleheat/sections.hpp"

#include <atomic>
#include <functional>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>
#include <vector>

namespace bundleheat {

struct EnsembleConfig {
    long paths = 100000;  // per starting point
    double dt = 1e-3;
    std::uint64_t seed = 1;
    Scheme scheme = Scheme::OneStepExact;
    int threads = 0;  // 0 = hardware concurrency
    int batches = 40;
    long max_steps = 100000000;
    bool check_bound = true;

    StepConfig step_config() const {
        StepConfig s;
        s.dt = dt;
        s.scheme = scheme;
        s.seed = seed;
        s.max_steps = max_steps;
        s.check_bound = check_bound;
        return s;
    }
    int effective_threads() const {
        if (threads > 0) return threads;
        const unsigned hw = std::thread::hardware_concurrency();
        return hw ? static_cast<int>(hw) : 1;
    }
    int effective_batches() const { return std::max(30, batches); }
};

struct Estimate {
    Eigen::VectorXd value;
    Eigen::VectorXd se;
    long n = 0;
    std::string fingerprint;
};

struct Assertion {
    std::string name;
    double estimate = 0.0;
    double se = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

inline std::string fingerprint_of(const std::string& quantity, const ModelGeometry& geom,
                                  const BundleModel& bundle, const EnsembleConfig& cfg,
                                  const std::string& extra) {
    std::ostringstream os;
    os << quantity << "|" << geom.name() << ":" << geom.dim() << "|" << bundle.name() << "|dt="
       << cfg.dt << "|paths=" << cfg.paths << "|seed=" << cfg.seed
       << "|scheme=" << scheme_name(cfg.scheme) << "|batches=" << cfg.effective_batches() << "|"
       << extra;
    return hex64(fnv1a(os.str()));
}

// ---------------------------------------------------------------------------
// Batched ensemble driver. Work is sharded by batch; each batch sums its
// paths in index order into its own row, and rows are reduced in batch order,
// so results are bit-identical for any thread count.

struct BatchSums {
    Eigen::MatrixXd sums;       // batches x slots
    std::vector<long> counts;   // paths per batch
    long paths = 0;

    Eigen::VectorXd mean() const {
        Eigen::VectorXd m = Eigen::VectorXd::Zero(sums.cols());
        for (int b = 0; b < sums.rows(); ++b) m += sums.row(b).transpose();
        return m / static_cast<double>(paths);
    }
    // batch-means standard error of the mean
    Eigen::VectorXd se() const {
        const int nb = static_cast<int>(sums.rows());
        Eigen::MatrixXd means(nb, sums.cols());
        for (int b = 0; b < nb; ++b) means.row(b) = sums.row(b) / static_cast<double>(counts[b]);
        const Eigen::VectorXd mu = means.colwise().mean();
        Eigen::VectorXd var = Eigen::VectorXd::Zero(sums.cols());
        for (int b = 0; b < nb; ++b) var += (means.row(b).transpose() - mu).array().square().matrix();
        var /= static_cast<double>(nb - 1) * nb;
        return var.array().sqrt();
    }
};

// per_path(global_index, rng, slot_accumulator)
template <class Fn>
inline BatchSums run_batched(const EnsembleConfig& cfg, long paths, int slots,
                             std::uint64_t stream_offset, Fn&& per_path) {
    const int nb = cfg.effective_batches();
    BatchSums out;
    out.paths = paths;
    out.sums = Eigen::MatrixXd::Zero(nb, slots);
    out.counts.assign(nb, 0);
    std::atomic<int> next{0};
    std::exception_ptr error;
    std::mutex error_mtx;
    auto worker = [&] {
        try {
            Eigen::VectorXd row(slots);
            for (int b = next.fetch_add(1); b < nb; b = next.fetch_add(1)) {
                const long lo = b * paths / nb;
                const long hi = (b + 1) * paths / nb;
                row.setZero();
                for (long i = lo; i < hi; ++i) {
                    PathRng rng(path_stream_seed(cfg.seed, stream_offset + i));
                    per_path(i, rng, row.data());
                }
                out.sums.row(b) = row;
                out.counts[b] = hi - lo;
            }
        } catch (...) {
            std::lock_guard<std::mutex> lk(error_mtx);
            if (!error) error = std::current_exception();
        }
    };
    const int nt = std::min<long>(cfg.effective_threads(), nb);
    std::vector<std::thread> pool;
    for (int i = 1; i < nt; ++i) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
    return out;
}

namespace detail {

// endpoint frame change: fiber rep of E^T g F(x_end)
inline MatN endpoint_rep(const ModelGeometry& geom, const BundleModel& bundle,
                         const PathState& st) {
    Vecn xe = st.x;
    if (geom.id() == GeometryId::Hemisphere2D && xe(0) < 1e-9) xe(0) = 1e-9;
    const Matn o = st.frame.transpose() * geom.metric(xe) * geom.reference_frame(xe);
    return bundle.rep(o);
}

inline VecN section_at_endpoint(const ModelGeometry& geom, const BundleModel& bundle,
                                const SectionField& s, const PathState& st) {
    Vecn xe = st.x;
    if (geom.id() == GeometryId::Hemisphere2D && xe(0) < 1e-9) xe(0) = 1e-9;
    return MatN(st.m * endpoint_rep(geom, bundle, st)) * s(xe);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Semigroup action (e^{-t Delta_{W,S}/2} phi)(x), reported in the reference
// frame at x. Standard error by batch means.

inline Estimate semigroup_apply(const SectionField& phi, const Vecn& x, double t,
                                const ModelGeometry& geom, const BundleModel& bundle,
                                const EnsembleConfig& cfg) {
    if (!phi.compliant)
        throw DomainError("semigroup_apply: section does not satisfy the boundary conditions");
    if (phi.rank != bundle.rank()) throw DomainError("semigroup_apply: section rank mismatch");
    if (!(t > 0.0)) throw DomainError("semigroup_apply: t must be positive");
    const auto ctx = bundleheat::detail::make_step_context(geom, bundle, cfg.step_config());
    const int rank = bundle.rank();
    const std::vector<double> times{t};
    BatchSums sums = run_batched(
        cfg, cfg.paths, rank, 0, [&](long, PathRng& rng, double* acc) {
            simulate_with_context(ctx, x, times, rng, [&](std::size_t, const PathState& st) {
                const VecN v = detail::section_at_endpoint(geom, bundle, phi, st);
                for (int j = 0; j < rank; ++j) acc[j] += v(j);
                return true;
            });
        });
    Estimate est;
    est.value = sums.mean();
    est.se = sums.se();
    est.n = cfg.paths;
    std::ostringstream extra;
    extra << "phi=" << phi.id << "|t=" << t << "|x=" << x.transpose();
    est.fingerprint = fingerprint_of("semigroup", geom, bundle, cfg, extra.str());
    return est;
}

// ---------------------------------------------------------------------------
// Kernel histogram: weighted endpoint binning realization of the kernel
// K_{W,S}(t; x, .), bin-averaged, with the endpoint count density doubling as
// the scalar Neumann kernel estimate.

struct ChartWindow {
    Vecn lo, hi;
    std::vector<int> bins;
};

struct KernelHistogram {
    ChartWindow window;
    int rank = 1;
    long paths = 0;
    double t = 0.0;
    std::vector<long> counts;
    std::vector<double> volumes;
    std::vector<Eigen::MatrixXd> kernel;     // bin-average of K_{W,S}
    std::vector<Eigen::MatrixXd> kernel_se;
    std::vector<double> density;     // endpoint count density per metric volume
    std::vector<double> density_se;
    double mass = 0.0;     // fraction of endpoints inside the window
    double mass_se = 0.0;
    std::string fingerprint;

    int nbins() const { return static_cast<int>(counts.size()); }
    bool missing(int i) const { return counts[i] == 0; }

    int flat_index(const std::vector<int>& idx) const {
        int f = 0;
        for (std::size_t d = 0; d < window.bins.size(); ++d) f = f * window.bins[d] + idx[d];
        return f;
    }
    // bin containing a chart point, or -1
    int locate(const Vecn& y) const {
        int f = 0;
        for (int d = 0; d < y.size(); ++d) {
            const double s = (y(d) - window.lo(d)) / (window.hi(d) - window.lo(d));
            const int i = static_cast<int>(std::floor(s * window.bins[d]));
            if (i < 0 || i >= window.bins[d]) return -1;
            f = f * window.bins[d] + i;
        }
        return f;
    }
    void bin_bounds(int flat, Vecn& lo, Vecn& hi) const {
        const int nd = static_cast<int>(window.bins.size());
        lo = window.lo;
        hi = window.hi;
        for (int d = nd - 1; d >= 0; --d) {
            const int i = flat % window.bins[d];
            flat /= window.bins[d];
            const double w = (window.hi(d) - window.lo(d)) / window.bins[d];
            lo(d) = window.lo(d) + i * w;
            hi(d) = lo(d) + w;
        }
    }
    Vecn bin_center(int flat) const {
        Vecn lo, hi;
        bin_bounds(flat, lo, hi);
        return 0.5 * (lo + hi);
    }
};

inline KernelHistogram kernel_estimate(const Vecn& x, double t, const ChartWindow& win,
                                       const ModelGeometry& geom, const BundleModel& bundle,
                                       const EnsembleConfig& cfg,
                                       std::uint64_t stream_offset = 0) {
    if (!(t > 0.0)) throw DomainError("kernel_estimate: t must be positive");
    const int rank = bundle.rank();
    const int nd = geom.dim();
    if (static_cast<int>(win.bins.size()) != nd)
        throw ConfigError("kernel_estimate: window dimension mismatch");
    int nbins = 1;
    for (int b : win.bins) nbins *= b;
    const int nn = rank * rank;
    const int slots = nbins * (nn + 1) + 1;  // matrices, counts, inside flag
    const auto ctx = bundleheat::detail::make_step_context(geom, bundle, cfg.step_config());
    const std::vector<double> times{t};

    KernelHistogram h;
    h.window = win;
    h.rank = rank;
    h.paths = cfg.paths;
    h.t = t;

    BatchSums sums = run_batched(
        cfg, cfg.paths, slots, stream_offset, [&](long, PathRng& rng, double* acc) {
            simulate_with_context(ctx, x, times, rng, [&](std::size_t, const PathState& st) {
                const int bin = h.locate(st.x);
                if (bin < 0) return true;
                acc[slots - 1] += 1.0;
                acc[nbins * nn + bin] += 1.0;
                const MatN a = MatN(st.m * detail::endpoint_rep(geom, bundle, st));
                double* cell = acc + bin * nn;
                for (int r = 0; r < rank; ++r)
                    for (int c = 0; c < rank; ++c) cell[r * rank + c] += a(r, c);
                return true;
            });
        });

    const Eigen::VectorXd mean = sums.mean();
    const Eigen::VectorXd se = sums.se();
    h.counts.resize(nbins);
    h.volumes.resize(nbins);
    h.kernel.resize(nbins);
    h.kernel_se.resize(nbins);
    h.density.resize(nbins);
    h.density_se.resize(nbins);
    for (int i = 0; i < nbins; ++i) {
        Vecn lo, hi;
        h.bin_bounds(i, lo, hi);
        h.volumes[i] = geom.chart_box_volume(lo, hi);
        h.counts[i] = std::lround(mean(nbins * nn + i) * cfg.paths);
        h.density[i] = mean(nbins * nn + i) / h.volumes[i];
        h.density_se[i] = se(nbins * nn + i) / h.volumes[i];
        h.kernel[i].resize(rank, rank);
        h.kernel_se[i].resize(rank, rank);
        for (int r = 0; r < rank; ++r)
            for (int c = 0; c < rank; ++c) {
                h.kernel[i](r, c) = mean(i * nn + r * rank + c) / h.volumes[i];
                h.kernel_se[i](r, c) = se(i * nn + r * rank + c) / h.volumes[i];
            }
    }
    h.mass = mean(slots - 1);
    h.mass_se = se(slots - 1);
    std::ostringstream extra;
    extra << "t=" << t << "|x=" << x.transpose() << "|off=" << stream_offset;
    h.fingerprint = fingerprint_of("kernel", geom, bundle, cfg, extra.str());
    return h;
}

// Spectral norm of a noisy matrix with a first-order (delta method) standard
// error from entrywise SEs.
inline std::pair<double, double> spectral_norm_with_se(const Eigen::MatrixXd& k,
                                                       const Eigen::MatrixXd& se) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(k, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const double nrm = svd.singularValues()(0);
    const Eigen::VectorXd u = svd.matrixU().col(0);
    const Eigen::VectorXd v = svd.matrixV().col(0);
    double var = 0.0;
    for (int i = 0; i < k.rows(); ++i)
        for (int j = 0; j < k.cols(); ++j) {
            const double c = u(i) * v(j) * se(i, j);
            var += c * c;
        }
    return {nrm, std::sqrt(var)};
}

// ---------------------------------------------------------------------------
// Node-grid machinery shared by the quadrature-based estimators: per starting
// node, cfg.paths paths with snapshots at the requested times; slot sums are
// batch-indexed so assembled functionals get batch-means errors.

struct NodeGrid {
    std::vector<Vecn> points;
    std::vector<double> weights;  // includes the metric volume density
};

inline NodeGrid make_node_grid(const ModelGeometry& geom, const Vecn& lo, const Vecn& hi,
                               const std::vector<int>& nodes) {
    TensorGrid tg;
    for (std::size_t d = 0; d < nodes.size(); ++d)
        tg.axes.push_back(Quad1D::gl(lo(static_cast<int>(d)), hi(static_cast<int>(d)),
                                     nodes[d]));
    NodeGrid g;
    for (std::size_t f = 0; f < tg.size(); ++f) {
        const Vecn x = tg.node(f);
        g.points.push_back(x);
        g.weights.push_back(tg.weight(f) * geom.sqrt_det_metric(x));
    }
    return g;
}

// Runs the per-node ensembles; eval(node, snapshot_index, state, acc) adds
// into the node-major slot block acc (size per node = slots_per_node).
template <class Fn>
inline BatchSums run_node_ensembles(const NodeGrid& grid, const std::vector<double>& times,
                                    const ModelGeometry& geom, const BundleModel& bundle,
                                    const EnsembleConfig& cfg, int slots_per_node, Fn&& eval) {
    const auto ctx = bundleheat::detail::make_step_context(geom, bundle, cfg.step_config());
    const int nq = static_cast<int>(grid.points.size());
    const int nb = cfg.effective_batches();
    BatchSums out;
    out.paths = cfg.paths;
    out.sums = Eigen::MatrixXd::Zero(nb, nq * slots_per_node);
    out.counts.assign(nb, 0);
    std::atomic<int> next{0};
    std::exception_ptr error;
    std::mutex error_mtx;
    auto worker = [&] {
        try {
            Eigen::VectorXd row(nq * slots_per_node);
            for (int b = next.fetch_add(1); b < nb; b = next.fetch_add(1)) {
                const long lo = b * cfg.paths / nb;
                const long hi = (b + 1) * cfg.paths / nb;
                row.setZero();
                for (int q = 0; q < nq; ++q) {
                    double* acc = row.data() + q * slots_per_node;
                    for (long i = lo; i < hi; ++i) {
                        PathRng rng(path_stream_seed(
                            cfg.seed, static_cast<std::uint64_t>(q) * cfg.paths + i));
                        simulate_with_context(ctx, grid.points[q], times, rng,
                                              [&](std::size_t s, const PathState& st) {
                                                  eval(q, s, st, acc);
                                                  return true;
                                              });
                    }
                }
                out.sums.row(b) = row;
                out.counts[b] = hi - lo;
            }
        } catch (...) {
            std::lock_guard<std::mutex> lk(error_mtx);
            if (!error) error = std::current_exception();
        }
    };
    const int nt = std::min<long>(cfg.effective_threads(), nb);
    std::vector<std::thread> pool;
    for (int i = 1; i < nt; ++i) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
    return out;
}

// Batch-means estimate of a functional assembled from the node slot means.
template <class Fn>
inline std::pair<double, double> assemble_batch_functional(const BatchSums& sums, Fn&& fn) {
    const int nb = static_cast<int>(sums.sums.rows());
    std::vector<double> vals(nb);
    for (int b = 0; b < nb; ++b) {
        const Eigen::VectorXd means = sums.sums.row(b).transpose() /
                                      static_cast<double>(sums.counts[b]);
        vals[b] = fn(means);
    }
    const double mu = std::accumulate(vals.begin(), vals.end(), 0.0) / nb;
    double var = 0.0;
    for (double v : vals) var += (v - mu) * (v - mu);
    const double pooled = fn(sums.mean());
    return {pooled, std::sqrt(var / (nb - 1) / nb)};
}

// ---------------------------------------------------------------------------
// Conservation pairing (e^{-t Delta/2} phi, eta) - (phi, eta), evaluated as
// (phi, e^{-t Delta/2} eta) over supp phi. eta must come from the closed-form
// harmonic catalogue unless explicitly run as a negative control.

struct PairingResult {
    std::vector<double> ts;
    Eigen::VectorXd value, se;
    double phi_eta = 0.0;
    std::string fingerprint;
    std::vector<Assertion> assertions;
};

inline PairingResult conservation_pairing(const SectionField& phi, const SectionField& eta,
                                          const std::vector<double>& ts,
                                          const ModelGeometry& geom, const BundleModel& bundle,
                                          const EnsembleConfig& cfg, int nodes_per_dim = 10,
                                          bool negative_control = false) {
    if (!phi.compliant || !phi.compact())
        throw DomainError("conservation_pairing: phi must be compactly supported and compliant");
    const bool harmonic = eta.id == "one" || eta.id == "dx1";
    if (!harmonic && !(negative_control && eta.id == "dx2"))
        throw DomainError("conservation_pairing: eta not in the closed-form harmonic catalogue");
    const int n = geom.dim();
    Vecn lo(n), hi(n);
    for (int d = 0; d < n; ++d) {
        lo(d) = phi.center(d) - phi.support_radius;
        hi(d) = phi.center(d) + phi.support_radius;
    }
    const int k = geom.radial_index();
    if (geom.radial_sign() > 0)
        lo(k) = std::max(lo(k), geom.radial_offset());
    else
        hi(k) = std::min(hi(k), geom.radial_offset());
    const NodeGrid grid = make_node_grid(geom, lo, hi, std::vector<int>(n, nodes_per_dim));

    const int nt = static_cast<int>(ts.size());
    BatchSums sums = run_node_ensembles(
        grid, ts, geom, bundle, cfg, nt, [&](int q, std::size_t s, const PathState& st, double* acc) {
            const VecN v = detail::section_at_endpoint(geom, bundle, eta, st);
            acc[s] += grid.weights[q] * phi(grid.points[q]).dot(v);
        });

    PairingResult out;
    out.ts = ts;
    out.value.resize(nt);
    out.se.resize(nt);
    double prod = 0.0;
    for (std::size_t q = 0; q < grid.points.size(); ++q)
        prod += grid.weights[q] * phi(grid.points[q]).dot(eta(grid.points[q]));
    out.phi_eta = prod;
    // sums are node-major blocks of size nt; fold nodes together per time
    for (int i = 0; i < nt; ++i) {
        auto fold = [&](const Eigen::VectorXd& means) {
            double acc = 0.0;
            for (std::size_t q = 0; q < grid.points.size(); ++q) acc += means(q * nt + i);
            return acc;
        };
        const auto [v, e] = assemble_batch_functional(sums, fold);
        out.value(i) = v - prod;
        out.se(i) = e;
    }
    std::ostringstream extra;
    extra << "phi=" << phi.id << "|eta=" << eta.id << "|nodes=" << nodes_per_dim;
    out.fingerprint = fingerprint_of("conservation", geom, bundle, cfg, extra.str());
    for (int i = 0; i < nt; ++i) {
        Assertion a;
        a.name = "conservation[t=" + std::to_string(ts[i]) + ",eta=" + eta.id + "]";
        a.estimate = out.value(i);
        a.se = out.se(i);
        a.tolerance = 3.0 * out.se(i);
        a.pass = harmonic ? std::abs(a.estimate) <= a.tolerance
                          : std::abs(a.estimate) > 5.0 * a.se;
        out.assertions.push_back(a);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Exponential local-time moments E[e^{-p kappa lambda_t}] with a log-linear
// (K1, K2) fit over the t-grid.

struct LocalTimeMomentResult {
    std::vector<double> ts;
    Eigen::VectorXd value, se;
    double k1 = 0.0, k2 = 0.0, k1_se = 0.0, k2_se = 0.0;
    bool heavy_tail_warning = false;
    double top_share = 0.0;  // mean share carried by the top 1% of samples
    std::string fingerprint;
};

inline LocalTimeMomentResult local_time_moment(const Vecn& x, const std::vector<double>& ts,
                                               double p, double kappa_bar,
                                               const ModelGeometry& geom,
                                               const BundleModel& bundle,
                                               const EnsembleConfig& cfg) {
    if (p < 1.0) throw DomainError("local_time_moment: p must be >= 1");
    if (kappa_bar > 0.0)
        throw DomainError("local_time_moment: kappa must be the (nonpositive) lower bound");
    const auto ctx = bundleheat::detail::make_step_context(geom, bundle, cfg.step_config());
    const int nt = static_cast<int>(ts.size());
    const double rate = -p * kappa_bar;
    std::vector<double> samples(cfg.paths, 0.0);
    BatchSums sums = run_batched(
        cfg, cfg.paths, nt, 0, [&](long i, PathRng& rng, double* acc) {
            simulate_with_context(ctx, x, ts, rng, [&](std::size_t s, const PathState& st) {
                const double v = std::exp(rate * st.lambda);
                acc[s] += v;
                if (s + 1 == ts.size()) samples[i] = v;
                return true;
            });
        });
    LocalTimeMomentResult out;
    out.ts = ts;
    out.value = sums.mean();
    out.se = sums.se();
    // heavy-tail diagnostic on the final-time samples
    std::sort(samples.begin(), samples.end(), std::greater<double>());
    const long top = std::max<long>(1, cfg.paths / 100);
    const double total = std::accumulate(samples.begin(), samples.end(), 0.0);
    const double tops = std::accumulate(samples.begin(), samples.begin() + top, 0.0);
    out.top_share = total > 0.0 ? tops / total : 0.0;
    out.heavy_tail_warning = out.top_share > 0.2;
    // log-linear fit  log m(t) = log K1 + K2 t
    if (nt >= 2) {
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        for (int i = 0; i < nt; ++i) {
            sx += ts[i];
            sy += std::log(out.value(i));
            sxx += ts[i] * ts[i];
            sxy += ts[i] * std::log(out.value(i));
        }
        const double denom = nt * sxx - sx * sx;
        out.k2 = (nt * sxy - sx * sy) / denom;
        out.k1 = std::exp((sy - out.k2 * sx) / nt);
        // delta-method variances from per-point relative errors
        double vslope = 0, vinter = 0;
        for (int i = 0; i < nt; ++i) {
            const double rel = out.se(i) / out.value(i);
            const double cs = (nt * ts[i] - sx) / denom;
            const double ci = 1.0 / nt - sx * (nt * ts[i] - sx) / (nt * denom);
            vslope += cs * cs * rel * rel;
            vinter += ci * ci * rel * rel;
        }
        out.k2_se = std::sqrt(vslope);
        out.k1_se = out.k1 * std::sqrt(vinter);
    }
    std::ostringstream extra;
    extra << "p=" << p << "|kappa=" << kappa_bar << "|x=" << x.transpose();
    out.fingerprint = fingerprint_of("localtime", geom, bundle, cfg, extra.str());
    return out;
}

// ---------------------------------------------------------------------------
// Domination table: per (y, t), the spectral norm of the estimated kernel
// matrix against the scalar Neumann oracle.

struct DominationRow {
    double t = 0.0;
    Vecn y;
    double knorm = 0.0, knorm_se = 0.0;
    double k0 = 0.0;
    double ratio = 0.0, ratio_rel_se = 0.0;
    double bound = 0.0;  // e^{-c1 t / 2} when c2 = 0, else 0 (unchecked)
    bool pass = true;
};

struct DominationReport {
    std::vector<DominationRow> rows;
    double c1_fit = 1.0, c2_fit = 0.0;  // ratio <= C1 e^{C2 t} fit
    bool all_pass = true;
    std::vector<Assertion> assertions;
    std::string fingerprint;
};

inline DominationReport domination_report(
    const Vecn& x, const std::vector<Vecn>& ys, const std::vector<double>& ts,
    const ChartWindow& win, const ModelGeometry& geom, const BundleModel& bundle,
    const EnsembleConfig& cfg, const std::function<double(double, const Vecn&)>& k0_oracle) {
    DominationReport rep;
    std::vector<double> log_ratios, fit_ts;
    for (std::size_t it = 0; it < ts.size(); ++it) {
        const KernelHistogram h =
            kernel_estimate(x, ts[it], win, geom, bundle, cfg,
                            static_cast<std::uint64_t>(it + 1) * 1000003ull * cfg.paths);
        for (const Vecn& y : ys) {
            const int bin = h.locate(y);
            if (bin < 0) throw ConfigError("domination_report: probe point outside the window");
            DominationRow row;
            row.t = ts[it];
            row.y = y;
            if (h.missing(bin)) {
                row.pass = false;
                rep.rows.push_back(row);
                rep.all_pass = false;
                continue;
            }
            const auto [nrm, nse] = spectral_norm_with_se(h.kernel[bin], h.kernel_se[bin]);
            row.knorm = nrm;
            row.knorm_se = nse;
            // oracle bin average (metric measure)
            Vecn blo, bhi;
            h.bin_bounds(bin, blo, bhi);
            TensorGrid tg;
            for (int d = 0; d < geom.dim(); ++d) tg.axes.push_back(Quad1D::gl(blo(d), bhi(d), 4));
            double k0 = 0.0;
            for (std::size_t f = 0; f < tg.size(); ++f) {
                const Vecn yy = tg.node(f);
                k0 += tg.weight(f) * geom.sqrt_det_metric(yy) * k0_oracle(ts[it], yy);
            }
            k0 /= h.volumes[bin];
            row.k0 = k0;
            row.ratio = nrm / k0;
            row.ratio_rel_se = nse / nrm;
            if (bundle.c2() == 0.0) {
                row.bound = std::exp(-0.5 * bundle.c1() * ts[it]);
                row.pass = row.ratio <= row.bound * (1.0 + 3.0 * row.ratio_rel_se);
                Assertion a;
                a.name = "domination[t=" + std::to_string(ts[it]) + "]";
                a.estimate = row.ratio;
                a.se = row.ratio * row.ratio_rel_se;
                a.tolerance = row.bound * (1.0 + 3.0 * row.ratio_rel_se);
                a.pass = row.pass;
                rep.assertions.push_back(a);
            }
            rep.all_pass = rep.all_pass && row.pass;
            if (row.ratio > 0.0) {
                log_ratios.push_back(std::log(row.ratio));
                fit_ts.push_back(ts[it]);
            }
            rep.rows.push_back(row);
        }
    }
    // least-squares fit of log ratio = log C1 + C2 t
    const int m = static_cast<int>(fit_ts.size());
    if (m >= 2) {
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        for (int i = 0; i < m; ++i) {
            sx += fit_ts[i];
            sy += log_ratios[i];
            sxx += fit_ts[i] * fit_ts[i];
            sxy += fit_ts[i] * log_ratios[i];
        }
        const double denom = m * sxx - sx * sx;
        if (std::abs(denom) > 1e-12) {
            rep.c2_fit = (m * sxy - sx * sy) / denom;
            rep.c1_fit = std::exp((sy - rep.c2_fit * sx) / m);
        }
    }
    rep.fingerprint = fingerprint_of("domination", geom, bundle, cfg, "grid");
    return rep;
}

// ---------------------------------------------------------------------------
// L1 growth of the evolved section by node quadrature, asserted against the
// domination fit C1 e^{C2 t}.

struct L1GrowthResult {
    std::vector<double> ts;
    Eigen::VectorXd value, se;
    double phi_l1 = 0.0;
    bool mass_leak_warning = false;
    std::vector<Assertion> assertions;
    std::string fingerprint;
};

inline L1GrowthResult l1_growth(const SectionField& phi, const std::vector<double>& ts,
                                const ModelGeometry& geom, const BundleModel& bundle,
                                const EnsembleConfig& cfg, const Vecn& lo, const Vecn& hi,
                                const std::vector<int>& nodes, double c1_fit, double c2_fit) {
    if (!phi.compliant || !phi.compact())
        throw DomainError("l1_growth: phi must be compactly supported and compliant");
    const NodeGrid grid = make_node_grid(geom, lo, hi, nodes);
    const int nt = static_cast<int>(ts.size());
    const int rank = bundle.rank();
    BatchSums sums = run_node_ensembles(
        grid, ts, geom, bundle, cfg, nt * rank,
        [&](int, std::size_t s, const PathState& st, double* acc) {
            const VecN v = detail::section_at_endpoint(geom, bundle, phi, st);
            for (int j = 0; j < rank; ++j) acc[s * rank + j] += v(j);
        });

    L1GrowthResult out;
    out.ts = ts;
    out.value.resize(nt);
    out.se.resize(nt);
    const int nq = static_cast<int>(grid.points.size());
    double edge_share = 0.0;
    for (int i = 0; i < nt; ++i) {
        auto fold = [&](const Eigen::VectorXd& means) {
            double acc = 0.0;
            for (int q = 0; q < nq; ++q) {
                double norm2 = 0.0;
                for (int j = 0; j < rank; ++j) {
                    const double u = means(q * nt * rank + i * rank + j);
                    norm2 += u * u;
                }
                acc += grid.weights[q] * std::sqrt(norm2);
            }
            return acc;
        };
        const auto [v, e] = assemble_batch_functional(sums, fold);
        out.value(i) = v;
        out.se(i) = e;
    }
    // mass-leak heuristic: window-edge nodes carrying visible mass at last t
    {
        const Eigen::VectorXd means = sums.mean();
        double total = 0.0, edge = 0.0;
        for (int q = 0; q < nq; ++q) {
            double norm2 = 0.0;
            for (int j = 0; j < rank; ++j) {
                const double u = means(q * nt * rank + (nt - 1) * rank + j);
                norm2 += u * u;
            }
            const double c = grid.weights[q] * std::sqrt(norm2);
            total += c;
            bool is_edge = false;
            for (int d = 0; d < geom.dim(); ++d) {
                const double span = hi(d) - lo(d);
                if (grid.points[q](d) < lo(d) + 0.05 * span ||
                    grid.points[q](d) > hi(d) - 0.05 * span)
                    is_edge = true;
            }
            if (is_edge) edge += c;
        }
        edge_share = total > 0.0 ? edge / total : 0.0;
    }
    out.mass_leak_warning = edge_share > 0.02;
    // ||phi||_1 over the same grid
    for (int q = 0; q < nq; ++q) out.phi_l1 += grid.weights[q] * phi(grid.points[q]).norm();
    for (int i = 0; i < nt; ++i) {
        Assertion a;
        a.name = "l1_growth[t=" + std::to_string(ts[i]) + "]";
        a.estimate = out.value(i);
        a.se = out.se(i);
        a.tolerance = c1_fit * std::exp(c2_fit * ts[i]) * out.phi_l1 + 3.0 * out.se(i);
        a.pass = a.estimate <= a.tolerance;
        out.assertions.push_back(a);
    }
    std::ostringstream extra;
    extra << "phi=" << phi.id << "|C1=" << c1_fit << "|C2=" << c2_fit;
    out.fingerprint = fingerprint_of("l1", geom, bundle, cfg, extra.str());
    return out;
}

// ---------------------------------------------------------------------------
// Integral identity residual (half-line scalar instances):
//   (e^{-t D/2} phi - phi, xi) + (1/2) int_0^t (e^{-tau D/2} phi, D xi) dtau
// with D xi evaluated by the discrete operator on the grid.

struct IntidentResult {
    double lhs = 0.0, rhs = 0.0, residual = 0.0, se = 0.0;
    Assertion assertion;
    std::string fingerprint;
};

inline IntidentResult intident_check(const SectionField& phi, const SectionField& xi, double t,
                                     const ModelGeometry& geom, const BundleModel& bundle,
                                     const EnsembleConfig& cfg, double xmax, int xcells = 150,
                                     int tau_nodes = 21, double robin_sigma = 0.0,
                                     double w_const = 0.0) {
    if (geom.dim() != 1 || bundle.rank() != 1)
        throw DomainError("intident_check: half-line scalar instances only");
    if (!phi.compliant || !phi.compact())
        throw DomainError("intident_check: phi must be compactly supported and compliant");
    // xi domain check: discrete Robin/Neumann trace
    const double h = xmax / xcells;
    auto xi_at = [&](double xq) {
        Vecn v(1);
        v(0) = xq;
        return xi(v)(0);
    };
    const double trace = (xi_at(h) - xi_at(0.0)) / h - robin_sigma * xi_at(0.0);
    if (std::abs(trace) > 1e-3 * (1.0 + std::abs(xi_at(0.0))))
        throw DomainError("intident_check: xi not in the discrete operator's domain");

    // Simpson grids in x and tau
    const Quad1D qx = Quad1D::simpson(0.0, xmax, xcells);
    const Quad1D qt = Quad1D::simpson(0.0, t, tau_nodes - 1);
    const int nq = static_cast<int>(qx.x.size());
    const int ntau = static_cast<int>(qt.x.size());

    // discrete generalized Laplacian: D xi = -xi'' + W xi (ghost node keeps
    // the Robin/Neumann condition)
    std::vector<double> dxi(nq), xiv(nq), phiv(nq);
    for (int i = 0; i < nq; ++i) {
        const double xq = qx.x[i];
        xiv[i] = xi_at(xq);
        Vecn v(1);
        v(0) = xq;
        phiv[i] = phi(v)(0);
        const double xm = i == 0 ? xi_at(h) - 2.0 * h * robin_sigma * xi_at(0.0) : xi_at(xq - h);
        const double xp = i == nq - 1 ? 0.0 : xi_at(xq + h);
        dxi[i] = -(xm - 2.0 * xiv[i] + xp) / (h * h) + w_const * xiv[i];
    }

    NodeGrid grid;
    for (int i = 0; i < nq; ++i) {
        Vecn v(1);
        v(0) = qx.x[i];
        grid.points.push_back(v);
        grid.weights.push_back(qx.w[i]);
    }
    std::vector<double> taus(qt.x.begin(), qt.x.end());
    taus[0] = std::max(taus[0], 0.0);  // tau = 0 handled exactly below
    BatchSums sums = run_node_ensembles(
        grid, taus, geom, bundle, cfg, ntau,
        [&](int, std::size_t s, const PathState& st, double* acc) {
            Vecn xe = st.x;
            acc[s] += st.m(0, 0) * phi(xe)(0);
        });

    auto fold = [&](const Eigen::VectorXd& means) {
        // u[q][s] = means(q * ntau + s); tau = 0 snapshot equals phi exactly
        double lhs = 0.0;
        for (int q = 0; q < nq; ++q)
            lhs += qx.w[q] * (means(q * ntau + ntau - 1) - phiv[q]) * xiv[q];
        double rhs = 0.0;
        for (int s = 0; s < ntau; ++s) {
            double inner = 0.0;
            for (int q = 0; q < nq; ++q) inner += qx.w[q] * means(q * ntau + s) * dxi[q];
            rhs += qt.w[s] * inner;
        }
        rhs *= -0.5;
        return lhs - rhs;
    };
    const auto [res, se] = assemble_batch_functional(sums, fold);
    IntidentResult out;
    out.residual = res;
    out.se = se;
    {
        const Eigen::VectorXd means = sums.mean();
        double lhs = 0.0;
        for (int q = 0; q < nq; ++q)
            lhs += qx.w[q] * (means(q * ntau + ntau - 1) - phiv[q]) * xiv[q];
        out.lhs = lhs;
        double rhs = 0.0;
        for (int s = 0; s < ntau; ++s) {
            double inner = 0.0;
            for (int q = 0; q < nq; ++q) inner += qx.w[q] * means(q * ntau + s) * dxi[q];
            rhs += qt.w[s] * inner;
        }
        out.rhs = -0.5 * rhs;
    }
    out.assertion.name = "intident[t=" + std::to_string(t) + "]";
    out.assertion.estimate = out.residual;
    out.assertion.se = out.se;
    out.assertion.tolerance = 3.0 * out.se;
    out.assertion.pass = std::abs(out.residual) <= out.assertion.tolerance;
    out.fingerprint = fingerprint_of("intident", geom, bundle, cfg, "t=" + std::to_string(t));
    return out;
}

}  // namespace bundleheat
