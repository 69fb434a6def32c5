#pragma once

// Continuation in p: solve the regularized problems along a decreasing
// schedule p -> 1, warm-starting every stage from the previous one, and
// extract a limit candidate (u*, z*).  Each stage records the quantities
// tracked by the uniform estimates (total variation, sup norm, flux
// magnitude, truncation excess) so that the limit passage is auditable.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "onelap/grid.hpp"
#include "onelap/psolver.hpp"

namespace onelap {

struct AllSolvesFailed : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Decreasing p schedule with per-stage singular regularization eps.
/// An empty eps list selects eps_j = min(1e-6, (p_j - 1)^2): the singular
/// smoothing must vanish faster than the p-regularization, otherwise the
/// limit would be governed by eps instead of p.
struct Schedule {
    std::vector<double> p_values;
    std::vector<double> eps_values;  // empty: automatic coupling
    bool warm_start = true;
    double k_diag = 1.0;  // truncation level for the per-stage excess norm

    static Schedule standard() {
        Schedule s;
        s.p_values = {1.5, 1.2, 1.1, 1.05, 1.02, 1.01};
        return s;
    }

    double eps_for(std::size_t j) const {
        if (!eps_values.empty()) return eps_values[j];
        const double s = p_values[j] - 1.0;
        return std::min(1e-6, s * s);
    }

    void validate() const {
        if (p_values.empty()) throw std::invalid_argument("Schedule: empty p list");
        for (std::size_t j = 0; j < p_values.size(); ++j) {
            if (!(p_values[j] > 1.0)) throw std::invalid_argument("Schedule: p must exceed 1");
            if (j > 0 && !(p_values[j] < p_values[j - 1]))
                throw std::invalid_argument("Schedule: p values must be strictly decreasing");
        }
        if (!eps_values.empty()) {
            if (eps_values.size() != p_values.size())
                throw std::invalid_argument("Schedule: eps list length mismatch");
            for (std::size_t j = 0; j < eps_values.size(); ++j) {
                if (!(eps_values[j] > 0.0))
                    throw std::invalid_argument("Schedule: eps must be positive");
                if (j > 0 && eps_values[j] > eps_values[j - 1])
                    throw std::invalid_argument("Schedule: eps values must be nonincreasing");
            }
        }
        if (!(k_diag > 0.0)) throw std::invalid_argument("Schedule: k_diag must be positive");
    }
};

/// h^d-weighted L1 norm of the excess (u - k)^+.
inline double truncation_excess_l1(const NodeField& u, double k, const Grid& g) {
    check_node_shape(u, g, "truncation_excess_l1");
    double s = 0.0;
    for (double v : u) s += std::max(v - k, 0.0);
    return s * g.cell_volume();
}

struct ContinuationRecord {
    double p = 0.0;
    double eps = 0.0;
    double delta = 0.0;
    PSolution sol;
    double tv = 0.0;       // boundary-inclusive total variation of u_p
    double linf_u = 0.0;
    double max_z = 0.0;    // grouped face magnitude of z_p
    double gk_norm = 0.0;  // ||(u_p - k_diag)^+||_1
    double seconds = 0.0;
};

struct ContinuationResult {
    ProblemSpec spec;  // copied so the post-run checks are self-contained
    Schedule schedule;
    std::vector<ContinuationRecord> records;
    NodeField u_star;  // fields of the smallest-p stage, unclipped
    FaceField z_star;
    double z_tolerance = 0.0;  // declared overshoot max(0, max|z_star| - 1)
    int converged_stages = 0;
};

/// Solve every stage of the schedule.  A stage that fails to converge is
/// recorded as such and its best iterate still seeds the next stage; only
/// a schedule with no converged stage at all is an error.  `init`, when
/// given, seeds the first stage in place of the solver's default start.
inline ContinuationResult run_schedule(const ProblemSpec& spec, const Schedule& sched,
                                       const PSolveConfig& cfg_template,
                                       const NodeField* init = nullptr) {
    spec.validate();
    sched.validate();
    ContinuationResult res;
    res.spec = spec;
    res.schedule = sched;

    NodeField warm;
    bool have_warm = false;
    for (std::size_t j = 0; j < sched.p_values.size(); ++j) {
        PSolveConfig cfg = cfg_template;
        cfg.p = sched.p_values[j];
        cfg.eps = sched.eps_for(j);
        cfg.validate();

        ContinuationRecord rec;
        rec.p = cfg.p;
        rec.eps = cfg.eps;
        rec.delta = cfg.effective_delta(spec.grid);

        const NodeField* start =
            have_warm ? (sched.warm_start ? &warm : nullptr) : init;
        const auto t0 = std::chrono::steady_clock::now();
        rec.sol = solve_p_problem(spec, cfg, start);
        rec.seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

        rec.tv = total_variation(rec.sol.u, spec.grid);
        rec.linf_u = norm_linf(rec.sol.u);
        rec.max_z = max_abs(rec.sol.z, spec.grid);
        rec.gk_norm = truncation_excess_l1(rec.sol.u, sched.k_diag, spec.grid);
        if (rec.sol.converged) ++res.converged_stages;

        warm = rec.sol.u;
        have_warm = true;
        res.records.push_back(std::move(rec));
    }
    if (res.converged_stages == 0)
        throw AllSolvesFailed("run_schedule: no stage of the p schedule converged");

    const ContinuationRecord& last = res.records.back();
    res.u_star = last.sol.u;
    res.z_star = last.sol.z;
    res.z_tolerance = std::max(0.0, last.max_z - 1.0);
    return res;
}

struct DecayEntry {
    double p = 0.0;
    double excess = 0.0;  // ||(u_p - k)^+||_1
    double ratio = 0.0;   // excess / (p - 1)
};

/// Per-stage excess norms above level k.  The uniform sup bound manifests
/// as ratio staying bounded along the schedule (and excess -> 0 whenever
/// the limit stays below k).
inline std::vector<DecayEntry> linf_decay_check(const ContinuationResult& result, double k) {
    if (!(k > 0.0)) throw std::invalid_argument("linf_decay_check: k must be positive");
    std::vector<DecayEntry> out;
    out.reserve(result.records.size());
    for (const ContinuationRecord& rec : result.records) {
        DecayEntry e;
        e.p = rec.p;
        e.excess = truncation_excess_l1(rec.sol.u, k, result.spec.grid);
        e.ratio = e.excess / (rec.p - 1.0);
        out.push_back(e);
    }
    return out;
}

namespace detail {

/// Number of face groups (boundary included) and the group-set measure
/// h^d * count, the discrete stand-in for |domain| in the Young estimate.
inline double group_measure(const Grid& g) {
    long count = 0;
    for_each_face_group(g, true, [&](int, int) { ++count; });
    return g.cell_volume() * static_cast<double>(count);
}

/// Constant S of the embedding ||v||_q <= S TV(v) (boundary-inclusive TV,
/// q = d/(d-1)).  Exact 1/2 on an interval; in 2D probed on indicator and
/// bump fields with a 25% safety factor since no closed form is available.
inline double embedding_constant(const Grid& g) {
    if (g.dim == 1) return 0.5;
    double best = 0.0;
    const int nx = g.n[0], ny = g.n[1];
    auto probe = [&](const NodeField& v) {
        const double tv = total_variation(v, g);
        if (tv > 0.0) best = std::max(best, norm_l2(v, g) / tv);
    };
    for (double frac : {0.25, 0.5, 0.75}) {
        NodeField v(g.node_count(), 0.0);
        const int mx = std::max(1, static_cast<int>(frac * nx / 2));
        const int my = std::max(1, static_cast<int>(frac * ny / 2));
        for (int j = 0; j < ny; ++j)
            for (int i = 0; i < nx; ++i)
                if (std::abs(2 * i - (nx - 1)) <= 2 * mx && std::abs(2 * j - (ny - 1)) <= 2 * my)
                    v[g.node_index(i, j)] = 1.0;
        probe(v);
    }
    {
        NodeField v(g.node_count(), 0.0);
        for (int j = 0; j < ny; ++j)
            for (int i = 0; i < nx; ++i) {
                const double sx = std::sin(3.14159265358979324 * i / (nx - 1));
                const double sy = std::sin(3.14159265358979324 * j / (ny - 1));
                v[g.node_index(i, j)] = sx * sy;
            }
        probe(v);
    }
    return 1.25 * best;
}

/// Largest fixed point of t = A t^(1-gamma) + B, A, B >= 0.  The map is
/// concave increasing, so iterating down from any upper starting point
/// converges to the largest root.
inline double growth_fixed_point(double A, double B, double gamma) {
    if (gamma >= 1.0) return A + B;
    if (A == 0.0) return B;
    double t = std::max({1.0, 2.0 * B, std::pow(2.0 * A, 1.0 / gamma)});
    while (A * std::pow(t, 1.0 - gamma) + B > t) t *= 2.0;
    for (int it = 0; it < 200; ++it) {
        const double next = A * std::pow(t, 1.0 - gamma) + B;
        if (std::abs(next - t) <= 1e-15 * (1.0 + t)) return next;
        t = next;
    }
    return t;
}

}  // namespace detail

struct BvEntry {
    double p = 0.0;
    double tv = 0.0;     // measured boundary-inclusive TV(u_p)
    double bound = 0.0;  // explicit a priori bound for this stage
    bool within = false;
};

/// A priori BV bound per stage, assembled from the discrete energy
/// identity.  Chaining (with T = TV(u_p), boundary-inclusive)
///   T <= (1/p) sum (|grad u|^2 + delta^2)^{p/2} h^d + (p-1)/p |F|
///   sum (.)^{p/2} h^d <= <z_p, grad u_p> + delta^p |F|
///   <z_p, grad u_p> = sum h^d f u/(u+eps)^gamma <= C_f ||u||_q^{1-gamma}
///   ||u||_q <= S T
/// gives T <= A T^{1-gamma} + B with A = C_f S^{1-gamma}/p and
/// B = (delta^p + p - 1) |F| / p, hence T is at most the largest root.
/// |F| is the group-set measure, C_f the Hoelder factor (||f||_1 in 1D).
inline std::vector<BvEntry> bv_uniform_check(const ContinuationResult& result) {
    const Grid& g = result.spec.grid;
    const double S = detail::embedding_constant(g);
    const double F = detail::group_measure(g);
    const double gamma = result.spec.gamma;
    double cf = 0.0;
    if (g.dim == 1) {
        cf = norm_l1(result.spec.f, g);
    } else {
        const double area = (g.b[0] - g.a[0]) * (g.b[1] - g.a[1]);
        cf = norm_l2(result.spec.f, g) * std::pow(area, 0.5 * gamma);
    }
    std::vector<BvEntry> out;
    out.reserve(result.records.size());
    for (const ContinuationRecord& rec : result.records) {
        const double A = cf * std::pow(S, 1.0 - gamma) / rec.p;
        const double B = (std::pow(rec.delta, rec.p) + (rec.p - 1.0)) * F / rec.p;
        BvEntry e;
        e.p = rec.p;
        e.tv = rec.tv;
        e.bound = detail::growth_fixed_point(A, B, gamma);
        e.within = e.tv <= e.bound;
        out.push_back(e);
    }
    return out;
}

struct LimitEstimate {
    NodeField u;
    FaceField z;
    double clip_excess = 0.0;  // largest grouped |z| overshoot removed
    std::string mode;
};

/// Limit candidate from the converged stages.  "last" takes the smallest-p
/// fields; "richardson" extrapolates u linearly in (p - 1) from the last
/// two converged stages (offered, but the certificate never assumes it).
/// z is always the last flux, rescaled groupwise onto |z| <= 1 with the
/// removed overshoot reported.
inline LimitEstimate limit_estimate(const ContinuationResult& result,
                                    const std::string& mode = "last") {
    std::vector<const ContinuationRecord*> conv;
    for (const ContinuationRecord& rec : result.records)
        if (rec.sol.converged) conv.push_back(&rec);
    if (conv.size() < 2)
        throw std::invalid_argument("limit_estimate: needs at least two converged stages");
    const ContinuationRecord& last = *conv.back();
    const ContinuationRecord& prev = *conv[conv.size() - 2];

    LimitEstimate est;
    est.mode = mode;
    if (mode == "last") {
        est.u = last.sol.u;
    } else if (mode == "richardson") {
        const double sl = last.p - 1.0;
        const double sp = prev.p - 1.0;
        const double w = sl / (sp - sl);
        est.u.resize(last.sol.u.size());
        for (std::size_t k = 0; k < est.u.size(); ++k)
            est.u[k] = std::max(0.0, last.sol.u[k] + (last.sol.u[k] - prev.sol.u[k]) * w);
    } else {
        throw std::invalid_argument("limit_estimate: unknown mode \"" + mode + "\"");
    }

    est.z = last.sol.z;
    const Grid& g = result.spec.grid;
    for_each_face_group(g, true, [&](int fx, int fy) {
        const double zx = fx >= 0 ? est.z.comp[0][fx] : 0.0;
        const double zy = fy >= 0 ? est.z.comp[1][fy] : 0.0;
        const double m = std::hypot(zx, zy);
        if (m > 1.0) {
            est.clip_excess = std::max(est.clip_excess, m - 1.0);
            if (fx >= 0) est.z.comp[0][fx] = zx / m;
            if (fy >= 0) est.z.comp[1][fy] = zy / m;
        }
    });
    return est;
}

}  // namespace onelap
