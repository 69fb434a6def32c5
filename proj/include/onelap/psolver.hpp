#pragma once

// Regularized singular p-Laplacian solver:
//
//     -div( (|grad u|^2 + delta^2)^{(p-2)/2} grad u ) = f / (u + eps)^gamma
//
// on the staggered grid, u = 0 at boundary nodes.  The gradient magnitude
// is taken per face group (see grid.hpp), which makes the scheme the exact
// Euler-Lagrange system of the convex energy
//
//     E(u) = (1/p) sum_groups h^d (|g|^2+delta^2)^{p/2} - sum h^d f Phi(u)
//
// so damped Newton with a residual-decrease line search and a Picard
// (frozen-coefficient) fallback is globally safe.  The Picard matrix is an
// M-matrix and its iterate stays nonnegative for nonnegative data; Newton
// iterates are projected onto u >= 0.

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "grid.hpp"

namespace onelap {

struct ProblemSpec {
    Grid grid;
    NodeField f;
    double gamma = 1.0;
    std::string f_name;

    void validate() const {
        check_node_shape(f, grid, "ProblemSpec");
        if (!(gamma > 0.0) || gamma > 1.0)
            throw std::invalid_argument("ProblemSpec: gamma must lie in (0,1]");
        for (double v : f)
            if (!(v >= 0.0)) throw std::invalid_argument("ProblemSpec: f must be nonnegative");
    }
};

struct PSolveConfig {
    double p = 1.5;
    double eps = 1e-6;       // singularity shift in (u+eps)^gamma
    double delta = -1.0;     // gradient regularization; <0 means max axis spacing
    double tol = 1e-6;       // relative residual tolerance
    int max_iter = 200;
    double damping = 0.5;    // backtracking factor
    double init_value = -1.0;  // <0: constant-solution magnitude heuristic

    void validate() const {
        if (!(p > 1.0)) throw std::invalid_argument("PSolveConfig: p must exceed 1");
        if (!(eps > 0.0)) throw std::invalid_argument("PSolveConfig: eps must be positive");
        if (!(tol > 0.0)) throw std::invalid_argument("PSolveConfig: tol must be positive");
        if (!(damping > 0.0 && damping < 1.0))
            throw std::invalid_argument("PSolveConfig: damping must lie in (0,1)");
        if (max_iter < 1) throw std::invalid_argument("PSolveConfig: max_iter must be positive");
    }

    double effective_delta(const Grid& g) const {
        return delta >= 0.0 ? delta : std::max(g.h[0], g.dim == 2 ? g.h[1] : 0.0);
    }
};

struct PSolution {
    NodeField u;
    FaceField z;
    std::vector<double> residual_history;  // accepted iterates, nonincreasing
    std::vector<double> energy_history;
    int iterations = 0;
    bool converged = false;
};

namespace detail {

/// Symmetric positive definite band matrix, lower storage:
/// entry(i, i-d) lives at band[i*(bw+1)+d], d = 0..bw.
struct BandedSpd {
    int m = 0, bw = 0;
    std::vector<double> band;

    BandedSpd(int m_, int bw_) : m(m_), bw(bw_), band(std::size_t(m_) * (bw_ + 1), 0.0) {}

    double& at(int i, int j) {  // requires i >= j, i-j <= bw
        return band[std::size_t(i) * (bw + 1) + (i - j)];
    }

    void add_sym(int i, int j, double v) {
        if (i < j) std::swap(i, j);
        at(i, j) += v;
    }

    // in-place Cholesky; false if a pivot is not positive
    bool factor() {
        for (int j = 0; j < m; ++j) {
            double d = at(j, j);
            const int k0 = std::max(0, j - bw);
            for (int k = k0; k < j; ++k) {
                const double l = at(j, k);
                d -= l * l;
            }
            if (!(d > 0.0)) return false;
            const double dj = std::sqrt(d);
            at(j, j) = dj;
            const int iend = std::min(m - 1, j + bw);
            for (int i = j + 1; i <= iend; ++i) {
                double s = at(i, j);
                const int kk0 = std::max({0, i - bw, j - bw});
                for (int k = kk0; k < j; ++k) s -= at(i, k) * at(j, k);
                at(i, j) = s / dj;
            }
        }
        return true;
    }

    void solve(std::vector<double>& x) const {
        for (int i = 0; i < m; ++i) {
            double s = x[i];
            const int k0 = std::max(0, i - bw);
            for (int k = k0; k < i; ++k) s -= band[std::size_t(i) * (bw + 1) + (i - k)] * x[k];
            x[i] = s / band[std::size_t(i) * (bw + 1)];
        }
        for (int i = m - 1; i >= 0; --i) {
            double s = x[i];
            const int kend = std::min(m - 1, i + bw);
            for (int k = i + 1; k <= kend; ++k) s -= band[std::size_t(k) * (bw + 1) + (k - i)] * x[k];
            x[i] = s / band[std::size_t(i) * (bw + 1)];
        }
    }
};

struct InteriorMap {
    int nx, ny, dim, m, bw;

    explicit InteriorMap(const Grid& g)
        : nx(g.n[0]), ny(g.n[1]), dim(g.dim),
          m(dim == 1 ? nx - 2 : (nx - 2) * (ny - 2)),
          bw(dim == 1 ? 1 : nx - 2) {}

    bool interior(int i, int j) const {
        if (i < 1 || i > nx - 2) return false;
        if (dim == 2 && (j < 1 || j > ny - 2)) return false;
        return true;
    }
    int index(int i, int j) const {
        return dim == 1 ? i - 1 : (j - 1) * (nx - 2) + (i - 1);
    }
};

}  // namespace detail

/// Flux of the regularized p-energy: per face group,
/// z = (|g|^2 + delta^2)^{(p-2)/2} g with the group gradient g.
inline FaceField extract_flux(const NodeField& u, double p, double delta, const Grid& g) {
    if (!(p > 1.0)) throw std::invalid_argument("extract_flux: p must exceed 1");
    const FaceField grad = gradient(u, g);
    FaceField z = make_face_field(g);
    const double d2 = delta * delta;
    for_each_face_group(g, true, [&](int fx, int fy) {
        const double gx = fx >= 0 ? grad.comp[0][fx] : 0.0;
        const double gy = fy >= 0 ? grad.comp[1][fy] : 0.0;
        const double w = std::pow(gx * gx + gy * gy + d2, 0.5 * (p - 2.0));
        if (fx >= 0) z.comp[0][fx] = w * gx;
        if (fy >= 0) z.comp[1][fy] = w * gy;
    });
    return z;
}

/// Primitive of s -> (s+eps)^{-gamma} vanishing at 0.
inline double singular_primitive(double s, double gamma, double eps) {
    if (gamma == 1.0) return std::log((s + eps) / eps);
    return (std::pow(s + eps, 1.0 - gamma) - std::pow(eps, 1.0 - gamma)) / (1.0 - gamma);
}

inline double p_energy(const NodeField& u, const ProblemSpec& spec, const PSolveConfig& cfg) {
    const Grid& g = spec.grid;
    check_node_shape(u, g, "p_energy");
    const double delta = cfg.effective_delta(g);
    const double d2 = delta * delta;
    const FaceField grad = gradient(u, g);
    double dir = 0.0;
    for_each_face_group(g, true, [&](int fx, int fy) {
        const double gx = fx >= 0 ? grad.comp[0][fx] : 0.0;
        const double gy = fy >= 0 ? grad.comp[1][fy] : 0.0;
        dir += std::pow(gx * gx + gy * gy + d2, 0.5 * cfg.p);
    });
    double pot = 0.0;
    for (int k = 0; k < g.node_count(); ++k)
        pot += spec.f[k] * singular_primitive(u[k], spec.gamma, cfg.eps);
    return g.cell_volume() * (dir / cfg.p - pot);
}

namespace detail {

inline NodeField solve_rhs(const ProblemSpec& spec, const PSolveConfig& cfg, const NodeField& u) {
    NodeField rhs(u.size());
    for (std::size_t k = 0; k < u.size(); ++k)
        rhs[k] = spec.f[k] / std::pow(u[k] + cfg.eps, spec.gamma);
    return rhs;
}

// residual F = -div z(u) - rhs at interior nodes (zero rows elsewhere)
inline NodeField residual(const ProblemSpec& spec, const PSolveConfig& cfg, double delta,
                          const NodeField& u, const NodeField& rhs) {
    const Grid& g = spec.grid;
    const FaceField z = extract_flux(u, cfg.p, delta, g);
    NodeField div = divergence(z, g);
    NodeField F(u.size(), 0.0);
    const InteriorMap im(g);
    for (int j = 0; j < g.n[1]; ++j)
        for (int i = 0; i < g.n[0]; ++i)
            if (im.interior(i, j)) {
                const int k = g.node_index(i, j);
                F[k] = -div[k] - rhs[k];
            }
    return F;
}

inline double interior_hnorm(const NodeField& v, const Grid& g) {
    const InteriorMap im(g);
    double s = 0.0;
    for (int j = 0; j < g.n[1]; ++j)
        for (int i = 0; i < g.n[0]; ++i)
            if (im.interior(i, j)) {
                const double x = v[g.node_index(i, j)];
                s += x * x;
            }
    return std::sqrt(s * g.cell_volume());
}

// Assemble the interior system matrix.  `newton` selects the exact Hessian
// block of the group energy; otherwise the frozen-coefficient (Picard)
// matrix.  The singular term contributes gamma f/(u+eps)^{gamma+1} to the
// diagonal in Newton mode only (Picard freezes the right-hand side).
inline BandedSpd assemble(const ProblemSpec& spec, const PSolveConfig& cfg, double delta,
                          const NodeField& u, bool newton) {
    const Grid& g = spec.grid;
    const InteriorMap im(g);
    BandedSpd A(im.m, im.bw);
    const double d2 = delta * delta;
    const FaceField grad = gradient(u, g);
    const double vol = g.cell_volume();

    const int nx = g.n[0], ny = g.n[1];
    struct Var {
        int k;        // matrix index, -1 if pinned
        double ax, ay;  // d(gx)/du, d(gy)/du
    };
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            // group owned by node (i,j): right x-face, top y-face
            const int fx = g.xface_index(i + 1, j);
            const int fy = g.dim == 2 ? g.yface_index(i, j + 1) : -1;
            const double gx = grad.comp[0][fx];
            const double gy = fy >= 0 ? grad.comp[1][fy] : 0.0;
            const double m2 = gx * gx + gy * gy + d2;

            Var vars[3];
            int nv = 0;
            if (im.interior(i, j))
                vars[nv++] = {im.index(i, j), -1.0 / g.h[0], g.dim == 2 ? -1.0 / g.h[1] : 0.0};
            if (i + 1 <= nx - 1 && im.interior(i + 1, j))
                vars[nv++] = {im.index(i + 1, j), 1.0 / g.h[0], 0.0};
            if (g.dim == 2 && j + 1 <= ny - 1 && im.interior(i, j + 1))
                vars[nv++] = {im.index(i, j + 1), 0.0, 1.0 / g.h[1]};
            if (nv == 0) continue;

            const double w = std::pow(m2, 0.5 * (cfg.p - 2.0));
            const double wp = newton ? (cfg.p - 2.0) * std::pow(m2, 0.5 * cfg.p - 2.0) : 0.0;
            // block B = w I + wp g g^T applied between variable directions
            for (int s = 0; s < nv; ++s)
                for (int t = s; t < nv; ++t) {
                    const double dot = vars[s].ax * vars[t].ax + vars[s].ay * vars[t].ay;
                    const double gs = vars[s].ax * gx + vars[s].ay * gy;
                    const double gt = vars[t].ax * gx + vars[t].ay * gy;
                    const double entry = vol * (w * dot + wp * gs * gt);
                    if (entry != 0.0) A.add_sym(vars[t].k, vars[s].k, entry);
                }
        }
    // lone left/bottom boundary faces touch only pinned values: no entries

    if (newton) {
        for (int j = 0; j < ny; ++j)
            for (int i = 0; i < nx; ++i)
                if (im.interior(i, j)) {
                    const int k = g.node_index(i, j);
                    const double d = spec.gamma * spec.f[k]
                                     / std::pow(u[k] + cfg.eps, spec.gamma + 1.0);
                    A.add_sym(im.index(i, j), im.index(i, j), vol * d);
                }
    }
    return A;
}

}  // namespace detail

/// Damped Newton with Picard fallback; returns the best iterate with the
/// converged flag reporting whether the residual test was met.  A warm
/// start field, when given, overrides the initialization rule.
inline PSolution solve_p_problem(const ProblemSpec& spec, const PSolveConfig& cfg,
                                 const NodeField* warm_start = nullptr) {
    spec.validate();
    cfg.validate();
    const Grid& g = spec.grid;
    const double delta = cfg.effective_delta(g);
    const detail::InteriorMap im(g);
    if (im.m < 1) throw std::invalid_argument("solve_p_problem: grid has no interior nodes");

    PSolution sol;
    sol.u.assign(g.node_count(), 0.0);
    if (warm_start != nullptr) {
        check_node_shape(*warm_start, g, "solve_p_problem warm start");
        for (int j = 0; j < g.n[1]; ++j)
            for (int i = 0; i < g.n[0]; ++i)
                if (im.interior(i, j)) {
                    const int k = g.node_index(i, j);
                    sol.u[k] = std::max(0.0, (*warm_start)[k]);
                }
    } else {
        double c = cfg.init_value;
        if (c < 0.0) {
            double mass = integral(spec.f, g);
            c = std::max(cfg.eps, std::pow(0.5 * mass, 1.0 / spec.gamma));
        }
        for (int j = 0; j < g.n[1]; ++j)
            for (int i = 0; i < g.n[0]; ++i)
                if (im.interior(i, j)) sol.u[g.node_index(i, j)] = c;
    }

    NodeField rhs = detail::solve_rhs(spec, cfg, sol.u);
    NodeField F = detail::residual(spec, cfg, delta, sol.u, rhs);
    double nF = detail::interior_hnorm(F, g);
    sol.residual_history.push_back(nF);
    sol.energy_history.push_back(p_energy(sol.u, spec, cfg));

    auto try_accept = [&](const NodeField& cand) -> bool {
        NodeField rhs_c = detail::solve_rhs(spec, cfg, cand);
        NodeField F_c = detail::residual(spec, cfg, delta, cand, rhs_c);
        const double n_c = detail::interior_hnorm(F_c, g);
        if (n_c < nF) {
            sol.u = cand;
            rhs = std::move(rhs_c);
            F = std::move(F_c);
            nF = n_c;
            return true;
        }
        return false;
    };

    auto project_step = [&](const NodeField& base, const std::vector<double>& step, double t) {
        NodeField cand = base;
        for (int j = 0; j < g.n[1]; ++j)
            for (int i = 0; i < g.n[0]; ++i)
                if (im.interior(i, j)) {
                    const int k = g.node_index(i, j);
                    cand[k] = std::max(0.0, base[k] + t * step[im.index(i, j)]);
                }
        return cand;
    };

    const int max_backtracks = 6;
    for (int it = 0; it < cfg.max_iter; ++it) {
        if (nF <= cfg.tol * (1.0 + detail::interior_hnorm(rhs, g))) {
            sol.iterations = it;
            sol.converged = true;
            break;
        }

        bool advanced = false;
        {
            detail::BandedSpd A = detail::assemble(spec, cfg, delta, sol.u, true);
            // A is the (h^d-scaled) energy Hessian, so the matching load is
            // the energy gradient h^d F
            std::vector<double> step(im.m);
            for (int j = 0; j < g.n[1]; ++j)
                for (int i = 0; i < g.n[0]; ++i)
                    if (im.interior(i, j))
                        step[im.index(i, j)] = -g.cell_volume() * F[g.node_index(i, j)];
            if (A.factor()) {
                A.solve(step);
                double t = 1.0;
                for (int bt = 0; bt < max_backtracks && !advanced; ++bt) {
                    advanced = try_accept(project_step(sol.u, step, t));
                    t *= cfg.damping;
                }
            }
        }
        if (!advanced) {
            // Picard: freeze coefficients and the singular term, solve the
            // linear problem, then damp toward it until the residual drops
            detail::BandedSpd A = detail::assemble(spec, cfg, delta, sol.u, false);
            std::vector<double> unew(im.m);
            for (int j = 0; j < g.n[1]; ++j)
                for (int i = 0; i < g.n[0]; ++i)
                    if (im.interior(i, j))
                        unew[im.index(i, j)] = g.cell_volume() * rhs[g.node_index(i, j)];
            if (A.factor()) {
                A.solve(unew);
                double t = 1.0;
                for (int bt = 0; bt < max_backtracks && !advanced; ++bt) {
                    NodeField cand = sol.u;
                    for (int j = 0; j < g.n[1]; ++j)
                        for (int i = 0; i < g.n[0]; ++i)
                            if (im.interior(i, j)) {
                                const int k = g.node_index(i, j);
                                cand[k] = std::max(
                                    0.0, (1.0 - t) * sol.u[k] + t * unew[im.index(i, j)]);
                            }
                    advanced = try_accept(cand);
                    t *= cfg.damping;
                }
            }
        }
        sol.iterations = it + 1;
        if (!advanced) break;  // stalled below the attainable floor
        sol.residual_history.push_back(nF);
        sol.energy_history.push_back(p_energy(sol.u, spec, cfg));
    }
    if (!sol.converged)
        sol.converged = nF <= cfg.tol * (1.0 + detail::interior_hnorm(rhs, g));

    sol.z = extract_flux(sol.u, cfg.p, delta, g);
    return sol;
}

/// Smallest value of u over nodes at least margin_cells spacings away from
/// the boundary; the discrete interior positivity constant.
inline double interior_positivity(const NodeField& u, const Grid& g, int margin_cells) {
    check_node_shape(u, g, "interior_positivity");
    if (margin_cells < 1) throw std::invalid_argument("interior_positivity: margin must be >= 1");
    const int nx = g.n[0], ny = g.n[1];
    if (2 * margin_cells >= nx - 1 || (g.dim == 2 && 2 * margin_cells >= ny - 1))
        throw std::invalid_argument("interior_positivity: margin too large for grid");
    double m = std::numeric_limits<double>::infinity();
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            if (i < margin_cells || i > nx - 1 - margin_cells) continue;
            if (g.dim == 2 && (j < margin_cells || j > ny - 1 - margin_cells)) continue;
            m = std::min(m, u[g.node_index(i, j)]);
        }
    return m;
}

/// Discrete analogue of the test-with-u energy identity: the solver's
/// Dirichlet form <z(u), grad u> on the left, integral of f u^{1-gamma} on
/// the right.  At a converged solution lhs <= rhs up to solver tolerance.
inline std::pair<double, double> bv_estimate_check(const PSolution& sol, const ProblemSpec& spec,
                                                   const PSolveConfig& /*cfg*/) {
    const Grid& g = spec.grid;
    const double lhs = pairing(sol.z, sol.u, g);
    double rhs = 0.0;
    for (int k = 0; k < g.node_count(); ++k)
        rhs += spec.f[k] * std::pow(sol.u[k], 1.0 - spec.gamma);
    rhs *= g.cell_volume();
    return {lhs, rhs};
}

}  // namespace onelap
