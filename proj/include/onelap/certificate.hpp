#pragma once

// Certificate: given a candidate pair (u, z) on a grid, compute a defect
// value for every condition that defines a solution (integrability of the
// singular term, the weak PDE on {u > 0}, the pairing identity, the
// interface alignment, the boundary condition, the support inclusion, and
// the variational identity against truncations) and render a pass/fail
// report.  Small defects are the operational meaning of "solution" here.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "onelap/grid.hpp"
#include "onelap/psolver.hpp"

namespace onelap {

struct InvalidCandidate : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Pass thresholds.  theta separates "zero" from "positive" node values,
/// theta_f does the same for the data, tol is the defect tolerance.  The
/// automatic rule ties theta to solver resolution and tol to grid
/// resolution: below those, zero and tiny are indistinguishable.
struct Thresholds {
    double theta = 0.0;
    double theta_f = 0.0;
    double tol = 0.0;

    static Thresholds automatic(const Grid& g, double eps_last = 0.0) {
        const double h = g.dim == 2 ? std::max(g.h[0], g.h[1]) : g.h[0];
        Thresholds t;
        t.theta = std::max(10.0 * eps_last, h);
        t.theta_f = t.theta;
        t.tol = 10.0 * h;
        return t;
    }

    void validate() const {
        if (!(theta > 0.0) || !(theta_f > 0.0) || !(tol > 0.0))
            throw std::invalid_argument("Thresholds: theta, theta_f, tol must be positive");
    }
};

/// Nondecreasing Lipschitz test nonlinearity h(s) = min(slope*s, cap) for
/// s >= 0.  slope=1, cap=k is the truncation T_k; slope=n, cap=1 is the
/// steep ramp n*T_{1/n} that approximates the indicator of {u > 0}.
struct HFun {
    double slope = 1.0;
    double cap = 1.0;
    double operator()(double s) const { return std::min(slope * std::max(s, 0.0), cap); }
};

/// Test family for the weak-form defects: compactly supported polynomial
/// bumps phi (zero on a margin near the boundary) plus truncation and
/// steepness levels for the nonlinearities h.
struct TestFamily {
    std::vector<NodeField> bumps;
    std::vector<double> trunc_levels;  // h = T_k
    std::vector<double> steep_levels;  // h = n T_{1/n}

    std::vector<HFun> h_functions() const {
        std::vector<HFun> hs;
        for (double k : trunc_levels) hs.push_back({1.0, k});
        for (double n : steep_levels) hs.push_back({n, 1.0});
        return hs;
    }

    /// Bumps ((1 - ((x-c)/w)^2)^+)^2 on a lattice of centers and widths,
    /// shrunk so every support keeps a two-cell margin; tensor products in
    /// 2D.  Plus one near-global bump.
    static TestFamily standard(const Grid& g) {
        TestFamily fam;
        fam.trunc_levels = {0.1, 0.25, 0.5, 1.0};
        fam.steep_levels = {10.0, 100.0};

        auto axis_bumps = [](double a, double b, double h) {
            // (center, width) pairs with support inside [a + 2h, b - 2h]
            std::vector<std::pair<double, double>> cw;
            const double len = b - a;
            auto add = [&](double c, double w) {
                w = std::min({w, c - (a + 2.0 * h), (b - 2.0 * h) - c});
                if (w > 4.0 * h) cw.emplace_back(c, w);
            };
            for (double s : {0.125, 0.25, 0.375, 0.5, 0.625, 0.75, 0.875})
                for (double wr : {0.1, 0.225}) add(a + s * len, wr * len);
            add(a + 0.5 * len, 0.5 * len - 2.0 * h);
            return cw;
        };
        auto bump = [](double x, double c, double w) {
            const double t = (x - c) / w;
            const double q = std::max(0.0, 1.0 - t * t);
            return q * q;
        };

        const auto cwx = axis_bumps(g.a[0], g.b[0], g.h[0]);
        if (g.dim == 1) {
            for (auto [c, w] : cwx) {
                NodeField phi(g.node_count(), 0.0);
                for (int i = 0; i < g.n[0]; ++i) phi[i] = bump(g.node_x(i), c, w);
                fam.bumps.push_back(std::move(phi));
            }
        } else {
            const auto cwy = axis_bumps(g.a[1], g.b[1], g.h[1]);
            for (auto [cx, wx] : cwx)
                for (auto [cy, wy] : cwy) {
                    NodeField phi(g.node_count(), 0.0);
                    for (int j = 0; j < g.n[1]; ++j)
                        for (int i = 0; i < g.n[0]; ++i)
                            phi[g.node_index(i, j)] =
                                bump(g.node_x(i), cx, wx) * bump(g.node_y(j), cy, wy);
                    fam.bumps.push_back(std::move(phi));
                }
        }
        return fam;
    }

    void validate(const Grid& g) const {
        for (double k : trunc_levels)
            if (!(k > 0.0)) throw std::invalid_argument("TestFamily: truncation level <= 0");
        for (double n : steep_levels)
            if (!(n > 0.0)) throw std::invalid_argument("TestFamily: steepness level <= 0");
        if (bumps.empty()) throw std::invalid_argument("TestFamily: no test functions");
        const int nx = g.n[0], ny = g.n[1];
        for (const NodeField& phi : bumps) {
            check_node_shape(phi, g, "TestFamily");
            for (int j = 0; j < ny; ++j)
                for (int i = 0; i < nx; ++i) {
                    const bool margin = i < 2 || i > nx - 3 || (g.dim == 2 && (j < 2 || j > ny - 3));
                    if (margin && phi[g.node_index(i, j)] != 0.0)
                        throw std::invalid_argument("TestFamily: bump touches the boundary margin");
                }
        }
    }
};

/// TV(u) - <z, grad u> over interior faces.  Nonnegative up to round-off
/// whenever |z| <= 1 groupwise; small value certifies that the pairing
/// measure saturates the gradient measure.
inline double pairing_defect(const NodeField& u, const FaceField& z, const Grid& g) {
    if (max_abs(z, g) > 1.0 + 1e-12)
        throw InvalidCandidate("pairing_defect: |z| exceeds 1 beyond round-off");
    return total_variation(u, g, false) - pairing(z, u, g, false);
}

namespace detail {

/// Active nodes for the PDE residual: u > theta and no face neighbor at or
/// below theta.  Interface-adjacent nodes are excluded because the precise
/// representative of the indicator takes value 1/2 there; their jump
/// content is audited by interface_defect instead.
inline std::vector<char> active_mask(const NodeField& u, double theta, const Grid& g) {
    const int nx = g.n[0], ny = g.n[1];
    std::vector<char> pos(u.size());
    for (std::size_t k = 0; k < u.size(); ++k) pos[k] = u[k] > theta ? 1 : 0;
    std::vector<char> act(u.size(), 0);
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            const int k = g.node_index(i, j);
            if (!pos[k]) continue;
            bool interior_of_support = true;
            if (i > 0 && !pos[g.node_index(i - 1, j)]) interior_of_support = false;
            if (i < nx - 1 && !pos[g.node_index(i + 1, j)]) interior_of_support = false;
            if (g.dim == 2) {
                if (j > 0 && !pos[g.node_index(i, j - 1)]) interior_of_support = false;
                if (j < ny - 1 && !pos[g.node_index(i, j + 1)]) interior_of_support = false;
            }
            act[k] = interior_of_support ? 1 : 0;
        }
    return act;
}

}  // namespace detail

/// Weak-form residual of -div z = f/u^gamma on the active set, maximized
/// over the test family and normalized by ||phi||_inf.  Weak rather than
/// nodewise: z may kink where the PDE still holds distributionally.
inline double pde_residual(const NodeField& u, const FaceField& z, const ProblemSpec& spec,
                           double theta, const TestFamily& fam) {
    if (!(theta > 0.0)) throw std::invalid_argument("pde_residual: theta must be positive");
    fam.validate(spec.grid);
    const Grid& g = spec.grid;
    check_node_shape(u, g, "pde_residual");
    check_face_shape(z, g, "pde_residual");

    const NodeField divz = divergence(z, g);
    const std::vector<char> act = detail::active_mask(u, theta, g);
    const double vol = g.cell_volume();

    double worst = 0.0;
    for (const NodeField& phi : fam.bumps) {
        double r = 0.0, phimax = 0.0;
        for (std::size_t k = 0; k < u.size(); ++k) {
            phimax = std::max(phimax, std::abs(phi[k]));
            if (!act[k]) continue;
            r += phi[k] * (-divz[k] - spec.f[k] / std::pow(u[k], spec.gamma));
        }
        if (phimax > 0.0) worst = std::max(worst, std::abs(r) * vol / phimax);
    }
    return worst;
}

inline double pde_residual(const NodeField& u, const FaceField& z, const ProblemSpec& spec,
                           double theta) {
    return pde_residual(u, z, spec, theta, TestFamily::standard(spec.grid));
}

/// Boundary defect: sum over boundary faces of |u_near| |1 + z.nu| times
/// the face measure, nu the outer normal.  Zero when the trace vanishes
/// or the flux is fully inward-saturated (z.nu = -1) there.
inline double boundary_defect(const NodeField& u, const FaceField& z, const Grid& g) {
    check_node_shape(u, g, "boundary_defect");
    check_face_shape(z, g, "boundary_defect");
    const int nx = g.n[0], ny = g.n[1];
    double s = 0.0;
    const double wx = g.dim == 2 ? g.h[1] : 1.0;
    for (int j = 0; j < ny; ++j) {
        const double zl = z.comp[0][g.xface_index(0, j)];
        const double zr = z.comp[0][g.xface_index(nx, j)];
        s += wx * std::abs(u[g.node_index(0, j)]) * std::abs(1.0 - zl);
        s += wx * std::abs(u[g.node_index(nx - 1, j)]) * std::abs(1.0 + zr);
    }
    if (g.dim == 2) {
        const double wy = g.h[0];
        for (int i = 0; i < nx; ++i) {
            const double zb = z.comp[1][g.yface_index(i, 0)];
            const double zt = z.comp[1][g.yface_index(i, ny)];
            s += wy * std::abs(u[g.node_index(i, 0)]) * std::abs(1.0 - zb);
            s += wy * std::abs(u[g.node_index(i, ny - 1)]) * std::abs(1.0 + zt);
        }
    }
    return s;
}

/// Measure of {u <= theta} cap {f >= theta_f} over interior nodes; zero
/// certifies that the solution vanishes only where the data does.
/// Boundary nodes are pinned to zero by the scheme and carry no
/// information, so they are not counted.
inline double support_defect(const NodeField& u, const NodeField& f, double theta, double theta_f,
                             const Grid& g) {
    if (!(theta > 0.0) || !(theta_f > 0.0))
        throw std::invalid_argument("support_defect: thresholds must be positive");
    check_node_shape(u, g, "support_defect");
    check_node_shape(f, g, "support_defect");
    const int nx = g.n[0], ny = g.n[1];
    long count = 0;
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            if (i == 0 || i == nx - 1 || (g.dim == 2 && (j == 0 || j == ny - 1))) continue;
            const int k = g.node_index(i, j);
            if (u[k] <= theta && f[k] >= theta_f) ++count;
        }
    return g.cell_volume() * static_cast<double>(count);
}

struct InterfaceReport {
    double defect = 0.0;   // max over interface faces of |1 - z.nu_jump|
    long count = 0;        // number of interface faces
    double perimeter = 0.0;  // count weighted by the face measure
};

/// Interface faces separate a node with u > theta from one with
/// u <= theta (interior faces only; the boundary trace is condition (e)'s
/// business).  nu_jump points from the zero side to the positive side, so
/// alignment of the pairing measure with the jump reads z.nu_jump = 1.
inline InterfaceReport interface_defect(const NodeField& u, const FaceField& z, double theta,
                                        const Grid& g) {
    if (!(theta > 0.0)) throw std::invalid_argument("interface_defect: theta must be positive");
    check_node_shape(u, g, "interface_defect");
    check_face_shape(z, g, "interface_defect");
    const int nx = g.n[0], ny = g.n[1];
    InterfaceReport rep;
    auto visit = [&](double ulo, double uhi, double zval) {
        // ulo at the lower-index node, uhi at the higher; zval is the face
        // component oriented toward increasing index.
        const bool plo = ulo > theta, phi_ = uhi > theta;
        if (plo == phi_) return;
        const double zdotnu = phi_ ? zval : -zval;
        rep.defect = std::max(rep.defect, std::abs(1.0 - zdotnu));
        ++rep.count;
    };
    for (int j = 0; j < ny; ++j)
        for (int i = 1; i < nx; ++i)
            visit(u[g.node_index(i - 1, j)], u[g.node_index(i, j)],
                  z.comp[0][g.xface_index(i, j)]);
    if (g.dim == 2)
        for (int j = 1; j < ny; ++j)
            for (int i = 0; i < nx; ++i)
                visit(u[g.node_index(i, j - 1)], u[g.node_index(i, j)],
                      z.comp[1][g.yface_index(i, j)]);
    rep.perimeter = static_cast<double>(rep.count) * (g.dim == 2 ? g.h[0] : 1.0);
    return rep;
}

/// Residual of the variational identity
///   int phi |D h(u)| + int h(u) z . grad phi = int (f/u^gamma) h(u) phi
/// maximized over the family's (h, phi) pairs, normalized by
/// ||phi||_inf (1 + ||h(u)||_1).  The singular quotient is exact: terms
/// with h(u) = 0 vanish, and h(u)/u^gamma stays bounded as u -> 0.
inline double variational_defect(const NodeField& u, const FaceField& z, const ProblemSpec& spec,
                                 const TestFamily& fam) {
    fam.validate(spec.grid);
    const Grid& g = spec.grid;
    check_node_shape(u, g, "variational_defect");
    check_face_shape(z, g, "variational_defect");
    const int nx = g.n[0], ny = g.n[1];
    const double vol = g.cell_volume();

    double worst = 0.0;
    for (const HFun& h : fam.h_functions()) {
        NodeField hu(u.size());
        double hu_l1 = 0.0;
        for (std::size_t k = 0; k < u.size(); ++k) {
            hu[k] = h(u[k]);
            hu_l1 += std::abs(hu[k]);
        }
        hu_l1 *= vol;
        const FaceField ghu = gradient(hu, g);
        // f h(u)/u^gamma nodewise, with the h(u) = 0 convention
        NodeField rhs(u.size(), 0.0);
        for (std::size_t k = 0; k < u.size(); ++k)
            if (hu[k] != 0.0) rhs[k] = spec.f[k] * hu[k] / std::pow(u[k], spec.gamma);

        for (const NodeField& phi : fam.bumps) {
            const FaceField gphi = gradient(phi, g);
            double t1 = 0.0, t2 = 0.0, t3 = 0.0, phimax = 0.0;
            // t1: group magnitude of D h(u) weighted by phi at the owner node
            for (int j = 0; j < ny; ++j)
                for (int i = 0; i < nx; ++i) {
                    const double gx = ghu.comp[0][g.xface_index(i + 1, j)];
                    const double gy = g.dim == 2 ? ghu.comp[1][g.yface_index(i, j + 1)] : 0.0;
                    t1 += phi[g.node_index(i, j)] * std::hypot(gx, gy);
                }
            for (int j = 0; j < ny; ++j) {
                const double gx = ghu.comp[0][g.xface_index(0, j)];
                t1 += phi[g.node_index(0, j)] * std::abs(gx);
            }
            if (g.dim == 2)
                for (int i = 0; i < nx; ++i) {
                    const double gy = ghu.comp[1][g.yface_index(i, 0)];
                    t1 += phi[g.node_index(i, 0)] * std::abs(gy);
                }
            // t2: face-averaged h(u) against z . grad phi, interior faces
            for (int j = 0; j < ny; ++j)
                for (int i = 1; i < nx; ++i) {
                    const int fx = g.xface_index(i, j);
                    const double avg =
                        0.5 * (hu[g.node_index(i - 1, j)] + hu[g.node_index(i, j)]);
                    t2 += avg * z.comp[0][fx] * gphi.comp[0][fx];
                }
            if (g.dim == 2)
                for (int j = 1; j < ny; ++j)
                    for (int i = 0; i < nx; ++i) {
                        const int fy = g.yface_index(i, j);
                        const double avg =
                            0.5 * (hu[g.node_index(i, j - 1)] + hu[g.node_index(i, j)]);
                        t2 += avg * z.comp[1][fy] * gphi.comp[1][fy];
                    }
            for (std::size_t k = 0; k < u.size(); ++k) {
                phimax = std::max(phimax, std::abs(phi[k]));
                t3 += rhs[k] * phi[k];
            }
            const double r = std::abs(t1 + t2 - t3) * vol;
            if (phimax > 0.0) worst = std::max(worst, r / (phimax * (1.0 + hu_l1)));
        }
    }
    return worst;
}

struct CertificateReport {
    // defects, one per condition
    double defect_a = 0.0;        // L1 proxy of f/u^gamma (finiteness)
    double defect_c = 0.0;        // weak PDE residual on the active set
    double defect_d_u = 0.0;      // TV(u) - <z, grad u>, interior faces
    double defect_d_chi = 0.0;    // interface alignment
    double defect_e = 0.0;        // boundary trace
    double defect_support = 0.0;  // {u = 0} vs {f = 0} inclusion
    double defect_var = 0.0;      // variational identity residual
    long interface_count = 0;
    double perimeter = 0.0;

    // strengthened checks, applied when min f > 0 (uniqueness regime)
    bool strengthened = false;
    double defect_b = 0.0;     // excess of ||f/u^gamma||_1 over the boundary measure
    double defect_sign = 0.0;  // worst |1 + z.nu| where the trace is positive

    // context values
    double tv_interior = 0.0;
    double pairing_value = 0.0;
    double max_z = 0.0;

    Thresholds thresholds;
    bool ok_a = false, ok_c = false, ok_d_u = false, ok_d_chi = false, ok_e = false;
    bool ok_support = false, ok_var = false, ok_b = true, ok_sign = true;
    bool pass = false;
};

/// Run every defect operation and render verdicts.  Throws
/// InvalidCandidate when |z| exceeds 1 beyond round-off (such a field can
/// pair with no gradient measure correctly).
inline CertificateReport certify(const NodeField& u, const FaceField& z, const ProblemSpec& spec,
                                 const Thresholds& th, const TestFamily& fam) {
    spec.validate();
    th.validate();
    const Grid& g = spec.grid;
    check_node_shape(u, g, "certify");
    check_face_shape(z, g, "certify");

    CertificateReport rep;
    rep.thresholds = th;
    rep.max_z = max_abs(z, g);

    // (a) integrability proxy: f / max(u, theta)^gamma over interior nodes
    {
        const int nx = g.n[0], ny = g.n[1];
        double s = 0.0;
        for (int j = 0; j < ny; ++j)
            for (int i = 0; i < nx; ++i) {
                if (i == 0 || i == nx - 1 || (g.dim == 2 && (j == 0 || j == ny - 1))) continue;
                const int k = g.node_index(i, j);
                s += spec.f[k] / std::pow(std::max(u[k], th.theta), spec.gamma);
            }
        rep.defect_a = s * g.cell_volume();
    }

    rep.defect_d_u = pairing_defect(u, z, g);  // throws InvalidCandidate on bad z
    rep.tv_interior = total_variation(u, g, false);
    rep.pairing_value = rep.tv_interior - rep.defect_d_u;
    if (rep.defect_d_u < -1e-12 * std::max(1.0, rep.tv_interior))
        throw std::logic_error("certify: pairing defect below the round-off floor");

    rep.defect_c = pde_residual(u, z, spec, th.theta, fam);
    const InterfaceReport ir = interface_defect(u, z, th.theta, g);
    rep.defect_d_chi = ir.defect;
    rep.interface_count = ir.count;
    rep.perimeter = ir.perimeter;
    rep.defect_e = boundary_defect(u, z, g);
    rep.defect_support = support_defect(u, spec.f, th.theta, th.theta_f, g);
    rep.defect_var = variational_defect(u, z, spec, fam);

    // strengthened regime: strictly positive data
    double fmin = spec.f.empty() ? 0.0 : spec.f[0];
    for (double v : spec.f) fmin = std::min(fmin, v);
    rep.strengthened = fmin > 0.0;
    if (rep.strengthened) {
        // global L1 bound of f/u^gamma: testing the equation with 1 leaves
        // only the boundary measure of the domain on the right-hand side
        double boundary_measure = 0.0;
        boundary_measure += 2.0 * (g.dim == 2 ? (g.b[1] - g.a[1]) : 1.0);
        if (g.dim == 2) boundary_measure += 2.0 * (g.b[0] - g.a[0]);
        rep.defect_b = std::max(0.0, rep.defect_a - boundary_measure);

        // the normal trace must sit at -1 wherever the solution is positive
        const int nx = g.n[0], ny = g.n[1];
        double worst = 0.0;
        for (int j = 0; j < ny; ++j) {
            if (u[g.node_index(0, j)] > th.theta)
                worst = std::max(worst, std::abs(1.0 - z.comp[0][g.xface_index(0, j)]));
            if (u[g.node_index(nx - 1, j)] > th.theta)
                worst = std::max(worst, std::abs(1.0 + z.comp[0][g.xface_index(nx, j)]));
        }
        if (g.dim == 2)
            for (int i = 0; i < nx; ++i) {
                if (u[g.node_index(i, 0)] > th.theta)
                    worst = std::max(worst, std::abs(1.0 - z.comp[1][g.yface_index(i, 0)]));
                if (u[g.node_index(i, ny - 1)] > th.theta)
                    worst = std::max(worst, std::abs(1.0 + z.comp[1][g.yface_index(i, ny)]));
            }
        rep.defect_sign = worst;
    }

    rep.ok_a = std::isfinite(rep.defect_a);
    rep.ok_c = rep.defect_c <= th.tol;
    rep.ok_d_u = rep.defect_d_u <= th.tol;
    rep.ok_d_chi = rep.defect_d_chi <= th.tol;
    rep.ok_e = rep.defect_e <= th.tol;
    rep.ok_support = rep.defect_support <= th.tol;
    rep.ok_var = rep.defect_var <= th.tol;
    rep.ok_b = !rep.strengthened || rep.defect_b <= th.tol;
    rep.ok_sign = !rep.strengthened || rep.defect_sign <= th.tol;
    rep.pass = rep.ok_a && rep.ok_c && rep.ok_d_u && rep.ok_d_chi && rep.ok_e && rep.ok_support &&
               rep.ok_var && rep.ok_b && rep.ok_sign;
    return rep;
}

inline CertificateReport certify(const NodeField& u, const FaceField& z, const ProblemSpec& spec,
                                 const Thresholds& th) {
    return certify(u, z, spec, th, TestFamily::standard(spec.grid));
}

}  // namespace onelap
