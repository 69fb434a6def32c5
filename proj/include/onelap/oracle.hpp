#pragma once

// Closed-form 1D reference solutions on [-1,1] for the singular
// 1-Laplacian problem  -div(z) = f/u^gamma,  z = Du/|Du|,  u = 0 on the
// boundary in the relaxed sense.  These pairs feed the certificate tests
// and the continuation oracles.  Everything is piecewise polynomial and is
// evaluated with a fixed right-limit convention at breakpoints so sampling
// is deterministic.

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "grid.hpp"

namespace onelap {

struct Piece {
    double lo = 0.0;
    double hi = 0.0;
    std::vector<double> coef;  // c0 + c1 x + c2 x^2 + ...

    double eval(double x) const {
        double v = 0.0;
        for (std::size_t k = coef.size(); k-- > 0;) v = v * x + coef[k];
        return v;
    }
};

/// Piecewise polynomial on [lo of first piece, hi of last piece].
/// Pieces are half-open [lo, hi); a point on a breakpoint takes the value
/// of the piece to its right; the right endpoint takes the last piece.
struct PiecewiseFn {
    std::vector<Piece> pieces;

    double eval(double x) const {
        if (pieces.empty()) return 0.0;
        for (const Piece& p : pieces)
            if (x >= p.lo && x < p.hi) return p.eval(x);
        return pieces.back().eval(x);
    }

    double lo() const { return pieces.front().lo; }
    double hi() const { return pieces.back().hi; }

    std::vector<double> breakpoints() const {
        std::vector<double> bs;
        for (std::size_t k = 1; k < pieces.size(); ++k) bs.push_back(pieces[k].lo);
        return bs;
    }

    /// Exact running integral from the left endpoint.
    PiecewiseFn antiderivative() const {
        PiecewiseFn F;
        double acc = 0.0;
        for (const Piece& p : pieces) {
            Piece q;
            q.lo = p.lo;
            q.hi = p.hi;
            q.coef.assign(p.coef.size() + 1, 0.0);
            for (std::size_t k = 0; k < p.coef.size(); ++k) q.coef[k + 1] = p.coef[k] / double(k + 1);
            q.coef[0] = acc - q.eval(p.lo);
            acc = q.eval(p.hi);
            F.pieces.push_back(std::move(q));
        }
        return F;
    }
};

struct ClosedFormPair {
    std::string name;
    PiecewiseFn u;
    PiecewiseFn z;
    PiecewiseFn f;
    double gamma = 1.0;
    std::array<double, 2> domain{-1.0, 1.0};
};

inline PiecewiseFn pw_const(double c, double lo = -1.0, double hi = 1.0) {
    return {{{lo, hi, {c}}}};
}

inline PiecewiseFn pw_zero() { return pw_const(0.0); }
inline PiecewiseFn pw_one() { return pw_const(1.0); }

/// chi_(-1/2,1/2) with the right-limit convention (1 on [-1/2, 1/2)).
inline PiecewiseFn pw_chi() {
    return {{{-1.0, -0.5, {0.0}}, {-0.5, 0.5, {1.0}}, {0.5, 1.0, {0.0}}}};
}

inline PiecewiseFn pw_one_plus_x2() { return {{{-1.0, 1.0, {1.0, 0.0, 1.0}}}}; }

/// Tent datum: -x-1/2 left of -1/2, zero in the middle, x-1/2 right of 1/2.
inline PiecewiseFn pw_tent() {
    return {{{-1.0, -0.5, {-0.5, -1.0}}, {-0.5, 0.5, {0.0}}, {0.5, 1.0, {-0.5, 1.0}}}};
}

inline std::vector<ClosedFormPair> example1_pairs() {
    const PiecewiseFn f = pw_chi();
    const PiecewiseFn u1 = pw_const(0.5);
    const PiecewiseFn u2{{{-1.0, -0.5, {0.0}}, {-0.5, 0.5, {0.5}}, {0.5, 1.0, {0.0}}}};
    const PiecewiseFn z1{{{-1.0, -0.5, {1.0}}, {-0.5, 0.5, {0.0, -2.0}}, {0.5, 1.0, {-1.0}}}};
    const PiecewiseFn z2{{{-1.0, -0.5, {2.0, 2.0}}, {-0.5, 0.5, {0.0, -2.0}}, {0.5, 1.0, {-2.0, 2.0}}}};
    return {
        {"example1:u1z1", u1, z1, f, 1.0, {-1.0, 1.0}},
        {"example1:u2z1", u2, z1, f, 1.0, {-1.0, 1.0}},
        {"example1:u2z2", u2, z2, f, 1.0, {-1.0, 1.0}},
    };
}

inline std::vector<ClosedFormPair> example2_pairs() {
    const PiecewiseFn f = pw_tent();
    const PiecewiseFn u1 = pw_const(0.125);
    const PiecewiseFn u2{{{-1.0, -0.5, {0.0625}}, {-0.5, 0.5, {0.0}}, {0.5, 1.0, {0.0625}}}};
    const PiecewiseFn u3{{{-1.0, -0.25, {0.0625}}, {-0.25, 0.25, {0.0}}, {0.25, 1.0, {0.0625}}}};
    const PiecewiseFn z1{{{-1.0, -0.5, {1.0, 4.0, 4.0}},
                          {-0.5, 0.5, {0.0}},
                          {0.5, 1.0, {-1.0, 4.0, -4.0}}}};
    const PiecewiseFn z2{{{-1.0, -0.5, {1.0, 8.0, 8.0}},
                          {-0.5, 0.5, {0.0, 2.0}},
                          {0.5, 1.0, {-1.0, 8.0, -8.0}}}};
    const PiecewiseFn z3{{{-1.0, -0.5, {1.0, 8.0, 8.0}},
                          {-0.5, -0.25, {-1.0}},
                          {-0.25, 0.25, {0.0, 4.0}},
                          {0.25, 0.5, {1.0}},
                          {0.5, 1.0, {-1.0, 8.0, -8.0}}}};
    return {
        {"example2:u1z1", u1, z1, f, 1.0, {-1.0, 1.0}},
        {"example2:u2z2", u2, z2, f, 1.0, {-1.0, 1.0}},
        {"example2:u3z3", u3, z3, f, 1.0, {-1.0, 1.0}},
    };
}

/// The constant candidate: u = c with c^gamma = (1/2) integral of f, and
/// z ramping from +1 at the left end down to -1 at the right end through
/// z(x) = 1 - c^{-gamma} * F(x), F the running integral of f.  Works for
/// any nonnegative 1D datum with positive mass; |z| <= 1 holds because z
/// is nonincreasing between the two pinned endpoint values.
inline std::optional<ClosedFormPair> constant_solution(const PiecewiseFn& f, double gamma) {
    PiecewiseFn F = f.antiderivative();
    const double mass = F.eval(F.hi());
    if (!(mass > 0.0)) return std::nullopt;
    const double c = std::pow(0.5 * mass, 1.0 / gamma);
    const double scale = std::pow(c, -gamma);
    PiecewiseFn z = F;
    for (Piece& p : z.pieces) {
        for (double& co : p.coef) co *= -scale;
        p.coef[0] += 1.0;
    }
    // contract check: the construction pins z(-1)=1, z(1)=-1 and keeps
    // |z| <= 1 in between; verify by sampling rather than trusting algebra
    for (int k = 0; k <= 1000; ++k) {
        const double x = z.lo() + (z.hi() - z.lo()) * k / 1000.0;
        if (std::abs(z.eval(x)) > 1.0 + 1e-12) return std::nullopt;
    }
    ClosedFormPair pair;
    pair.name = "const";
    pair.u = pw_const(c, f.lo(), f.hi());
    pair.z = std::move(z);
    pair.f = f;
    pair.gamma = gamma;
    pair.domain = {f.lo(), f.hi()};
    return pair;
}

struct SampledPair {
    NodeField u;
    FaceField z;
    NodeField f;
    std::vector<double> breakpoints;
};

inline NodeField sample_nodes(const PiecewiseFn& fn, const Grid& g) {
    NodeField out(g.node_count());
    for (int i = 0; i < g.n[0]; ++i) out[i] = fn.eval(g.node_x(i));
    return out;
}

/// Node samples of u and face-midpoint samples of z (boundary faces sample
/// z on the boundary itself).
inline SampledPair sample_pair(const ClosedFormPair& pair, const Grid& g) {
    if (g.dim != 1) throw std::invalid_argument("sample_pair: 1D grids only");
    if (std::abs(g.a[0] - pair.domain[0]) > 1e-12 || std::abs(g.b[0] - pair.domain[1]) > 1e-12)
        throw std::invalid_argument("sample_pair: grid domain mismatch");
    SampledPair out;
    out.u = sample_nodes(pair.u, g);
    out.f = sample_nodes(pair.f, g);
    out.z = make_face_field(g);
    for (int i = 0; i <= g.n[0]; ++i) out.z.comp[0][i] = pair.z.eval(g.xface_x(i));
    out.breakpoints = pair.u.breakpoints();
    for (double b : pair.z.breakpoints()) out.breakpoints.push_back(b);
    for (double b : pair.f.breakpoints()) out.breakpoints.push_back(b);
    return out;
}

}  // namespace onelap
