#pragma once

// Staggered uniform grid on a 1D interval or 2D box with node-centered
// scalars and face-centered fluxes.
//
// Nodes include the boundary; homogeneous Dirichlet data enters through a
// ghost value 0 one spacing outside each boundary face.  With that
// convention the discrete gradient and divergence are exact negative
// adjoints of each other in the h^d-weighted inner products, so the Green
// formula
//
//     <div z, u> + <z, grad u> = 0          (all faces)
//
// holds to round-off, and the total variation picks up the boundary trace
// term |u| on each boundary face, which is what the certificate needs.

#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace onelap {

using NodeField = std::vector<double>;

/// Per-axis face component arrays; comp[1] stays empty in 1D.
struct FaceField {
    std::array<std::vector<double>, 2> comp;
};

struct Grid {
    int dim = 1;
    std::array<double, 2> a{-1.0, -1.0};
    std::array<double, 2> b{1.0, 1.0};
    std::array<int, 2> n{0, 1};     // nodes per axis; n[1]==1 in 1D
    std::array<double, 2> h{0.0, 0.0};

    int node_count() const { return n[0] * n[1]; }

    // Along axis k there are n[k]+1 face rows: index 0 and n[k] are the
    // boundary faces, index i in between separates nodes i-1 and i.
    int face_count(int axis) const {
        return axis == 0 ? (n[0] + 1) * n[1] : (n[1] + 1) * n[0];
    }

    int node_index(int i, int j) const { return j * n[0] + i; }
    int xface_index(int i, int j) const { return j * (n[0] + 1) + i; }
    int yface_index(int i, int j) const { return j * n[0] + i; }

    double node_x(int i) const { return a[0] + h[0] * i; }
    double node_y(int j) const { return a[1] + h[1] * j; }

    /// Coordinate of the face-row midpoint along axis 0; boundary faces sit
    /// on the boundary itself.
    double xface_x(int i) const {
        if (i == 0) return a[0];
        if (i == n[0]) return b[0];
        return a[0] + h[0] * (i - 0.5);
    }
    double yface_y(int j) const {
        if (j == 0) return a[1];
        if (j == n[1]) return b[1];
        return a[1] + h[1] * (j - 0.5);
    }

    double cell_volume() const { return dim == 1 ? h[0] : h[0] * h[1]; }
};

inline Grid build_grid(double a, double b, int n) {
    if (n < 3) throw std::invalid_argument("build_grid: need n >= 3, got " + std::to_string(n));
    if (!(a < b)) throw std::invalid_argument("build_grid: degenerate extents");
    Grid g;
    g.dim = 1;
    g.a = {a, 0.0};
    g.b = {b, 0.0};
    g.n = {n, 1};
    g.h = {(b - a) / (n - 1), 0.0};
    return g;
}

inline Grid build_grid(double ax, double bx, int nx, double ay, double by, int ny) {
    if (nx < 3 || ny < 3) throw std::invalid_argument("build_grid: need n >= 3 per axis");
    if (!(ax < bx) || !(ay < by)) throw std::invalid_argument("build_grid: degenerate extents");
    Grid g;
    g.dim = 2;
    g.a = {ax, ay};
    g.b = {bx, by};
    g.n = {nx, ny};
    g.h = {(bx - ax) / (nx - 1), (by - ay) / (ny - 1)};
    return g;
}

inline void check_node_shape(const NodeField& u, const Grid& g, const char* who) {
    if ((int)u.size() != g.node_count())
        throw std::invalid_argument(std::string(who) + ": node field size mismatch");
}

inline void check_face_shape(const FaceField& z, const Grid& g, const char* who) {
    if ((int)z.comp[0].size() != g.face_count(0))
        throw std::invalid_argument(std::string(who) + ": x-face size mismatch");
    if (g.dim == 2 && (int)z.comp[1].size() != g.face_count(1))
        throw std::invalid_argument(std::string(who) + ": y-face size mismatch");
}

inline FaceField make_face_field(const Grid& g, double value = 0.0) {
    FaceField z;
    z.comp[0].assign(g.face_count(0), value);
    if (g.dim == 2) z.comp[1].assign(g.face_count(1), value);
    return z;
}

/// Forward differences onto faces, ghost value 0 outside the boundary.
inline FaceField gradient(const NodeField& u, const Grid& g) {
    check_node_shape(u, g, "gradient");
    FaceField out = make_face_field(g);
    const int nx = g.n[0], ny = g.n[1];
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i <= nx; ++i) {
            const double ul = (i == 0) ? 0.0 : u[g.node_index(i - 1, j)];
            const double ur = (i == nx) ? 0.0 : u[g.node_index(i, j)];
            out.comp[0][g.xface_index(i, j)] = (ur - ul) / g.h[0];
        }
    if (g.dim == 2)
        for (int j = 0; j <= ny; ++j)
            for (int i = 0; i < nx; ++i) {
                const double ud = (j == 0) ? 0.0 : u[g.node_index(i, j - 1)];
                const double uu = (j == ny) ? 0.0 : u[g.node_index(i, j)];
                out.comp[1][g.yface_index(i, j)] = (uu - ud) / g.h[1];
            }
    return out;
}

/// Exact negative adjoint of `gradient` w.r.t. the h^d-weighted products.
inline NodeField divergence(const FaceField& z, const Grid& g) {
    check_face_shape(z, g, "divergence");
    NodeField out(g.node_count(), 0.0);
    const int nx = g.n[0], ny = g.n[1];
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            double d = (z.comp[0][g.xface_index(i + 1, j)] - z.comp[0][g.xface_index(i, j)]) / g.h[0];
            if (g.dim == 2)
                d += (z.comp[1][g.yface_index(i, j + 1)] - z.comp[1][g.yface_index(i, j)]) / g.h[1];
            out[g.node_index(i, j)] = d;
        }
    return out;
}

// Faces are grouped one-per-node for the isotropic magnitude: node (i,j)
// owns its right x-face and its top y-face; the left/bottom boundary faces
// form singleton groups.  Grouping (rather than averaging faces to cell
// centers) keeps the Cauchy-Schwarz bound  |<z, grad u>| <= max|z| TV(u)
// exact at the discrete level: each face appears in exactly one group.
template <class Fn>
inline void for_each_face_group(const Grid& g, bool include_boundary, Fn&& fn) {
    const int nx = g.n[0], ny = g.n[1];
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            int fx = -1, fy = -1;
            if (include_boundary || i + 1 <= nx - 1) fx = g.xface_index(i + 1, j);
            if (g.dim == 2 && (include_boundary || j + 1 <= ny - 1)) fy = g.yface_index(i, j + 1);
            if (fx >= 0 || fy >= 0) fn(fx, fy);
        }
    if (include_boundary) {
        for (int j = 0; j < ny; ++j) fn(g.xface_index(0, j), -1);
        if (g.dim == 2)
            for (int i = 0; i < nx; ++i) fn(-1, g.yface_index(i, 0));
    }
}

inline double total_variation(const NodeField& u, const Grid& g, bool include_boundary = true) {
    const FaceField grad = gradient(u, g);
    const double w = g.cell_volume();
    double tv = 0.0;
    for_each_face_group(g, include_boundary, [&](int fx, int fy) {
        const double gx = fx >= 0 ? grad.comp[0][fx] : 0.0;
        const double gy = fy >= 0 ? grad.comp[1][fy] : 0.0;
        tv += w * std::hypot(gx, gy);
    });
    return tv;
}

/// Grouped sup norm of a face field (plain max|z| in 1D).
inline double max_abs(const FaceField& z, const Grid& g, bool include_boundary = true) {
    check_face_shape(z, g, "max_abs");
    double m = 0.0;
    for_each_face_group(g, include_boundary, [&](int fx, int fy) {
        const double zx = fx >= 0 ? z.comp[0][fx] : 0.0;
        const double zy = fy >= 0 ? z.comp[1][fy] : 0.0;
        m = std::max(m, std::hypot(zx, zy));
    });
    return m;
}

/// Face inner product <z, grad u>; the discrete pairing measure mass.
inline double pairing(const FaceField& z, const NodeField& u, const Grid& g,
                      bool include_boundary = true) {
    check_face_shape(z, g, "pairing");
    const FaceField grad = gradient(u, g);
    const double w = g.cell_volume();
    double s = 0.0;
    for_each_face_group(g, include_boundary, [&](int fx, int fy) {
        if (fx >= 0) s += w * z.comp[0][fx] * grad.comp[0][fx];
        if (fy >= 0) s += w * z.comp[1][fy] * grad.comp[1][fy];
    });
    return s;
}

inline double integral(const NodeField& u, const Grid& g) {
    check_node_shape(u, g, "integral");
    double s = 0.0;
    for (double v : u) s += v;
    return s * g.cell_volume();
}

inline double norm_l1(const NodeField& u, const Grid& g) {
    check_node_shape(u, g, "norm_l1");
    double s = 0.0;
    for (double v : u) s += std::abs(v);
    return s * g.cell_volume();
}

inline double norm_l2(const NodeField& u, const Grid& g) {
    check_node_shape(u, g, "norm_l2");
    double s = 0.0;
    for (double v : u) s += v * v;
    return std::sqrt(s * g.cell_volume());
}

inline double norm_linf(const NodeField& u) {
    double m = 0.0;
    for (double v : u) m = std::max(m, std::abs(v));
    return m;
}

/// <a, b> over nodes with the h^d weight.
inline double node_inner(const NodeField& a, const NodeField& b, const Grid& g) {
    check_node_shape(a, g, "node_inner");
    check_node_shape(b, g, "node_inner");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s * g.cell_volume();
}

/// Boundary flux sum of the Green formula: for 1D, -u_0 z_L + u_{n-1} z_R
/// scaled by h^{d-1}; the quantity that <div z, u> + <z, grad u>_interior
/// must reproduce.
inline double boundary_flux(const FaceField& z, const NodeField& u, const Grid& g) {
    check_face_shape(z, g, "boundary_flux");
    check_node_shape(u, g, "boundary_flux");
    const int nx = g.n[0], ny = g.n[1];
    const double wx = g.dim == 2 ? g.h[1] : 1.0;
    double s = 0.0;
    for (int j = 0; j < ny; ++j) {
        s += wx * (-u[g.node_index(0, j)] * z.comp[0][g.xface_index(0, j)]
                   + u[g.node_index(nx - 1, j)] * z.comp[0][g.xface_index(nx, j)]);
    }
    if (g.dim == 2)
        for (int i = 0; i < nx; ++i) {
            s += g.h[0] * (-u[g.node_index(i, 0)] * z.comp[1][g.yface_index(i, 0)]
                           + u[g.node_index(i, ny - 1)] * z.comp[1][g.yface_index(i, ny)]);
        }
    return s;
}

}  // namespace onelap
