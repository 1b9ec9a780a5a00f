// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "dfd/core.hpp"
#include "dfd/dual.hpp"
#include "dfd/geometry.hpp"

namespace dfd {

inline constexpr double kRidgeLambdaDefault = 5e-3;
inline constexpr double kStrokeDeltaDefault = 1.0;  // boundary stroke, px

/// Smooth occupancy of one wedge from its signed distance.
template <class T>
T alpha_from_distance(const T& d, const T& eta) {
    using std::erf;
    constexpr double inv_sqrt2 = 0.7071067811865476;
    return 0.5 * (1.0 + erf(d * (inv_sqrt2 / eta)));
}

/// Boundary-center bump from the unoccluded distance.
template <class T>
T boundary_center_value(const T& u, double delta) {
    using std::exp;
    return exp(-(u * u) * (1.0 / (delta * delta)));
}

/// Collective alpha maps from per-wedge signed distances and smoothness.
/// `coll` receives (L+1) planes of npix values; plane 0 is the background
/// (alpha_0 == 1 convention), plane i is wedge i-1 attenuated by everything
/// in front of it. The planes sum to one at every pixel.
template <class T>
void collective_alphas(const PatchFields<T>& fields, const std::vector<T>& etas,
                       std::vector<T>& coll) {
    using std::erf;
    constexpr double inv_sqrt2 = 0.7071067811865476;
    const int L = fields.wedges;
    const size_t npix = static_cast<size_t>(fields.width) * fields.height;
    coll.assign(npix * (L + 1), T{});
    std::vector<T> occ(npix, T{1.0});
    for (int i = L - 1; i >= 0; --i) {
        const T* di = fields.dist(i);
        T* ci = coll.data() + static_cast<size_t>(i + 1) * npix;
        const T inv_eta = inv_sqrt2 / etas[i];
        for (size_t k = 0; k < npix; ++k) {
            const T a = 0.5 * (1.0 + erf(di[k] * inv_eta));
            ci[k] = a * occ[k];
            occ[k] = occ[k] * (1.0 - a);
        }
    }
    for (size_t k = 0; k < npix; ++k) coll[k] = occ[k];
}

/// Alpha compositing: colors[0] is the background color, colors[i] the
/// color of wedge i-1. Output interleaved RGB.
template <class T>
void composite_color(const T* coll, const std::array<T, 3>* colors, int L, size_t npix,
                     T* rgb) {
    for (size_t k = 0; k < npix * 3; ++k) rgb[k] = T{};
    for (int i = 0; i <= L; ++i) {
        const T* ci = coll + static_cast<size_t>(i) * npix;
        const std::array<T, 3>& col = colors[i];
        for (size_t k = 0; k < npix; ++k) {
            rgb[k * 3 + 0] += ci[k] * col[0];
            rgb[k * 3 + 1] += ci[k] * col[1];
            rgb[k * 3 + 2] += ci[k] * col[2];
        }
    }
}

template <class T>
void boundary_map(const std::vector<T>& u, double delta, std::vector<T>& b) {
    using std::exp;
    b.resize(u.size());
    const double inv_d2 = 1.0 / (delta * delta);
    for (size_t k = 0; k < u.size(); ++k) b[k] = exp(-(u[k] * u[k]) * inv_d2);
}

/// Sobel response magnitude of an interleaved 3-channel field, replicate
/// padding; per pixel the Euclidean norm over channels and both directions.
template <class T>
void sobel_magnitude(const T* rgb, int W, int H, T* out) {
    using std::sqrt;
    auto idx = [&](int x, int y) {
        x = x < 0 ? 0 : (x >= W ? W - 1 : x);
        y = y < 0 ? 0 : (y >= H ? H - 1 : y);
        return (static_cast<size_t>(y) * W + x) * 3;
    };
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            T acc{};
            for (int ch = 0; ch < 3; ++ch) {
                const T p00 = rgb[idx(x - 1, y - 1) + ch], p10 = rgb[idx(x, y - 1) + ch],
                        p20 = rgb[idx(x + 1, y - 1) + ch];
                const T p01 = rgb[idx(x - 1, y) + ch], p21 = rgb[idx(x + 1, y) + ch];
                const T p02 = rgb[idx(x - 1, y + 1) + ch], p12 = rgb[idx(x, y + 1) + ch],
                        p22 = rgb[idx(x + 1, y + 1) + ch];
                const T gx = (p20 - p00) + 2.0 * (p21 - p01) + (p22 - p02);
                const T gy = (p02 - p00) + 2.0 * (p12 - p10) + (p22 - p20);
                acc += gx * gx + gy * gy;
            }
            // The epsilon keeps the gradient finite on perfectly flat fields.
            out[static_cast<size_t>(y) * W + x] = sqrt(acc + 1e-24);
        }
    }
}

template <class T>
std::vector<T> sobel_magnitude(const std::vector<T>& rgb, int W, int H) {
    std::vector<T> out(static_cast<size_t>(W) * H);
    sobel_magnitude(rgb.data(), W, H, out.data());
    return out;
}

ImageD sobel_magnitude_image(const ImageD& rgb);

/// Solve the (l+1) x (l+1) system G c = r in place by Gaussian elimination
/// with partial pivoting. A collapsing pivot (possible only when the ridge
/// weight is zero) signals a degenerate alpha configuration.
template <class T, int MAXW = 8>
void solve_dense(std::array<std::array<T, MAXW>, MAXW>& G,
                 std::array<std::array<T, 3>, MAXW>& r, int n) {
    for (int k = 0; k < n; ++k) {
        int piv = k;
        double best = std::fabs(value_of(G[k][k]));
        for (int i = k + 1; i < n; ++i) {
            const double cand = std::fabs(value_of(G[i][k]));
            if (cand > best) {
                best = cand;
                piv = i;
            }
        }
        if (best < 1e-12) {
            throw NumericalError("ridge_colors: singular normal matrix (degenerate alphas)");
        }
        if (piv != k) {
            std::swap(G[piv], G[k]);
            std::swap(r[piv], r[k]);
        }
        const T inv = 1.0 / G[k][k];
        for (int i = k + 1; i < n; ++i) {
            const T f = G[i][k] * inv;
            for (int j = k; j < n; ++j) G[i][j] -= f * G[k][j];
            for (int ch = 0; ch < 3; ++ch) r[i][ch] -= f * r[k][ch];
        }
    }
    for (int k = n - 1; k >= 0; --k) {
        for (int ch = 0; ch < 3; ++ch) {
            T acc = r[k][ch];
            for (int j = k + 1; j < n; ++j) acc -= G[k][j] * r[j][ch];
            r[k][ch] = acc / G[k][k];
        }
    }
}

/// Ridge regression of the background + wedge colors against an observed
/// patch; the collective alpha planes are the design matrix columns.
/// Returned colors are unclamped.
template <class T>
std::vector<std::array<T, 3>> ridge_colors(const T* coll, int L, const ImageD& target,
                                           double lambda) {
    constexpr int MAXW = 8;
    const int n = L + 1;
    if (n > MAXW) throw ConfigError("ridge_colors: too many wedges");
    const size_t npix = static_cast<size_t>(target.width) * target.height;
    std::array<std::array<T, MAXW>, MAXW> G{};
    std::array<std::array<T, 3>, MAXW> r{};
    for (int i = 0; i < n; ++i) {
        const T* ai = coll + static_cast<size_t>(i) * npix;
        for (int j = i; j < n; ++j) {
            const T* aj = coll + static_cast<size_t>(j) * npix;
            T acc{};
            for (size_t k = 0; k < npix; ++k) acc += ai[k] * aj[k];
            G[i][j] = acc;
            if (j != i) G[j][i] = acc;
        }
        for (int ch = 0; ch < 3; ++ch) {
            T acc{};
            for (size_t k = 0; k < npix; ++k) acc += ai[k] * target.data[k * 3 + ch];
            r[i][ch] = acc;
        }
        G[i][i] += lambda;
    }
    solve_dense<T, MAXW>(G, r, n);
    std::vector<std::array<T, 3>> colors(n);
    for (int i = 0; i < n; ++i) colors[i] = r[i];
    return colors;
}

/// Joint ridge solve for a defocus-consistent pair: shared colors, two
/// alpha stacks (one per view).
template <class T>
std::vector<std::array<T, 3>> ridge_colors_pair(const T* coll_plus, const T* coll_minus, int L,
                                                const ImageD& target_plus,
                                                const ImageD& target_minus, double lambda) {
    constexpr int MAXW = 8;
    const int n = L + 1;
    if (n > MAXW) throw ConfigError("ridge_colors: too many wedges");
    const size_t npix = static_cast<size_t>(target_plus.width) * target_plus.height;
    std::array<std::array<T, MAXW>, MAXW> G{};
    std::array<std::array<T, 3>, MAXW> r{};
    for (int i = 0; i < n; ++i) {
        const T* pi = coll_plus + static_cast<size_t>(i) * npix;
        const T* mi = coll_minus + static_cast<size_t>(i) * npix;
        for (int j = i; j < n; ++j) {
            const T* pj = coll_plus + static_cast<size_t>(j) * npix;
            const T* mj = coll_minus + static_cast<size_t>(j) * npix;
            T acc{};
            for (size_t k = 0; k < npix; ++k) acc += pi[k] * pj[k] + mi[k] * mj[k];
            G[i][j] = acc;
            if (j != i) G[j][i] = acc;
        }
        for (int ch = 0; ch < 3; ++ch) {
            T acc{};
            for (size_t k = 0; k < npix; ++k) {
                acc += pi[k] * target_plus.data[k * 3 + ch] +
                       mi[k] * target_minus.data[k * 3 + ch];
            }
            r[i][ch] = acc;
        }
        G[i][i] += lambda;
    }
    solve_dense<T, MAXW>(G, r, n);
    std::vector<std::array<T, 3>> colors(n);
    for (int i = 0; i < n; ++i) colors[i] = r[i];
    return colors;
}

/// Full double-precision rasterization of one patch (exact Heaviside).
struct PatchMaps {
    ImageD color;        // 3 channels
    ImageD boundary;     // b map
    ImageD deriv;        // Sobel magnitude of color
    ImageD u;            // unoccluded boundary distance
    std::vector<ImageD> masks;       // hard unoccluded masks per wedge
    std::vector<ImageD> coll_alpha;  // background + wedges
};

PatchMaps render_patch_maps(const WedgePatch& patch, double delta = kStrokeDeltaDefault,
                            double w_scale = 1.0);

}  // namespace dfd
