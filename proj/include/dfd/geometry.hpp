// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "dfd/core.hpp"
#include "dfd/dual.hpp"

namespace dfd {

inline constexpr double kEtaMinDefault = 0.3;
inline constexpr double kEtaMaxDefault = 6.0;

/// One constant-color angular region: a vertex plus two ray angles.
/// theta1 is kept in [0, 2*pi) and theta2 in (theta1, theta1 + 2*pi).
template <class T>
struct WedgeT {
    T vx{}, vy{};          // vertex, patch coordinates in pixels
    T theta1{}, theta2{};  // start / end angle, radians
    std::array<T, 3> color{};
    T eta{};               // boundary smoothness, pixels
};

/// Stack of wedges over a background color; the last wedge is frontmost.
template <class T>
struct WedgePatchT {
    std::vector<WedgeT<T>> wedges;
    std::array<T, 3> bg_color{};
    int width = 21;
    int height = 21;

    int count() const { return static_cast<int>(wedges.size()); }
};

using Wedge = WedgeT<double>;
using WedgePatch = WedgePatchT<double>;

/// Hard Heaviside with the H(0) = 1 convention used throughout.
inline double heaviside(double t) { return t >= 0.0 ? 1.0 : 0.0; }

/// Signed distance from point (x, y) to the edge ray starting at (vx, vy)
/// with direction theta. Positive on the counterclockwise side; behind the
/// vertex the scaled vertex distance takes over with the sign of the
/// radial component.
template <class T>
T edge_signed_distance(double x, double y, const T& vx, const T& vy, const T& theta,
                       double w_scale = 1.0) {
    using std::cos;
    using std::sin;
    using std::sqrt;
    const T st = sin(theta);
    const T ct = cos(theta);
    const T dx = x - vx;
    const T dy = y - vy;
    const T r = -dx * st + dy * ct;   // radial: lateral offset from the ray
    const T a = dx * ct + dy * st;    // axial: along the ray
    if (value_of(a) >= 0.0) return r;
    const T v = sqrt(r * r + (w_scale * w_scale) * (a * a));
    return value_of(r) >= 0.0 ? v : -v;
}

/// +1 when the direction of (x,y) - vertex falls inside [theta1, theta2]
/// after lifting into [theta1, theta1 + 2*pi); -1 otherwise. The vertex
/// itself counts as inside.
template <class T>
int wedge_indicator(double x, double y, const T& vx, const T& vy, const T& theta1,
                    const T& theta2) {
    const double dx = x - value_of(vx);
    const double dy = y - value_of(vy);
    if (dx == 0.0 && dy == 0.0) return 1;
    const double t1 = value_of(theta1);
    const double span = value_of(theta2) - t1;
    double phi = std::atan2(dy, dx) - t1;
    phi = std::fmod(phi, kTwoPi);
    if (phi < 0.0) phi += kTwoPi;
    return phi <= span ? 1 : -1;
}

/// Signed distance to the wedge boundary: distance to the nearer edge,
/// signed by the inside/outside indicator.
template <class T>
T wedge_signed_distance(double x, double y, const WedgeT<T>& w, double w_scale = 1.0) {
    using std::abs;
    using std::min;
    const T d1 = edge_signed_distance(x, y, w.vx, w.vy, w.theta1, w_scale);
    const T d2 = edge_signed_distance(x, y, w.vx, w.vy, w.theta2, w_scale);
    const T m = min(abs(d1), abs(d2));
    const int chi = wedge_indicator(x, y, w.vx, w.vy, w.theta1, w.theta2);
    return chi > 0 ? m : -m;
}

/// Per-pixel wedge state shared by the mask / distance / alpha pipeline.
/// Buffers are row-major width*height, one entry per wedge where noted.
template <class T>
struct PatchFields {
    int width = 0, height = 0, wedges = 0;
    std::vector<T> signed_dist;   // [wedge][pixel]
    std::vector<T> masks;         // [wedge][pixel], hard {0,1} or soft
    std::vector<T> background;    // [pixel], 1 - sum(masks)
    std::vector<T> u;             // [pixel], unoccluded boundary distance

    void resize(int w, int h, int l) {
        width = w;
        height = h;
        wedges = l;
        signed_dist.assign(static_cast<size_t>(l) * w * h, T{});
        masks.assign(static_cast<size_t>(l) * w * h, T{});
        background.assign(static_cast<size_t>(w) * h, T{});
        u.assign(static_cast<size_t>(w) * h, T{});
    }
    T* dist(int wedge) { return signed_dist.data() + static_cast<size_t>(wedge) * width * height; }
    const T* dist(int wedge) const {
        return signed_dist.data() + static_cast<size_t>(wedge) * width * height;
    }
    T* mask(int wedge) { return masks.data() + static_cast<size_t>(wedge) * width * height; }
    const T* mask(int wedge) const {
        return masks.data() + static_cast<size_t>(wedge) * width * height;
    }
};

/// Options controlling the Heaviside treatment. Exact steps are used for
/// evaluation and export; the logistic surrogate keeps the loss
/// differentiable while optimizing.
struct MaskMode {
    bool soft = false;
    double temperature = 0.1;  // pixels
};

/// Evaluate distances, unoccluded masks, and the unoccluded boundary
/// distance u over the pixel lattice (centers at integer + 0.5). With hard
/// masks: M_i = H(d_i) * prod_{j>i} (1 - H(d_j)), u = min_{j >= i} |d_j|
/// inside mask i, and u = min_j |d_j| where no mask is active.
template <class T>
void compute_patch_fields(const WedgePatchT<T>& patch, PatchFields<T>& out,
                          const MaskMode& mode = MaskMode{}, double w_scale = 1.0) {
    using std::abs;
    using std::min;
    const int W = patch.width, H = patch.height, L = patch.count();
    out.resize(W, H, L);
    const size_t npix = static_cast<size_t>(W) * H;

    for (int i = 0; i < L; ++i) {
        T* di = out.dist(i);
        const WedgeT<T>& w = patch.wedges[i];
        size_t k = 0;
        for (int y = 0; y < H; ++y) {
            for (int x = 0; x < W; ++x, ++k) {
                di[k] = wedge_signed_distance(x + 0.5, y + 0.5, w, w_scale);
            }
        }
    }

    std::vector<T> suffix_min(npix);  // min_{j >= i} |d_j| built back to front
    std::vector<T> occluder(npix, T{1.0});  // prod_{j > i} (1 - H(d_j))
    for (size_t k = 0; k < npix; ++k) out.u[k] = T{0.0};
    for (size_t k = 0; k < npix; ++k) out.background[k] = T{1.0};

    for (int i = L - 1; i >= 0; --i) {
        const T* di = out.dist(i);
        T* mi = out.mask(i);
        for (size_t k = 0; k < npix; ++k) {
            const T adi = abs(di[k]);
            suffix_min[k] = (i == L - 1) ? adi : min(adi, suffix_min[k]);
            T h;
            if (mode.soft) {
                h = sigmoid(di[k] * (1.0 / mode.temperature));
            } else {
                h = T{heaviside(value_of(di[k]))};
            }
            mi[k] = h * occluder[k];
            occluder[k] = occluder[k] * (1.0 - h);
            out.u[k] += mi[k] * suffix_min[k];
            out.background[k] = out.background[k] - mi[k];
        }
    }
    // Background extension: where no wedge claims the pixel the distance to
    // the nearest boundary over all wedges applies (suffix_min now holds the
    // min over every wedge).
    for (size_t k = 0; k < npix; ++k) {
        out.u[k] += out.background[k] * suffix_min[k];
    }
}

/// Standalone unoccluded masks (hard), matching compute_patch_fields.
template <class T>
std::vector<std::vector<T>> occlusion_masks(const WedgePatchT<T>& patch, double w_scale = 1.0) {
    PatchFields<T> f;
    compute_patch_fields(patch, f, MaskMode{}, w_scale);
    std::vector<std::vector<T>> out(patch.count());
    const size_t npix = static_cast<size_t>(patch.width) * patch.height;
    for (int i = 0; i < patch.count(); ++i) {
        out[i].assign(f.mask(i), f.mask(i) + npix);
    }
    return out;
}

/// Standalone unoccluded boundary distance (hard masks).
template <class T>
std::vector<T> unoccluded_distance_map(const WedgePatchT<T>& patch, double w_scale = 1.0) {
    PatchFields<T> f;
    compute_patch_fields(patch, f, MaskMode{}, w_scale);
    return f.u;
}

}  // namespace dfd
