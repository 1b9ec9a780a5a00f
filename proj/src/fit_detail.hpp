// SPDX-License-Identifier: Apache-2.0
// Internal translation-unit header for the fitting stage. Holds the
// templated objective implementations shared by the local and global
// optimizers; instantiated for double (values) and Dual<N> (gradients).
#pragma once

#include <cmath>
#include <vector>

#include "dfd/dual.hpp"
#include "dfd/fit.hpp"
#include "dfd/render.hpp"

namespace dfd {
namespace detail {

constexpr int local_param_count(int wedges) { return 5 * wedges; }
constexpr int global_param_count(int wedges) { return 9 * wedges + 3; }

// ---- smooth reparameterizations --------------------------------------

template <class T>
T squash_box(const T& q, double center, double radius) {
    using std::tanh;
    return center + radius * tanh(q * (1.0 / radius));
}
inline double unsquash_box(double v, double center, double radius) {
    double t = (v - center) / radius;
    t = std::max(-1.0 + 1e-12, std::min(1.0 - 1e-12, t));
    return radius * std::atanh(t);
}
template <class T>
T squash_range(const T& q, double lo, double hi) {
    return lo + (hi - lo) * sigmoid(q);
}
inline double unsquash_range(double v, double lo, double hi) {
    double r = (v - lo) / (hi - lo);
    r = std::max(1e-12, std::min(1.0 - 1e-12, r));
    return std::log(r / (1.0 - r));
}

// Vertices roam the patch box dilated by one side length per direction.
inline double vertex_radius_x(int w) { return 1.5 * w; }
inline double vertex_radius_y(int h) { return 1.5 * h; }

// ---- parameter vector layouts -----------------------------------------
//
// local:  per wedge [qx, qy, theta1, q_dtheta, q_eta]
// global: per wedge [qx, qy, theta1, q_dtheta], then colors c0..cl (3 each),
//         then q_eta_plus per wedge, then q_eta_minus per wedge.

template <class T>
WedgePatchT<T> unpack_local_T(const T* p, int wedges, int width, int height,
                              const FitOptions& opt) {
    WedgePatchT<T> psi;
    psi.width = width;
    psi.height = height;
    psi.wedges.resize(wedges);
    const double lo = opt.angle_margin, hi = kTwoPi - opt.angle_margin;
    for (int i = 0; i < wedges; ++i) {
        auto& w = psi.wedges[i];
        w.vx = squash_box(p[i * 5 + 0], 0.5 * width, vertex_radius_x(width));
        w.vy = squash_box(p[i * 5 + 1], 0.5 * height, vertex_radius_y(height));
        w.theta1 = p[i * 5 + 2];
        w.theta2 = w.theta1 + squash_range(p[i * 5 + 3], lo, hi);
        w.eta = squash_range(p[i * 5 + 4], opt.eta_min, opt.eta_max);
    }
    return psi;
}

template <class T>
struct GlobalParamsT {
    WedgePatchT<T> geometry;     // colors filled, eta fields unused
    std::vector<T> eta_plus, eta_minus;
};

template <class T>
GlobalParamsT<T> unpack_global_T(const T* p, int wedges, int width, int height,
                                 const FitOptions& opt) {
    GlobalParamsT<T> g;
    g.geometry.width = width;
    g.geometry.height = height;
    g.geometry.wedges.resize(wedges);
    g.eta_plus.resize(wedges);
    g.eta_minus.resize(wedges);
    const double lo = opt.angle_margin, hi = kTwoPi - opt.angle_margin;
    for (int i = 0; i < wedges; ++i) {
        auto& w = g.geometry.wedges[i];
        w.vx = squash_box(p[i * 4 + 0], 0.5 * width, vertex_radius_x(width));
        w.vy = squash_box(p[i * 4 + 1], 0.5 * height, vertex_radius_y(height));
        w.theta1 = p[i * 4 + 2];
        w.theta2 = w.theta1 + squash_range(p[i * 4 + 3], lo, hi);
    }
    const int c0 = 4 * wedges;
    for (int ch = 0; ch < 3; ++ch) g.geometry.bg_color[ch] = p[c0 + ch];
    for (int i = 0; i < wedges; ++i) {
        for (int ch = 0; ch < 3; ++ch) g.geometry.wedges[i].color[ch] = p[c0 + 3 * (i + 1) + ch];
    }
    const int e0 = c0 + 3 * (wedges + 1);
    for (int i = 0; i < wedges; ++i) {
        g.eta_plus[i] = squash_range(p[e0 + i], opt.eta_min, opt.eta_max);
        g.eta_minus[i] = squash_range(p[e0 + wedges + i], opt.eta_min, opt.eta_max);
    }
    return g;
}

// ---- loss scratch ------------------------------------------------------

template <class T>
struct LossScratch {
    PatchFields<T> fields;
    std::vector<T> etas, coll, rgb, cp, b;
    std::vector<T> etas2, coll2, rgb2, cp2;  // second view (global stage)
};

// ---- local objective ---------------------------------------------------

// Weighted local terms for a geometry+smoothness candidate. When
// `ridge_colors_flag` is set the colors are re-solved against the target
// (the optimizer path); otherwise psi's own colors are composited.
template <class T>
T local_terms_T(const WedgePatchT<T>& psi, bool ridge_colors_flag, const ImageD& target,
                const ImageD& target_deriv, const ImageD* u_star,
                const std::array<double, 3>& beta, double delta, const FitOptions& opt,
                bool soft, LossScratch<T>& s) {
    using std::min;
    const int L = psi.count(), W = psi.width, H = psi.height;
    const size_t npix = static_cast<size_t>(W) * H;
    const MaskMode mode{soft, opt.mask_temperature};
    compute_patch_fields(psi, s.fields, mode, opt.w_scale);
    s.etas.resize(L);
    for (int i = 0; i < L; ++i) s.etas[i] = psi.wedges[i].eta;
    collective_alphas(s.fields, s.etas, s.coll);

    std::vector<std::array<T, 3>> colors;
    if (ridge_colors_flag) {
        colors = ridge_colors(s.coll.data(), L, target, opt.ridge_lambda);
    } else {
        colors.resize(L + 1);
        colors[0] = psi.bg_color;
        for (int i = 0; i < L; ++i) colors[i + 1] = psi.wedges[i].color;
    }
    s.rgb.resize(npix * 3);
    composite_color(s.coll.data(), colors.data(), L, npix, s.rgb.data());

    const double inv_n = 1.0 / static_cast<double>(npix);
    T loss{};
    if (beta[0] != 0.0) {
        T acc{};
        for (size_t k = 0; k < npix * 3; ++k) {
            const T diff = s.rgb[k] - target.data[k];
            acc += diff * diff;
        }
        loss += (beta[0] * inv_n) * acc;
    }
    if (beta[1] != 0.0) {
        s.cp.resize(npix);
        sobel_magnitude(s.rgb.data(), W, H, s.cp.data());
        T acc{};
        for (size_t k = 0; k < npix; ++k) {
            const T diff = s.cp[k] - target_deriv.data[k];
            acc += diff * diff;
        }
        loss += (beta[1] * inv_n) * acc;
    }
    if (u_star != nullptr && beta[2] != 0.0) {
        boundary_map(s.fields.u, delta, s.b);
        const double cap = 2.0 * std::hypot(static_cast<double>(W), static_cast<double>(H));
        T acc{};
        for (size_t k = 0; k < npix; ++k) {
            acc += s.b[k] * std::min(u_star->data[k], cap);
        }
        loss += (beta[2] * inv_n) * acc;
    }
    return loss;
}

// ---- global objective --------------------------------------------------

struct GlobalLossRefs {
    int ox = 0, oy = 0;
    const ImageD* target_plus = nullptr;        // full image
    const ImageD* target_minus = nullptr;       // full image
    const ImageD* target_deriv_plus = nullptr;  // patch-local Sobel target
    const ImageD* target_deriv_minus = nullptr;
    const GlobalContext* ctx = nullptr;         // full-size frozen maps
    const ImageD* u_star = nullptr;             // full image or null
    const ImageD* z_star = nullptr;             // full image or null
    std::array<double, 8> gamma{};
    const OpticsConfig* optics = nullptr;
};

template <class T>
T sq_err_rgb_vs_crop(const std::vector<T>& rgb, const ImageD& full, int ox, int oy, int W,
                     int H) {
    T acc{};
    size_t k = 0;
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x, ++k) {
            for (int ch = 0; ch < 3; ++ch) {
                const T diff = rgb[k * 3 + ch] - full.at(ox + x, oy + y, ch);
                acc += diff * diff;
            }
        }
    }
    return acc;
}

template <class T>
T sq_err_scalar_vs_crop(const std::vector<T>& v, const ImageD& full, int ox, int oy, int W,
                        int H) {
    T acc{};
    size_t k = 0;
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x, ++k) {
            const T diff = v[k] - full.at(ox + x, oy + y);
            acc += diff * diff;
        }
    }
    return acc;
}

template <class T>
T global_terms_T(const GlobalParamsT<T>& gp, const GlobalLossRefs& r, const FitOptions& opt,
                 bool soft, LossScratch<T>& s) {
    using std::min;
    const WedgePatchT<T>& geom = gp.geometry;
    const int L = geom.count(), W = geom.width, H = geom.height;
    const size_t npix = static_cast<size_t>(W) * H;
    const double inv_n = 1.0 / static_cast<double>(npix);
    const auto& gamma = r.gamma;
    const MaskMode mode{soft, opt.mask_temperature};

    compute_patch_fields(geom, s.fields, mode, opt.w_scale);
    collective_alphas(s.fields, gp.eta_plus, s.coll);
    collective_alphas(s.fields, gp.eta_minus, s.coll2);

    std::vector<std::array<T, 3>> colors(L + 1);
    colors[0] = geom.bg_color;
    for (int i = 0; i < L; ++i) colors[i + 1] = geom.wedges[i].color;
    s.rgb.resize(npix * 3);
    s.rgb2.resize(npix * 3);
    composite_color(s.coll.data(), colors.data(), L, npix, s.rgb.data());
    composite_color(s.coll2.data(), colors.data(), L, npix, s.rgb2.data());

    boundary_map(s.fields.u, opt.delta, s.b);

    T loss{};
    if (gamma[0] != 0.0) {  // g1: color error vs targets, both views
        loss += (gamma[0] * inv_n) * (sq_err_rgb_vs_crop(s.rgb, *r.target_plus, r.ox, r.oy, W, H) +
                                      sq_err_rgb_vs_crop(s.rgb2, *r.target_minus, r.ox, r.oy, W, H));
    }
    if (gamma[1] != 0.0) {  // g2: color consistency vs global color maps
        loss += (gamma[1] * inv_n) * (sq_err_rgb_vs_crop(s.rgb, r.ctx->C_plus, r.ox, r.oy, W, H) +
                                      sq_err_rgb_vs_crop(s.rgb2, r.ctx->C_minus, r.ox, r.oy, W, H));
    }
    if (gamma[2] != 0.0) {  // g3: boundary consistency vs global boundary map
        loss += (gamma[2] * inv_n) * sq_err_scalar_vs_crop(s.b, r.ctx->B, r.ox, r.oy, W, H);
    }
    const bool need_deriv = gamma[3] != 0.0 || gamma[4] != 0.0;
    if (need_deriv) {
        s.cp.resize(npix);
        s.cp2.resize(npix);
        sobel_magnitude(s.rgb.data(), W, H, s.cp.data());
        sobel_magnitude(s.rgb2.data(), W, H, s.cp2.data());
    }
    if (gamma[3] != 0.0) {  // g4: derivative error vs patch-local Sobel targets
        T acc{};
        for (size_t k = 0; k < npix; ++k) {
            const T d1 = s.cp[k] - r.target_deriv_plus->data[k];
            const T d2 = s.cp2[k] - r.target_deriv_minus->data[k];
            acc += d1 * d1 + d2 * d2;
        }
        loss += (gamma[3] * inv_n) * acc;
    }
    if (gamma[4] != 0.0) {  // g5: derivative consistency vs Sobel of global maps
        loss += (gamma[4] * inv_n) * (sq_err_scalar_vs_crop(s.cp, r.ctx->Cp_plus, r.ox, r.oy, W, H) +
                                      sq_err_scalar_vs_crop(s.cp2, r.ctx->Cp_minus, r.ox, r.oy, W, H));
    }
    if (gamma[5] != 0.0 && r.u_star != nullptr) {  // g6: boundary localization
        const double cap = 2.0 * std::hypot(static_cast<double>(W), static_cast<double>(H));
        T acc{};
        size_t k = 0;
        for (int y = 0; y < H; ++y) {
            for (int x = 0; x < W; ++x, ++k) {
                acc += s.b[k] * std::min(r.u_star->at(r.ox + x, r.oy + y), cap);
            }
        }
        loss += (gamma[5] * inv_n) * acc;
    }
    const bool need_depth = (gamma[6] != 0.0 || gamma[7] != 0.0) && r.z_star != nullptr;
    if (need_depth) {
        const double pitch = r.optics->pixel_pitch;
        std::vector<T> z(L);
        for (int i = 0; i < L; ++i) {
            z[i] = depth_from_smoothness_raw(gp.eta_plus[i] * pitch, gp.eta_minus[i] * pitch,
                                             *r.optics);
        }
        T acc7{}, acc8{};
        size_t k = 0;
        for (int y = 0; y < H; ++y) {
            for (int x = 0; x < W; ++x, ++k) {
                const double zs = r.z_star->at(r.ox + x, r.oy + y);
                for (int i = 0; i < L; ++i) {
                    const T& m = s.fields.mask(i)[k];
                    if (gamma[6] != 0.0) {
                        const T bi = s.b[k] * m;
                        T sel;
                        if (soft) {
                            sel = sigmoid((bi - opt.tau) * (1.0 / opt.select_temperature));
                        } else {
                            sel = T{heaviside(value_of(bi) - opt.tau)};
                        }
                        const T dz = z[i] - zs;
                        acc7 += sel * (dz * dz);
                    }
                    if (gamma[7] != 0.0) {
                        const T dz = z[i] - zs;
                        acc8 += m * (dz * dz);
                    }
                }
            }
        }
        if (gamma[6] != 0.0) loss += (gamma[6] * inv_n) * acc7;
        if (gamma[7] != 0.0) loss += (gamma[7] * inv_n) * acc8;
    }
    return loss;
}

}  // namespace detail
}  // namespace dfd
