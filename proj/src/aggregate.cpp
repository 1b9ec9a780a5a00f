// SPDX-License-Identifier: Apache-2.0
#include "dfd/aggregate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dfd/render.hpp"
#include "dfd/threading.hpp"

namespace dfd {

ImageD sobel_magnitude_image(const ImageD& rgb) {
    if (rgb.channels != 3) throw ConfigError("sobel_magnitude_image: expects 3 channels");
    ImageD out(rgb.width, rgb.height, 1);
    sobel_magnitude(rgb.data.data(), rgb.width, rgb.height, out.data.data());
    return out;
}

PatchMaps render_patch_maps(const WedgePatch& patch, double delta, double w_scale) {
    const int W = patch.width, H = patch.height, L = patch.count();
    const size_t npix = static_cast<size_t>(W) * H;
    PatchFields<double> fields;
    compute_patch_fields(patch, fields, MaskMode{}, w_scale);
    std::vector<double> etas(L);
    for (int i = 0; i < L; ++i) etas[i] = patch.wedges[i].eta;
    std::vector<double> coll;
    collective_alphas(fields, etas, coll);
    std::vector<std::array<double, 3>> colors(L + 1);
    colors[0] = patch.bg_color;
    for (int i = 0; i < L; ++i) colors[i + 1] = patch.wedges[i].color;

    PatchMaps maps;
    maps.color = ImageD(W, H, 3);
    composite_color(coll.data(), colors.data(), L, npix, maps.color.data.data());
    maps.boundary = ImageD(W, H, 1);
    std::vector<double> b;
    boundary_map(fields.u, delta, b);
    std::copy(b.begin(), b.end(), maps.boundary.data.begin());
    maps.deriv = sobel_magnitude_image(maps.color);
    maps.u = ImageD(W, H, 1);
    std::copy(fields.u.begin(), fields.u.end(), maps.u.data.begin());
    maps.masks.resize(L);
    for (int i = 0; i < L; ++i) {
        maps.masks[i] = ImageD(W, H, 1);
        std::copy(fields.mask(i), fields.mask(i) + npix, maps.masks[i].data.begin());
    }
    maps.coll_alpha.resize(L + 1);
    for (int i = 0; i <= L; ++i) {
        maps.coll_alpha[i] = ImageD(W, H, 1);
        std::copy(coll.begin() + i * npix, coll.begin() + (i + 1) * npix,
                  maps.coll_alpha[i].data.begin());
    }
    return maps;
}

namespace {

/// Patch-major scatter with per-chunk accumulators merged in chunk order,
/// so the result is independent of the thread count.
template <class PatchFn>
void accumulate_over_patches(const PatchGrid& grid, int threads, int planes,
                             std::vector<ImageD>& accum, const PatchFn& fn) {
    const int W = grid.img_w, H = grid.img_h;
    const int P = grid.count();
    threads = std::max(1, threads);
    const int chunks = static_cast<int>(std::min<size_t>(threads, std::max(1, P)));
    std::vector<std::vector<ImageD>> partial(chunks);
    parallel_chunks(static_cast<size_t>(P), threads, [&](size_t b, size_t e, int t) {
        auto& bufs = partial[t];
        bufs.assign(planes, ImageD(W, H, 1, 0.0));
        for (size_t p = b; p < e; ++p) fn(static_cast<int>(p), bufs);
    });
    accum.assign(planes, ImageD(W, H, 1, 0.0));
    for (int t = 0; t < chunks; ++t) {
        if (partial[t].empty()) continue;
        for (int pl = 0; pl < planes; ++pl) {
            for (size_t k = 0; k < accum[pl].data.size(); ++k) {
                accum[pl].data[k] += partial[t][pl].data[k];
            }
        }
    }
}

void render_patch_boundary(const ConsistentPatch& cp, double delta, const MaskMode& mode,
                           std::vector<double>& b) {
    PatchFields<double> fields;
    const WedgePatch view = cp.view(true);  // boundary map is eta-independent
    compute_patch_fields(view, fields, mode, 1.0);
    boundary_map(fields.u, delta, b);
}

}  // namespace

ImageD build_boundary_map(const std::vector<ConsistentPatch>& patches, const PatchGrid& grid,
                          double delta, int threads, const MaskMode& mode) {
    std::vector<ImageD> acc;
    accumulate_over_patches(grid, threads, 2, acc, [&](int p, std::vector<ImageD>& bufs) {
        std::vector<double> b;
        render_patch_boundary(patches[p], delta, mode, b);
        const int ox = grid.origin_x(p), oy = grid.origin_y(p);
        size_t k = 0;
        for (int y = 0; y < grid.patch; ++y) {
            for (int x = 0; x < grid.patch; ++x, ++k) {
                bufs[0].at(ox + x, oy + y) += b[k];
                bufs[1].at(ox + x, oy + y) += 1.0;
            }
        }
    });
    ImageD out(grid.img_w, grid.img_h, 1, 0.0);
    for (size_t k = 0; k < out.data.size(); ++k) {
        out.data[k] = acc[1].data[k] > 0.0 ? acc[0].data[k] / acc[1].data[k] : 0.0;
    }
    return out;
}

ImageD build_color_map(const std::vector<ConsistentPatch>& patches, const PatchGrid& grid,
                       EtaChoice which, double custom_eta, double eta_min, double eta_max,
                       int threads) {
    if (which == EtaChoice::Custom && (custom_eta < eta_min || custom_eta > eta_max)) {
        throw ConfigError("color map: eta override outside the smoothness bounds");
    }
    std::vector<ImageD> acc;
    accumulate_over_patches(grid, threads, 4, acc, [&](int p, std::vector<ImageD>& bufs) {
        const ConsistentPatch& cp = patches[p];
        WedgePatch view = cp.view(which != EtaChoice::Minus);
        if (which == EtaChoice::Custom) {
            for (auto& w : view.wedges) w.eta = custom_eta;
        }
        PatchFields<double> fields;
        compute_patch_fields(view, fields, MaskMode{}, 1.0);
        std::vector<double> etas(view.count());
        for (int i = 0; i < view.count(); ++i) etas[i] = view.wedges[i].eta;
        std::vector<double> coll;
        collective_alphas(fields, etas, coll);
        std::vector<std::array<double, 3>> colors(view.count() + 1);
        colors[0] = view.bg_color;
        for (int i = 0; i < view.count(); ++i) colors[i + 1] = view.wedges[i].color;
        std::vector<double> rgb(static_cast<size_t>(grid.patch) * grid.patch * 3);
        composite_color(coll.data(), colors.data(), view.count(), rgb.size() / 3, rgb.data());

        const int ox = grid.origin_x(p), oy = grid.origin_y(p);
        size_t k = 0;
        for (int y = 0; y < grid.patch; ++y) {
            for (int x = 0; x < grid.patch; ++x, ++k) {
                for (int c = 0; c < 3; ++c) bufs[c].at(ox + x, oy + y) += rgb[k * 3 + c];
                bufs[3].at(ox + x, oy + y) += 1.0;
            }
        }
    });
    ImageD out(grid.img_w, grid.img_h, 3, 0.0);
    for (int y = 0; y < grid.img_h; ++y) {
        for (int x = 0; x < grid.img_w; ++x) {
            const double n = acc[3].at(x, y);
            for (int c = 0; c < 3; ++c) {
                out.at(x, y, c) = n > 0.0 ? acc[c].at(x, y) / n : 0.0;
            }
        }
    }
    return out;
}

std::vector<DepthResult> wedge_depths(const ConsistentPatch& cp, const OpticsConfig& optics) {
    std::vector<DepthResult> out(cp.base.count());
    for (int i = 0; i < cp.base.count(); ++i) {
        try {
            out[i] = depth_from_smoothness_px(cp.eta_plus[i], cp.eta_minus[i], optics);
        } catch (const NumericalError&) {
            out[i] = DepthResult{std::numeric_limits<double>::quiet_NaN(), false};
        }
    }
    return out;
}

SparseDepthResult sparse_depth_map(const std::vector<ConsistentPatch>& patches,
                                   const PatchGrid& grid, double delta, double tau,
                                   const OpticsConfig& optics, int threads) {
    // planes: 0 depth numerator, 1 depth denominator, 2 confidence votes,
    // 3 coverage count
    std::vector<ImageD> acc;
    accumulate_over_patches(grid, threads, 4, acc, [&](int p, std::vector<ImageD>& bufs) {
        const ConsistentPatch& cp = patches[p];
        const int L = cp.base.count();
        PatchFields<double> fields;
        const WedgePatch view = cp.view(true);
        compute_patch_fields(view, fields, MaskMode{}, 1.0);
        std::vector<double> b;
        boundary_map(fields.u, delta, b);
        const auto depths = wedge_depths(cp, optics);

        const int ox = grid.origin_x(p), oy = grid.origin_y(p);
        size_t k = 0;
        for (int y = 0; y < grid.patch; ++y) {
            for (int x = 0; x < grid.patch; ++x, ++k) {
                bufs[3].at(ox + x, oy + y) += 1.0;
                if (b[k] >= tau) bufs[2].at(ox + x, oy + y) += 1.0;
                for (int i = 0; i < L; ++i) {
                    if (!depths[i].valid) continue;
                    const double bi = b[k] * fields.mask(i)[k];
                    if (bi >= tau) {
                        bufs[0].at(ox + x, oy + y) += depths[i].z;
                        bufs[1].at(ox + x, oy + y) += 1.0;
                    }
                }
            }
        }
    });
    SparseDepthResult res;
    res.Z = ImageD(grid.img_w, grid.img_h, 1, std::numeric_limits<double>::quiet_NaN());
    res.F = ImageD(grid.img_w, grid.img_h, 1, 0.0);
    for (size_t k = 0; k < res.Z.data.size(); ++k) {
        if (acc[1].data[k] > 0.0) res.Z.data[k] = acc[0].data[k] / acc[1].data[k];
        if (acc[3].data[k] > 0.0) res.F.data[k] = acc[2].data[k] / acc[3].data[k];
    }
    return res;
}

ImageD dense_depth_map(const std::vector<ConsistentPatch>& patches, const PatchGrid& grid,
                       const OpticsConfig& optics, int threads) {
    std::vector<ImageD> acc;
    accumulate_over_patches(grid, threads, 2, acc, [&](int p, std::vector<ImageD>& bufs) {
        const ConsistentPatch& cp = patches[p];
        const int L = cp.base.count();
        PatchFields<double> fields;
        const WedgePatch view = cp.view(true);
        compute_patch_fields(view, fields, MaskMode{}, 1.0);
        const auto depths = wedge_depths(cp, optics);
        const int ox = grid.origin_x(p), oy = grid.origin_y(p);
        size_t k = 0;
        for (int y = 0; y < grid.patch; ++y) {
            for (int x = 0; x < grid.patch; ++x, ++k) {
                for (int i = 0; i < L; ++i) {
                    if (!depths[i].valid) continue;
                    const double m = fields.mask(i)[k];
                    if (m > 0.0) {
                        bufs[0].at(ox + x, oy + y) += m * depths[i].z;
                        bufs[1].at(ox + x, oy + y) += m;
                    }
                }
            }
        }
    });
    ImageD out(grid.img_w, grid.img_h, 1, std::numeric_limits<double>::quiet_NaN());
    for (size_t k = 0; k < out.data.size(); ++k) {
        if (acc[1].data[k] > 0.0) out.data[k] = acc[0].data[k] / acc[1].data[k];
    }
    return out;
}

int BlockConfig::block_stride(int patch, int patch_stride) const {
    return block_size - patch + (1 - 2 * margin_patches) * patch_stride;
}

int BlockConfig::block_count(int image_side, int patch, int patch_stride) const {
    const int sb = block_stride(patch, patch_stride);
    if (sb <= 0) throw ConfigError("blocks: non-positive block stride");
    if (image_side <= block_size) return 1;
    return static_cast<int>(
        std::ceil(static_cast<double>(image_side - block_size) / sb + 1.0));
}

std::vector<int> BlockConfig::block_origins(int image_side, int patch, int patch_stride) const {
    const int nb = block_count(image_side, patch, patch_stride);
    const int sb = block_stride(patch, patch_stride);
    std::vector<int> origins;
    for (int i = 0; i < nb; ++i) {
        origins.push_back(std::min(i * sb, image_side - block_size));
    }
    return origins;
}

}  // namespace dfd
