// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <vector>

#include "dfd/core.hpp"
#include "dfd/fit.hpp"
#include "dfd/optics.hpp"

namespace dfd {

/// Stitched whole-image products of the per-patch representations.
struct GlobalMaps {
    ImageD B;         // boundary consensus, [0,1]
    ImageD C_plus;    // color map with the "+" smoothness
    ImageD C_minus;   // color map with the "-" smoothness
    ImageD C_custom;  // only filled when an eta override is requested
    ImageD Cp;        // Sobel magnitude of C_plus
    ImageD Z_sparse;  // meters; NaN where no confident boundary
    ImageD Z_dense;   // meters; NaN outside wedge support
    ImageD F;         // confidence, [0,1]
    double tau = 0.5;
    bool has_custom = false;
};

enum class EtaChoice { Plus, Minus, Custom };

/// Per-pixel average of the per-patch boundary maps. The mask mode controls
/// the Heaviside treatment inside the unoccluded-distance computation
/// (exact steps for export, the logistic surrogate while refining).
ImageD build_boundary_map(const std::vector<ConsistentPatch>& patches, const PatchGrid& grid,
                          double delta, int threads, const MaskMode& mode = MaskMode{});

/// Per-pixel average of the per-patch color maps. EtaChoice::Custom renders
/// every wedge with `custom_eta` (sharpened / refocused output); the value
/// must stay inside the configured smoothness bounds.
ImageD build_color_map(const std::vector<ConsistentPatch>& patches, const PatchGrid& grid,
                       EtaChoice which, double custom_eta, double eta_min, double eta_max,
                       int threads);

struct SparseDepthResult {
    ImageD Z;  // NaN sentinel for "no confident estimate"
    ImageD F;
};

/// Depth along confident boundary centers plus the confidence map. A wedge
/// contributes where its masked boundary value clears tau and its depth is
/// inside the working range; pixels with no contribution are NaN.
SparseDepthResult sparse_depth_map(const std::vector<ConsistentPatch>& patches,
                                   const PatchGrid& grid, double delta, double tau,
                                   const OpticsConfig& optics, int threads);

/// Mask-weighted wedge depths filled across wedge interiors; NaN where no
/// wedge covers the pixel.
ImageD dense_depth_map(const std::vector<ConsistentPatch>& patches, const PatchGrid& grid,
                       const OpticsConfig& optics, int threads);

/// Closed-form per-wedge depths for one patch (pixel-domain smoothness).
std::vector<DepthResult> wedge_depths(const ConsistentPatch& cp, const OpticsConfig& optics);

/// Block tiling parameters for large inputs.
struct BlockConfig {
    int block_size = 147;     // l_b
    int margin_patches = 1;   // n_p, marginal patches dropped at interior edges
    bool enabled = true;

    /// Block stride s_b = l_b - l_p + (1 - 2 n_p) s_p.
    int block_stride(int patch, int patch_stride) const;
    /// Block count per dimension, ceil((l_I - l_b) / s_b + 1).
    int block_count(int image_side, int patch, int patch_stride) const;
    /// Block origin coordinates along one dimension of length image_side.
    std::vector<int> block_origins(int image_side, int patch, int patch_stride) const;
};

}  // namespace dfd
