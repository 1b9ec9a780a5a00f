// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "dfd/core.hpp"
#include "dfd/geometry.hpp"
#include "dfd/optics.hpp"

namespace dfd {

/// Overlapping patch tiling. Origins step by `stride`; a final origin is
/// appended when needed so the tiling always reaches the image border.
struct PatchGrid {
    int patch = 21;
    int stride = 2;
    int img_w = 0, img_h = 0;
    std::vector<int> xs, ys;  // patch origin coordinates per axis

    static PatchGrid make(int img_w, int img_h, int patch = 21, int stride = 2);
    int nx() const { return static_cast<int>(xs.size()); }
    int ny() const { return static_cast<int>(ys.size()); }
    int count() const { return nx() * ny(); }
    int origin_x(int p) const { return xs[p % nx()]; }
    int origin_y(int p) const { return ys[p / nx()]; }
};

enum class FitProfile { SelfSupervised, SupervisedEval };

/// Loss term weights. Local weights are fixed; global weights follow a
/// piecewise-linear schedule over the outer refinement iterations.
struct FitWeights {
    std::array<double, 3> beta{1.0, 1.0, 0.1};
    std::vector<double> key_fracs;                  // ascending, in [0,1]
    std::vector<std::array<double, 8>> key_gammas;  // gamma 1..8 at each key

    std::array<double, 8> gamma_at(double frac) const;
    static FitWeights defaults(FitProfile profile);
};

struct FitOptions {
    int wedges = 2;
    int patch_size = 21;
    int patch_stride = 2;
    int restarts = 8;
    int restart_iters = 150;  // optimizer budget per restart (early exit on stall)
    int outer_iters = 30;     // global refinement rounds
    int inner_iters = 4;      // descent steps per patch per round
    double delta = 1.0;      // boundary stroke, px
    double ridge_lambda = 5e-3;
    double tau = 0.5;        // boundary confidence threshold
    double eta_min = kEtaMinDefault;
    double eta_max = kEtaMaxDefault;
    double eta_init = 1.5;
    double mask_temperature = 0.1;    // px, logistic surrogate for H(d)
    double select_temperature = 0.1;  // logistic surrogate for H(b - tau)
    double w_scale = 1.0;
    double angle_margin = 0.05;  // keeps wedge spans away from 0 and 2*pi
    FitProfile profile = FitProfile::SelfSupervised;
    FitWeights weights = FitWeights::defaults(FitProfile::SelfSupervised);
    uint64_t seed = 0;
    int threads = 1;

    // Patches whose smoothed gradient never rises above the noise floor are
    // fitted with the parked (no boundary) hypothesis only. Big speedup on
    // scenes that are mostly flat; disable for adversarial inputs.
    bool flat_skip = true;
    double flat_gradient_sigmas = 6.0;  // detection threshold in noise SDs
    double flat_gradient_floor = 0.015; // absolute response floor

    void validate() const;
};

/// ---- Local stage ----------------------------------------------------

struct LocalFit {
    WedgePatch psi;
    double loss = 0.0;
};

/// Weighted local objective for a candidate representation against a
/// target patch (exact Heaviside path; colors must already be set).
double local_loss(const WedgePatch& psi, const ImageD& target, const ImageD& target_deriv,
                  const ImageD* u_star, const std::array<double, 3>& beta, double delta,
                  const FitOptions& opt);

/// Fit one image patch by multi-start first-order minimization; colors are
/// re-solved by ridge regression at every objective evaluation.
LocalFit fit_patch_local_single(const ImageD& patch, const ImageD* u_star,
                                const FitOptions& opt, uint64_t seed);

/// Fit both views of a patch independently (the local stage contract).
std::pair<LocalFit, LocalFit> fit_patch_local(const ImageD& patch_plus,
                                              const ImageD& patch_minus,
                                              const FitOptions& opt, uint64_t seed,
                                              const ImageD* u_star = nullptr);

struct LocalStageResult {
    std::vector<LocalFit> plus, minus;  // indexed like PatchGrid
};

/// Run the local stage over a whole image pair (parallel across patches;
/// per-patch seeds derive from the master seed and the absolute patch
/// origin — the offsets shift grid-local origins into image coordinates
/// when fitting a block crop).
LocalStageResult run_local_stage(const ImageD& img_plus, const ImageD& img_minus,
                                 const ImageD* u_star, const PatchGrid& grid,
                                 const FitOptions& opt, int seed_off_x = 0,
                                 int seed_off_y = 0);

/// ---- Global stage ---------------------------------------------------

/// Defocus-consistent representation: one geometry + color set serves both
/// images; only the per-wedge smoothness differs.
struct ConsistentPatch {
    WedgePatch base;                // wedge eta fields are ignored
    std::vector<double> eta_plus;   // per wedge, px
    std::vector<double> eta_minus;  // per wedge, px

    WedgePatch view(bool plus) const {
        WedgePatch p = base;
        for (size_t i = 0; i < p.wedges.size(); ++i) {
            p.wedges[i].eta = plus ? eta_plus[i] : eta_minus[i];
        }
        return p;
    }
};

/// Frozen global maps a patch is compared against during refinement.
struct GlobalContext {
    ImageD B;                    // boundary consensus
    ImageD C_plus, C_minus;      // color consensus per view
    ImageD Cp_plus, Cp_minus;    // Sobel magnitude of the color consensus
};

/// Weighted global objective for one patch (exact Heaviside path).
double global_loss(const ConsistentPatch& cp, int ox, int oy, const ImageD& target_plus,
                   const ImageD& target_minus, const ImageD& target_deriv_plus,
                   const ImageD& target_deriv_minus, const GlobalContext& ctx,
                   const ImageD* u_star, const ImageD* z_star,
                   const std::array<double, 8>& gamma, const OpticsConfig& optics,
                   const FitOptions& opt);

struct GlobalStageResult {
    std::vector<ConsistentPatch> patches;
    std::vector<double> loss_trace;    // accepted total loss per outer round
    std::vector<double> patch_losses;  // final per-patch objective values
};

/// Block-coordinate refinement: rebuild consensus maps, then improve every
/// patch against the frozen maps; repeats with scheduled weights. Total
/// loss is kept non-increasing (within 1e-6) over schedule-constant rounds.
GlobalStageResult refine_global(const LocalStageResult& locals, const ImageD& target_plus,
                                const ImageD& target_minus, const ImageD* u_star,
                                const ImageD* z_star, const PatchGrid& grid,
                                const OpticsConfig& optics, const FitOptions& opt);

/// ---- Raw-parameter objectives (optimizer + gradient-check surface) ----

/// Local stage parameter vector: per wedge [qx, qy, theta1, q_dtheta,
/// q_eta]; bounded quantities ride through smooth squashing maps.
std::vector<double> pack_local_params(const WedgePatch& psi, const FitOptions& opt);
WedgePatch unpack_local_params(const std::vector<double>& params, int width, int height,
                               const FitOptions& opt);

/// Global stage parameter vector: per wedge [qx, qy, theta1, q_dtheta],
/// then colors c0..cl (3 each), then q_eta_plus and q_eta_minus per wedge.
std::vector<double> pack_global_params(const ConsistentPatch& cp, const FitOptions& opt);
ConsistentPatch unpack_global_params(const std::vector<double>& params, int width, int height,
                                     const FitOptions& opt);

/// Smooth-surrogate objectives over the raw parameter vectors; when grad is
/// non-null the analytic (forward-mode) gradient is written to it. These are
/// exactly the functions the optimizer descends.
double local_objective(const std::vector<double>& params, const ImageD& target,
                       const ImageD& target_deriv, const ImageD* u_star,
                       const FitOptions& opt, std::vector<double>* grad);
double global_objective(const std::vector<double>& params, int ox, int oy,
                        const ImageD& target_plus, const ImageD& target_minus,
                        const ImageD& target_deriv_plus, const ImageD& target_deriv_minus,
                        const GlobalContext& ctx, const ImageD* u_star, const ImageD* z_star,
                        const std::array<double, 8>& gamma, const OpticsConfig& optics,
                        const FitOptions& opt, std::vector<double>* grad);

/// Crop helper shared by the stages (patch-local Sobel targets etc).
ImageD extract_patch(const ImageD& img, int ox, int oy, int size);

/// Per-patch RNG stream, a function of the master seed and the absolute
/// patch origin so block processing sees identical streams.
uint64_t patch_seed(uint64_t master, int ox, int oy);

}  // namespace dfd
