// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <limits>

#include "dfd/fit.hpp"
#include "dfd/lbfgs.hpp"
#include "dfd/log.hpp"
#include "dfd/rng.hpp"
#include "dfd/threading.hpp"
#include "fit_detail.hpp"

namespace dfd {

using detail::LossScratch;

// ---- grid / options ----------------------------------------------------

PatchGrid PatchGrid::make(int img_w, int img_h, int patch, int stride) {
    if (patch <= 2) throw ConfigError("patch grid: patch side too small");
    if (stride <= 0) throw ConfigError("patch grid: stride must be positive");
    if (img_w < patch || img_h < patch) {
        throw ConfigError("patch grid: image smaller than patch");
    }
    PatchGrid g;
    g.patch = patch;
    g.stride = stride;
    g.img_w = img_w;
    g.img_h = img_h;
    for (int x = 0; x <= img_w - patch; x += stride) g.xs.push_back(x);
    if (g.xs.back() != img_w - patch) g.xs.push_back(img_w - patch);
    for (int y = 0; y <= img_h - patch; y += stride) g.ys.push_back(y);
    if (g.ys.back() != img_h - patch) g.ys.push_back(img_h - patch);
    return g;
}

void FitOptions::validate() const {
    if (wedges < 1 || wedges > 4) throw ConfigError("fit: wedge count must be in [1,4]");
    if (restarts < 1) throw ConfigError("fit: need at least one restart");
    if (!(eta_min > 0.0) || !(eta_max > eta_min)) throw ConfigError("fit: bad eta bounds");
    if (!(delta > 0.0)) throw ConfigError("fit: delta must be positive");
    if (ridge_lambda < 0.0) throw ConfigError("fit: negative ridge lambda");
    if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("fit: tau must be in (0,1)");
    if (eta_init < eta_min || eta_init > eta_max) throw ConfigError("fit: eta_init out of bounds");
}

std::array<double, 8> FitWeights::gamma_at(double frac) const {
    if (key_fracs.empty()) return {1, 1, 1, 1, 1, 1, 0, 0};
    frac = std::clamp(frac, 0.0, 1.0);
    if (frac <= key_fracs.front()) return key_gammas.front();
    for (size_t k = 1; k < key_fracs.size(); ++k) {
        if (frac <= key_fracs[k]) {
            const double t = (frac - key_fracs[k - 1]) / (key_fracs[k] - key_fracs[k - 1]);
            std::array<double, 8> out;
            for (int i = 0; i < 8; ++i) {
                out[i] = key_gammas[k - 1][i] + t * (key_gammas[k][i] - key_gammas[k - 1][i]);
            }
            return out;
        }
    }
    return key_gammas.back();
}

FitWeights FitWeights::defaults(FitProfile profile) {
    FitWeights w;
    // Key positions follow the published epoch schedule (keys at epochs
    // 1/30/100 of 350) rescaled to the outer-iteration fraction.
    w.key_fracs = {0.0, 29.0 / 349.0, 99.0 / 349.0, 1.0};
    const bool sup = profile == FitProfile::SupervisedEval;
    w.beta = {1.0, 1.0, sup ? 0.1 : 0.0};
    // gamma: {g1, g2, g3, g4, g5, g6, g7, g8}; g6/g7 need ground truth.
    const double g6 = sup ? 1.0 : 0.0;
    w.key_gammas = {
        {1.0, 0.2, 1.0, 1.0, 1.0, g6, sup ? 1e-4 : 0.0, 0.0},
        {1.0, 0.1, 1.0, 1.0, 1.0, g6, sup ? 0.05 : 0.0, 0.0},
        {1.0, 0.05, 1.0, 1.0, 1.0, g6, sup ? 0.5 : 0.0, 0.0},
        {1.0, 0.05, 1.0, 1.0, 1.0, g6, sup ? 0.5 : 0.0, 0.0},
    };
    return w;
}

// ---- packing -----------------------------------------------------------

std::vector<double> pack_local_params(const WedgePatch& psi, const FitOptions& opt) {
    const int L = psi.count();
    std::vector<double> p(detail::local_param_count(L));
    const double lo = opt.angle_margin, hi = kTwoPi - opt.angle_margin;
    for (int i = 0; i < L; ++i) {
        const auto& w = psi.wedges[i];
        p[i * 5 + 0] = detail::unsquash_box(w.vx, 0.5 * psi.width, detail::vertex_radius_x(psi.width));
        p[i * 5 + 1] = detail::unsquash_box(w.vy, 0.5 * psi.height, detail::vertex_radius_y(psi.height));
        p[i * 5 + 2] = w.theta1;
        p[i * 5 + 3] = detail::unsquash_range(w.theta2 - w.theta1, lo, hi);
        p[i * 5 + 4] = detail::unsquash_range(w.eta, opt.eta_min, opt.eta_max);
    }
    return p;
}

WedgePatch unpack_local_params(const std::vector<double>& params, int width, int height,
                               const FitOptions& opt) {
    const int L = static_cast<int>(params.size()) / 5;
    return detail::unpack_local_T<double>(params.data(), L, width, height, opt);
}

std::vector<double> pack_global_params(const ConsistentPatch& cp, const FitOptions& opt) {
    const int L = cp.base.count();
    std::vector<double> p(detail::global_param_count(L));
    const auto& psi = cp.base;
    const double lo = opt.angle_margin, hi = kTwoPi - opt.angle_margin;
    for (int i = 0; i < L; ++i) {
        const auto& w = psi.wedges[i];
        p[i * 4 + 0] = detail::unsquash_box(w.vx, 0.5 * psi.width, detail::vertex_radius_x(psi.width));
        p[i * 4 + 1] = detail::unsquash_box(w.vy, 0.5 * psi.height, detail::vertex_radius_y(psi.height));
        p[i * 4 + 2] = w.theta1;
        p[i * 4 + 3] = detail::unsquash_range(w.theta2 - w.theta1, lo, hi);
    }
    const int c0 = 4 * L;
    for (int ch = 0; ch < 3; ++ch) p[c0 + ch] = psi.bg_color[ch];
    for (int i = 0; i < L; ++i) {
        for (int ch = 0; ch < 3; ++ch) p[c0 + 3 * (i + 1) + ch] = psi.wedges[i].color[ch];
    }
    const int e0 = c0 + 3 * (L + 1);
    for (int i = 0; i < L; ++i) {
        p[e0 + i] = detail::unsquash_range(cp.eta_plus[i], opt.eta_min, opt.eta_max);
        p[e0 + L + i] = detail::unsquash_range(cp.eta_minus[i], opt.eta_min, opt.eta_max);
    }
    return p;
}

ConsistentPatch unpack_global_params(const std::vector<double>& params, int width, int height,
                                     const FitOptions& opt) {
    const int L = static_cast<int>((params.size() - 3)) / 9;
    auto gp = detail::unpack_global_T<double>(params.data(), L, width, height, opt);
    ConsistentPatch cp;
    cp.base = std::move(gp.geometry);
    cp.eta_plus = std::move(gp.eta_plus);
    cp.eta_minus = std::move(gp.eta_minus);
    for (int i = 0; i < L; ++i) cp.base.wedges[i].eta = cp.eta_plus[i];
    return cp;
}

// ---- objectives --------------------------------------------------------

namespace {

template <int L>
double local_objective_impl(const std::vector<double>& params, const ImageD& target,
                            const ImageD& target_deriv, const ImageD* u_star,
                            const FitOptions& opt, std::vector<double>* grad) {
    constexpr int NP = detail::local_param_count(L);
    const std::array<double, 3>& beta = opt.weights.beta;
    if (grad == nullptr) {
        thread_local LossScratch<double> scratch;
        const auto psi =
            detail::unpack_local_T<double>(params.data(), L, target.width, target.height, opt);
        return detail::local_terms_T<double>(psi, true, target, target_deriv, u_star, beta,
                                             opt.delta, opt, true, scratch);
    }
    using D = Dual<NP>;
    thread_local LossScratch<D> scratch;
    std::array<D, NP> p;
    for (int i = 0; i < NP; ++i) p[i] = D::seeded(params[i], i);
    const auto psi = detail::unpack_local_T<D>(p.data(), L, target.width, target.height, opt);
    const D loss = detail::local_terms_T<D>(psi, true, target, target_deriv, u_star, beta,
                                            opt.delta, opt, true, scratch);
    grad->assign(loss.d.begin(), loss.d.end());
    return loss.v;
}

}  // namespace

double local_objective(const std::vector<double>& params, const ImageD& target,
                       const ImageD& target_deriv, const ImageD* u_star, const FitOptions& opt,
                       std::vector<double>* grad) {
    switch (opt.wedges) {
        case 1: return local_objective_impl<1>(params, target, target_deriv, u_star, opt, grad);
        case 2: return local_objective_impl<2>(params, target, target_deriv, u_star, opt, grad);
        case 3: return local_objective_impl<3>(params, target, target_deriv, u_star, opt, grad);
        case 4: return local_objective_impl<4>(params, target, target_deriv, u_star, opt, grad);
        default: throw ConfigError("fit: wedge count must be in [1,4]");
    }
}

double local_loss(const WedgePatch& psi, const ImageD& target, const ImageD& target_deriv,
                  const ImageD* u_star, const std::array<double, 3>& beta, double delta,
                  const FitOptions& opt) {
    LossScratch<double> scratch;
    return detail::local_terms_T<double>(psi, false, target, target_deriv, u_star, beta, delta,
                                         opt, false, scratch);
}

// ---- local stage -------------------------------------------------------

ImageD extract_patch(const ImageD& img, int ox, int oy, int size) {
    ImageD out(size, size, img.channels);
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            for (int c = 0; c < img.channels; ++c) out.at(x, y, c) = img.at(ox + x, oy + y, c);
        }
    }
    return out;
}

uint64_t patch_seed(uint64_t master, int ox, int oy) {
    return derive_seed(master, 0x10c4 /* stage tag */, static_cast<uint64_t>(ox),
                       static_cast<uint64_t>(oy));
}

namespace {

// Parked configuration: wedges outside the dilated box corner opening away
// from the patch, so the render is the flat background.
std::vector<double> parked_init(int L, int W, int H, const FitOptions& opt) {
    std::vector<double> p(detail::local_param_count(L));
    for (int i = 0; i < L; ++i) {
        p[i * 5 + 0] = detail::unsquash_box(-0.9 * W, 0.5 * W, detail::vertex_radius_x(W));
        p[i * 5 + 1] = detail::unsquash_box(-0.9 * H, 0.5 * H, detail::vertex_radius_y(H));
        // Open toward negative x/y, away from the patch interior.
        p[i * 5 + 2] = kPi * (0.95 + 0.02 * i);
        p[i * 5 + 3] = detail::unsquash_range(0.45 * kPi, opt.angle_margin,
                                              kTwoPi - opt.angle_margin);
        p[i * 5 + 4] = detail::unsquash_range(opt.eta_init, opt.eta_min, opt.eta_max);
    }
    return p;
}

std::vector<double> sampled_init(int L, int W, int H, const FitOptions& opt, Rng& rng) {
    std::vector<double> p(detail::local_param_count(L));
    for (int i = 0; i < L; ++i) {
        // Vertices uniform in the dilated patch box, angles uniform.
        p[i * 5 + 0] = detail::unsquash_box(rng.uniform(-1.0 * W, 2.0 * W), 0.5 * W,
                                            detail::vertex_radius_x(W));
        p[i * 5 + 1] = detail::unsquash_box(rng.uniform(-1.0 * H, 2.0 * H), 0.5 * H,
                                            detail::vertex_radius_y(H));
        p[i * 5 + 2] = rng.uniform(0.0, kTwoPi);
        p[i * 5 + 3] = detail::unsquash_range(rng.uniform(0.3, kTwoPi - 0.3), opt.angle_margin,
                                              kTwoPi - opt.angle_margin);
        p[i * 5 + 4] = detail::unsquash_range(opt.eta_init, opt.eta_min, opt.eta_max);
    }
    return p;
}

// Noise-adaptive boundary detection on the channel-mean image: box-smooth,
// Sobel, and compare the peak response against the expected response to
// pure sensor noise. Conservative on purpose; anything that looks like
// structure gets the full multi-start treatment.
bool patch_is_flat(const ImageD& patch, const FitOptions& opt) {
    const int W = patch.width, H = patch.height;
    ImageD luma(W, H, 1);
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            luma.at(x, y) =
                (patch.at(x, y, 0) + patch.at(x, y, 1) + patch.at(x, y, 2)) / 3.0;
        }
    }
    // Robust per-pixel noise variance from horizontal neighbor differences.
    std::vector<double> d2;
    d2.reserve(static_cast<size_t>(W - 1) * H);
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x + 1 < W; ++x) {
            const double d = luma.at(x + 1, y) - luma.at(x, y);
            d2.push_back(d * d);
        }
    }
    std::nth_element(d2.begin(), d2.begin() + d2.size() / 2, d2.end());
    const double sigma2 = d2[d2.size() / 2] / (2.0 * 0.4549);  // median->variance for chi^2_1

    ImageD smooth(W, H, 1);
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            double acc = 0.0;
            for (int dy = -1; dy <= 1; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) {
                    const int xi = std::clamp(x + dx, 0, W - 1);
                    const int yi = std::clamp(y + dy, 0, H - 1);
                    acc += luma.at(xi, yi);
                }
            }
            smooth.at(x, y) = acc / 9.0;
        }
    }
    double peak = 0.0;
    for (int y = 1; y + 1 < H; ++y) {
        for (int x = 1; x + 1 < W; ++x) {
            const double gx = (smooth.at(x + 1, y - 1) - smooth.at(x - 1, y - 1)) +
                              2.0 * (smooth.at(x + 1, y) - smooth.at(x - 1, y)) +
                              (smooth.at(x + 1, y + 1) - smooth.at(x - 1, y + 1));
            const double gy = (smooth.at(x - 1, y + 1) - smooth.at(x - 1, y - 1)) +
                              2.0 * (smooth.at(x, y + 1) - smooth.at(x, y - 1)) +
                              (smooth.at(x + 1, y + 1) - smooth.at(x + 1, y - 1));
            peak = std::max(peak, gx * gx + gy * gy);
        }
    }
    // Sobel-of-boxed-noise response variance per direction is about
    // 12/9 * sigma^2 including the overlap correlations (measured).
    const double noise_g2 = 2.0 * (12.0 / 9.0) * sigma2;
    const double thresh = opt.flat_gradient_sigmas * opt.flat_gradient_sigmas * noise_g2;
    const double floor2 = opt.flat_gradient_floor * opt.flat_gradient_floor;
    return peak < std::max(thresh, floor2);
}

}  // namespace

LocalFit fit_patch_local_single(const ImageD& patch, const ImageD* u_star,
                                const FitOptions& opt, uint64_t seed) {
    opt.validate();
    const int W = patch.width, H = patch.height, L = opt.wedges;
    if (patch.channels != 3) throw ConfigError("fit: patch must have 3 channels");
    const ImageD deriv_img = sobel_magnitude_image(patch);

    auto objective = [&](const std::vector<double>& x, std::vector<double>* g) -> double {
        try {
            return local_objective(x, patch, deriv_img, u_star, opt, g);
        } catch (const NumericalError&) {
            return std::numeric_limits<double>::infinity();
        }
    };

    Rng rng(seed);
    std::vector<std::vector<double>> inits;
    inits.push_back(parked_init(L, W, H, opt));
    for (int r = 1; r < opt.restarts; ++r) inits.push_back(sampled_init(L, W, H, opt, rng));

    const bool flat = opt.flat_skip && patch_is_flat(patch, opt);

    MinimizeOptions mopt;
    mopt.max_iters = flat ? std::min(opt.restart_iters, 25) : opt.restart_iters;
    mopt.loss_rel_tol = 1e-9;
    mopt.patience = 4;

    double best_loss = std::numeric_limits<double>::infinity();
    std::vector<double> best_x;
    const int used = flat ? 1 : opt.restarts;
    for (int r = 0; r < used; ++r) {
        if (best_loss < 1e-14) break;  // already at machine-level optimum
        std::vector<double> x = inits[r];
        const MinimizeResult mr = minimize_lbfgs(x, objective, mopt);
        if (mr.start_invalid || !std::isfinite(mr.loss)) continue;
        if (mr.loss < best_loss) {
            best_loss = mr.loss;
            best_x = std::move(x);
        }
    }
    if (best_x.empty()) {
        throw NumericalError("fit_patch_local: every restart was degenerate");
    }

    LocalFit out;
    out.psi = unpack_local_params(best_x, W, H, opt);
    // Final colors from the exact-Heaviside alpha stack.
    LossScratch<double> s;
    compute_patch_fields(out.psi, s.fields, MaskMode{}, opt.w_scale);
    s.etas.resize(L);
    for (int i = 0; i < L; ++i) s.etas[i] = out.psi.wedges[i].eta;
    collective_alphas(s.fields, s.etas, s.coll);
    const auto colors = ridge_colors(s.coll.data(), L, patch, opt.ridge_lambda);
    out.psi.bg_color = colors[0];
    for (int i = 0; i < L; ++i) out.psi.wedges[i].color = colors[i + 1];
    for (int i = 0; i < L; ++i) out.psi.wedges[i].theta1 = wrap_angle(out.psi.wedges[i].theta1);
    for (int i = 0; i < L; ++i) {
        // keep theta2 in (theta1, theta1 + 2*pi) after wrapping theta1
        auto& w = out.psi.wedges[i];
        const double span = std::fmod(w.theta2 - w.theta1, kTwoPi);
        w.theta2 = w.theta1 + (span <= 0 ? span + kTwoPi : span);
    }
    out.loss = local_loss(out.psi, patch, deriv_img, u_star, opt.weights.beta, opt.delta, opt);
    return out;
}

std::pair<LocalFit, LocalFit> fit_patch_local(const ImageD& patch_plus,
                                              const ImageD& patch_minus, const FitOptions& opt,
                                              uint64_t seed, const ImageD* u_star) {
    LocalFit plus = fit_patch_local_single(patch_plus, u_star, opt, derive_seed(seed, 1));
    LocalFit minus = fit_patch_local_single(patch_minus, u_star, opt, derive_seed(seed, 2));
    return {std::move(plus), std::move(minus)};
}

LocalStageResult run_local_stage(const ImageD& img_plus, const ImageD& img_minus,
                                 const ImageD* u_star, const PatchGrid& grid,
                                 const FitOptions& opt, int seed_off_x, int seed_off_y) {
    if (!img_plus.same_shape(img_minus)) throw ConfigError("fit: image pair shape mismatch");
    LocalStageResult res;
    res.plus.resize(grid.count());
    res.minus.resize(grid.count());
    parallel_for(static_cast<size_t>(grid.count()), opt.threads, [&](size_t p) {
        const int ox = grid.origin_x(static_cast<int>(p));
        const int oy = grid.origin_y(static_cast<int>(p));
        const ImageD pat_p = extract_patch(img_plus, ox, oy, grid.patch);
        const ImageD pat_m = extract_patch(img_minus, ox, oy, grid.patch);
        ImageD ustar_crop;
        const ImageD* uptr = nullptr;
        if (u_star != nullptr && opt.profile == FitProfile::SupervisedEval) {
            ustar_crop = extract_patch(*u_star, ox, oy, grid.patch);
            uptr = &ustar_crop;
        }
        auto [fp, fm] = fit_patch_local(
            pat_p, pat_m, opt, patch_seed(opt.seed, ox + seed_off_x, oy + seed_off_y), uptr);
        res.plus[p] = std::move(fp);
        res.minus[p] = std::move(fm);
    });
    return res;
}

}  // namespace dfd
