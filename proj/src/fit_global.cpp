// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <limits>

#include "dfd/aggregate.hpp"
#include "dfd/fit.hpp"
#include "dfd/lbfgs.hpp"
#include "dfd/log.hpp"
#include "dfd/threading.hpp"
#include "fit_detail.hpp"

namespace dfd {

using detail::GlobalLossRefs;
using detail::GlobalParamsT;
using detail::LossScratch;

namespace {

template <int L>
double global_objective_impl(const std::vector<double>& params, const GlobalLossRefs& refs,
                             int patch_size, const FitOptions& opt, bool soft,
                             std::vector<double>* grad) {
    constexpr int NP = detail::global_param_count(L);
    if (grad == nullptr) {
        thread_local LossScratch<double> scratch;
        const auto gp =
            detail::unpack_global_T<double>(params.data(), L, patch_size, patch_size, opt);
        return detail::global_terms_T<double>(gp, refs, opt, soft, scratch);
    }
    using D = Dual<NP>;
    thread_local LossScratch<D> scratch;
    std::array<D, NP> p;
    for (int i = 0; i < NP; ++i) p[i] = D::seeded(params[i], i);
    const auto gp = detail::unpack_global_T<D>(p.data(), L, patch_size, patch_size, opt);
    const D loss = detail::global_terms_T<D>(gp, refs, opt, soft, scratch);
    grad->assign(loss.d.begin(), loss.d.end());
    return loss.v;
}

double global_objective_dispatch(const std::vector<double>& params, const GlobalLossRefs& refs,
                                 int patch_size, const FitOptions& opt, bool soft,
                                 std::vector<double>* grad) {
    switch (opt.wedges) {
        case 1: return global_objective_impl<1>(params, refs, patch_size, opt, soft, grad);
        case 2: return global_objective_impl<2>(params, refs, patch_size, opt, soft, grad);
        case 3: return global_objective_impl<3>(params, refs, patch_size, opt, soft, grad);
        case 4: return global_objective_impl<4>(params, refs, patch_size, opt, soft, grad);
        default: throw ConfigError("fit: wedge count must be in [1,4]");
    }
}

}  // namespace

double global_objective(const std::vector<double>& params, int ox, int oy,
                        const ImageD& target_plus, const ImageD& target_minus,
                        const ImageD& target_deriv_plus, const ImageD& target_deriv_minus,
                        const GlobalContext& ctx, const ImageD* u_star, const ImageD* z_star,
                        const std::array<double, 8>& gamma, const OpticsConfig& optics,
                        const FitOptions& opt, std::vector<double>* grad) {
    GlobalLossRefs refs;
    refs.ox = ox;
    refs.oy = oy;
    refs.target_plus = &target_plus;
    refs.target_minus = &target_minus;
    refs.target_deriv_plus = &target_deriv_plus;
    refs.target_deriv_minus = &target_deriv_minus;
    refs.ctx = &ctx;
    refs.u_star = u_star;
    refs.z_star = z_star;
    refs.gamma = gamma;
    refs.optics = &optics;
    return global_objective_dispatch(params, refs, target_deriv_plus.width, opt, true, grad);
}

double global_loss(const ConsistentPatch& cp, int ox, int oy, const ImageD& target_plus,
                   const ImageD& target_minus, const ImageD& target_deriv_plus,
                   const ImageD& target_deriv_minus, const GlobalContext& ctx,
                   const ImageD* u_star, const ImageD* z_star,
                   const std::array<double, 8>& gamma, const OpticsConfig& optics,
                   const FitOptions& opt) {
    GlobalLossRefs refs;
    refs.ox = ox;
    refs.oy = oy;
    refs.target_plus = &target_plus;
    refs.target_minus = &target_minus;
    refs.target_deriv_plus = &target_deriv_plus;
    refs.target_deriv_minus = &target_deriv_minus;
    refs.ctx = &ctx;
    refs.u_star = u_star;
    refs.z_star = z_star;
    refs.gamma = gamma;
    refs.optics = &optics;
    GlobalParamsT<double> gp;
    gp.geometry = cp.base;
    gp.eta_plus.assign(cp.eta_plus.begin(), cp.eta_plus.end());
    gp.eta_minus.assign(cp.eta_minus.begin(), cp.eta_minus.end());
    LossScratch<double> scratch;
    return detail::global_terms_T<double>(gp, refs, opt, false, scratch);
}

namespace {

double circular_mean(double a, double b) {
    const double sx = std::cos(a) + std::cos(b);
    const double sy = std::sin(a) + std::sin(b);
    if (sx * sx + sy * sy < 1e-20) return a;  // opposite angles; keep the first
    return std::atan2(sy, sx);
}

/// Defocus-consistent initialization: element-wise averaged geometry and a
/// joint ridge color solve against both views.
ConsistentPatch init_consistent(const LocalFit& plus, const LocalFit& minus,
                                const ImageD& tgt_plus, const ImageD& tgt_minus,
                                const FitOptions& opt) {
    const int L = plus.psi.count();
    ConsistentPatch cp;
    cp.base = plus.psi;
    cp.eta_plus.resize(L);
    cp.eta_minus.resize(L);
    for (int i = 0; i < L; ++i) {
        const auto& wp = plus.psi.wedges[i];
        const auto& wm = minus.psi.wedges[i];
        auto& w = cp.base.wedges[i];
        w.vx = 0.5 * (wp.vx + wm.vx);
        w.vy = 0.5 * (wp.vy + wm.vy);
        const double t1 = wrap_angle(circular_mean(wp.theta1, wm.theta1));
        const double span = 0.5 * ((wp.theta2 - wp.theta1) + (wm.theta2 - wm.theta1));
        w.theta1 = t1;
        w.theta2 = t1 + span;
        cp.eta_plus[i] = wp.eta;
        cp.eta_minus[i] = wm.eta;
        w.eta = wp.eta;
    }
    // Joint color solve with the shared geometry and per-view smoothness.
    LossScratch<double> s1, s2;
    const WedgePatch view_p = cp.view(true);
    compute_patch_fields(view_p, s1.fields, MaskMode{}, opt.w_scale);
    s1.etas = cp.eta_plus;
    collective_alphas(s1.fields, s1.etas, s1.coll);
    s2.etas = cp.eta_minus;
    collective_alphas(s1.fields, s2.etas, s2.coll);  // same fields, different eta
    const auto colors =
        ridge_colors_pair(s1.coll.data(), s2.coll.data(), L, tgt_plus, tgt_minus,
                          opt.ridge_lambda);
    cp.base.bg_color = colors[0];
    for (int i = 0; i < L; ++i) cp.base.wedges[i].color = colors[i + 1];
    return cp;
}

GlobalContext make_context(const std::vector<ConsistentPatch>& patches, const PatchGrid& grid,
                           const FitOptions& opt, bool soft) {
    GlobalContext ctx;
    // Color maps do not involve the Heaviside; the boundary consensus is
    // built in the same mask mode the optimizer sees so the consistency
    // terms compare like against like.
    ctx.B = build_boundary_map(patches, grid, opt.delta, opt.threads,
                               MaskMode{soft, opt.mask_temperature});
    ctx.C_plus = build_color_map(patches, grid, EtaChoice::Plus, 0.0, opt.eta_min, opt.eta_max,
                                 opt.threads);
    ctx.C_minus = build_color_map(patches, grid, EtaChoice::Minus, 0.0, opt.eta_min, opt.eta_max,
                                  opt.threads);
    ctx.Cp_plus = sobel_magnitude_image(ctx.C_plus);
    ctx.Cp_minus = sobel_magnitude_image(ctx.C_minus);
    return ctx;
}

}  // namespace

GlobalStageResult refine_global(const LocalStageResult& locals, const ImageD& target_plus,
                                const ImageD& target_minus, const ImageD* u_star,
                                const ImageD* z_star, const PatchGrid& grid,
                                const OpticsConfig& optics, const FitOptions& opt) {
    opt.validate();
    optics.validate();
    const int P = grid.count();
    const int ps = grid.patch;
    if (static_cast<int>(locals.plus.size()) != P || static_cast<int>(locals.minus.size()) != P) {
        throw ConfigError("refine_global: local results do not match the grid");
    }
    const bool supervised = opt.profile == FitProfile::SupervisedEval;
    const ImageD* ustar_used = supervised ? u_star : nullptr;
    const ImageD* zstar_used = supervised ? z_star : nullptr;

    // Patch-local Sobel targets, fixed across the refinement.
    std::vector<ImageD> tder_p(P), tder_m(P);
    std::vector<std::vector<double>> params(P);
    parallel_for(static_cast<size_t>(P), opt.threads, [&](size_t p) {
        const int ox = grid.origin_x(static_cast<int>(p));
        const int oy = grid.origin_y(static_cast<int>(p));
        const ImageD crop_p = extract_patch(target_plus, ox, oy, ps);
        const ImageD crop_m = extract_patch(target_minus, ox, oy, ps);
        tder_p[p] = sobel_magnitude_image(crop_p);
        tder_m[p] = sobel_magnitude_image(crop_m);
        const ConsistentPatch cp =
            init_consistent(locals.plus[p], locals.minus[p], crop_p, crop_m, opt);
        params[p] = pack_global_params(cp, opt);
    });

    GlobalStageResult out;
    const int T = std::max(1, opt.outer_iters);
    std::vector<double> patch_loss(P, std::numeric_limits<double>::infinity());
    std::vector<char> frozen(P, 0);
    std::array<double, 8> prev_gamma{};
    bool have_prev_gamma = false;

    std::vector<std::vector<double>> saved_params;
    GlobalContext ctx;
    double L_prev = std::numeric_limits<double>::infinity();
    double step_scale = 1.0;

    auto eval_total = [&](const GlobalContext& c, std::vector<double>& per_patch) {
        std::vector<double> sums(std::max(1, opt.threads), 0.0);
        parallel_chunks(static_cast<size_t>(P), opt.threads, [&](size_t b, size_t e, int t) {
            double acc = 0.0;
            for (size_t p = b; p < e; ++p) {
                GlobalLossRefs refs;
                refs.ox = grid.origin_x(static_cast<int>(p));
                refs.oy = grid.origin_y(static_cast<int>(p));
                refs.target_plus = &target_plus;
                refs.target_minus = &target_minus;
                refs.target_deriv_plus = &tder_p[p];
                refs.target_deriv_minus = &tder_m[p];
                refs.ctx = &c;
                refs.u_star = ustar_used;
                refs.z_star = zstar_used;
                refs.gamma = prev_gamma;
                refs.optics = &optics;
                double v;
                try {
                    v = global_objective_dispatch(params[p], refs, ps, opt, true, nullptr);
                } catch (const NumericalError&) {
                    v = std::numeric_limits<double>::infinity();
                }
                per_patch[p] = v;
                acc += v;
            }
            sums[t] += acc;
        });
        double total = 0.0;
        for (double s : sums) total += s;
        return total / P;
    };

    for (int t = 0; t < T; ++t) {
        const double frac = T > 1 ? static_cast<double>(t) / (T - 1) : 1.0;
        const std::array<double, 8> gamma = opt.weights.gamma_at(frac);
        const bool schedule_constant = have_prev_gamma && gamma == prev_gamma;
        if (!schedule_constant) std::fill(frozen.begin(), frozen.end(), 0);
        prev_gamma = gamma;
        have_prev_gamma = true;

        GlobalContext ctx_new = make_context(
            [&] {
                std::vector<ConsistentPatch> cps(P);
                for (int p = 0; p < P; ++p) cps[p] = unpack_global_params(params[p], ps, ps, opt);
                return cps;
            }(),
            grid, opt, true);

        std::vector<double> per_patch(P, 0.0);
        double L_t = eval_total(ctx_new, per_patch);

        if (schedule_constant && L_t > L_prev + 1e-6) {
            // Patch moves degraded the consensus; back out and take smaller
            // steps this round.
            params = saved_params;
            step_scale *= 0.5;
            if (step_scale < 1e-3) break;
            L_t = L_prev;
            for (int p = 0; p < P; ++p) per_patch[p] = patch_loss[p];
        } else {
            ctx = std::move(ctx_new);
            saved_params = params;
        }
        out.loss_trace.push_back(L_t);
        L_prev = L_t;

        parallel_for(static_cast<size_t>(P), opt.threads, [&](size_t p) {
            if (frozen[p] && per_patch[p] <= patch_loss[p] * (1.0 + 1e-6) + 1e-12) return;
            GlobalLossRefs refs;
            refs.ox = grid.origin_x(static_cast<int>(p));
            refs.oy = grid.origin_y(static_cast<int>(p));
            refs.target_plus = &target_plus;
            refs.target_minus = &target_minus;
            refs.target_deriv_plus = &tder_p[p];
            refs.target_deriv_minus = &tder_m[p];
            refs.ctx = &ctx;
            refs.u_star = ustar_used;
            refs.z_star = zstar_used;
            refs.gamma = gamma;
            refs.optics = &optics;
            auto objective = [&](const std::vector<double>& x, std::vector<double>* g) -> double {
                try {
                    return global_objective_dispatch(x, refs, ps, opt, true, g);
                } catch (const NumericalError&) {
                    return std::numeric_limits<double>::infinity();
                }
            };
            MinimizeOptions mo;
            mo.max_iters = opt.inner_iters;
            mo.init_step = step_scale;
            mo.loss_rel_tol = 1e-10;
            mo.patience = 2;
            const double before = per_patch[p];
            const MinimizeResult mr = minimize_lbfgs(params[p], objective, mo);
            const double after = mr.start_invalid ? before : mr.loss;
            if (std::isfinite(after) && before - after <
                    1e-9 * std::max(1.0, std::fabs(after))) {
                frozen[p] = 1;
            }
            patch_loss[p] = std::isfinite(after) ? after : before;
        });
    }

    out.patches.resize(P);
    for (int p = 0; p < P; ++p) {
        out.patches[p] = unpack_global_params(params[p], ps, ps, opt);
    }
    out.patch_losses = std::move(patch_loss);
    log_debug("refine_global: " + std::to_string(out.loss_trace.size()) + " outer rounds");
    return out;
}

}  // namespace dfd
