// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <deque>
#include <limits>
#include <vector>

namespace dfd {

struct MinimizeOptions {
    int max_iters = 150;
    int history = 6;
    double grad_tol = 1e-8;
    double loss_rel_tol = 1e-10;  // stop after `patience` tiny relative drops
    int patience = 4;
    double init_step = 1.0;
    double armijo_c = 1e-4;
    int max_backtracks = 30;
};

struct MinimizeResult {
    double loss = std::numeric_limits<double>::infinity();
    int iters = 0;
    bool start_invalid = false;  // objective non-finite at the initial point
};

/// Limited-memory BFGS with Armijo backtracking. First-order only (needs
/// nothing but values and gradients) and monotone: a step is accepted only
/// when it improves the objective, so the per-run loss trace is
/// non-increasing. The line search evaluates values only; one gradient is
/// computed per accepted iterate. Falls back to steepest descent when the
/// quasi-Newton direction loses descent.
///
/// F signature: double(const std::vector<double>& x, std::vector<double>* grad)
/// where a null grad requests a value-only evaluation. Non-finite returns
/// are treated as infeasible points.
template <class F>
MinimizeResult minimize_lbfgs(std::vector<double>& x, F&& objective, const MinimizeOptions& opt) {
    const size_t n = x.size();
    std::vector<double> grad(n), x_new(n), dir(n);
    std::deque<std::pair<std::vector<double>, std::vector<double>>> mem;  // (s, y)

    MinimizeResult res;
    double f = objective(x, &grad);
    if (!std::isfinite(f)) {
        res.start_invalid = true;
        return res;
    }
    int stall = 0;
    double step_hint = opt.init_step;

    for (int it = 0; it < opt.max_iters; ++it) {
        double gnorm2 = 0.0;
        for (size_t i = 0; i < n; ++i) gnorm2 += grad[i] * grad[i];
        if (std::sqrt(gnorm2) <= opt.grad_tol) break;

        // Two-loop recursion.
        for (size_t i = 0; i < n; ++i) dir[i] = -grad[i];
        std::vector<double> alphas(mem.size());
        for (int k = static_cast<int>(mem.size()) - 1; k >= 0; --k) {
            const auto& [s, y] = mem[k];
            double sy = 0.0, sd = 0.0;
            for (size_t i = 0; i < n; ++i) {
                sy += s[i] * y[i];
                sd += s[i] * dir[i];
            }
            alphas[k] = sd / sy;
            for (size_t i = 0; i < n; ++i) dir[i] -= alphas[k] * y[i];
        }
        if (!mem.empty()) {
            const auto& [s, y] = mem.back();
            double sy = 0.0, yy = 0.0;
            for (size_t i = 0; i < n; ++i) {
                sy += s[i] * y[i];
                yy += y[i] * y[i];
            }
            const double scale = sy / yy;
            for (size_t i = 0; i < n; ++i) dir[i] *= scale;
            for (size_t k = 0; k < mem.size(); ++k) {
                const auto& [s2, y2] = mem[k];
                double sy2 = 0.0, yd = 0.0;
                for (size_t i = 0; i < n; ++i) {
                    sy2 += s2[i] * y2[i];
                    yd += y2[i] * dir[i];
                }
                const double beta = yd / sy2;
                for (size_t i = 0; i < n; ++i) dir[i] += (alphas[k] - beta) * s2[i];
            }
        }

        double dg = 0.0;
        for (size_t i = 0; i < n; ++i) dg += dir[i] * grad[i];
        if (!(dg < 0.0)) {  // lost descent; restart from scaled -g
            mem.clear();
            const double gn = std::sqrt(gnorm2);
            for (size_t i = 0; i < n; ++i) dir[i] = -grad[i] / (gn + 1e-30);
            dg = -gn;
        }

        double t = mem.empty() ? step_hint : 1.0;
        bool accepted = false;
        for (int bt = 0; bt < opt.max_backtracks; ++bt, t *= 0.5) {
            for (size_t i = 0; i < n; ++i) x_new[i] = x[i] + t * dir[i];
            const double f_new = objective(x_new, nullptr);
            if (!(std::isfinite(f_new) && f_new <= f + opt.armijo_c * t * dg)) continue;

            std::vector<double> grad_new(n);
            const double f_check = objective(x_new, &grad_new);
            std::vector<double> s(n), y(n);
            double sy = 0.0;
            for (size_t i = 0; i < n; ++i) {
                s[i] = x_new[i] - x[i];
                y[i] = grad_new[i] - grad[i];
                sy += s[i] * y[i];
            }
            if (sy > 1e-12) {
                mem.emplace_back(std::move(s), std::move(y));
                if (static_cast<int>(mem.size()) > opt.history) mem.pop_front();
            }
            const double drop = f - f_new;
            x.swap(x_new);
            grad.swap(grad_new);
            f = f_check;
            step_hint = std::max(t, 1e-3);
            accepted = true;
            res.iters = it + 1;
            stall = (drop <= opt.loss_rel_tol * std::max(1.0, std::fabs(f))) ? stall + 1 : 0;
            break;
        }
        if (!accepted || stall >= opt.patience) break;
    }
    res.loss = f;
    return res;
}

}  // namespace dfd
