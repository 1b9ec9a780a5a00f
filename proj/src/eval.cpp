// SPDX-License-Identifier: Apache-2.0
#include "dfd/eval.hpp"

#include <algorithm>
#include <cmath>

namespace dfd {

MetricsReport compute_metrics(const ImageD& Z, const ImageD& Z_star,
                              const std::vector<uint8_t>& mask, double z_min, double z_max) {
    if (!Z.same_shape(Z_star)) throw ConfigError("metrics: shape mismatch");
    if (mask.size() != Z.data.size()) throw ConfigError("metrics: mask size mismatch");
    if (!(z_max > z_min)) throw ConfigError("metrics: bad working range");

    constexpr double eps = 1e-6;
    const double inv_range = 1.0 / (z_max - z_min);
    double se = 0.0, rel = 0.0;
    long n = 0, d1 = 0, d2 = 0, d3 = 0;
    for (size_t k = 0; k < Z.data.size(); ++k) {
        if (!mask[k]) continue;
        const double z = Z.data[k], zs = Z_star.data[k];
        const double diff = z - zs;
        se += diff * diff;
        rel += std::fabs(diff) / zs;
        const double zn = std::max((z - z_min) * inv_range, eps);
        const double zsn = std::max((zs - z_min) * inv_range, eps);
        const double ratio = std::max(zn / zsn, zsn / zn);
        if (ratio < 1.25) ++d1;
        if (ratio < 1.25 * 1.25) ++d2;
        if (ratio < 1.25 * 1.25 * 1.25) ++d3;
        ++n;
    }
    if (n == 0) throw ConfigError("metrics: empty mask");
    MetricsReport r;
    r.pixel_count = n;
    r.rmse = std::sqrt(se / n);
    r.abs_rel = rel / n;
    r.abs_rel_x100 = 100.0 * r.abs_rel;
    r.delta1 = static_cast<double>(d1) / n;
    r.delta2 = static_cast<double>(d2) / n;
    r.delta3 = static_cast<double>(d3) / n;
    return r;
}

MetricsReport compute_metrics_finite(const ImageD& Z, const ImageD& Z_star, double z_min,
                                     double z_max) {
    std::vector<uint8_t> mask(Z.data.size());
    for (size_t k = 0; k < Z.data.size(); ++k) {
        mask[k] = std::isfinite(Z.data[k]) && std::isfinite(Z_star.data[k]) ? 1 : 0;
    }
    MetricsReport r = compute_metrics(Z, Z_star, mask, z_min, z_max);
    r.mask_description = "finite(Z) & finite(Z*)";
    return r;
}

Calibration calibrate_linear(const std::vector<std::pair<double, double>>& pairs) {
    if (pairs.size() < 2) throw ConfigError("calibrate: need at least two measurements");
    double sx = 0.0, sy = 0.0;
    for (const auto& [zp, zt] : pairs) {
        sx += zp;
        sy += zt;
    }
    const double n = static_cast<double>(pairs.size());
    const double mx = sx / n, my = sy / n;
    double sxx = 0.0, sxy = 0.0;
    for (const auto& [zp, zt] : pairs) {
        sxx += (zp - mx) * (zp - mx);
        sxy += (zp - mx) * (zt - my);
    }
    if (sxx < 1e-15) throw NumericalError("calibrate: rank-deficient (all predictions equal)");
    Calibration c;
    c.omega1 = sxy / sxx;
    c.omega0 = my - c.omega1 * mx;
    double se = 0.0;
    for (const auto& [zp, zt] : pairs) {
        const double r = zt - c.apply(zp);
        se += r * r;
    }
    c.residual_rms = std::sqrt(se / n);
    return c;
}

}  // namespace dfd
