// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "dfd/core.hpp"

namespace dfd {

struct MetricsReport {
    double rmse = 0.0;        // same unit as the depth maps
    double abs_rel = 0.0;     // ratio
    double abs_rel_x100 = 0.0;
    double delta1 = 0.0, delta2 = 0.0, delta3 = 0.0;
    long pixel_count = 0;
    std::string mask_description;
};

/// Depth accuracy over the masked pixels. The delta thresholds are
/// evaluated on range-normalized maps (working range [z_min, z_max]) with
/// values clamped to 1e-6 from below before the ratio.
MetricsReport compute_metrics(const ImageD& Z, const ImageD& Z_star,
                              const std::vector<uint8_t>& mask, double z_min, double z_max);

/// Convenience: mask = pixels where both maps are finite.
MetricsReport compute_metrics_finite(const ImageD& Z, const ImageD& Z_star, double z_min,
                                     double z_max);

struct Calibration {
    double omega0 = 0.0;  // offset
    double omega1 = 1.0;  // scale
    double residual_rms = 0.0;

    double apply(double z) const { return omega0 + omega1 * z; }
};

/// Least-squares line through (predicted, true) depth pairs.
Calibration calibrate_linear(const std::vector<std::pair<double, double>>& pairs);

}  // namespace dfd
