// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

#include "dfd/core.hpp"
#include "dfd/rng.hpp"

namespace dfd {

/// Poisson-Gaussian sensor model: photon level alpha scales the clean
/// signal into expected counts, Gaussian read noise adds on top.
struct NoiseModel {
    double alpha = 200.0;
    double sigma_read = 2.0;
    uint64_t seed = 0;

    void validate() const {
        if (!(alpha > 0.0)) throw ConfigError("noise: alpha must be > 0");
        if (sigma_read < 0.0) throw ConfigError("noise: sigma_read must be >= 0");
    }
};

/// Apply Poisson(alpha * I) + N(0, sigma_read^2) per sample, then divide by
/// alpha so values stay on the normalized scale. No clipping; values can
/// leave [0, 1]. Deterministic given the model seed.
ImageD add_noise(const ImageD& clean, const NoiseModel& nm);

/// Stream-passing variant for callers that manage their own RNG streams.
ImageD add_noise(const ImageD& clean, double alpha, double sigma_read, Rng& rng);

}  // namespace dfd
