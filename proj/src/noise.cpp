// SPDX-License-Identifier: Apache-2.0
#include "dfd/noise.hpp"

namespace dfd {

ImageD add_noise(const ImageD& clean, double alpha, double sigma_read, Rng& rng) {
    if (!(alpha > 0.0)) throw ConfigError("add_noise: alpha must be > 0");
    ImageD out(clean.width, clean.height, clean.channels);
    const double inv_alpha = 1.0 / alpha;
    for (size_t i = 0; i < clean.data.size(); ++i) {
        const double counts = static_cast<double>(rng.poisson(alpha * clean.data[i]));
        out.data[i] = (counts + sigma_read * rng.normal()) * inv_alpha;
    }
    return out;
}

ImageD add_noise(const ImageD& clean, const NoiseModel& nm) {
    nm.validate();
    Rng rng(nm.seed);
    return add_noise(clean, nm.alpha, nm.sigma_read, rng);
}

}  // namespace dfd
