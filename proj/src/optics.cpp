// SPDX-License-Identifier: Apache-2.0
#include "dfd/optics.hpp"

#include <cmath>

namespace dfd {

double noise_sd_lsb(double alpha, double sigma_read) {
    if (!(alpha > 0.0)) throw ConfigError("noise_sd_lsb: alpha must be > 0");
    return 255.0 * std::sqrt(alpha + sigma_read * sigma_read) / alpha;
}

double illuminance_lux(double alpha, const CameraConstants& cc) {
    if (!(alpha > 0.0)) throw ConfigError("illuminance_lux: alpha must be > 0");
    const double geometry = 8.0 * cc.f_number * cc.f_number / cc.A_pix;
    const double photon_power = alpha / (cc.t * cc.QE) * (cc.h * cc.c_light / cc.lambda_G);
    return geometry * photon_power * cc.K_m * cc.V;
}

}  // namespace dfd
