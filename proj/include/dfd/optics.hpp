// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>

#include "dfd/core.hpp"
#include "dfd/dual.hpp"

namespace dfd {

/// Thin-lens system constants. Lengths in meters, optical powers in 1/m.
/// The working pair of optical powers produces the two differently
/// defocused captures; `pixel_pitch` converts between pixel-domain
/// smoothness values and metric blur widths.
struct OpticsConfig {
    double aperture_sd = 3.0e-4;   // Gaussian SD of the aperture profile
    double rho_plus = 10.2;        // optical power of the "+" capture
    double rho_minus = 10.0;       // optical power of the "-" capture
    double sensor_sep = 0.105;     // lens-to-sensor separation
    double pixel_pitch = 5.93e-6;  // meters per pixel
    double z_min = 0.75;
    double z_max = 1.18;
    double xi_min = 0.0;  // texture smoothness prior bounds, pixels
    double xi_max = 1.0;

    void validate() const {
        if (!(aperture_sd > 0.0)) throw ConfigError("optics: aperture_sd must be > 0");
        if (!(sensor_sep > 0.0)) throw ConfigError("optics: sensor_sep must be > 0");
        if (rho_plus == rho_minus) throw ConfigError("optics: rho_plus must differ from rho_minus");
        if (!(z_min < z_max)) throw ConfigError("optics: z_min must be < z_max");
        if (!(pixel_pitch > 0.0)) throw ConfigError("optics: pixel_pitch must be > 0");
        if (xi_min < 0.0 || xi_max < xi_min) throw ConfigError("optics: bad xi bounds");
    }
};

/// Fixed-camera constants used only for the photometric conversions.
struct CameraConstants {
    double t = 1.0 / 200.0;        // exposure, seconds
    double QE = 0.73;              // quantum efficiency
    double lambda_G = 532e-9;      // wavelength, meters
    double A_pix = 5.93e-6 * 5.93e-6;  // pixel area, m^2
    double f_number = 5.6;
    double K_m = 683.0;            // lm/W
    double V = 0.83;               // photopic efficiency at lambda_G
    double h = 6.626e-34;          // Planck
    double c_light = 3.0e8;
};

/// Defocus blur SD at depth z for optical power rho; the sign is kept
/// (consumers square it) and the magnitude is the physical blur width.
inline double defocus_sigma(double z, double rho, const OpticsConfig& cfg) {
    return cfg.aperture_sd * ((1.0 / z - rho) * cfg.sensor_sep + 1.0);
}

/// Same blur expressed in pixels.
inline double defocus_sigma_px(double z, double rho, const OpticsConfig& cfg) {
    return defocus_sigma(z, rho, cfg) / cfg.pixel_pitch;
}

/// Total boundary smoothness: optical defocus and scene texture blur
/// compose in quadrature.
inline double combined_smoothness(double sigma, double xi) {
    return std::sqrt(sigma * sigma + xi * xi);
}

struct DepthResult {
    double z = 0.0;
    bool valid = false;  // z inside [z_min, z_max]
};

/// Closed-form depth from a pair of boundary smoothness values measured in
/// the same length unit as the aperture SD. The texture component cancels
/// because only eta_plus^2 - eta_minus^2 enters.
template <class T>
T depth_from_smoothness_raw(const T& eta_plus, const T& eta_minus, const OpticsConfig& cfg) {
    const double Sg = cfg.aperture_sd;
    const double s = cfg.sensor_sep;
    const double rp = cfg.rho_plus;
    const double rm = cfg.rho_minus;
    const double numer = 2.0 * Sg * Sg * s * s * (rm - rp);
    const double cconst = Sg * Sg * s * (rp - rm) * (s * rp + s * rm - 2.0);
    const T denom = eta_plus * eta_plus - eta_minus * eta_minus - cconst;
    if (std::fabs(value_of(denom)) < 1e-15) {
        throw NumericalError("depth_from_smoothness: singular optical configuration");
    }
    return numer / denom;
}

inline DepthResult depth_from_smoothness(double eta_plus, double eta_minus,
                                         const OpticsConfig& cfg) {
    DepthResult r;
    r.z = depth_from_smoothness_raw(eta_plus, eta_minus, cfg);
    r.valid = r.z >= cfg.z_min && r.z <= cfg.z_max;
    return r;
}

/// Pixel-domain convenience: smoothness values from the fitter are in
/// pixels and get converted through the pitch.
inline DepthResult depth_from_smoothness_px(double eta_plus_px, double eta_minus_px,
                                            const OpticsConfig& cfg) {
    return depth_from_smoothness(eta_plus_px * cfg.pixel_pitch,
                                 eta_minus_px * cfg.pixel_pitch, cfg);
}

/// Noise SD of an 8-bit image at photon level alpha with Gaussian read
/// noise, in least-significant-bit units.
double noise_sd_lsb(double alpha, double sigma_read);

/// Scene illuminance corresponding to a photon level.
double illuminance_lux(double alpha, const CameraConstants& cc = CameraConstants{});

}  // namespace dfd
