// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "dfd/core.hpp"
#include "dfd/noise.hpp"
#include "dfd/optics.hpp"
#include "dfd/rng.hpp"

namespace dfd {

/// One constant-depth, constant-color primitive.
struct ShapeLayer {
    enum class Kind { Rectangle, Circle, Triangle };
    Kind kind = Kind::Circle;
    Color color{0.5, 0.5, 0.5};
    double depth = 1.0;  // meters

    // Circle and rectangle share the center; the rectangle adds half sizes
    // and a rotation, the triangle uses explicit vertices.
    double cx = 0, cy = 0;
    double radius = 0;
    double half_w = 0, half_h = 0, rot = 0;
    std::array<double, 2> a{}, b{}, c{};

    bool contains(double x, double y) const;
    /// Euclidean distance from (x, y) to the outline.
    double boundary_distance(double x, double y) const;
};

/// Layered scene; later layers are in front.
struct Scene {
    Color bg_color{0.2, 0.2, 0.2};
    double bg_depth = 1.0;
    std::vector<ShapeLayer> layers;
    int width = 147, height = 147;
    double texture_xi = 0.0;  // scene texture smoothness, pixels

    void validate(const OpticsConfig& cfg) const;
};

struct RenderedView {
    ImageD image;          // RGB in [0,1]
    ImageD depth;          // meters, front-most layer per pixel
    ImageD boundary_dist;  // pixels; +inf when the scene has no layers
};

enum class Power { Plus, Minus };

/// Separable Gaussian blur, kernel truncated at 4 sigma and renormalized,
/// replicate padding. sigma in pixels.
ImageD gaussian_blur(const ImageD& img, double sigma_px);

/// Render one defocused view: each layer's hard silhouette is blurred by
/// the PSF width for its depth (combined with the scene texture smoothness)
/// and alpha-composited back to front.
RenderedView render_scene(const Scene& scene, const OpticsConfig& cfg, Power power);

struct DatasetSpec {
    int count = 4;
    uint64_t seed = 0;
    int width = 147, height = 147;
    OpticsConfig optics;
    double alpha_min = 180.0, alpha_max = 200.0;
    double sigma_read = 2.0;
    int min_layers = 1, max_layers = 3;
    bool textured = false;  // sample texture_xi from the optics xi bounds
    bool noiseless = false; // skip the noisy pair (noisy files equal clean)
};

/// Draw a random scene for dataset index `index` (deterministic in spec.seed).
Scene sample_scene(const DatasetSpec& spec, uint64_t index);

/// Write `count` scenes plus a manifest under out_dir. Returns the manifest
/// path. Scene streams derive from the master seed by index, so results do
/// not depend on generation order or thread count.
std::string generate_dataset(const DatasetSpec& spec, const std::string& out_dir,
                             int threads = 1);

}  // namespace dfd
