// SPDX-License-Identifier: Apache-2.0
#include "dfd/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>

#include <json.hpp>

#include "dfd/io.hpp"
#include "dfd/log.hpp"
#include "dfd/threading.hpp"

namespace dfd {

namespace {

double point_segment_distance(double px, double py, double ax, double ay, double bx, double by) {
    const double abx = bx - ax, aby = by - ay;
    const double apx = px - ax, apy = py - ay;
    const double len2 = abx * abx + aby * aby;
    double t = len2 > 0.0 ? (apx * abx + apy * aby) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const double dx = px - (ax + t * abx), dy = py - (ay + t * aby);
    return std::sqrt(dx * dx + dy * dy);
}

double cross2(double ox, double oy, double ax, double ay, double bx, double by) {
    return (ax - ox) * (by - oy) - (ay - oy) * (bx - ox);
}

}  // namespace

bool ShapeLayer::contains(double x, double y) const {
    switch (kind) {
        case Kind::Circle: {
            const double dx = x - cx, dy = y - cy;
            return dx * dx + dy * dy <= radius * radius;
        }
        case Kind::Rectangle: {
            const double cr = std::cos(rot), sr = std::sin(rot);
            const double u = cr * (x - cx) + sr * (y - cy);
            const double v = -sr * (x - cx) + cr * (y - cy);
            return std::fabs(u) <= half_w && std::fabs(v) <= half_h;
        }
        case Kind::Triangle: {
            const double d1 = cross2(a[0], a[1], b[0], b[1], x, y);
            const double d2 = cross2(b[0], b[1], c[0], c[1], x, y);
            const double d3 = cross2(c[0], c[1], a[0], a[1], x, y);
            const bool has_neg = d1 < 0 || d2 < 0 || d3 < 0;
            const bool has_pos = d1 > 0 || d2 > 0 || d3 > 0;
            return !(has_neg && has_pos);
        }
    }
    return false;
}

double ShapeLayer::boundary_distance(double x, double y) const {
    switch (kind) {
        case Kind::Circle: {
            const double dx = x - cx, dy = y - cy;
            return std::fabs(std::sqrt(dx * dx + dy * dy) - radius);
        }
        case Kind::Rectangle: {
            const double cr = std::cos(rot), sr = std::sin(rot);
            const double u = cr * (x - cx) + sr * (y - cy);
            const double v = -sr * (x - cx) + cr * (y - cy);
            const double dx = std::fabs(u) - half_w, dy = std::fabs(v) - half_h;
            const double outside =
                std::sqrt(std::max(dx, 0.0) * std::max(dx, 0.0) +
                          std::max(dy, 0.0) * std::max(dy, 0.0));
            const double inside = std::min(std::max(dx, dy), 0.0);
            return std::fabs(outside + inside);
        }
        case Kind::Triangle: {
            return std::min({point_segment_distance(x, y, a[0], a[1], b[0], b[1]),
                             point_segment_distance(x, y, b[0], b[1], c[0], c[1]),
                             point_segment_distance(x, y, c[0], c[1], a[0], a[1])});
        }
    }
    return 0.0;
}

void Scene::validate(const OpticsConfig& cfg) const {
    if (width <= 0 || height <= 0) throw ConfigError("scene: non-positive size");
    for (const auto& l : layers) {
        if (l.depth < cfg.z_min || l.depth > cfg.z_max) {
            throw ConfigError("scene: layer depth outside working range");
        }
    }
    if (bg_depth < cfg.z_min || bg_depth > cfg.z_max) {
        throw ConfigError("scene: background depth outside working range");
    }
    if (texture_xi < 0.0) throw ConfigError("scene: negative texture smoothness");
}

ImageD gaussian_blur(const ImageD& img, double sigma_px) {
    if (sigma_px < 1e-12) return img;
    const int half = static_cast<int>(std::ceil(4.0 * sigma_px));
    if (half >= std::min(img.width, img.height)) {
        throw ConfigError("gaussian_blur: kernel support exceeds image size (degenerate optics)");
    }
    std::vector<double> kernel(2 * half + 1);
    double sum = 0.0;
    for (int i = -half; i <= half; ++i) {
        kernel[i + half] = std::exp(-0.5 * i * i / (sigma_px * sigma_px));
        sum += kernel[i + half];
    }
    for (auto& k : kernel) k /= sum;

    const int W = img.width, H = img.height, C = img.channels;
    ImageD tmp(W, H, C), out(W, H, C);
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            for (int c = 0; c < C; ++c) {
                double acc = 0.0;
                for (int i = -half; i <= half; ++i) {
                    const int xi = std::clamp(x + i, 0, W - 1);
                    acc += kernel[i + half] * img.at(xi, y, c);
                }
                tmp.at(x, y, c) = acc;
            }
        }
    }
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            for (int c = 0; c < C; ++c) {
                double acc = 0.0;
                for (int i = -half; i <= half; ++i) {
                    const int yi = std::clamp(y + i, 0, H - 1);
                    acc += kernel[i + half] * tmp.at(x, yi, c);
                }
                out.at(x, y, c) = acc;
            }
        }
    }
    return out;
}

RenderedView render_scene(const Scene& scene, const OpticsConfig& cfg, Power power) {
    scene.validate(cfg);
    const int W = scene.width, H = scene.height;
    const double rho = power == Power::Plus ? cfg.rho_plus : cfg.rho_minus;

    RenderedView rv;
    rv.image = ImageD(W, H, 3);
    rv.depth = ImageD(W, H, 1, scene.bg_depth);
    rv.boundary_dist = ImageD(W, H, 1, std::numeric_limits<double>::infinity());
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            for (int c = 0; c < 3; ++c) rv.image.at(x, y, c) = scene.bg_color[c];
        }
    }

    for (const auto& layer : scene.layers) {
        const double sigma = defocus_sigma_px(layer.depth, rho, cfg);
        const double blur = std::sqrt(sigma * sigma + scene.texture_xi * scene.texture_xi);

        ImageD mask(W, H, 1);
        for (int y = 0; y < H; ++y) {
            for (int x = 0; x < W; ++x) {
                const bool inside = layer.contains(x + 0.5, y + 0.5);
                mask.at(x, y) = inside ? 1.0 : 0.0;
                if (inside) rv.depth.at(x, y) = layer.depth;
                rv.boundary_dist.at(x, y) =
                    std::min(rv.boundary_dist.at(x, y), layer.boundary_distance(x + 0.5, y + 0.5));
            }
        }
        const ImageD soft = gaussian_blur(mask, blur);
        for (int y = 0; y < H; ++y) {
            for (int x = 0; x < W; ++x) {
                const double a = soft.at(x, y);
                for (int c = 0; c < 3; ++c) {
                    rv.image.at(x, y, c) = rv.image.at(x, y, c) * (1.0 - a) + layer.color[c] * a;
                }
            }
        }
    }
    return rv;
}

namespace {

ShapeLayer sample_layer(Rng& rng, const DatasetSpec& spec) {
    const double W = spec.width, H = spec.height;
    const double scale = std::min(W, H);
    ShapeLayer l;
    l.color = {rng.uniform(), rng.uniform(), rng.uniform()};
    l.depth = rng.uniform(spec.optics.z_min, spec.optics.z_max);
    switch (rng.uniform_int(0, 2)) {
        case 0: {
            l.kind = ShapeLayer::Kind::Rectangle;
            l.cx = rng.uniform(0.15 * W, 0.85 * W);
            l.cy = rng.uniform(0.15 * H, 0.85 * H);
            l.half_w = rng.uniform(0.08, 0.22) * scale;
            l.half_h = rng.uniform(0.08, 0.22) * scale;
            l.rot = rng.uniform(0.0, kPi);
            break;
        }
        case 1: {
            l.kind = ShapeLayer::Kind::Circle;
            l.cx = rng.uniform(0.15 * W, 0.85 * W);
            l.cy = rng.uniform(0.15 * H, 0.85 * H);
            l.radius = rng.uniform(0.10, 0.25) * scale;
            break;
        }
        default: {
            l.kind = ShapeLayer::Kind::Triangle;
            const double min_edge = 0.15 * scale;
            for (int tries = 0; tries < 64; ++tries) {
                for (auto* v : {&l.a, &l.b, &l.c}) {
                    (*v)[0] = rng.uniform(0.05 * W, 0.95 * W);
                    (*v)[1] = rng.uniform(0.05 * H, 0.95 * H);
                }
                const double area =
                    0.5 * std::fabs(cross2(l.a[0], l.a[1], l.b[0], l.b[1], l.c[0], l.c[1]));
                const double e1 = std::hypot(l.b[0] - l.a[0], l.b[1] - l.a[1]);
                const double e2 = std::hypot(l.c[0] - l.b[0], l.c[1] - l.b[1]);
                const double e3 = std::hypot(l.a[0] - l.c[0], l.a[1] - l.c[1]);
                if (area >= 0.01 * W * H && std::min({e1, e2, e3}) >= min_edge) break;
            }
            break;
        }
    }
    return l;
}

nlohmann::json layer_to_json(const ShapeLayer& l) {
    nlohmann::json j;
    switch (l.kind) {
        case ShapeLayer::Kind::Rectangle:
            j["kind"] = "rectangle";
            j["cx"] = l.cx;
            j["cy"] = l.cy;
            j["half_w"] = l.half_w;
            j["half_h"] = l.half_h;
            j["rot"] = l.rot;
            break;
        case ShapeLayer::Kind::Circle:
            j["kind"] = "circle";
            j["cx"] = l.cx;
            j["cy"] = l.cy;
            j["radius"] = l.radius;
            break;
        case ShapeLayer::Kind::Triangle:
            j["kind"] = "triangle";
            j["a"] = l.a;
            j["b"] = l.b;
            j["c"] = l.c;
            break;
    }
    j["color"] = l.color;
    j["depth"] = l.depth;
    return j;
}

nlohmann::json scene_to_json(const Scene& s) {
    nlohmann::json j;
    j["width"] = s.width;
    j["height"] = s.height;
    j["bg_color"] = s.bg_color;
    j["bg_depth"] = s.bg_depth;
    j["texture_xi"] = s.texture_xi;
    j["layers"] = nlohmann::json::array();
    for (const auto& l : s.layers) j["layers"].push_back(layer_to_json(l));
    return j;
}

}  // namespace

Scene sample_scene(const DatasetSpec& spec, uint64_t index) {
    Rng rng(derive_seed(spec.seed, index, 1));
    Scene s;
    s.width = spec.width;
    s.height = spec.height;
    s.bg_color = {rng.uniform(), rng.uniform(), rng.uniform()};
    s.bg_depth = rng.uniform(spec.optics.z_min, spec.optics.z_max);
    const int n = rng.uniform_int(spec.min_layers, spec.max_layers);
    for (int i = 0; i < n; ++i) s.layers.push_back(sample_layer(rng, spec));
    if (spec.textured) s.texture_xi = rng.uniform(spec.optics.xi_min, spec.optics.xi_max);
    return s;
}

std::string generate_dataset(const DatasetSpec& spec, const std::string& out_dir, int threads) {
    spec.optics.validate();
    if (spec.count < 0) throw ConfigError("generate_dataset: negative count");
    if (!(spec.alpha_min > 0.0) || spec.alpha_max < spec.alpha_min) {
        throw ConfigError("generate_dataset: bad photon level range");
    }
    std::filesystem::create_directories(out_dir);

    std::vector<nlohmann::json> entries(spec.count);
    parallel_for(static_cast<size_t>(spec.count), threads, [&](size_t i) {
        char name[32];
        std::snprintf(name, sizeof(name), "scene_%04zu", i);
        const std::string dir = out_dir + "/" + name;
        std::filesystem::create_directories(dir);

        const Scene scene = sample_scene(spec, i);
        Rng alpha_rng(derive_seed(spec.seed, i, 2));
        const double alpha = alpha_rng.uniform(spec.alpha_min, spec.alpha_max);
        const uint64_t seed_plus = derive_seed(spec.seed, i, 3);
        const uint64_t seed_minus = derive_seed(spec.seed, i, 4);

        const RenderedView plus = render_scene(scene, spec.optics, Power::Plus);
        const RenderedView minus = render_scene(scene, spec.optics, Power::Minus);

        write_raw(dir + "/clean_plus.raw", plus.image);
        write_raw(dir + "/clean_minus.raw", minus.image);
        write_png16(dir + "/clean_plus.png", plus.image);
        write_png16(dir + "/clean_minus.png", minus.image);

        ImageD noisy_plus, noisy_minus;
        if (spec.noiseless) {
            noisy_plus = plus.image;
            noisy_minus = minus.image;
        } else {
            noisy_plus = add_noise(plus.image, NoiseModel{alpha, spec.sigma_read, seed_plus});
            noisy_minus = add_noise(minus.image, NoiseModel{alpha, spec.sigma_read, seed_minus});
        }
        write_raw(dir + "/noisy_plus.raw", noisy_plus);
        write_raw(dir + "/noisy_minus.raw", noisy_minus);
        write_png16(dir + "/noisy_plus.png", noisy_plus);
        write_png16(dir + "/noisy_minus.png", noisy_minus);

        write_raw(dir + "/depth.raw", plus.depth);
        write_raw(dir + "/boundary_dist.raw", plus.boundary_dist);
        write_text_file(dir + "/scene.json", scene_to_json(scene).dump(2) + "\n");

        nlohmann::json e;
        e["dir"] = name;
        e["alpha"] = alpha;
        e["noise_seed_plus"] = seed_plus;
        e["noise_seed_minus"] = seed_minus;
        e["layers"] = scene.layers.size();
        entries[i] = e;
    });

    nlohmann::json manifest;
    manifest["count"] = spec.count;
    manifest["seed"] = spec.seed;
    manifest["width"] = spec.width;
    manifest["height"] = spec.height;
    manifest["sigma_read"] = spec.sigma_read;
    manifest["alpha_range"] = {spec.alpha_min, spec.alpha_max};
    manifest["noiseless"] = spec.noiseless;
    manifest["textured"] = spec.textured;
    manifest["sampling"] = {
        {"layer_count", {spec.min_layers, spec.max_layers}},
        {"shape_kinds", {"rectangle", "circle", "triangle"}},
        {"colors", "uniform [0,1]^3"},
        {"depths", "uniform [z_min, z_max]"},
        {"circle_radius", "uniform [0.10, 0.25] * min(W,H)"},
        {"rect_half_sides", "uniform [0.08, 0.22] * min(W,H)"},
        {"triangle", "uniform vertices, min area 1% of image, min edge 0.15 * min(W,H)"},
    };
    manifest["scenes"] = entries;
    const std::string path = out_dir + "/manifest.json";
    write_text_file(path, manifest.dump(2) + "\n");
    log_info("dataset: wrote " + std::to_string(spec.count) + " scene(s) to " + out_dir);
    return path;
}

}  // namespace dfd
