// SPDX-License-Identifier: Apache-2.0
#include "dfd/config.hpp"

#include <filesystem>

#include <json.hpp>

#include "dfd/io.hpp"

namespace dfd {

namespace {

using nlohmann::json;

double get_num(const json& j, std::initializer_list<const char*> names, double fallback) {
    for (const char* n : names) {
        if (j.contains(n)) return j.at(n).get<double>();
    }
    return fallback;
}

template <class T>
T get_val(const json& j, const char* name, T fallback) {
    if (j.contains(name)) return j.at(name).get<T>();
    return fallback;
}

void read_optics(const json& j, OpticsConfig& o) {
    o.aperture_sd = get_num(j, {"Σ", "Sigma", "aperture_sd"}, o.aperture_sd);
    o.rho_plus = get_num(j, {"ρ_plus", "rho_plus"}, o.rho_plus);
    o.rho_minus = get_num(j, {"ρ_minus", "rho_minus"}, o.rho_minus);
    o.sensor_sep = get_num(j, {"s", "sensor_sep"}, o.sensor_sep);
    o.pixel_pitch = get_num(j, {"pixel_pitch"}, o.pixel_pitch);
    o.z_min = get_num(j, {"z_min"}, o.z_min);
    o.z_max = get_num(j, {"z_max"}, o.z_max);
    for (const char* n : {"ξ", "xi"}) {
        if (j.contains(n)) {
            const auto& x = j.at(n);
            if (x.is_array() && x.size() == 2) {
                o.xi_min = x[0].get<double>();
                o.xi_max = x[1].get<double>();
            } else {
                o.xi_min = 0.0;
                o.xi_max = x.get<double>();
            }
        }
    }
}

json write_optics(const OpticsConfig& o) {
    json j;
    j["Σ"] = o.aperture_sd;
    j["ρ_plus"] = o.rho_plus;
    j["ρ_minus"] = o.rho_minus;
    j["s"] = o.sensor_sep;
    j["pixel_pitch"] = o.pixel_pitch;
    j["z_min"] = o.z_min;
    j["z_max"] = o.z_max;
    j["ξ"] = {o.xi_min, o.xi_max};
    return j;
}

void read_camera(const json& j, CameraConstants& c) {
    c.t = get_num(j, {"t", "exposure"}, c.t);
    c.QE = get_num(j, {"QE"}, c.QE);
    c.lambda_G = get_num(j, {"λ_G", "lambda_G"}, c.lambda_G);
    c.A_pix = get_num(j, {"A_pix"}, c.A_pix);
    c.f_number = get_num(j, {"f-number", "f_number"}, c.f_number);
    c.K_m = get_num(j, {"K_m"}, c.K_m);
    c.V = get_num(j, {"V", "V(λ_G)"}, c.V);
    c.h = get_num(j, {"h"}, c.h);
    c.c_light = get_num(j, {"c_light"}, c.c_light);
}

json write_camera(const CameraConstants& c) {
    json j;
    j["t"] = c.t;
    j["QE"] = c.QE;
    j["λ_G"] = c.lambda_G;
    j["A_pix"] = c.A_pix;
    j["f-number"] = c.f_number;
    j["K_m"] = c.K_m;
    j["V"] = c.V;
    j["h"] = c.h;
    j["c_light"] = c.c_light;
    return j;
}

void read_noise(const json& j, NoiseModel& n) {
    n.alpha = get_num(j, {"α", "alpha"}, n.alpha);
    n.sigma_read = get_num(j, {"σ_read", "sigma_read"}, n.sigma_read);
    n.seed = get_val<uint64_t>(j, "seed", n.seed);
}

json write_noise(const NoiseModel& n) {
    json j;
    j["α"] = n.alpha;
    j["σ_read"] = n.sigma_read;
    j["seed"] = n.seed;
    return j;
}

void read_weights(const json& j, FitWeights& w) {
    if (j.contains("beta")) {
        const auto& b = j.at("beta");
        for (int i = 0; i < 3 && i < static_cast<int>(b.size()); ++i) w.beta[i] = b[i];
    }
    if (j.contains("gamma_keys") && j.contains("gamma_values")) {
        w.key_fracs = j.at("gamma_keys").get<std::vector<double>>();
        w.key_gammas.clear();
        for (const auto& row : j.at("gamma_values")) {
            std::array<double, 8> g{};
            for (int i = 0; i < 8 && i < static_cast<int>(row.size()); ++i) g[i] = row[i];
            w.key_gammas.push_back(g);
        }
        if (w.key_fracs.size() != w.key_gammas.size() || w.key_fracs.empty()) {
            throw ConfigError("config: gamma schedule keys/values mismatch");
        }
    }
}

json write_weights(const FitWeights& w) {
    json j;
    j["beta"] = w.beta;
    j["gamma_keys"] = w.key_fracs;
    json rows = json::array();
    for (const auto& g : w.key_gammas) rows.push_back(g);
    j["gamma_values"] = rows;
    return j;
}

void read_fit(const json& j, FitOptions& f) {
    f.wedges = get_val(j, "wedges", f.wedges);
    f.patch_size = get_val(j, "patch_size", f.patch_size);
    f.patch_stride = get_val(j, "patch_stride", f.patch_stride);
    f.restarts = get_val(j, "restarts", f.restarts);
    f.restart_iters = get_val(j, "restart_iters", f.restart_iters);
    f.outer_iters = get_val(j, "outer_iters", f.outer_iters);
    f.inner_iters = get_val(j, "inner_iters", f.inner_iters);
    f.delta = get_num(j, {"δ", "delta"}, f.delta);
    f.ridge_lambda = get_num(j, {"λ", "lambda", "ridge_lambda"}, f.ridge_lambda);
    f.tau = get_num(j, {"τ", "tau"}, f.tau);
    f.eta_min = get_num(j, {"η_min", "eta_min"}, f.eta_min);
    f.eta_max = get_num(j, {"η_max", "eta_max"}, f.eta_max);
    f.eta_init = get_num(j, {"eta_init"}, f.eta_init);
    f.mask_temperature = get_num(j, {"mask_temperature"}, f.mask_temperature);
    f.select_temperature = get_num(j, {"select_temperature"}, f.select_temperature);
    f.w_scale = get_num(j, {"w", "w_scale"}, f.w_scale);
    f.angle_margin = get_num(j, {"angle_margin"}, f.angle_margin);
    f.flat_skip = get_val(j, "flat_skip", f.flat_skip);
    f.flat_gradient_sigmas = get_num(j, {"flat_gradient_sigmas"}, f.flat_gradient_sigmas);
    f.flat_gradient_floor = get_num(j, {"flat_gradient_floor"}, f.flat_gradient_floor);
    if (j.contains("profile")) {
        const std::string p = j.at("profile").get<std::string>();
        if (p == "self" || p == "self-supervised") {
            f.profile = FitProfile::SelfSupervised;
        } else if (p == "supervised" || p == "supervised-eval") {
            f.profile = FitProfile::SupervisedEval;
        } else {
            throw ConfigError("config: unknown profile '" + p + "'");
        }
        f.weights = FitWeights::defaults(f.profile);
    }
    if (j.contains("weights")) read_weights(j.at("weights"), f.weights);
}

json write_fit(const FitOptions& f) {
    json j;
    j["wedges"] = f.wedges;
    j["patch_size"] = f.patch_size;
    j["patch_stride"] = f.patch_stride;
    j["restarts"] = f.restarts;
    j["restart_iters"] = f.restart_iters;
    j["outer_iters"] = f.outer_iters;
    j["inner_iters"] = f.inner_iters;
    j["δ"] = f.delta;
    j["λ"] = f.ridge_lambda;
    j["τ"] = f.tau;
    j["η_min"] = f.eta_min;
    j["η_max"] = f.eta_max;
    j["eta_init"] = f.eta_init;
    j["mask_temperature"] = f.mask_temperature;
    j["select_temperature"] = f.select_temperature;
    j["w"] = f.w_scale;
    j["angle_margin"] = f.angle_margin;
    j["flat_skip"] = f.flat_skip;
    j["flat_gradient_sigmas"] = f.flat_gradient_sigmas;
    j["flat_gradient_floor"] = f.flat_gradient_floor;
    j["profile"] = f.profile == FitProfile::SupervisedEval ? "supervised" : "self";
    j["weights"] = write_weights(f.weights);
    return j;
}

void read_blocks(const json& j, BlockConfig& b) {
    b.block_size = get_val(j, "block_size", b.block_size);
    b.margin_patches = get_val(j, "margin_patches", b.margin_patches);
    b.enabled = get_val(j, "enabled", b.enabled);
}

json write_blocks(const BlockConfig& b) {
    json j;
    j["block_size"] = b.block_size;
    j["margin_patches"] = b.margin_patches;
    j["enabled"] = b.enabled;
    return j;
}

void read_synth(const json& j, DatasetSpec& s) {
    s.count = get_val(j, "count", s.count);
    s.width = get_val(j, "width", s.width);
    s.height = get_val(j, "height", s.height);
    s.alpha_min = get_num(j, {"alpha_min"}, s.alpha_min);
    s.alpha_max = get_num(j, {"alpha_max"}, s.alpha_max);
    s.sigma_read = get_num(j, {"σ_read", "sigma_read"}, s.sigma_read);
    s.min_layers = get_val(j, "min_layers", s.min_layers);
    s.max_layers = get_val(j, "max_layers", s.max_layers);
    s.textured = get_val(j, "textured", s.textured);
    s.noiseless = get_val(j, "noiseless", s.noiseless);
}

json write_synth(const DatasetSpec& s) {
    json j;
    j["count"] = s.count;
    j["width"] = s.width;
    j["height"] = s.height;
    j["alpha_min"] = s.alpha_min;
    j["alpha_max"] = s.alpha_max;
    j["σ_read"] = s.sigma_read;
    j["min_layers"] = s.min_layers;
    j["max_layers"] = s.max_layers;
    j["textured"] = s.textured;
    j["noiseless"] = s.noiseless;
    return j;
}

}  // namespace

void RunConfig::validate() const {
    optics.validate();
    noise.validate();
    fit.validate();
    if (eval_map != "sparse" && eval_map != "dense") {
        throw ConfigError("config: eval_map must be 'sparse' or 'dense'");
    }
    if (confidence_min < 0.0 || confidence_min > 1.0) {
        throw ConfigError("config: confidence_min must be in [0,1]");
    }
}

RunConfig parse_config_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    RunConfig cfg;
    cfg.seed = get_val<uint64_t>(j, "seed", cfg.seed);
    cfg.threads = get_val(j, "threads", cfg.threads);
    cfg.out_dir = get_val<std::string>(j, "out", cfg.out_dir);
    if (j.contains("optics")) read_optics(j.at("optics"), cfg.optics);
    if (j.contains("camera")) read_camera(j.at("camera"), cfg.camera);
    if (j.contains("noise")) read_noise(j.at("noise"), cfg.noise);
    if (j.contains("fit")) read_fit(j.at("fit"), cfg.fit);
    if (j.contains("blocks")) read_blocks(j.at("blocks"), cfg.blocks);
    if (j.contains("synth")) read_synth(j.at("synth"), cfg.synth);
    cfg.eta_override = get_num(j, {"eta_override"}, cfg.eta_override);
    cfg.confidence_min = get_num(j, {"confidence_min"}, cfg.confidence_min);
    cfg.eval_map = get_val<std::string>(j, "eval_map", cfg.eval_map);
    return cfg;
}

RunConfig load_config(const std::string& path) {
    return parse_config_json(read_text_file(path));
}

std::string config_to_json(const RunConfig& cfg) {
    json j;
    j["seed"] = cfg.seed;
    j["threads"] = cfg.threads;
    j["out"] = cfg.out_dir;
    j["optics"] = write_optics(cfg.optics);
    j["camera"] = write_camera(cfg.camera);
    j["noise"] = write_noise(cfg.noise);
    j["fit"] = write_fit(cfg.fit);
    j["blocks"] = write_blocks(cfg.blocks);
    j["synth"] = write_synth(cfg.synth);
    j["eta_override"] = cfg.eta_override;
    j["confidence_min"] = cfg.confidence_min;
    j["eval_map"] = cfg.eval_map;
    return j.dump(2) + "\n";
}

void echo_config(const RunConfig& cfg, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    write_text_file(out_dir + "/config.json", config_to_json(cfg));
}

}  // namespace dfd
