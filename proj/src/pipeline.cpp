// SPDX-License-Identifier: Apache-2.0
#include "dfd/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "dfd/eval.hpp"
#include "dfd/io.hpp"
#include "dfd/log.hpp"
#include "dfd/synth.hpp"
#include "dfd/threading.hpp"

namespace dfd {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int effective_threads(const RunConfig& cfg) {
    return cfg.threads > 0 ? cfg.threads : hardware_threads();
}

/// Patch grid for one block with interior-margin patches removed.
PatchGrid block_grid(int block_w, int block_h, const FitOptions& fit, const BlockConfig& bc,
                     bool trim_left, bool trim_right, bool trim_top, bool trim_bottom) {
    PatchGrid g = PatchGrid::make(block_w, block_h, fit.patch_size, fit.patch_stride);
    const int np = bc.margin_patches;
    auto trim = [&](std::vector<int>& v, bool lo, bool hi) {
        if (np <= 0) return;
        if (lo) {
            const int n = std::min(np, static_cast<int>(v.size()) - 1);
            if (n > 0) v.erase(v.begin(), v.begin() + n);
        }
        if (hi) {
            const int n = std::min(np, static_cast<int>(v.size()) - 1);
            if (n > 0) v.erase(v.end() - n, v.end());
        }
    };
    trim(g.xs, trim_left, trim_right);
    trim(g.ys, trim_top, trim_bottom);
    return g;
}

struct StageTimings {
    double local = 0.0, global = 0.0, aggregate = 0.0;
};

GlobalMaps run_single_block(const ImageD& in_plus, const ImageD& in_minus,
                            const ImageD& tgt_plus, const ImageD& tgt_minus,
                            const ImageD* u_star, const ImageD* z_star, const PatchGrid& grid,
                            const RunConfig& cfg, int off_x, int off_y,
                            GlobalStageResult* fit_out, StageTimings* timings) {
    FitOptions fit = cfg.fit;
    fit.seed = cfg.seed;
    fit.threads = effective_threads(cfg);

    auto t0 = std::chrono::steady_clock::now();
    const LocalStageResult locals =
        run_local_stage(in_plus, in_minus, u_star, grid, fit, off_x, off_y);
    if (timings) timings->local += seconds_since(t0);

    t0 = std::chrono::steady_clock::now();
    GlobalStageResult refined =
        refine_global(locals, tgt_plus, tgt_minus, u_star, z_star, grid, cfg.optics, fit);
    if (timings) timings->global += seconds_since(t0);

    t0 = std::chrono::steady_clock::now();
    GlobalMaps maps;
    maps.tau = fit.tau;
    maps.B = build_boundary_map(refined.patches, grid, fit.delta, fit.threads);
    maps.C_plus = build_color_map(refined.patches, grid, EtaChoice::Plus, 0.0, fit.eta_min,
                                  fit.eta_max, fit.threads);
    maps.C_minus = build_color_map(refined.patches, grid, EtaChoice::Minus, 0.0, fit.eta_min,
                                   fit.eta_max, fit.threads);
    if (cfg.eta_override >= 0.0) {
        maps.C_custom = build_color_map(refined.patches, grid, EtaChoice::Custom,
                                        cfg.eta_override, fit.eta_min, fit.eta_max, fit.threads);
        maps.has_custom = true;
    }
    maps.Cp = sobel_magnitude_image(maps.C_plus);
    SparseDepthResult sd =
        sparse_depth_map(refined.patches, grid, fit.delta, fit.tau, cfg.optics, fit.threads);
    maps.Z_sparse = std::move(sd.Z);
    maps.F = std::move(sd.F);
    maps.Z_dense = dense_depth_map(refined.patches, grid, cfg.optics, fit.threads);
    if (timings) timings->aggregate += seconds_since(t0);

    if (fit_out) *fit_out = std::move(refined);
    return maps;
}

json fit_to_json(const GlobalStageResult& res, const PatchGrid& grid, const RunConfig& cfg,
                 int off_x, int off_y) {
    json j;
    j["patch_size"] = grid.patch;
    j["patch_stride"] = grid.stride;
    j["block_offset"] = {off_x, off_y};
    j["origins_x"] = grid.xs;
    j["origins_y"] = grid.ys;
    j["seed"] = cfg.seed;
    j["seed_scheme"] = "derive(seed, 0x10c4, ox + off_x, oy + off_y)";
    j["loss_trace"] = res.loss_trace;
    json patches = json::array();
    for (size_t p = 0; p < res.patches.size(); ++p) {
        const ConsistentPatch& cp = res.patches[p];
        json e;
        std::vector<double> vertices, angles, colors;
        for (const auto& w : cp.base.wedges) {
            vertices.push_back(w.vx);
            vertices.push_back(w.vy);
            angles.push_back(w.theta1);
            angles.push_back(w.theta2);
        }
        colors.insert(colors.end(), cp.base.bg_color.begin(), cp.base.bg_color.end());
        for (const auto& w : cp.base.wedges) {
            colors.insert(colors.end(), w.color.begin(), w.color.end());
        }
        e["vertices"] = vertices;
        e["angles"] = angles;
        e["colors"] = colors;
        e["eta_plus"] = cp.eta_plus;
        e["eta_minus"] = cp.eta_minus;
        if (p < res.patch_losses.size()) e["loss"] = res.patch_losses[p];
        patches.push_back(std::move(e));
    }
    j["patches"] = std::move(patches);
    return j;
}

ImageD crop(const ImageD& img, int ox, int oy, int w, int h) {
    ImageD out(w, h, img.channels);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < img.channels; ++c) out.at(x, y, c) = img.at(ox + x, oy + y, c);
        }
    }
    return out;
}

/// NaN-aware accumulation of one block plane into the stitched output.
void stitch_add(ImageD& sum, ImageD& cnt, const ImageD& block, int ox, int oy) {
    for (int y = 0; y < block.height; ++y) {
        for (int x = 0; x < block.width; ++x) {
            for (int c = 0; c < block.channels; ++c) {
                const double v = block.at(x, y, c);
                if (!std::isfinite(v)) continue;
                sum.at(ox + x, oy + y, c) += v;
                cnt.at(ox + x, oy + y, c) += 1.0;
            }
        }
    }
}

ImageD stitch_finish(const ImageD& sum, const ImageD& cnt, double empty_value) {
    ImageD out(sum.width, sum.height, sum.channels);
    for (size_t k = 0; k < out.data.size(); ++k) {
        out.data[k] = cnt.data[k] > 0.0 ? sum.data[k] / cnt.data[k] : empty_value;
    }
    return out;
}

}  // namespace

GlobalMaps run_depth_pipeline(const ImageD& in_plus, const ImageD& in_minus,
                              const ImageD& tgt_plus, const ImageD& tgt_minus,
                              const ImageD* u_star, const ImageD* z_star, const RunConfig& cfg,
                              const std::string* fit_json_dir) {
    cfg.validate();
    if (!in_plus.same_shape(in_minus)) throw ConfigError("depth: image pair shape mismatch");
    const int W = in_plus.width, H = in_plus.height;
    const FitOptions& fit = cfg.fit;
    const BlockConfig& bc = cfg.blocks;

    const bool blocked =
        bc.enabled && (W > bc.block_size || H > bc.block_size);
    std::vector<int> ox_list, oy_list;
    int bw = W, bh = H;
    if (blocked) {
        if (W < bc.block_size || H < bc.block_size) {
            throw ConfigError("depth: image smaller than the block side; disable blocks");
        }
        ox_list = bc.block_origins(W, fit.patch_size, fit.patch_stride);
        oy_list = bc.block_origins(H, fit.patch_size, fit.patch_stride);
        bw = bh = bc.block_size;
        log_info("blocks: " + std::to_string(ox_list.size()) + " x " +
                 std::to_string(oy_list.size()) + " of side " + std::to_string(bc.block_size));
    } else {
        ox_list = {0};
        oy_list = {0};
    }

    StageTimings timings;
    // Stitch accumulators (sum + count) per exported plane.
    auto mk = [&](int ch) { return ImageD(W, H, ch, 0.0); };
    ImageD B_s = mk(1), B_c = mk(1), Cp_s = mk(3), Cp_c = mk(3), Cm_s = mk(3), Cm_c = mk(3);
    ImageD Cc_s = mk(3), Cc_c = mk(3), Zs_s = mk(1), Zs_c = mk(1), Zd_s = mk(1), Zd_c = mk(1);
    ImageD F_s = mk(1), F_c = mk(1);

    for (size_t by = 0; by < oy_list.size(); ++by) {
        for (size_t bx = 0; bx < ox_list.size(); ++bx) {
            const int ox = ox_list[bx], oy = oy_list[by];
            const ImageD bin_p = crop(in_plus, ox, oy, bw, bh);
            const ImageD bin_m = crop(in_minus, ox, oy, bw, bh);
            const ImageD btg_p = crop(tgt_plus, ox, oy, bw, bh);
            const ImageD btg_m = crop(tgt_minus, ox, oy, bw, bh);
            ImageD bus, bzs;
            const ImageD* bus_p = nullptr;
            const ImageD* bzs_p = nullptr;
            if (u_star) {
                bus = crop(*u_star, ox, oy, bw, bh);
                bus_p = &bus;
            }
            if (z_star) {
                bzs = crop(*z_star, ox, oy, bw, bh);
                bzs_p = &bzs;
            }
            const PatchGrid grid =
                block_grid(bw, bh, fit, bc, /*trim_left=*/blocked && bx > 0,
                           /*trim_right=*/blocked && bx + 1 < ox_list.size(),
                           /*trim_top=*/blocked && by > 0,
                           /*trim_bottom=*/blocked && by + 1 < oy_list.size());
            GlobalStageResult fit_res;
            const GlobalMaps bm = run_single_block(bin_p, bin_m, btg_p, btg_m, bus_p, bzs_p,
                                                   grid, cfg, ox, oy, &fit_res, &timings);
            if (fit_json_dir) {
                std::ostringstream name;
                name << *fit_json_dir << "/fit";
                if (blocked) name << "_" << bx << "_" << by;
                name << ".json";
                write_text_file(name.str(),
                                fit_to_json(fit_res, grid, cfg, ox, oy).dump(2) + "\n");
            }
            stitch_add(B_s, B_c, bm.B, ox, oy);
            stitch_add(Cp_s, Cp_c, bm.C_plus, ox, oy);
            stitch_add(Cm_s, Cm_c, bm.C_minus, ox, oy);
            if (bm.has_custom) stitch_add(Cc_s, Cc_c, bm.C_custom, ox, oy);
            stitch_add(Zs_s, Zs_c, bm.Z_sparse, ox, oy);
            stitch_add(Zd_s, Zd_c, bm.Z_dense, ox, oy);
            stitch_add(F_s, F_c, bm.F, ox, oy);
        }
    }

    const double nan = std::numeric_limits<double>::quiet_NaN();
    GlobalMaps out;
    out.tau = fit.tau;
    out.B = stitch_finish(B_s, B_c, 0.0);
    out.C_plus = stitch_finish(Cp_s, Cp_c, 0.0);
    out.C_minus = stitch_finish(Cm_s, Cm_c, 0.0);
    if (cfg.eta_override >= 0.0) {
        out.C_custom = stitch_finish(Cc_s, Cc_c, 0.0);
        out.has_custom = true;
    }
    out.Cp = sobel_magnitude_image(out.C_plus);
    out.Z_sparse = stitch_finish(Zs_s, Zs_c, nan);
    out.Z_dense = stitch_finish(Zd_s, Zd_c, nan);
    out.F = stitch_finish(F_s, F_c, 0.0);

    log_info("timing: local " + std::to_string(timings.local) + "s, global " +
             std::to_string(timings.global) + "s, aggregate " +
             std::to_string(timings.aggregate) + "s");
    return out;
}

int cmd_synth(RunConfig cfg) {
    try {
        cfg.validate();
        DatasetSpec spec = cfg.synth;
        spec.optics = cfg.optics;
        spec.seed = cfg.seed;
        spec.sigma_read = cfg.noise.sigma_read;
        fs::create_directories(cfg.out_dir);
        echo_config(cfg, cfg.out_dir);
        generate_dataset(spec, cfg.out_dir, effective_threads(cfg));
        return 0;
    } catch (const std::exception& e) {
        log_error(std::string("synth: ") + e.what());
        return 1;
    }
}

namespace {

/// Supervised evaluation wants the clean pair and the ground truth next to
/// the noisy inputs, following the dataset layout.
struct SupervisionFiles {
    ImageD clean_plus, clean_minus, u_star, z_star;
    bool available = false;
};

SupervisionFiles find_supervision(const std::string& plus_path) {
    SupervisionFiles s;
    const fs::path dir = fs::path(plus_path).parent_path();
    const fs::path cp = dir / "clean_plus.raw";
    const fs::path cm = dir / "clean_minus.raw";
    const fs::path zs = dir / "depth.raw";
    const fs::path us = dir / "boundary_dist.raw";
    if (fs::exists(cp) && fs::exists(cm) && fs::exists(zs) && fs::exists(us)) {
        s.clean_plus = read_raw_double(cp.string());
        s.clean_minus = read_raw_double(cm.string());
        s.z_star = read_raw_double(zs.string());
        s.u_star = read_raw_double(us.string());
        s.available = true;
    }
    return s;
}

}  // namespace

int cmd_depth(RunConfig cfg, const std::string& plus_path, const std::string& minus_path) {
    try {
        cfg.validate();
        const auto t0 = std::chrono::steady_clock::now();
        const ImageD in_plus = read_raw_double(plus_path);
        const ImageD in_minus = read_raw_double(minus_path);
        if (!in_plus.same_shape(in_minus)) {
            throw ConfigError("depth: input images differ in size");
        }
        if (in_plus.channels != 3) throw ConfigError("depth: inputs must be 3-channel");

        const ImageD* u_star = nullptr;
        const ImageD* z_star = nullptr;
        ImageD tgt_plus = in_plus, tgt_minus = in_minus;
        SupervisionFiles sup;
        if (cfg.fit.profile == FitProfile::SupervisedEval) {
            sup = find_supervision(plus_path);
            if (!sup.available) {
                throw ConfigError(
                    "depth: supervised profile needs clean_{plus,minus}.raw, depth.raw and "
                    "boundary_dist.raw next to the inputs");
            }
            tgt_plus = sup.clean_plus;
            tgt_minus = sup.clean_minus;
            u_star = &sup.u_star;
            z_star = &sup.z_star;
        }

        fs::create_directories(cfg.out_dir);
        echo_config(cfg, cfg.out_dir);
        const GlobalMaps maps = run_depth_pipeline(in_plus, in_minus, tgt_plus, tgt_minus,
                                                   u_star, z_star, cfg, &cfg.out_dir);

        const std::string& d = cfg.out_dir;
        write_raw(d + "/B.raw", maps.B);
        write_raw(d + "/C_plus.raw", maps.C_plus);
        write_raw(d + "/C_minus.raw", maps.C_minus);
        if (maps.has_custom) write_raw(d + "/C_custom.raw", maps.C_custom);
        write_raw(d + "/Z_sparse.raw", maps.Z_sparse);
        write_raw(d + "/Z_dense.raw", maps.Z_dense);
        write_raw(d + "/F.raw", maps.F);
        write_png8(d + "/B.png", maps.B);
        write_png8(d + "/F.png", maps.F);
        write_png8(d + "/C_plus.png", maps.C_plus);
        write_png8(d + "/C_minus.png", maps.C_minus);
        if (maps.has_custom) write_png8(d + "/C_custom.png", maps.C_custom);
        write_png_depth(d + "/Z_sparse.png", maps.Z_sparse, cfg.optics.z_min, cfg.optics.z_max);
        write_png_depth(d + "/Z_dense.png", maps.Z_dense, cfg.optics.z_min, cfg.optics.z_max);
        log_info("depth: finished in " + std::to_string(seconds_since(t0)) + "s -> " + d);
        return 0;
    } catch (const std::exception& e) {
        log_error(std::string("depth: ") + e.what());
        return 1;
    }
}

int cmd_eval(RunConfig cfg, const std::string& pred_dir, const std::string& gt_dir) {
    try {
        cfg.validate();
        std::vector<std::string> scenes;
        for (const auto& entry : fs::directory_iterator(gt_dir)) {
            if (entry.is_directory() && fs::exists(entry.path() / "depth.raw")) {
                scenes.push_back(entry.path().filename().string());
            }
        }
        std::sort(scenes.begin(), scenes.end());
        if (scenes.empty()) throw ConfigError("eval: no scenes with depth.raw under " + gt_dir);

        const std::string map_file = cfg.eval_map == "dense" ? "Z_dense.raw" : "Z_sparse.raw";
        std::ostringstream csv;
        csv << "scene,pixels,rmse_m,rmse_cm,absrel,absrel_x100,delta1,delta2,delta3,flagged\n";
        json rows = json::array();
        double sum_rmse = 0.0, sum_absrel = 0.0, sum_d1 = 0.0, sum_d2 = 0.0, sum_d3 = 0.0;
        int used = 0;

        for (const auto& scene : scenes) {
            const std::string zp = pred_dir + "/" + scene + "/" + map_file;
            const std::string zg = gt_dir + "/" + scene + "/depth.raw";
            if (!fs::exists(zp)) throw IoError("eval: missing prediction file " + zp);
            if (!fs::exists(zg)) throw IoError("eval: missing ground truth file " + zg);
            const ImageD Z = read_raw_double(zp);
            const ImageD Zs = read_raw_double(zg);
            if (!Z.same_shape(Zs)) throw ConfigError("eval: shape mismatch for " + scene);

            std::vector<uint8_t> mask(Z.data.size());
            for (size_t k = 0; k < mask.size(); ++k) {
                mask[k] = std::isfinite(Z.data[k]) && std::isfinite(Zs.data[k]) ? 1 : 0;
            }
            const std::string fpath = pred_dir + "/" + scene + "/F.raw";
            if (fs::exists(fpath)) {
                const ImageD F = read_raw_double(fpath);
                for (size_t k = 0; k < mask.size(); ++k) {
                    if (F.data[k] < cfg.confidence_min) mask[k] = 0;
                }
            }
            const long valid = std::count(mask.begin(), mask.end(), uint8_t{1});
            json row;
            row["scene"] = scene;
            if (valid == 0) {
                row["flagged"] = true;
                csv << scene << ",0,nan,nan,nan,nan,nan,nan,nan,1\n";
            } else {
                const MetricsReport m =
                    compute_metrics(Z, Zs, mask, cfg.optics.z_min, cfg.optics.z_max);
                row["pixels"] = m.pixel_count;
                row["rmse_m"] = m.rmse;
                row["absrel"] = m.abs_rel;
                row["delta1"] = m.delta1;
                row["delta2"] = m.delta2;
                row["delta3"] = m.delta3;
                row["flagged"] = false;
                csv << scene << "," << m.pixel_count << "," << m.rmse << "," << 100.0 * m.rmse
                    << "," << m.abs_rel << "," << m.abs_rel_x100 << "," << m.delta1 << ","
                    << m.delta2 << "," << m.delta3 << ",0\n";
                sum_rmse += m.rmse;
                sum_absrel += m.abs_rel;
                sum_d1 += m.delta1;
                sum_d2 += m.delta2;
                sum_d3 += m.delta3;
                ++used;
            }
            rows.push_back(std::move(row));
        }

        fs::create_directories(cfg.out_dir);
        write_text_file(cfg.out_dir + "/metrics.csv", csv.str());
        json agg;
        agg["scenes"] = rows;
        agg["evaluated"] = used;
        agg["flagged"] = static_cast<int>(scenes.size()) - used;
        agg["map"] = cfg.eval_map;
        agg["confidence_min"] = cfg.confidence_min;
        if (used > 0) {
            agg["mean_rmse_m"] = sum_rmse / used;
            agg["mean_rmse_cm"] = 100.0 * sum_rmse / used;
            agg["mean_absrel"] = sum_absrel / used;
            agg["mean_delta1"] = sum_d1 / used;
            agg["mean_delta2"] = sum_d2 / used;
            agg["mean_delta3"] = sum_d3 / used;
        }
        write_text_file(cfg.out_dir + "/metrics.json", agg.dump(2) + "\n");
        log_info("eval: " + std::to_string(used) + "/" + std::to_string(scenes.size()) +
                 " scenes evaluated");
        return 0;
    } catch (const std::exception& e) {
        log_error(std::string("eval: ") + e.what());
        return 1;
    }
}

int cmd_calibrate(RunConfig cfg, const std::string& csv_path) {
    try {
        const std::string text = read_text_file(csv_path);
        std::istringstream in(text);
        std::string line;
        std::vector<std::pair<double, double>> pairs;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            std::replace(line.begin(), line.end(), ',', ' ');
            std::istringstream ls(line);
            double zp, zt;
            if (ls >> zp >> zt) pairs.emplace_back(zp, zt);
        }
        const Calibration c = calibrate_linear(pairs);
        fs::create_directories(cfg.out_dir);
        json j;
        j["ω0"] = c.omega0;
        j["ω1"] = c.omega1;
        j["residual_rms"] = c.residual_rms;
        j["measurements"] = pairs.size();
        write_text_file(cfg.out_dir + "/calibration.json", j.dump(2) + "\n");
        log_info("calibrate: omega0 " + std::to_string(c.omega0) + ", omega1 " +
                 std::to_string(c.omega1));
        return 0;
    } catch (const std::exception& e) {
        log_error(std::string("calibrate: ") + e.what());
        return 1;
    }
}

int cmd_render(RunConfig cfg, const std::string& patch_json_path) {
    try {
        const json j = json::parse(read_text_file(patch_json_path));
        WedgePatch psi;
        psi.width = j.value("width", 21);
        psi.height = j.value("height", 21);
        if (j.contains("bg_color")) {
            for (int c = 0; c < 3; ++c) psi.bg_color[c] = j.at("bg_color").at(c).get<double>();
        }
        for (const auto& wj : j.at("wedges")) {
            Wedge w;
            w.vx = wj.at("vertex").at(0).get<double>();
            w.vy = wj.at("vertex").at(1).get<double>();
            w.theta1 = wrap_angle(wj.at("theta").at(0).get<double>());
            double t2 = wj.at("theta").at(1).get<double>();
            double span = std::fmod(t2 - w.theta1, kTwoPi);
            if (span <= 0.0) span += kTwoPi;
            w.theta2 = w.theta1 + span;
            for (int c = 0; c < 3; ++c) w.color[c] = wj.at("color").at(c).get<double>();
            w.eta = wj.at("eta").get<double>();
            if (w.eta < cfg.fit.eta_min || w.eta > cfg.fit.eta_max) {
                throw ConfigError("render: eta outside configured bounds");
            }
            psi.wedges.push_back(w);
        }
        if (psi.wedges.empty()) throw ConfigError("render: no wedges in " + patch_json_path);

        const PatchMaps maps = render_patch_maps(psi, cfg.fit.delta, cfg.fit.w_scale);
        fs::create_directories(cfg.out_dir);
        write_png16(cfg.out_dir + "/patch_color.png", maps.color);
        write_png8(cfg.out_dir + "/patch_boundary.png", maps.boundary);
        write_raw(cfg.out_dir + "/patch_color.raw", maps.color);
        write_raw(cfg.out_dir + "/patch_boundary.raw", maps.boundary);
        write_raw(cfg.out_dir + "/patch_deriv.raw", maps.deriv);
        log_info("render: wrote patch maps to " + cfg.out_dir);
        return 0;
    } catch (const std::exception& e) {
        log_error(std::string("render: ") + e.what());
        return 1;
    }
}

}  // namespace dfd
