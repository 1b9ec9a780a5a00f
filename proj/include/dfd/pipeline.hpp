// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "dfd/aggregate.hpp"
#include "dfd/config.hpp"

namespace dfd {

/// One fit+aggregate pass over an image pair, including block tiling for
/// inputs larger than the block side. `inputs` are what gets fitted;
/// `targets` are what the losses compare against (the inputs themselves in
/// the self-supervised profile, clean renders in supervised evaluation).
/// u_star / z_star supervision is optional and only read in the supervised
/// profile. When fit_json_dir is non-null, per-block fit JSON documents are
/// written there.
GlobalMaps run_depth_pipeline(const ImageD& in_plus, const ImageD& in_minus,
                              const ImageD& tgt_plus, const ImageD& tgt_minus,
                              const ImageD* u_star, const ImageD* z_star, const RunConfig& cfg,
                              const std::string* fit_json_dir = nullptr);

/// CLI entry points. They return a process exit code and report failures on
/// stderr instead of throwing.
int cmd_synth(RunConfig cfg);
int cmd_depth(RunConfig cfg, const std::string& plus_path, const std::string& minus_path);
int cmd_eval(RunConfig cfg, const std::string& pred_dir, const std::string& gt_dir);
int cmd_calibrate(RunConfig cfg, const std::string& csv_path);
int cmd_render(RunConfig cfg, const std::string& patch_json_path);

}  // namespace dfd
