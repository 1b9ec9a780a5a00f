// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>

#include "dfd/aggregate.hpp"
#include "dfd/fit.hpp"
#include "dfd/noise.hpp"
#include "dfd/optics.hpp"
#include "dfd/synth.hpp"

namespace dfd {

/// Everything a run needs, serializable to/from JSON. The optics, camera,
/// and noise sections use the canonical field names (including the Greek
/// ones); common ASCII aliases are accepted when reading.
struct RunConfig {
    uint64_t seed = 0;
    int threads = 0;  // 0 = all hardware threads
    std::string out_dir = "out";
    OpticsConfig optics;
    CameraConstants camera;
    NoiseModel noise;
    FitOptions fit;
    BlockConfig blocks;
    DatasetSpec synth;      // optics/seed filled from the sections above at run time
    double eta_override = -1.0;  // >= 0 requests the C_custom map
    double confidence_min = 0.5;  // F threshold for "confident pixels" in eval
    std::string eval_map = "sparse";  // sparse | dense

    void validate() const;
};

RunConfig parse_config_json(const std::string& text);
RunConfig load_config(const std::string& path);
std::string config_to_json(const RunConfig& cfg);

/// Write the effective configuration into the output directory so the run
/// can be reproduced from its artifacts alone.
void echo_config(const RunConfig& cfg, const std::string& out_dir);

}  // namespace dfd
