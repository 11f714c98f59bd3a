#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "specmorph/correspondence.hpp"
#include "specmorph/interpolation.hpp"
#include "specmorph/metrics.hpp"
#include "specmorph/ssm.hpp"
#include "specmorph/tta.hpp"

namespace specmorph {

/// Every knob of the match -> interpolate -> tta -> eval -> ssm pipeline.
/// Defaults follow the published configuration where one exists; the rest
/// are desk-scale choices.
struct PipelineConfig {
    std::string mesh_x, mesh_y;
    std::string out = "out";
    uint64_t seed = 42;
    int threads = 1; // 1 = strictly deterministic
    bool normalize = true;

    int k = 50;
    int wks_dim = 128;
    Real temperature = 0.07;
    Real lambda_reg = 100.0;
    Real gamma = 0.5;
    Real feature_jitter = 0.0;
    SpectralWeights spectral;
    SpatialWeights spatial;

    int steps = 6; // trajectory steps T
    int match_iters = 300;
    Real match_step = 1e-3;
    int interp_iters = 300;
    Real interp_step = 1e-3;
    int tta_iters = 2000;
    Real tta_step = 1e-3;
    Real lambda_d = 0.1;
    std::string final_map_source = "adapted"; // or "blend11"

    std::string gt_map;
    std::string pred_map; // eval input; defaults to the tta output
    Real pck_max_threshold = 0.1;
    int pck_steps = 100;

    std::vector<std::string> ssm_shapes;
    int ssm_modes = 5;
    int ssm_trials = 1000;

    /// Throws std::invalid_argument on out-of-range values (usage errors).
    void validate() const;

    MatchConfig match_config() const;
};

PipelineConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const PipelineConfig& cfg);
PipelineConfig load_config(const std::filesystem::path& path);

std::filesystem::path stage_dir(const PipelineConfig& cfg, const std::string& stage);

/// Stage runners. Each validates the config first, reads its inputs from the
/// previous stage's directory and writes everything under <out>/<stage>/.
/// All outputs are deterministic functions of the inputs and the seed.
void run_match(const PipelineConfig& cfg);
void run_interpolate(const PipelineConfig& cfg);
void run_tta(const PipelineConfig& cfg);
EvalReport run_eval(const PipelineConfig& cfg);
void run_ssm(const PipelineConfig& cfg);

/// match -> interpolate -> tta, then eval when a ground-truth map is
/// configured and ssm when shape lists are given.
void run_pipeline(const PipelineConfig& cfg);

} // namespace specmorph
