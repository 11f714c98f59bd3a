#include "specmorph/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <random>
#include <set>
#include <stdexcept>

#include "specmorph/error.hpp"

namespace specmorph {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void require(bool condition, const std::string& message) {
    if (!condition) throw std::invalid_argument("config: " + message);
}

void write_json(const fs::path& path, const json& j) {
    std::ofstream out(path);
    if (!out)
        throw ParseError("cannot open " + path.string() + " for writing");
    out << j.dump(2) << "\n";
}

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in)
        throw ParseError("cannot open " + path.string());
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded())
        throw ParseError("malformed JSON in " + path.string());
    return j;
}

Mesh load_input_mesh(const PipelineConfig& cfg, const std::string& path,
                     NormalizeTransform* transform = nullptr) {
    Mesh mesh = load_mesh(path);
    return cfg.normalize ? normalize_mesh(mesh, transform) : mesh;
}

json transform_json(const NormalizeTransform& t) {
    return json{{"centroid", {t.centroid.x(), t.centroid.y(), t.centroid.z()}},
                {"scale", t.scale}};
}

Trajectory load_trajectory(const fs::path& dir, int T) {
    Trajectory traj;
    traj.frames.reserve(static_cast<size_t>(T) + 1);
    for (int k = 0; k <= T; ++k) {
        char name[32];
        std::snprintf(name, sizeof(name), "frame_%04d.obj", k);
        traj.frames.push_back(load_mesh(dir / name).vertices);
    }
    return traj;
}

void save_trajectory(const fs::path& dir, const Trajectory& traj,
                     const Eigen::MatrixX3i& faces) {
    fs::create_directories(dir);
    for (int k = 0; k <= traj.steps(); ++k) {
        char name[32];
        std::snprintf(name, sizeof(name), "frame_%04d.obj", k);
        save_obj(dir / name, traj.frames[static_cast<size_t>(k)], faces);
    }
}

void write_curve_csv(const fs::path& path, const PckCurve& curve) {
    std::FILE* f = std::fopen(path.string().c_str(), "wb");
    if (!f)
        throw ParseError("cannot open " + path.string() + " for writing");
    for (const auto& [threshold, fraction] : curve.points)
        std::fprintf(f, "%.17g,%.17g\n", threshold, fraction);
    std::fclose(f);
}

Mat3 final_map_positions(const PipelineConfig& cfg, const Trajectory& traj_x,
                         const Trajectory& traj_y, const ShapeField& field,
                         const PointMap& pi_xy) {
    const int T = traj_x.steps();
    if (cfg.final_map_source == "blend11")
        return blend(traj_x, traj_y, field, pi_xy, T, 1.0);
    return traj_x.frames[static_cast<size_t>(T)] + field.deltas[static_cast<size_t>(T)];
}

} // namespace

void PipelineConfig::validate() const {
    require(!out.empty(), "output directory must be non-empty");
    require(k >= 1, "k must be >= 1");
    require(wks_dim >= 2, "wks_dim must be >= 2");
    require(temperature > 0.0, "temperature must be positive");
    require(lambda_reg >= 0.0, "lambda_reg must be non-negative");
    require(gamma > 0.0, "gamma must be positive");
    require(feature_jitter >= 0.0, "feature_jitter must be non-negative");
    require(spectral.bij >= 0.0 && spectral.orth >= 0.0 && spectral.structural >= 0.0 &&
                spectral.couple >= 0.0,
            "spectral weights must be non-negative");
    require(spatial.align >= 0.0 && spatial.arap >= 0.0 && spatial.sym >= 0.0 &&
                spatial.var >= 0.0,
            "spatial weights must be non-negative");
    require(steps >= 2, "steps (T) must be >= 2");
    require(match_iters >= 1 && interp_iters >= 1 && tta_iters >= 1,
            "iteration counts must be >= 1");
    require(match_step > 0.0 && interp_step > 0.0 && tta_step > 0.0,
            "step sizes must be positive");
    require(lambda_d >= 0.0, "lambda_d must be non-negative");
    require(final_map_source == "adapted" || final_map_source == "blend11",
            "final_map_source must be 'adapted' or 'blend11'");
    require(pck_max_threshold > 0.0, "pck_max_threshold must be positive");
    require(pck_steps >= 2, "pck_steps must be >= 2");
    require(ssm_modes >= 1, "ssm_modes must be >= 1");
    require(ssm_trials >= 1, "ssm_trials must be >= 1");
    require(threads >= 1, "threads must be >= 1");
}

MatchConfig PipelineConfig::match_config() const {
    MatchConfig mc;
    mc.temperature = temperature;
    mc.feature_dim = wks_dim;
    mc.iters = match_iters;
    mc.step_size = match_step;
    mc.lambda_reg = lambda_reg;
    mc.gamma = gamma;
    mc.weights = spectral;
    return mc;
}

PipelineConfig config_from_json(const json& j) {
    static const std::set<std::string> known = {
        "mesh_x", "mesh_y", "out", "seed", "threads", "normalize", "k", "wks_dim",
        "temperature", "lambda_reg", "gamma", "feature_jitter", "spectral_weights",
        "spatial_weights", "steps", "match_iters", "match_step", "interp_iters",
        "interp_step", "tta_iters", "tta_step", "lambda_d", "final_map_source", "gt_map",
        "pred_map", "pck_max_threshold", "pck_steps", "ssm_shapes", "ssm_modes",
        "ssm_trials"};
    for (const auto& [key, value] : j.items())
        if (!known.count(key))
            throw std::invalid_argument("config: unknown key '" + key + "'");

    PipelineConfig cfg;
    cfg.mesh_x = j.value("mesh_x", cfg.mesh_x);
    cfg.mesh_y = j.value("mesh_y", cfg.mesh_y);
    cfg.out = j.value("out", cfg.out);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.threads = j.value("threads", cfg.threads);
    cfg.normalize = j.value("normalize", cfg.normalize);
    cfg.k = j.value("k", cfg.k);
    cfg.wks_dim = j.value("wks_dim", cfg.wks_dim);
    cfg.temperature = j.value("temperature", cfg.temperature);
    cfg.lambda_reg = j.value("lambda_reg", cfg.lambda_reg);
    cfg.gamma = j.value("gamma", cfg.gamma);
    cfg.feature_jitter = j.value("feature_jitter", cfg.feature_jitter);
    if (j.contains("spectral_weights")) {
        const json& w = j.at("spectral_weights");
        cfg.spectral.bij = w.value("bij", cfg.spectral.bij);
        cfg.spectral.orth = w.value("orth", cfg.spectral.orth);
        cfg.spectral.structural = w.value("struct", cfg.spectral.structural);
        cfg.spectral.couple = w.value("couple", cfg.spectral.couple);
    }
    if (j.contains("spatial_weights")) {
        const json& w = j.at("spatial_weights");
        cfg.spatial.align = w.value("align", cfg.spatial.align);
        cfg.spatial.arap = w.value("arap", cfg.spatial.arap);
        cfg.spatial.sym = w.value("sym", cfg.spatial.sym);
        cfg.spatial.var = w.value("var", cfg.spatial.var);
    }
    cfg.steps = j.value("steps", cfg.steps);
    cfg.match_iters = j.value("match_iters", cfg.match_iters);
    cfg.match_step = j.value("match_step", cfg.match_step);
    cfg.interp_iters = j.value("interp_iters", cfg.interp_iters);
    cfg.interp_step = j.value("interp_step", cfg.interp_step);
    cfg.tta_iters = j.value("tta_iters", cfg.tta_iters);
    cfg.tta_step = j.value("tta_step", cfg.tta_step);
    cfg.lambda_d = j.value("lambda_d", cfg.lambda_d);
    cfg.final_map_source = j.value("final_map_source", cfg.final_map_source);
    cfg.gt_map = j.value("gt_map", cfg.gt_map);
    cfg.pred_map = j.value("pred_map", cfg.pred_map);
    cfg.pck_max_threshold = j.value("pck_max_threshold", cfg.pck_max_threshold);
    cfg.pck_steps = j.value("pck_steps", cfg.pck_steps);
    cfg.ssm_shapes = j.value("ssm_shapes", cfg.ssm_shapes);
    cfg.ssm_modes = j.value("ssm_modes", cfg.ssm_modes);
    cfg.ssm_trials = j.value("ssm_trials", cfg.ssm_trials);
    return cfg;
}

json config_to_json(const PipelineConfig& cfg) {
    return json{
        {"mesh_x", cfg.mesh_x},
        {"mesh_y", cfg.mesh_y},
        {"out", cfg.out},
        {"seed", cfg.seed},
        {"threads", cfg.threads},
        {"normalize", cfg.normalize},
        {"k", cfg.k},
        {"wks_dim", cfg.wks_dim},
        {"temperature", cfg.temperature},
        {"lambda_reg", cfg.lambda_reg},
        {"gamma", cfg.gamma},
        {"feature_jitter", cfg.feature_jitter},
        {"spectral_weights",
         {{"bij", cfg.spectral.bij},
          {"orth", cfg.spectral.orth},
          {"struct", cfg.spectral.structural},
          {"couple", cfg.spectral.couple}}},
        {"spatial_weights",
         {{"align", cfg.spatial.align},
          {"arap", cfg.spatial.arap},
          {"sym", cfg.spatial.sym},
          {"var", cfg.spatial.var}}},
        {"steps", cfg.steps},
        {"match_iters", cfg.match_iters},
        {"match_step", cfg.match_step},
        {"interp_iters", cfg.interp_iters},
        {"interp_step", cfg.interp_step},
        {"tta_iters", cfg.tta_iters},
        {"tta_step", cfg.tta_step},
        {"lambda_d", cfg.lambda_d},
        {"final_map_source", cfg.final_map_source},
        {"gt_map", cfg.gt_map},
        {"pred_map", cfg.pred_map},
        {"pck_max_threshold", cfg.pck_max_threshold},
        {"pck_steps", cfg.pck_steps},
        {"ssm_shapes", cfg.ssm_shapes},
        {"ssm_modes", cfg.ssm_modes},
        {"ssm_trials", cfg.ssm_trials},
    };
}

PipelineConfig load_config(const fs::path& path) {
    return config_from_json(read_json(path));
}

fs::path stage_dir(const PipelineConfig& cfg, const std::string& stage) {
    return fs::path(cfg.out) / stage;
}

void run_match(const PipelineConfig& cfg) {
    cfg.validate();
    require(!cfg.mesh_x.empty() && !cfg.mesh_y.empty(), "match needs mesh_x and mesh_y");

    NormalizeTransform transform_x, transform_y;
    const Mesh mesh_x = load_input_mesh(cfg, cfg.mesh_x, &transform_x);
    const Mesh mesh_y = load_input_mesh(cfg, cfg.mesh_y, &transform_y);
    const Operators ops_x = build_operators(mesh_x);
    const Operators ops_y = build_operators(mesh_y);
    const EigenBasis basis_x = compute_eigenbasis(ops_x, cfg.k);
    const EigenBasis basis_y = compute_eigenbasis(ops_y, cfg.k);

    FeatureField init_x = row_normalize(wks(basis_x, cfg.wks_dim));
    FeatureField init_y = row_normalize(wks(basis_y, cfg.wks_dim));
    if (cfg.feature_jitter > 0.0) {
        std::mt19937_64 rng(cfg.seed);
        std::uniform_real_distribution<Real> noise(-cfg.feature_jitter, cfg.feature_jitter);
        for (Eigen::Index i = 0; i < init_x.values.rows(); ++i)
            for (Eigen::Index j = 0; j < init_x.values.cols(); ++j)
                init_x.values(i, j) += noise(rng);
        for (Eigen::Index i = 0; i < init_y.values.rows(); ++i)
            for (Eigen::Index j = 0; j < init_y.values.cols(); ++j)
                init_y.values(i, j) += noise(rng);
        init_x.normalized = init_y.normalized = false;
    }

    const MatchResult result =
        optimize_features(basis_x, basis_y, init_x, init_y, cfg.match_config());

    const fs::path dir = stage_dir(cfg, "match");
    fs::create_directories(dir);
    save_obj(dir / "mesh_x.obj", mesh_x);
    save_obj(dir / "mesh_y.obj", mesh_y);
    save_pointmap(dir / "map_xy.txt", result.pi_xy);
    save_pointmap(dir / "map_yx.txt", result.pi_yx);
    save_fmap(dir / "fmap_xy.bin", result.c_xy);
    save_fmap(dir / "fmap_yx.bin", result.c_yx);
    // the normalization transforms map results back to input coordinates
    write_json(dir / "report.json", json{
                                        {"best_iter", result.best_iter},
                                        {"best_loss", result.best_loss},
                                        {"loss_trace", result.loss_trace},
                                        {"k", cfg.k},
                                        {"wks_dim", cfg.wks_dim},
                                        {"normalize_x", transform_json(transform_x)},
                                        {"normalize_y", transform_json(transform_y)},
                                    });
}

void run_interpolate(const PipelineConfig& cfg) {
    cfg.validate();
    const fs::path match = stage_dir(cfg, "match");
    const Mesh mesh_x = load_mesh(match / "mesh_x.obj");
    const Mesh mesh_y = load_mesh(match / "mesh_y.obj");
    const PointMap pi_xy = load_pointmap(match / "map_xy.txt");
    const PointMap pi_yx = load_pointmap(match / "map_yx.txt");

    const InterpResult result = optimize_trajectory(mesh_x, mesh_y, pi_xy, pi_yx, cfg.steps,
                                                    cfg.spatial, cfg.interp_iters,
                                                    cfg.interp_step);

    const fs::path dir = stage_dir(cfg, "interpolate");
    save_trajectory(dir / "x", result.x, mesh_x.faces);
    save_trajectory(dir / "y", result.y, mesh_y.faces);
    write_json(dir / "manifest.json",
               json{
                   {"steps", cfg.steps},
                   {"weights",
                    {{"align", cfg.spatial.align},
                     {"arap", cfg.spatial.arap},
                     {"sym", cfg.spatial.sym},
                     {"var", cfg.spatial.var}}},
                   {"best_iter", result.best_iter},
                   {"best_loss", result.best_loss},
                   {"loss_trace", result.loss_trace},
               });
}

void run_tta(const PipelineConfig& cfg) {
    cfg.validate();
    const fs::path match = stage_dir(cfg, "match");
    const fs::path interp = stage_dir(cfg, "interpolate");
    const Mesh mesh_x = load_mesh(match / "mesh_x.obj");
    const Mesh mesh_y = load_mesh(match / "mesh_y.obj");
    const PointMap pi_xy = load_pointmap(match / "map_xy.txt");
    const PointMap pi_yx = load_pointmap(match / "map_yx.txt");
    const int T = read_json(interp / "manifest.json").at("steps").get<int>();
    const Trajectory traj_x = load_trajectory(interp / "x", T);
    const Trajectory traj_y = load_trajectory(interp / "y", T);

    const AdaptResult adapt_x = adapt(traj_x, traj_y, mesh_x, cfg.lambda_d, cfg.tta_iters,
                                      cfg.tta_step);
    const AdaptResult adapt_y = adapt(traj_y, traj_x, mesh_y, cfg.lambda_d, cfg.tta_iters,
                                      cfg.tta_step);

    const Mat3 final_x = final_map_positions(cfg, traj_x, traj_y, adapt_x.field, pi_xy);
    const Mat3 final_y = final_map_positions(cfg, traj_y, traj_x, adapt_y.field, pi_yx);
    const PointMap final_xy = final_pointmap(mesh_y, final_x);
    const PointMap final_yx = final_pointmap(mesh_x, final_y);

    const fs::path dir = stage_dir(cfg, "tta");
    fs::create_directories(dir);
    save_shape_field(dir / "field_x.bin", adapt_x.field);
    save_shape_field(dir / "field_y.bin", adapt_y.field);
    save_pointmap(dir / "final_map_xy.txt", final_xy);
    save_pointmap(dir / "final_map_yx.txt", final_yx);
    save_obj(dir / "x_adapted.obj", final_x, mesh_x.faces);
    save_obj(dir / "y_adapted.obj", final_y, mesh_y.faces);
    write_json(dir / "report.json", json{
                                        {"chamfer_before_x", adapt_x.chamfer_before},
                                        {"chamfer_after_x", adapt_x.chamfer_after},
                                        {"chamfer_before_y", adapt_y.chamfer_before},
                                        {"chamfer_after_y", adapt_y.chamfer_after},
                                        {"lambda_d", cfg.lambda_d},
                                        {"iters", cfg.tta_iters},
                                    });
}

EvalReport run_eval(const PipelineConfig& cfg) {
    cfg.validate();
    require(!cfg.gt_map.empty(), "eval needs gt_map");
    require(!cfg.mesh_x.empty() && !cfg.mesh_y.empty(), "eval needs mesh_x and mesh_y");

    const fs::path pred_path = cfg.pred_map.empty()
                                   ? stage_dir(cfg, "tta") / "final_map_xy.txt"
                                   : fs::path(cfg.pred_map);
    const PointMap pred = load_pointmap(pred_path);
    const PointMap gt = load_pointmap(cfg.gt_map);
    const Mesh mesh_x = load_input_mesh(cfg, cfg.mesh_x);
    const Mesh mesh_y = load_input_mesh(cfg, cfg.mesh_y);

    std::set<int> distinct(gt.hard.begin(), gt.hard.end());
    const std::vector<int> sources(distinct.begin(), distinct.end());
    const GeodesicTable geo = geodesics(mesh_y, sources);
    const auto [mean_err, errors] = geodesic_error(pred, gt, geo);

    EvalReport report;
    report.mean_geo_err = mean_err;
    report.pck = pck_auc(errors, cfg.pck_max_threshold, cfg.pck_steps);

    const Mat3 mapped = apply_pointmap(harden(pred), mesh_y.vertices);
    const Vec distortions = conformal_distortion(mesh_x, mapped);
    report.conformal = cumulative_curve(distortions, 2.0, cfg.pck_steps);

    const fs::path dir = stage_dir(cfg, "eval");
    fs::create_directories(dir);
    write_json(dir / "report.json", json{
                                        {"mean_geo_err", report.mean_geo_err},
                                        {"mean_geo_err_x100", 100.0 * report.mean_geo_err},
                                        {"pck_auc", report.pck.auc},
                                        {"conformal_auc", report.conformal.auc},
                                        {"pck_max_threshold", cfg.pck_max_threshold},
                                    });
    write_curve_csv(dir / "pck.csv", report.pck);
    write_curve_csv(dir / "conformal.csv", report.conformal);
    return report;
}

void run_ssm(const PipelineConfig& cfg) {
    cfg.validate();
    require(cfg.ssm_shapes.size() >= 2, "ssm needs at least two corresponded shapes");

    std::vector<Mat3> shapes;
    Eigen::MatrixX3i faces;
    for (size_t i = 0; i < cfg.ssm_shapes.size(); ++i) {
        const Mesh mesh = load_mesh(cfg.ssm_shapes[i]);
        if (i == 0) faces = mesh.faces;
        shapes.push_back(mesh.vertices);
    }

    const int q = std::min<int>(cfg.ssm_modes, static_cast<int>(shapes.size()) - 1);
    const SSModel model = build_ssm(shapes, q);

    const fs::path dir = stage_dir(cfg, "ssm");
    fs::create_directories(dir);
    save_ssm(dir / "model.ssm", model);
    save_obj(dir / "mean.obj", model.mean, faces);
    for (int m = 0; m < model.modes(); ++m) {
        Vec coeffs = Vec::Zero(model.modes());
        coeffs[m] = 2.0; // the +-2 SD convention
        char plus_name[32], minus_name[32];
        std::snprintf(plus_name, sizeof(plus_name), "mode%d_plus.obj", m + 1);
        std::snprintf(minus_name, sizeof(minus_name), "mode%d_minus.obj", m + 1);
        save_obj(dir / plus_name, sample_ssm(model, coeffs), faces);
        coeffs[m] = -2.0;
        save_obj(dir / minus_name, sample_ssm(model, coeffs), faces);
    }

    json metrics = {
        {"modes", model.modes()},
        {"variances", std::vector<Real>(model.variances.data(),
                                        model.variances.data() + model.variances.size())},
        {"specificity", specificity(model, q, cfg.ssm_trials, cfg.seed)},
    };
    if (shapes.size() >= 3) metrics["generality"] = generality(shapes, q);
    write_json(dir / "metrics.json", metrics);
}

void run_pipeline(const PipelineConfig& cfg) {
    cfg.validate();
    run_match(cfg);
    run_interpolate(cfg);
    run_tta(cfg);
    if (!cfg.gt_map.empty()) run_eval(cfg);
    if (!cfg.ssm_shapes.empty()) run_ssm(cfg);
}

} // namespace specmorph
