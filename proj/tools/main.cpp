#include "usm/metrics.hpp"
#include "usm/optimizer.hpp"
#include "usm/random.hpp"
#include "usm/synth.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Defaults < config file < command-line flags. The config file is applied by
// loading it into this struct before CLI11 parses the flags over it.
struct RunConfig {
    int iters = 200;
    double lr = 0.005;
    double lambda_s = 1.0;
    double lambda_r = 0.1;
    double lambda_c = 1e-3;
    int es_samples = 1000;
    int ray_samples = 32;
    int sobol = 128;
    double delta = 0.05;
    double slope = 400.0;
    double bg_factor = 1.1;
    int pixels_per_view = 64;
    int points = 2048;
    std::uint64_t seed = 0;
    std::string decoder = "analytic";
    int threads = 0;
};

void apply_config_file(const std::string& path, RunConfig& cfg) {
    json doc;
    try {
        doc = json::parse(usm::read_text_file(path));
    } catch (const json::exception& e) {
        throw usm::FormatError("config " + path + ": " + e.what());
    }
    auto get = [&](const char* key, auto& field) {
        if (doc.contains(key)) field = doc[key].get<std::decay_t<decltype(field)>>();
    };
    get("iters", cfg.iters);
    get("lr", cfg.lr);
    get("lambda_s", cfg.lambda_s);
    get("lambda_r", cfg.lambda_r);
    get("lambda_c", cfg.lambda_c);
    get("es_samples", cfg.es_samples);
    get("ray_samples", cfg.ray_samples);
    get("sobol", cfg.sobol);
    get("delta", cfg.delta);
    get("slope", cfg.slope);
    get("bg_factor", cfg.bg_factor);
    get("pixels_per_view", cfg.pixels_per_view);
    get("points", cfg.points);
    get("seed", cfg.seed);
    get("decoder", cfg.decoder);
    get("threads", cfg.threads);
}

usm::OptimConfig to_optim_config(const RunConfig& cfg) {
    usm::OptimConfig oc;
    oc.iters = cfg.iters;
    oc.lr = cfg.lr;
    oc.lambda_surface = cfg.lambda_s;
    oc.lambda_render = cfg.lambda_r;
    oc.lambda_code = cfg.lambda_c;
    oc.es.sample_count = cfg.es_samples;
    oc.ray.samples_per_ray = cfg.ray_samples;
    oc.ray.sobol_count = cfg.sobol;
    oc.ray.surface_band = cfg.delta;
    oc.ray.slope = cfg.slope;
    oc.ray.background_depth_factor = cfg.bg_factor;
    oc.pixels_per_view = cfg.pixels_per_view;
    oc.max_world_points = static_cast<std::size_t>(cfg.points);
    oc.seed = cfg.seed;
    return oc;
}

std::vector<double> parse_csv_numbers(const std::string& text, std::size_t expect,
                                      const std::string& what) {
    std::vector<double> values;
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        try {
            values.push_back(std::stod(tok));
        } catch (const std::exception&) {
            throw usm::InvalidInput(what + ": cannot parse '" + tok + "'");
        }
    }
    if (expect != 0 && values.size() != expect)
        throw usm::InvalidInput(what + ": expected " + std::to_string(expect) + " numbers, got " +
                                std::to_string(values.size()));
    return values;
}

usm::Pose9 parse_pose_arg(const std::string& text) {
    const auto v = parse_csv_numbers(text, 9, "pose argument");
    return usm::Pose9::from_vector(Eigen::Map<const usm::Vec9>(v.data()));
}

usm::VecX latent_from_shape(const std::string& shape, int latent_dim) {
    usm::VecX z = usm::VecX::Zero(latent_dim);
    if (shape == "sphere") return z;
    if (shape.rfind("ellipsoid:", 0) == 0) {
        const auto v = parse_csv_numbers(shape.substr(10), 3, "--shape ellipsoid");
        z[0] = v[0];
        z[1] = v[1];
        z[2] = v[2];
        return z;
    }
    throw usm::InvalidInput("--shape must be 'sphere' or 'ellipsoid:<z0>,<z1>,<z2>'");
}

int cmd_synth(const RunConfig& cfg, const std::string& out_dir, const std::string& shape,
              int views, double noise, int image_size, double radius, double elevation,
              const std::string& pose_arg, const std::string& latent_file) {
    const auto decoder = usm::make_decoder(cfg.decoder);
    usm::SynthSpec spec;
    if (!latent_file.empty()) {
        std::istringstream is(usm::read_text_file(latent_file));
        std::vector<double> v;
        double x;
        while (is >> x) v.push_back(x);
        if (static_cast<int>(v.size()) != decoder->latent_dim())
            throw usm::FormatError("latent file " + latent_file + ": expected " +
                                   std::to_string(decoder->latent_dim()) + " values");
        spec.gt_latent = Eigen::Map<const usm::VecX>(v.data(), v.size());
    } else {
        spec.gt_latent = latent_from_shape(shape, decoder->latent_dim());
    }
    spec.gt_pose = pose_arg.empty() ? usm::Pose9{} : parse_pose_arg(pose_arg);
    spec.views = views;
    spec.noise_sigma = noise;
    spec.image_size = image_size;
    spec.ring_radius = radius;
    spec.elevation_deg = elevation;
    spec.seed = cfg.seed;
    const std::string manifest = usm::generate_scene(*decoder, spec, out_dir);
    std::cout << "wrote " << manifest << "\n";
    return 0;
}

int cmd_fit(const RunConfig& cfg, const std::string& scene_path, const std::string& out_path,
            const std::string& history_path, const std::string& init_pose_arg) {
    const auto decoder = usm::make_decoder(cfg.decoder);
    const usm::Scene scene = usm::load_scene(scene_path);
    const usm::OptimConfig oc = to_optim_config(cfg);
    std::optional<usm::Pose9> init_pose;
    if (!init_pose_arg.empty()) init_pose = parse_pose_arg(init_pose_arg);
    const usm::OptimState state = usm::fit(*decoder, scene.frames, oc, init_pose);
    usm::write_result_json(out_path, state, cfg.decoder, oc);
    if (!history_path.empty()) usm::write_history_csv(history_path, state.history);
    const usm::Pose9 pose = state.pose.mean_pose();
    std::cout << "fit: " << state.iteration << " iterations, final total loss "
              << (state.history.empty() ? 0.0 : state.history.back().total) << "\n"
              << "pose t=(" << pose.t.transpose() << ") s=(" << pose.s.transpose() << ")\n";
    return 0;
}

int cmd_render(const RunConfig& cfg, const std::string& scene_path, const std::string& result_path,
               int view, const std::string& out_prefix, const std::string& dump_termination) {
    const usm::Scene scene = usm::load_scene(scene_path);
    if (view < 0 || view >= static_cast<int>(scene.frames.size()))
        throw usm::InvalidInput("render: --view out of range");
    const usm::LoadedResult result = usm::read_result_json(result_path);
    const auto decoder = usm::make_decoder(result.decoder_selector);
    usm::RayConfig rc = to_optim_config(cfg).ray;
    rc.scramble_seed = usm::mix_seed({cfg.seed, 0x5261ull});
    const usm::Renderer renderer(rc);
    const auto& frame = scene.frames[view];

    usm::ImageF depth = usm::ImageF::zeros(frame.intrinsics.width, frame.intrinsics.height);
    usm::ImageF stddev = usm::ImageF::zeros(frame.intrinsics.width, frame.intrinsics.height);
    usm::parallel_for(std::size_t(frame.intrinsics.width) * frame.intrinsics.height,
                      [&](std::size_t begin, std::size_t end) {
                          for (std::size_t i = begin; i < end; ++i) {
                              const int x = static_cast<int>(i % frame.intrinsics.width);
                              const int y = static_cast<int>(i / frame.intrinsics.width);
                              const auto render = renderer.render_pixel(
                                  *decoder, result.state.z, result.state.pose, x, y,
                                  frame.intrinsics, frame.t_wc);
                              if (!render) continue;
                              depth.at(x, y) = static_cast<float>(render->depth_mean);
                              stddev.at(x, y) = static_cast<float>(std::sqrt(render->depth_var));
                          }
                      });
    usm::write_pfm(out_prefix + "_depth.pfm", depth);
    usm::write_pfm(out_prefix + "_std.pfm", stddev);
    std::cout << "wrote " << out_prefix << "_depth.pfm and " << out_prefix << "_std.pfm\n";

    if (!dump_termination.empty()) {
        const auto uv = parse_csv_numbers(dump_termination, 2, "--dump-termination");
        const auto render =
            renderer.render_pixel(*decoder, result.state.z, result.state.pose, uv[0], uv[1],
                                  frame.intrinsics, frame.t_wc);
        if (!render) throw usm::InvalidInput("--dump-termination: ray misses the shape bound");
        std::ostringstream os;
        os.precision(10);
        os << "sample,depth,termination_mean,termination_var,beta_alpha,beta_beta,beta_flag\n";
        const int m = static_cast<int>(render->samples.depths.size());
        for (int i = 0; i <= m; ++i) {
            const double d = i < m ? render->samples.depths[i] : render->background_depth;
            const double mean = render->termination.mean[i];
            const double var = render->termination.var[i];
            const usm::BetaFit fit = usm::beta_moment_match(mean, var);
            const char* flag = fit.flag == usm::BetaFit::Flag::Ok ? "ok"
                               : fit.flag == usm::BetaFit::Flag::ClampedVariance ? "clamped"
                                                                                 : "degenerate";
            os << (i < m ? std::to_string(i + 1) : std::string("escape")) << "," << d << ","
               << mean << "," << var << "," << fit.alpha << "," << fit.beta << "," << flag
               << "\n";
        }
        usm::write_text_file(out_prefix + "_termination.csv", os.str());
        std::cout << "wrote " << out_prefix << "_termination.csv\n";
    }
    return 0;
}

int cmd_mesh(const RunConfig& cfg, const std::string& result_path, const std::string& out_path,
             int resolution, const std::string& decoder_override) {
    const usm::LoadedResult result = usm::read_result_json(result_path);
    const std::string selector =
        decoder_override.empty() ? result.decoder_selector : decoder_override;
    (void)cfg;
    const auto decoder = usm::make_decoder(selector);
    const usm::TriMesh mesh = usm::extract_mesh(*decoder, result.state.z.mean, resolution);
    if (mesh.empty()) throw usm::InvalidInput("mesh: empty zero-level set");
    usm::write_obj(out_path, mesh);
    std::cout << "wrote " << out_path << " (" << mesh.vertices.size() << " vertices, "
              << mesh.faces.size() << " faces)\n";
    return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& scene_path, const std::string& result_path,
             const std::string& out_path, int gt_points, int grid_res, int mesh_res,
             const std::string& corr_csv) {
    const usm::Scene scene = usm::load_scene(scene_path);
    if (!scene.has_ground_truth)
        throw usm::InvalidInput("eval: scene manifest has no ground-truth block");
    const usm::LoadedResult result = usm::read_result_json(result_path);
    const auto est_decoder = usm::make_decoder(result.decoder_selector);
    if (scene.gt_latent.size() == 0)
        throw usm::InvalidInput("eval: ground-truth block has no latent code");
    const auto gt_decoder =
        usm::make_decoder(scene.gt_decoder, static_cast<int>(scene.gt_latent.size()));

    const usm::Pose9 est_pose = result.state.pose.mean_pose();
    const usm::PoseErrors errors = usm::pose_error(est_pose, scene.gt_pose);
    const bool correct = usm::pose_correct(errors);

    const double iou = usm::iou_3d(*est_decoder, result.state.z.mean, est_pose, *gt_decoder,
                                   scene.gt_latent, scene.gt_pose, grid_res);

    const usm::TriMesh est_mesh = usm::extract_mesh(*est_decoder, result.state.z.mean, mesh_res);
    const usm::TriMesh gt_mesh = usm::extract_mesh(*gt_decoder, scene.gt_latent, mesh_res);
    if (est_mesh.empty() || gt_mesh.empty())
        throw usm::InvalidInput("eval: empty mesh at the requested resolution");
    const auto est_world = usm::transform_mesh(est_mesh, est_pose.inverse_matrix());
    const auto gt_world = usm::transform_mesh(gt_mesh, scene.gt_pose.inverse_matrix());
    const auto est_samples = usm::sample_mesh_surface(est_world, 10000, cfg.seed + 1);
    const auto gt_samples = usm::sample_mesh_surface(gt_world, 10000, cfg.seed + 2);
    const double cd = usm::chamfer(est_samples, gt_samples);

    const auto corr_points =
        usm::sample_mesh_surface(gt_world, static_cast<std::size_t>(gt_points), cfg.seed + 3);
    const usm::CorrelationResult corr = usm::uncertainty_correlation(
        *est_decoder, result.state.z, result.state.pose, corr_points);
    if (!corr_csv.empty()) usm::write_correlation_csv(corr_csv, corr);

    std::ostringstream os;
    os.precision(10);
    os << "translation_err,rotation_err_deg,scale_err,pose_correct,iou,chamfer,pearson_r\n"
       << errors.translation << "," << errors.rotation << "," << errors.scale << ","
       << (correct ? 1 : 0) << "," << iou << "," << cd << "," << corr.pearson_r << "\n";
    usm::write_text_file(out_path, os.str());
    std::cout << os.str();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    RunConfig cfg;

    // Config file first, flags override it below.
    try {
        for (int i = 1; i + 1 < argc; ++i)
            if (std::string(argv[i]) == "--config") apply_config_file(argv[i + 1], cfg);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }

    CLI::App app{"usm - uncertainty-aware shape and 9-DoF pose mapping"};
    app.require_subcommand(1);
    app.fallthrough(true);
    std::string config_path;
    app.add_option("--config", config_path, "JSON config file (flags take precedence)");

    std::string out_dir, shape = "sphere", pose_arg, latent_file;
    int views = 3, image_size = 128;
    double noise = 0.0, ring_radius = 2.5, elevation = 25.0;
    auto* synth = app.add_subcommand("synth", "Generate a synthetic depth/mask scene");
    synth->add_option("--out", out_dir, "Output directory")->required();
    synth->add_option("--shape", shape, "sphere | ellipsoid:<z0>,<z1>,<z2>");
    synth->add_option("--views", views, "Number of ring cameras");
    synth->add_option("--noise", noise, "Depth noise sigma (meters)");
    synth->add_option("--image-size", image_size, "Square image size");
    synth->add_option("--radius", ring_radius, "Camera ring radius (meters)");
    synth->add_option("--elevation", elevation, "Camera elevation (degrees)");
    synth->add_option("--gt-pose", pose_arg, "tx,ty,tz,px,py,pz,sx,sy,sz (world->object)");
    synth->add_option("--latent-file", latent_file, "Whitespace text file with the full latent");

    std::string scene_path, result_out = "result.json", history_path, init_pose_arg;
    auto* fit = app.add_subcommand("fit", "Optimize shape, pose, and uncertainties");
    fit->add_option("--scene", scene_path, "Scene directory or manifest path")->required();
    fit->add_option("--out", result_out, "Result JSON path");
    fit->add_option("--history", history_path, "Loss history CSV path");
    fit->add_option("--init-pose", init_pose_arg, "Skip ICP: tx,ty,tz,px,py,pz,sx,sy,sz");

    std::string render_scene, render_result = "result.json", out_prefix = "render",
                dump_termination;
    int render_view = 0;
    auto* render = app.add_subcommand("render", "Render depth and uncertainty maps");
    render->add_option("--scene", render_scene, "Scene directory or manifest path")->required();
    render->add_option("--result", render_result, "Result JSON path");
    render->add_option("--view", render_view, "Frame index");
    render->add_option("--out-prefix", out_prefix, "Output prefix for PFMs");
    render->add_option("--dump-termination", dump_termination,
                       "Pixel 'u,v': write termination/Beta diagnostics CSV");

    std::string mesh_result = "result.json", mesh_out = "mesh.obj", mesh_decoder;
    int mesh_resolution = 64;
    auto* mesh = app.add_subcommand("mesh", "Extract the OBJ mesh of a result");
    mesh->add_option("--result", mesh_result, "Result JSON path");
    mesh->add_option("--out", mesh_out, "OBJ output path");
    mesh->add_option("--resolution", mesh_resolution, "Grid resolution");
    mesh->add_option("--decoder", mesh_decoder, "Override the result's decoder selector");

    std::string eval_scene, eval_result = "result.json", eval_out = "metrics.csv", corr_csv;
    int eval_points = 10000, eval_grid = 64, eval_mesh_res = 64;
    auto* evalc = app.add_subcommand("eval", "Metrics against the scene ground truth");
    evalc->add_option("--scene", eval_scene, "Scene directory or manifest path")->required();
    evalc->add_option("--result", eval_result, "Result JSON path");
    evalc->add_option("--out", eval_out, "Metrics CSV path");
    evalc->add_option("--points", eval_points, "Ground-truth surface samples");
    evalc->add_option("--grid", eval_grid, "IoU voxel grid resolution");
    evalc->add_option("--mesh-resolution", eval_mesh_res, "Mesh resolution for Chamfer");
    evalc->add_option("--corr-csv", corr_csv, "Per-point uncertainty/error table output");

    // Shared tuning flags (config-file keys carry the same names sans --).
    app.add_option("--iters", cfg.iters, "Optimizer iterations");
    app.add_option("--lr", cfg.lr, "Adam learning rate");
    app.add_option("--lambda-s", cfg.lambda_s, "3D surface loss weight");
    app.add_option("--lambda-r", cfg.lambda_r, "2D rendering loss weight");
    app.add_option("--lambda-c", cfg.lambda_c, "Latent regularizer weight");
    app.add_option("--es-samples", cfg.es_samples, "Energy-score samples M");
    app.add_option("--ray-samples", cfg.ray_samples, "Samples per ray");
    app.add_option("--sobol", cfg.sobol, "Sobol draws per ray");
    app.add_option("--delta", cfg.delta, "Surface band half-width (meters)");
    app.add_option("--slope", cfg.slope, "Occupancy sigmoid slope (1/m)");
    app.add_option("--bg-factor", cfg.bg_factor, "Background depth factor");
    app.add_option("--pixels-per-view", cfg.pixels_per_view, "Rendered pixels per view per iter");
    app.add_option("--points", cfg.points, "World point budget");
    app.add_option("--seed", cfg.seed, "Run seed");
    app.add_option("--decoder", cfg.decoder, "analytic | mlp:<path>");
    app.add_option("--threads", cfg.threads, "Worker cap (env USM_THREADS)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    if (cfg.threads <= 0) {
        if (const char* env = std::getenv("USM_THREADS")) cfg.threads = std::atoi(env);
    }
    usm::set_thread_count(cfg.threads > 0 ? cfg.threads
                                          : std::max(1u, std::thread::hardware_concurrency()));

    try {
        if (synth->parsed())
            return cmd_synth(cfg, out_dir, shape, views, noise, image_size, ring_radius, elevation,
                             pose_arg, latent_file);
        if (fit->parsed()) return cmd_fit(cfg, scene_path, result_out, history_path, init_pose_arg);
        if (render->parsed())
            return cmd_render(cfg, render_scene, render_result, render_view, out_prefix,
                              dump_termination);
        if (mesh->parsed())
            return cmd_mesh(cfg, mesh_result, mesh_out, mesh_resolution, mesh_decoder);
        if (evalc->parsed())
            return cmd_eval(cfg, eval_scene, eval_result, eval_out, eval_points, eval_grid,
                            eval_mesh_res, corr_csv);
    } catch (const usm::NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
