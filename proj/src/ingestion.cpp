#include "usm/ingestion.hpp"

#include "usm/random.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

namespace usm {

namespace fs = std::filesystem;
using nlohmann::json;

void DepthFrame::validate() const {
    intrinsics.validate();
    if (depth.width != intrinsics.width || depth.height != intrinsics.height)
        throw FormatError("DepthFrame: depth raster size does not match intrinsics");
    if (mask.width != intrinsics.width || mask.height != intrinsics.height)
        throw FormatError("DepthFrame: mask size does not match intrinsics");
    validate_rigid(t_wc, "DepthFrame camera pose");
}

std::vector<Vec3> back_project(const DepthFrame& frame) {
    std::vector<Vec3> points;
    points.reserve(256);
    for (int y = 0; y < frame.depth.height; ++y) {
        for (int x = 0; x < frame.depth.width; ++x) {
            if (!frame.mask.object(x, y)) continue;
            const double d = frame.depth.at(x, y);
            if (d <= 0.0) continue;
            points.push_back(d * frame.intrinsics.ray(x, y));
        }
    }
    return points;
}

std::vector<Vec3> assemble_world_points(std::span<const DepthFrame> frames, std::size_t subsample,
                                        std::uint64_t seed) {
    std::vector<Vec3> world;
    for (const auto& frame : frames) {
        const Mat3 r = frame.t_wc.topLeftCorner<3, 3>();
        const Vec3 t = frame.t_wc.topRightCorner<3, 1>();
        for (const Vec3& p : back_project(frame)) world.push_back(r * p + t);
    }
    if (world.empty()) throw InvalidInput("assemble_world_points: no valid masked depth pixels");
    if (subsample == 0 || world.size() <= subsample) return world;

    // Partial Fisher-Yates keeps the selection deterministic under the seed.
    Rng rng(mix_seed({seed, 0x9047ull}));
    for (std::size_t i = 0; i < subsample; ++i) {
        const std::size_t j = i + rng.uniform_index(world.size() - i);
        std::swap(world[i], world[j]);
    }
    world.resize(subsample);
    return world;
}

Intrinsics read_intrinsics_text(const std::string& path) {
    std::istringstream is(read_text_file(path));
    Intrinsics k;
    if (!(is >> k.fx >> k.fy >> k.cx >> k.cy >> k.width >> k.height))
        throw FormatError("intrinsics " + path + ": expected 'fx fy cx cy width height'");
    try {
        k.validate();
    } catch (const InvalidInput& e) {
        throw FormatError("intrinsics " + path + ": " + e.what());
    }
    return k;
}

void write_intrinsics_text(const std::string& path, const Intrinsics& k) {
    std::ostringstream os;
    os.precision(17);
    os << k.fx << " " << k.fy << " " << k.cx << " " << k.cy << " " << k.width << " " << k.height
       << "\n";
    write_text_file(path, os.str());
}

Scene load_scene(const std::string& manifest_path) {
    fs::path mpath(manifest_path);
    if (fs::is_directory(mpath)) mpath /= "manifest.json";
    json doc;
    try {
        doc = json::parse(read_text_file(mpath.string()));
    } catch (const json::exception& e) {
        throw FormatError("manifest " + mpath.string() + ": " + e.what());
    }
    const fs::path base = mpath.parent_path();
    auto resolve = [&](const std::string& rel) { return (base / rel).string(); };

    Scene scene;
    if (!doc.contains("frames") || !doc["frames"].is_array() || doc["frames"].empty())
        throw FormatError("manifest " + mpath.string() + ": missing non-empty 'frames' array");
    for (const auto& f : doc["frames"]) {
        for (const char* key : {"depth", "mask", "intrinsics", "pose"})
            if (!f.contains(key))
                throw FormatError("manifest " + mpath.string() + ": frame missing '" +
                                  std::string(key) + "'");
        DepthFrame frame;
        frame.depth = read_pfm(resolve(f["depth"].get<std::string>()));
        frame.mask = read_pgm(resolve(f["mask"].get<std::string>()));
        frame.intrinsics = read_intrinsics_text(resolve(f["intrinsics"].get<std::string>()));
        const std::string pose_path = resolve(f["pose"].get<std::string>());
        std::istringstream ps(read_text_file(pose_path));
        frame.t_wc = read_pose_text(ps, pose_path);
        frame.validate();
        scene.frames.push_back(std::move(frame));
    }

    if (doc.contains("ground_truth")) {
        const auto& gt = doc["ground_truth"];
        scene.has_ground_truth = true;
        if (gt.contains("pose9")) {
            const auto v = gt["pose9"].get<std::vector<double>>();
            if (v.size() != 9) throw FormatError("manifest ground_truth.pose9: expected 9 numbers");
            scene.gt_pose = Pose9::from_vector(Eigen::Map<const Vec9>(v.data()));
        } else if (gt.contains("pose")) {
            const std::string pose_path = resolve(gt["pose"].get<std::string>());
            std::istringstream ps(read_text_file(pose_path));
            scene.gt_pose = Pose9::from_matrix(read_pose_text(ps, pose_path));
        } else {
            throw FormatError("manifest ground_truth: missing 'pose9' or 'pose'");
        }
        if (gt.contains("latent")) {
            const auto v = gt["latent"].get<std::vector<double>>();
            scene.gt_latent = Eigen::Map<const VecX>(v.data(), v.size());
        }
        scene.gt_decoder = gt.value("decoder", std::string("analytic"));
        scene.gt_mesh_path = gt.contains("mesh") ? resolve(gt["mesh"].get<std::string>()) : "";
        scene.noise_sigma = gt.value("noise_sigma", 0.0);
    }
    return scene;
}

}  // namespace usm
