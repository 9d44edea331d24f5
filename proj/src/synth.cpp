#include "usm/synth.hpp"

#include "usm/io.hpp"
#include "usm/random.hpp"

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <sstream>

namespace usm {

namespace fs = std::filesystem;
using nlohmann::json;

std::optional<double> sphere_trace(const Decoder& decoder, const VecX& z, const Pose9& pose,
                                   const Vec3& origin_w, const Vec3& dir_w, double max_t) {
    const double step_scale = 1.0 / pose.s.maxCoeff();
    double t = 0.0;
    for (int iter = 0; iter < 20000; ++iter) {
        const Vec3 p = origin_w + t * dir_w;
        const double s = decoder.decode(z, transform_point(pose, p));
        if (std::abs(s) < 1e-5) return t;
        t += s * step_scale;
        if (t > max_t || t < 0.0) return std::nullopt;
    }
    return std::nullopt;
}

Mat4 look_at(const Vec3& eye, const Vec3& target) {
    const Vec3 f = (target - eye).normalized();
    Vec3 up(0, 0, 1);
    if (std::abs(f.dot(up)) > 0.999) up = Vec3(0, 1, 0);
    const Vec3 x = f.cross(up).normalized();
    const Vec3 y = f.cross(x);
    Mat4 t_wc = Mat4::Identity();
    t_wc.block<3, 1>(0, 0) = x;
    t_wc.block<3, 1>(0, 1) = y;
    t_wc.block<3, 1>(0, 2) = f;
    t_wc.topRightCorner<3, 1>() = eye;
    return t_wc;
}

std::string generate_scene(const Decoder& decoder, const SynthSpec& spec,
                           const std::string& out_dir) {
    spec.validate();
    if (spec.gt_latent.size() != decoder.latent_dim())
        throw InvalidInput("generate_scene: gt_latent size does not match decoder");
    fs::create_directories(out_dir);

    const Vec3 target = spec.gt_pose.inverse_matrix().topRightCorner<3, 1>();
    const double elev = spec.elevation_deg * M_PI / 180.0;
    const double max_t = 4.0 * spec.ring_radius +
                         decoder.canonical_bound(spec.gt_latent) / spec.gt_pose.s.minCoeff();

    Intrinsics k;
    k.width = k.height = spec.image_size;
    k.fx = k.fy = spec.image_size;
    k.cx = k.cy = spec.image_size / 2.0;

    json manifest;
    manifest["frames"] = json::array();
    const double span = spec.azimuth_span_deg * M_PI / 180.0;
    const bool full_ring = spec.azimuth_span_deg >= 360.0 - 1e-9;
    for (int view = 0; view < spec.views; ++view) {
        // A full ring spaces cameras evenly; a partial arc includes both ends.
        const double az = full_ring ? span * view / spec.views
                          : (spec.views == 1 ? 0.0 : span * view / (spec.views - 1));
        const Vec3 eye = target + spec.ring_radius * Vec3(std::cos(az) * std::cos(elev),
                                                          std::sin(az) * std::cos(elev),
                                                          std::sin(elev));
        const Mat4 t_wc = look_at(eye, target);
        const Mat3 r_wc = t_wc.topLeftCorner<3, 3>();

        ImageF depth = ImageF::zeros(k.width, k.height);
        ImageU8 mask = ImageU8::zeros(k.width, k.height);
        parallel_for(std::size_t(k.width) * k.height, [&](std::size_t begin, std::size_t end) {
            for (std::size_t i = begin; i < end; ++i) {
                const int x = static_cast<int>(i % k.width);
                const int y = static_cast<int>(i / k.width);
                const Vec3 dir_c = k.ray(x, y).normalized();
                const auto hit = sphere_trace(decoder, spec.gt_latent, spec.gt_pose, eye,
                                              r_wc * dir_c, max_t);
                if (!hit) continue;
                double d = *hit * dir_c.z();  // distance -> z-depth
                if (spec.noise_sigma > 0.0) {
                    Rng rng(mix_seed({spec.seed, 0xdeu, static_cast<std::uint64_t>(view), i}));
                    d += spec.noise_sigma * rng.normal();
                }
                depth.at(x, y) = static_cast<float>(d);
                mask.at(x, y) = 255;
            }
        });

        char idx[8];
        std::snprintf(idx, sizeof(idx), "%03d", view);
        const std::string stem = std::string("view") + idx;
        write_pfm((fs::path(out_dir) / (stem + "_depth.pfm")).string(), depth);
        write_pgm((fs::path(out_dir) / (stem + "_mask.pgm")).string(), mask);
        write_intrinsics_text((fs::path(out_dir) / (stem + "_intr.txt")).string(), k);
        std::ostringstream ps;
        write_pose_text(ps, t_wc);
        write_text_file((fs::path(out_dir) / (stem + "_pose.txt")).string(), ps.str());

        json frame;
        frame["depth"] = stem + "_depth.pfm";
        frame["mask"] = stem + "_mask.pgm";
        frame["intrinsics"] = stem + "_intr.txt";
        frame["pose"] = stem + "_pose.txt";
        manifest["frames"].push_back(frame);
    }

    std::ostringstream gt_pose_text;
    write_pose_text(gt_pose_text, spec.gt_pose.matrix());
    write_text_file((fs::path(out_dir) / "gt_object_pose.txt").string(), gt_pose_text.str());

    json gt;
    gt["pose"] = "gt_object_pose.txt";
    const Vec9 pose9 = spec.gt_pose.to_vector();
    gt["pose9"] = std::vector<double>(pose9.data(), pose9.data() + 9);
    gt["latent"] = std::vector<double>(spec.gt_latent.data(),
                                       spec.gt_latent.data() + spec.gt_latent.size());
    gt["decoder"] = decoder.spec().kind == "analytic-ellipsoid" ? "analytic" : "mlp";
    gt["noise_sigma"] = spec.noise_sigma;
    manifest["ground_truth"] = gt;

    const std::string manifest_path = (fs::path(out_dir) / "manifest.json").string();
    write_text_file(manifest_path, manifest.dump(2) + "\n");
    return manifest_path;
}

}  // namespace usm
