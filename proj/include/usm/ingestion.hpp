#pragma once

#include "usm/geometry.hpp"
#include "usm/io.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace usm {

struct Intrinsics {
    double fx = 0, fy = 0, cx = 0, cy = 0;
    int width = 0, height = 0;

    void validate() const {
        if (fx <= 0 || fy <= 0) throw InvalidInput("Intrinsics: focal lengths must be positive");
        if (width <= 0 || height <= 0) throw InvalidInput("Intrinsics: bad image size");
        if (cx < 0 || cx >= width || cy < 0 || cy >= height)
            throw InvalidInput("Intrinsics: principal point outside image");
    }

    /// Camera-frame ray through a pixel, z = 1 (so ray depth equals z-depth).
    Vec3 ray(double u, double v) const { return Vec3((u - cx) / fx, (v - cy) / fy, 1.0); }
};

/// One observation: metric depth raster, object mask, intrinsics, and the
/// known camera-to-world pose.
struct DepthFrame {
    ImageF depth;
    ImageU8 mask;
    Intrinsics intrinsics;
    Mat4 t_wc = Mat4::Identity();

    void validate() const;
};

/// Frames plus the optional ground-truth block of a synthetic scene.
struct Scene {
    std::vector<DepthFrame> frames;
    bool has_ground_truth = false;
    Pose9 gt_pose;
    VecX gt_latent;
    std::string gt_decoder;  // selector, e.g. "analytic"
    std::string gt_mesh_path;
    double noise_sigma = 0.0;
};

/// Camera-frame points of all masked pixels with valid depth: d * K^-1 (u,v,1).
std::vector<Vec3> back_project(const DepthFrame& frame);

/// Union of back-projected frames mapped by their camera poses, uniformly
/// subsampled (seeded, without replacement) to at most `subsample` points.
/// Throws InvalidInput when no point survives.
std::vector<Vec3> assemble_world_points(std::span<const DepthFrame> frames, std::size_t subsample,
                                        std::uint64_t seed);

/// Loads a scene manifest (JSON listing per-frame rasters/poses and an
/// optional ground-truth block). Paths are relative to the manifest.
Scene load_scene(const std::string& manifest_path);

/// Reads "fx fy cx cy width height" whitespace text.
Intrinsics read_intrinsics_text(const std::string& path);
void write_intrinsics_text(const std::string& path, const Intrinsics& k);

}  // namespace usm
