#pragma once

#include "usm/mesh.hpp"
#include "usm/propagation.hpp"

#include <span>
#include <string>
#include <vector>

namespace usm {

struct PoseErrors {
    double translation = 0.0;  // meters
    double rotation = 0.0;     // degrees
    double scale = 0.0;        // max per-axis relative error
};

struct PoseThresholds {
    double translation = 0.2;
    double rotation = 20.0;
    double scale = 0.2;
};

PoseErrors pose_error(const Pose9& estimated, const Pose9& ground_truth);

/// Strict inequalities: exactly-at-threshold counts as incorrect.
bool pose_correct(const PoseErrors& errors, const PoseThresholds& thresholds = {});

/// Volumetric IoU of two posed shapes: occupancy (SDF <= 0) voxelized on a
/// shared world-frame grid over the union of their bounding boxes, padded 10%.
double iou_3d(const Decoder& est_decoder, const VecX& est_z, const Pose9& est_pose,
              const Decoder& gt_decoder, const VecX& gt_z, const Pose9& gt_pose, int grid_res);

/// Symmetric mean nearest-neighbor distance between two point sets.
double chamfer(std::span<const Vec3> points_a, std::span<const Vec3> points_b);

struct CorrelationRow {
    Vec3 point_w;
    double sdf_mean = 0.0;
    double sdf_std = 0.0;
    double abs_error = 0.0;
};

struct CorrelationResult {
    double pearson_r = 0.0;
    std::vector<CorrelationRow> rows;
};

/// Pearson correlation between predicted SDF standard deviation and absolute
/// SDF error over world-frame ground-truth surface points evaluated under the
/// estimated state.
CorrelationResult uncertainty_correlation(const Decoder& decoder, const LatentGaussian& z,
                                          const PoseGaussian& pose,
                                          std::span<const Vec3> gt_surface_points_w);

void write_correlation_csv(const std::string& path, const CorrelationResult& result);

}  // namespace usm
